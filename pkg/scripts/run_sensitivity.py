#!/usr/bin/env python3
"""First-interim decision frequencies as the first-look sample size n1 varies."""

from asied.simulator import INTERIM_ORDER, OC_SCENARIOS, TrialConfig, sensitivity_n1

from _common import fmt, parser


def main():
    p = parser(__doc__)
    p.add_argument("--scenario", type=int, default=2, choices=sorted(OC_SCENARIOS))
    p.add_argument("--n1", type=int, nargs="+", default=[40, 60, 80, 100, 120])
    args = p.parse_args()
    rows = sensitivity_n1(OC_SCENARIOS[args.scenario], TrialConfig(seed=args.seed), args.n1,
                          args.replicates, args.threads)
    print("n1\t" + "\t".join(f"Pr({a.value})" for a in INTERIM_ORDER))
    for n1, freq in rows:
        print(f"{n1}\t" + "\t".join(fmt(freq[a]) for a in INTERIM_ORDER), flush=True)


if __name__ == "__main__":
    main()
