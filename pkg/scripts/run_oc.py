#!/usr/bin/env python3
"""Operating characteristics of the adaptive enrichment design for the five
trial scenarios (N=180, n1=100, n2=40, LRV=2.37, TV=3.08, xi=(0.8, 0.1))."""

from asied.simulator import OC_SCENARIOS, TrialConfig, run_operating_characteristics

from _common import fmt, parser


def main():
    args = parser(__doc__).parse_args()
    cfg = TrialConfig(seed=args.seed)
    header = None
    for key, scen in OC_SCENARIOS.items():
        oc, _ = run_operating_characteristics(scen, cfg, args.replicates, args.threads)
        row = oc.row()
        if header is None:
            header = list(row)
            print("scenario\t" + "\t".join(header))
        print(f"{key}\t" + "\t".join(fmt(row[h]) for h in header), flush=True)


if __name__ == "__main__":
    main()
