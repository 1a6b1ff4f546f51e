#!/usr/bin/env python3
"""First-interim risks (worst case over the trial scenarios) across a grid of
(xi1, xi2) and which pairs meet the caps FSR 0.05, FGR 0.10, FER 0.15."""

from asied.simulator import OC_SCENARIOS, TrialConfig, calibrate_thresholds

from _common import fmt, parser


def main():
    p = parser(__doc__)
    p.add_argument("--xi1", type=float, nargs="+", default=[0.7, 0.75, 0.8, 0.85, 0.9])
    p.add_argument("--xi2", type=float, nargs="+", default=[0.05, 0.1, 0.15, 0.2])
    args = p.parse_args()
    rows = calibrate_thresholds(list(OC_SCENARIOS.values()), TrialConfig(seed=args.seed), args.xi1, args.xi2,
                                replicates=args.replicates, threads=args.threads)
    print("xi1\txi2\tFSR\tFGR\tFER\tadmissible")
    for r in rows:
        print(f"{r.xi1}\t{r.xi2}\t{fmt(r.fsr)}\t{fmt(r.fgr)}\t{fmt(r.fer)}\t{int(r.admissible)}")


if __name__ == "__main__":
    main()
