import argparse
import os


def parser(description, replicates=100):
    p = argparse.ArgumentParser(description=description)
    p.add_argument("--replicates", type=int, default=replicates, help="simulated trials per scenario")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    return p


def fmt(v):
    return "NA" if v is None else f"{float(v):.3f}"
