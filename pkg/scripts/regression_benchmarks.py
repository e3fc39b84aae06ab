"""Borehole, noisy Sobol-G and the rank-1 Sobol-G witness on 100k-sample designs."""
import argparse
import json

from separable.presets import SUITES, run_fit_preset


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("suites", nargs="*", default=list(SUITES), choices=list(SUITES))
    ap.add_argument("--n-samples", type=int, default=100_000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    for name in args.suites:
        _, rep, _ = run_fit_preset(name, args.n_samples, args.seed)
        print(name, json.dumps(rep.to_dict()))


if __name__ == "__main__":
    main()
