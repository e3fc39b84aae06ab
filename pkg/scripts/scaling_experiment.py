"""Error against the plume proxy over a (rank, resolution) grid.

``slice`` is the (x, y, t) problem at omega = pi/4, D = 0.001; ``full`` is the
six-dimensional (x, y, z, t, omega, D) problem.
"""
import argparse
from pathlib import Path

from separable.presets import error_quadrature, full_problem, scaling_config, slice_problem
from separable.variational import scaling_study


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("problem", choices=("slice", "full"))
    ap.add_argument("--ranks", default="1,2,4,8")
    ap.add_argument("--resolutions", default="4,8,16")
    ap.add_argument("--out", type=Path, help="write the table here")
    args = ap.parse_args()
    problem = slice_problem() if args.problem == "slice" else full_problem()
    ranks = [int(v) for v in args.ranks.split(",")]
    res = [int(v) for v in args.resolutions.split(",")]
    study = scaling_study(problem, ranks, res, scaling_config(problem),
                          error_kwargs=error_quadrature(problem),
                          progress=lambda r: print(f"R={r.rank} C={r.resolution} N={r.n_params} "
                                                   f"error={r.error:.4e} ({r.wall_time_s:.1f}s)", flush=True))
    for R, s in study.isoline_slopes().items():
        print(f"isoline R={R}: steepest slope {s:.2f}")
    print(f"frontier slope {study.frontier_slope():.3f} over "
          f"{[(r.rank, r.resolution) for r in study.frontier()]}")
    if args.out:
        args.out.write_text(study.table())


if __name__ == "__main__":
    main()
