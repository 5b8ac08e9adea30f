"""Grid refinement of the computed best constant for one parameter set.

    python scripts/refinement_study.py --m 1 --n 1 --gamma 1 --radius 10 --cells 64 128 256

For gamma = 0 and p = 2 the closed-form Euclidean constant is printed for
comparison.  Cells are per axis, with y getting ``--y-factor`` times more
(the gauge box is longer in y).
"""

import argparse
import time

from grushin.analysis import talenti_constant
from grushin.geometry import GrushinParams, gauge_box
from grushin.mesh import build_grid
from grushin.solvers import SolverConfig, minimize_with_continuation


def main(argv=None):
    ap = argparse.ArgumentParser(description="best-constant refinement study")
    ap.add_argument("--m", type=int, default=1)
    ap.add_argument("--n", type=int, default=1)
    ap.add_argument("--gamma", type=float, default=1.0)
    ap.add_argument("--p", type=float, default=2.0)
    ap.add_argument("--radius", type=float, default=10.0)
    ap.add_argument("--cells", type=int, nargs="+", default=[64, 128, 256])
    ap.add_argument("--y-factor", type=int, default=1)
    args = ap.parse_args(argv)

    params = GrushinParams(args.m, args.n, args.gamma, args.p)
    box = gauge_box(params, args.radius)
    oracle = None
    if args.gamma == 0 and args.p == 2:
        oracle = talenti_constant(params.m + params.n, 2.0)
    print(f"{'cells':>8} {'S':>12} {'residual':>10} {'iters':>6} {'time':>7}" + ("   rel.err" if oracle else ""))
    for c in args.cells:
        cells = [c] * params.m + [c * args.y_factor] * params.n
        t0 = time.perf_counter()
        r = minimize_with_continuation(build_grid(box, cells, params), SolverConfig())
        line = f"{c:>8} {r.value:>12.6f} {r.residual:>10.2e} {r.iters:>6} {time.perf_counter() - t0:>6.1f}s"
        if oracle:
            line += f"   {abs(r.value - oracle) / oracle:.2e}"
        print(line)


if __name__ == "__main__":
    main()
