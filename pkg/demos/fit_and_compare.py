"""Fit the MSLE to one simulated sample and compare all estimators with the truth.

    python demos/fit_and_compare.py --n 2000 --seed 1
"""

import argparse

from cscm import (
    ModelSpec,
    build_histogram,
    default_grid,
    draw_sample,
    fit_msle,
    grid_cdf_eval,
    kernel_plugin_cdf,
    make_grid,
    plugin_grid_cdf,
)
from cscm.bench import STUDY_POINTS, default_bandwidth
from cscm.diagnostics import LambdaDensity, hellinger


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()

    model = ModelSpec.polynomial()
    sample = draw_sample(model, args.n, args.seed)
    hist = build_histogram(sample, default_grid(args.n))
    fit = fit_msle(hist, allow_empty=True)
    print(f"grid {hist.grid.k} x {hist.grid.l}, empty cells {len(hist.empty_cells())}, "
          f"converged {fit.converged} after {fit.iterations} iterations")

    gc = plugin_grid_cdf(sample, make_grid(1, 1, 10, 5))
    bw = default_bandwidth(args.n)
    print(f"{'t0':>5} {'z0':>5} {'truth':>8} {'msle':>8} {'grid':>8} {'kernel':>8}")
    for t0, z0 in STUDY_POINTS:
        print(f"{t0:5.2f} {z0:5.2f} {model.cdf(t0, z0):8.4f} {fit.cdf(t0, z0):8.4f} "
              f"{grid_cdf_eval(gc, t0, z0):8.4f} {kernel_plugin_cdf(sample, t0, z0, bw):8.4f}")

    truth = LambdaDensity.from_model(model)
    print(f"Hellinger to the true observation density: histogram "
          f"{hellinger(LambdaDensity.from_histogram(hist), truth):.4f}, "
          f"fit {hellinger(LambdaDensity.from_fit(fit, model), truth):.4f}")


if __name__ == "__main__":
    main()
