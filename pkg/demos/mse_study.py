"""Run a Monte Carlo MSE study from a config file and compare with published values.

    python demos/mse_study.py configs/smoke.json
"""

import argparse

from cscm.bench import compare_reference, load_config, run_mse_study


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("config", nargs="?", default="configs/smoke.json")
    ap.add_argument("--workers", type=int)
    args = ap.parse_args()

    table = run_mse_study(load_config(args.config), workers=args.workers)
    print(f"{'t0':>5} {'n':>6} {'estimator':>14} {'mse':>10} {'stderr':>10} {'published':>10} {'ratio':>6}")
    for r in table.rows:
        pub = f"{r.reference:10.3g}" if r.reference is not None else f"{'':>10}"
        ratio = f"{r.ratio:6.2f}" if r.ratio is not None else f"{'':>6}"
        print(f"{r.t0:5.2f} {r.n:6d} {r.estimator:>14} {r.mse:10.3g} {r.mc_stderr:10.2g} {pub} {ratio}")
    rep = compare_reference(table)
    print(f"{len(rep.compared) - len(rep.flagged)} of {len(rep.compared)} cells within a factor 2 "
          f"of the published values")


if __name__ == "__main__":
    main()
