"""Show how empty histogram cells are reported and how coarsening fixes them.

    python demos/empty_cells.py
"""

from cscm import EmptyCellError, ModelSpec, build_histogram, draw_sample, fit_msle, make_grid


def main():
    sample = draw_sample(ModelSpec.polynomial(), 300, 1)
    for k, l in [(8, 8), (4, 4), (3, 2), (2, 2)]:
        hist = build_histogram(sample, make_grid(1, 1, k, l))
        try:
            fit = fit_msle(hist)
        except EmptyCellError as e:
            print(f"{k} x {l}: {e}")
            continue
        print(f"{k} x {l}: fitted, F(0.4, 0.6) = {fit.cdf(0.4, 0.6):.4f} (truth 0.12)")
        break


if __name__ == "__main__":
    main()
