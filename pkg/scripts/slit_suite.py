"""Inequality ratios on the slit domain at two resolutions, then the
oscillation bound with the measured constants."""
import argparse

from wienergauge.geometry import gallery
from wienergauge.pipeline import modulus_check, ramp_datum, run_suite


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--grids", type=int, nargs="+", default=[129, 257])
    ap.add_argument("--p", type=float, default=2.0)
    args = ap.parse_args()

    dom = gallery("slit")
    runs = {}
    for n in args.grids:
        run = run_suite(dom, args.p, 4 / (n - 1), ramp_datum(0.25))
        runs[n] = run
        print(f"# grid {n}^2  eps={run.eps:.4g}  q={run.suite.q:.4g}  "
              f"shift spread={run.shift_spread():.4f}")
        print(run.suite.to_csv(), end="")

    fine = runs[max(runs)]
    gamma = max(r.constant for r in fine.suite.reports if r.finite)
    radii = [2.0 ** -k for k in range(2, 7)]
    chk = modulus_check(dom, args.p, fine.solve.u, ramp_datum(0.25), radii, gamma, fine.eps)
    print(f"# gamma={gamma:.4g} eps={fine.eps:.4g}")
    print(chk.to_csv(), end="")


if __name__ == "__main__":
    main()
