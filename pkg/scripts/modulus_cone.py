"""Dyadic oscillation recursion on the cone, for a few values of gamma."""
import argparse

from wienergauge.geometry import gallery
from wienergauge.pipeline import modulus_sequence


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--aperture", type=float, default=0.7853981634)
    ap.add_argument("--levels", type=int, default=6)
    ap.add_argument("--eps", type=float, default=0.5)
    ap.add_argument("--gammas", type=float, nargs="+", default=[2.0, 20.0, 50.0])
    args = ap.parse_args()

    dom = gallery(f"cone:{args.aperture}")
    prof = None
    for gamma in args.gammas:
        seq, prof = modulus_sequence(dom, 2.0, args.levels, gamma, args.eps)
        print(f"# gamma={gamma:g}")
        print(seq.to_csv(), end="")
    print("# delta " + ", ".join(f"{d:.4g}" for d in prof.delta))


if __name__ == "__main__":
    main()
