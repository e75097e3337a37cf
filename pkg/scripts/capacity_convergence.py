"""Ball-condenser capacity under grid refinement against the radial quadrature.

    python scripts/capacity_convergence.py --p 1.5 --N 2
"""
import argparse

from wienergauge.capacity import ball_capacity_study, radial_condenser_capacity


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--p", type=float, default=2.0)
    ap.add_argument("--N", type=int, default=2)
    ap.add_argument("--a", type=float, default=0.25)
    ap.add_argument("--b", type=float, default=1.0)
    ap.add_argument("--levels", type=int, default=3)
    args = ap.parse_args()

    coarsest = 1 / 32 if args.N == 2 else 1 / 12
    hs = [coarsest / 2 ** k for k in range(args.levels)]
    exact = radial_condenser_capacity(args.p, args.N, args.a, args.b)
    res = ball_capacity_study(args.p, args.N, args.a, args.b, hs)
    print("h,capacity,rel_err")
    for h, c in res.per_level:
        print(f"{h:.6g},{c:.8f},{(c - exact) / exact:+.4%}")
    print(f"# extrapolated {res.extrapolated:.8f} (order {res.order_estimate:.3g}), "
          f"radial {exact:.8f}, rel err {(res.extrapolated - exact) / exact:+.4%}")


if __name__ == "__main__":
    main()
