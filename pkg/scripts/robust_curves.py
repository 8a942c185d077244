"""Certified fidelity against the deviation from maximal tilted-CHSH violation."""
import argparse
import math

from swapcert.certify import robust_curve
from swapcert.config import DEFAULT_EPS_GRID, TABLE_THETAS
from swapcert.report import curves_csv


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--theta", default=",".join(f"{t:g}" for t in TABLE_THETAS), help="degrees, comma separated")
    ap.add_argument("--eps", default=",".join(f"{e:g}" for e in DEFAULT_EPS_GRID))
    ap.add_argument("--csv", help="write theta_deg,epsilon,f_s rows here")
    args = ap.parse_args()

    thetas = [float(t) for t in args.theta.split(",")]
    eps = [float(e) for e in args.eps.split(",")]
    rows = []
    print("eps    " + " ".join(f"{t:>8g}" for t in thetas))
    table = {t: dict(robust_curve(math.radians(t), eps)) for t in thetas}
    for e in eps:
        print(f"{e:<6g} " + " ".join(f"{table[t][e]:8.4f}" for t in thetas))
    rows = [(t, e, table[t][e]) for t in thetas for e in eps]
    if args.csv:
        with open(args.csv, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(curves_csv(rows))
        print(f"wrote {args.csv}")


if __name__ == "__main__":
    main()
