"""Reported single-qubit tomography fidelity under rotated measurement axes."""
import argparse
import math

from swapcert.tomography import miscalibration_demo


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--p", default="1,0.9,0.8,0.7", help="mixing weights, comma separated")
    ap.add_argument("--xi", default="0,10,20,30,45,60", help="axis rotations in degrees")
    args = ap.parse_args()

    ps = [float(v) for v in args.p.split(",")]
    xis = [float(v) for v in args.xi.split(",")]
    print("F_reported (F_true in the first column; '!' marks values above 1)")
    print(f"{'p':>5} {'F_true':>7} " + " ".join(f"{x:>8g}" for x in xis))
    for p in ps:
        cells = []
        for x in xis:
            d = miscalibration_demo(p, math.radians(x))
            cells.append(f"{d.F_reported:7.4f}{'!' if d.absurd else ' '}")
        print(f"{p:5g} {miscalibration_demo(p, 0.0).F_true:7.4f} " + " ".join(cells))


if __name__ == "__main__":
    main()
