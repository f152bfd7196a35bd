"""Fidelity as a function of the measurement outcome c, for several noise levels.

    python scripts/fidelity_vs_c.py --n 4 --x 0 0.1 1 2 --out fidelity_vs_c.csv
"""
import argparse

import numpy as np

from pssim.protocols import PsProtocolParams, prepare_ps


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=4)
    ap.add_argument("--x", type=float, nargs="+", default=[0.0, 0.1, 1.0, 2.0])
    ap.add_argument("--c-min", type=float, default=-4.5)
    ap.add_argument("--c-max", type=float, default=-0.5)
    ap.add_argument("--c-step", type=float, default=0.05)
    ap.add_argument("--out", default="fidelity_vs_c.csv")
    args = ap.parse_args()

    cs = np.arange(args.c_min, args.c_max + 1e-9, args.c_step)
    cols = [cs]
    for x in args.x:
        pre = prepare_ps(PsProtocolParams(args.n, x=x, engine="pure" if x == 0 else "auto"))
        F, P = pre.fidelity_curve(cs)
        cols.append(F)
        k = int(np.argmax(F))
        print(f"x={x:g}: F(-2.5)={F[np.argmin(abs(cs + 2.5))]:.4f}  max F={F[k]:.4f} at c={cs[k]:.2f}")
    header = "c," + ",".join(f"F_x{x:g}" for x in args.x)
    np.savetxt(args.out, np.column_stack(cols), delimiter=",", header=header, comments="", fmt="%.8g")


if __name__ == "__main__":
    main()
