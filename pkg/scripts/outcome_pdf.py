"""Outcome density P(c) after the twist, for a few register sizes and twist strengths.

    python scripts/outcome_pdf.py --n 4 6 8 10 --chi-t 0.15 1.5708
"""
import argparse

import numpy as np

from pssim.measurement import post_selection_pdf
from pssim.protocols import PsProtocolParams, default_sigma2, prepare_ps


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, nargs="+", default=[4, 6, 8, 10, 12])
    ap.add_argument("--chi-t", type=float, nargs="+", default=[0.15])
    ap.add_argument("--x", type=float, default=0.0)
    ap.add_argument("--out", default="outcome_pdf.csv")
    args = ap.parse_args()

    grid = np.arange(-12.0, 12.0 + 1e-9, 0.05)
    rows = []
    for n in args.n:
        for chi_t in args.chi_t:
            pre = prepare_ps(PsProtocolParams(n, chi_t=chi_t, x=args.x))
            pdf = post_selection_pdf(pre.carrier, default_sigma2(n), grid)
            print(f"N={n:2d} chi t={chi_t:.4f}  peak at c={pdf.peak():+.2f}  "
                  f"P(-2.5)={np.interp(-2.5, grid, pdf.density):.4f}  integral={pdf.integral():.6f}")
            rows += [(n, chi_t, c, p) for c, p in zip(grid, pdf.density)]
    np.savetxt(args.out, np.array(rows), delimiter=",", header="n,chi_t,c,density", comments="", fmt="%.8g")


if __name__ == "__main__":
    main()
