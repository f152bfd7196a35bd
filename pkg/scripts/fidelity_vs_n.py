"""PS versus MSS fidelity as the register grows, at fixed noise strength.

The MSS runs are long at N = 10 (tens of thousands of Kraus steps);
``--n-max`` trims the sweep.

    python scripts/fidelity_vs_n.py --x 1 --n-max 8
"""
import argparse
import time

from pssim.protocols import MssProtocolParams, PsProtocolParams, run_mss_protocol, run_ps_protocol


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--x", type=float, default=1.0)
    ap.add_argument("--n-max", type=int, default=10)
    ap.add_argument("--out", default="fidelity_vs_n.csv")
    args = ap.parse_args()

    with open(args.out, "w") as fh:
        fh.write("n,f_ps,f_mss,gap,pr_c\n")
        for n in range(4, args.n_max + 1, 2):
            t0 = time.time()
            ps = run_ps_protocol(PsProtocolParams(n, x=args.x))
            mss = run_mss_protocol(MssProtocolParams(n, x=args.x))
            gap = ps.fidelity - mss.fidelity
            fh.write(f"{n},{ps.fidelity:.6g},{mss.fidelity:.6g},{gap:.6g},{ps.probability:.6g}\n")
            print(f"N={n:2d}  F_PS={ps.fidelity:.4f}  F_MSS={mss.fidelity:.4f}  gap={gap:+.4f}  "
                  f"({time.time() - t0:.0f}s)")


if __name__ == "__main__":
    main()
