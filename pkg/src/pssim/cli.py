"""Command-line front end: ``pssim <command> [flags]``.

Every output file carries a manifest (all resolved parameters, version and
timestamp).  ``--config`` accepts an INI file or a previous output file, so
``pssim ps-run --config run.csv`` repeats the run that produced ``run.csv``.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import io
import json
import logging
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .channels import DEFAULT_DT, DEFAULT_J
from .errors import EngineGuardError, NumericalInvariantError
from .measurement import default_pdf_grid, post_selection_pdf
from .protocols import (
    PS_C,
    PS_CHI_T,
    SWEEP_AXES,
    MssProtocolParams,
    PsProtocolParams,
    apply_phase_gate,
    default_sigma2,
    interval_report_from,
    prepare_mss,
    prepare_ps,
    run_mss_protocol,
    run_ps_protocol,
    sweep,
)
from .spin import CollectiveAxis, SystemSpec, collective_rotation, ghz_state, husimi_grid, make_all_up

log = logging.getLogger("pssim")

EXIT_OK, EXIT_USAGE, EXIT_GUARD, EXIT_NUMERIC = 0, 2, 3, 4

TABLE1_INTERVALS = [(-2.5, 1.5), (-2.5, -0.5), (-2.5, -1.5)]
BUDGET_STEP = {"coarse": 0.25, "full": 0.05}
HUSIMI_STAGES = ("init", "cs", "squeezed", "rotated", "ps", "ghz", "mss")

DEFAULTS = dict(
    chi_t=None, c=PS_C, sigma2=None, x=0.0, j=DEFAULT_J, dt=DEFAULT_DT, engine="auto",
    n_traj=200, seed=0, threads=1, out=None, format="csv", budget="coarse",
)


class UsageError(ValueError):
    pass


@dataclass
class RunManifest:
    command: str
    params: dict
    version: str = __version__
    timestamp: str = field(default_factory=lambda: time.strftime("%Y-%m-%dT%H:%M:%S%z"))


# ---------------------------------------------------------------------------
# output


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.12g}"
    return str(v)


def _jsonable(v):
    if isinstance(v, (np.floating, float)):
        return float(f"{float(v):.12g}")
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    return v


def render(manifest: RunManifest, columns: list[str], rows: list[dict], fmt: str) -> str:
    man = _jsonable(asdict(manifest))
    if fmt == "json":
        return json.dumps({"manifest": man, "results": [_jsonable(r) for r in rows]}, indent=1) + "\n"
    buf = io.StringIO()
    buf.write("# manifest: " + json.dumps(man) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r.get(c)) for c in columns])
    return buf.getvalue()


def emit(args, command: str, columns: list[str], rows: list[dict]) -> None:
    for r in rows:
        for key in ("fidelity", "probability", "f_min", "f_max", "f_mss"):
            v = r.get(key)
            if v is not None and not (-1e-9 <= v <= 1 + 1e-9):
                raise NumericalInvariantError(f"{key}={v} outside [0, 1]")
    text = render(RunManifest(command, manifest_params(args)), columns, rows, args.format)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)


def manifest_params(args) -> dict:
    skip = {"config", "out", "format", "func", "command", "verbose"}
    return {k: v for k, v in vars(args).items() if k not in skip}


def load_manifest(path) -> dict:
    """Parameters from an INI config or from the manifest inside an output file."""
    text = Path(path).read_text()
    first = text.lstrip()[:1]
    if text.startswith("# manifest:"):
        return json.loads(text.splitlines()[0][len("# manifest:"):])["params"]
    if first == "{":
        return json.loads(text)["manifest"]["params"]
    cp = configparser.ConfigParser()
    cp.read_string(text if text.lstrip().startswith("[") else "[pssim]\n" + text)
    out = {}
    for sec in cp.sections():
        for k, v in cp[sec].items():
            out[k.replace("-", "_")] = v
    return out


# ---------------------------------------------------------------------------
# parser


def _common(p: argparse.ArgumentParser, multi_n=False, multi_chi=False, multi_x=False):
    nargs = dict(nargs="+")
    p.add_argument("--n", type=int, default=None, **(nargs if multi_n else {}), help="number of qubits N")
    p.add_argument("--chi-t", dest="chi_t", type=float, default=None, **(nargs if multi_chi else {}),
                   help="squeezing strength chi t")
    p.add_argument("--c", type=float, default=None, help="measurement outcome c")
    p.add_argument("--sigma2", type=float, default=None,
                   help="variance of the measurement Gaussian (default: per-N table)")
    p.add_argument("--x", type=float, default=None, **(nargs if multi_x else {}), help="decay scale x")
    p.add_argument("--j", type=float, default=None, help="Ising coupling J [1/s]")
    p.add_argument("--dt", type=float, default=None, help="time step [s]")
    p.add_argument("--engine", choices=["auto", "kraus", "trajectory", "pure"], default=None)
    p.add_argument("--n-traj", dest="n_traj", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--format", choices=["csv", "json"], default=None)
    p.add_argument("--config", default=None, help="INI config or previous output file")
    p.add_argument("--budget", choices=sorted(BUDGET_STEP), default=None)
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pssim", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ps-run", help="projected-squeezed-state protocol at one outcome c")
    _common(p)
    p.add_argument("--optimize-angles", dest="optimize_angles", action="store_true", default=None)
    p.set_defaults(func=cmd_ps_run)

    p = sub.add_parser("mss-run", help="macroscopic superposition benchmark")
    _common(p)
    p.set_defaults(func=cmd_mss_run)

    p = sub.add_parser("pdf", help="post-selection probability density P(c)")
    _common(p, multi_n=True, multi_chi=True)
    p.add_argument("--c-min", dest="c_min", type=float, default=None)
    p.add_argument("--c-max", dest="c_max", type=float, default=None)
    p.add_argument("--c-step", dest="c_step", type=float, default=None)
    p.set_defaults(func=cmd_pdf)

    p = sub.add_parser("husimi", help="Husimi distribution on a (theta, phi) grid")
    _common(p)
    p.add_argument("--stage", default=None, help="|".join(HUSIMI_STAGES))
    p.add_argument("--n-theta", dest="n_theta", type=int, default=None)
    p.add_argument("--n-phi", dest="n_phi", type=int, default=None)
    p.set_defaults(func=cmd_husimi)

    p = sub.add_parser("table1", help="fidelity ranges and interval probabilities per N and x")
    _common(p, multi_n=True, multi_x=True)
    p.set_defaults(func=cmd_table1)

    p = sub.add_parser("sweep", help="one protocol over a list of parameter values")
    _common(p)
    p.add_argument("--protocol", choices=["ps", "mss"], default=None)
    p.add_argument("--axis", choices=SWEEP_AXES, default=None)
    p.add_argument("--values", type=float, nargs="+", default=None)
    p.set_defaults(func=cmd_sweep)
    return ap


EXTRA_DEFAULTS = dict(c_min=None, c_max=None, c_step=0.05, stage=None, n_theta=61, n_phi=121,
                      protocol="ps", axis=None, values=None, optimize_angles=False)


def _coerce(value, like):
    """Cast a config string the way argparse would for this destination."""
    if not isinstance(value, str):
        return value
    typ, multi = like
    parts = value.replace(",", " ").split() if multi else [value]
    vals = [typ(v) if typ else v for v in parts]
    return vals if multi else vals[0]


def resolve_args(parser: argparse.ArgumentParser, argv) -> argparse.Namespace:
    args = parser.parse_args(argv)
    sub = parser._subparsers._group_actions[0].choices[args.command]
    kinds = {a.dest: (a.type, a.nargs == "+") for a in sub._actions}
    if args.config:
        for k, v in load_manifest(args.config).items():
            if k in kinds and getattr(args, k, None) is None:
                setattr(args, k, _coerce(v, kinds[k]) if isinstance(v, str) else v)
    for k, v in {**DEFAULTS, **EXTRA_DEFAULTS}.items():
        if hasattr(args, k) and getattr(args, k) is None:
            setattr(args, k, v)
    return args


# ---------------------------------------------------------------------------
# commands


def _require_n(args):
    if args.n is None:
        raise UsageError("--n is required")
    return args.n


def _ps_params(args, n=None, x=None, chi_t=None, c=None) -> PsProtocolParams:
    n = _require_n(args) if n is None else n
    chi = chi_t if chi_t is not None else args.chi_t
    return PsProtocolParams(
        n_qubits=n,
        chi_t=PS_CHI_T if chi is None else chi,
        c=args.c if c is None else c,
        sigma2=args.sigma2,
        x=args.x if x is None else x,
        J=args.j,
        dt=args.dt,
        engine=args.engine,
        n_traj=args.n_traj,
        seed=args.seed,
        workers=args.threads,
        optimize_final_angles=bool(getattr(args, "optimize_angles", False)),
    )


def _mss_params(args, n=None, x=None) -> MssProtocolParams:
    n = _require_n(args) if n is None else n
    return MssProtocolParams(n, x=args.x if x is None else x, J=args.j, dt=args.dt, engine=args.engine,
                             n_traj=args.n_traj, seed=args.seed, workers=args.threads)


PS_COLUMNS = ["n", "chi_t", "c", "sigma2", "x", "engine", "fidelity", "qfi", "probability", "witness",
              "sd", "se", "n_used"]


def _ps_row(p: PsProtocolParams, res) -> dict:
    row = dict(n=p.n_qubits, chi_t=p.chi_t, c=p.c, sigma2=p.sigma2, x=p.x, engine=res.engine.value)
    row.update(res.row())
    return row


def cmd_ps_run(args) -> None:
    p = _ps_params(args)
    res = run_ps_protocol(p)
    cols = PS_COLUMNS + (["jy_angle", "jx_angle"] if p.optimize_final_angles else [])
    emit(args, "ps-run", cols, [_ps_row(p, res)])


MSS_COLUMNS = ["n", "chi_t", "x", "engine", "fidelity", "qfi", "witness", "sd", "se", "n_used"]


def _mss_row(p: MssProtocolParams, res) -> dict:
    row = dict(n=p.n_qubits, chi_t=p.chi_t, x=p.x, engine=res.engine.value)
    row.update(res.row())
    return row


def cmd_mss_run(args) -> None:
    p = _mss_params(args)
    emit(args, "mss-run", MSS_COLUMNS, [_mss_row(p, run_mss_protocol(p))])


def cmd_pdf(args) -> None:
    ns = args.n if args.n else None
    if not ns:
        raise UsageError("--n is required")
    chis = args.chi_t or [PS_CHI_T]
    rows = []
    for n in ns:
        s2 = args.sigma2 if args.sigma2 is not None else default_sigma2(n)
        if args.c_min is not None or args.c_max is not None:
            lo = args.c_min if args.c_min is not None else -n / 2 - 8 * np.sqrt(s2)
            hi = args.c_max if args.c_max is not None else n / 2 + 8 * np.sqrt(s2)
            grid = np.linspace(lo, hi, int(round((hi - lo) / args.c_step)) + 1)
        else:
            grid = default_pdf_grid(n, s2, args.c_step)
        for chi in chis:
            pre = prepare_ps(_ps_params(args, n=n, chi_t=chi))
            pdf = post_selection_pdf(pre.carrier, s2, grid)
            rows += [dict(n=n, chi_t=chi, sigma2=s2, c=c, density=d) for c, d in zip(pdf.grid, pdf.density)]
    emit(args, "pdf", ["n", "chi_t", "sigma2", "c", "density"], rows)


def husimi_stage_state(stage: str, args):
    """Decoherence-free state at a named protocol stage."""
    if stage not in HUSIMI_STAGES:
        raise UsageError(f"unknown stage {stage!r}; choose from {'|'.join(HUSIMI_STAGES)}")
    n = _require_n(args)
    spec = SystemSpec(n)
    if stage == "ghz":
        return ghz_state(spec)
    if stage == "init":
        return make_all_up(spec)
    cs = collective_rotation(make_all_up(spec), CollectiveAxis.X, np.pi / 2)
    if stage == "cs":
        return cs
    if stage == "mss":
        sq = prepare_mss(MssProtocolParams(n, engine="pure"))
        return apply_phase_gate(collective_rotation(sq, CollectiveAxis.X, np.pi / 2))
    p = _ps_params(args, x=0.0)
    p.engine = "pure"
    pre = prepare_ps(p)
    if stage == "squeezed":
        return collective_rotation(pre.carrier, CollectiveAxis.X, np.pi / 2)
    if stage == "rotated":
        return pre.carrier
    return pre.finish().state


def cmd_husimi(args) -> None:
    if args.stage is None:
        raise UsageError("--stage is required")
    state = husimi_stage_state(args.stage, args)
    thetas = np.linspace(0, np.pi, args.n_theta)
    phis = np.linspace(0, 2 * np.pi, args.n_phi, endpoint=False)
    H = husimi_grid(state, thetas, phis)
    rows = [dict(theta=t, phi=f, H=H[i, k]) for i, t in enumerate(thetas) for k, f in enumerate(phis)]
    emit(args, "husimi", ["theta", "phi", "H"], rows)


TABLE1_COLUMNS = ["n", "x", "engine", "c_lo", "c_hi", "f_min", "f_max", "probability", "f_mss", "n_traj"]


def table1_rows(args) -> list[dict]:
    ns = args.n or [4, 6, 8, 10, 12]
    xs = args.x if isinstance(args.x, list) else ([args.x] if args.x else [0.0, 1.0])
    step = BUDGET_STEP[args.budget]
    rows = []
    for n in ns:
        for x in xs:
            engine = "pure" if x == 0 else ("kraus" if n <= 10 else "trajectory")
            sub = argparse.Namespace(**{**vars(args), "engine": engine})
            p = _ps_params(sub, n=n, x=x)
            mss = run_mss_protocol(_mss_params(sub, n=n, x=x)).fidelity
            pre = prepare_ps(p)
            n_traj = p.n_traj if engine == "trajectory" else None
            if engine == "trajectory":
                # one outcome only, as for the largest-N trajectory runs
                F, P = pre.fidelity_curve([p.c])
                rows.append(dict(n=n, x=x, engine=engine, c_lo=p.c, c_hi=p.c, f_min=F[0], f_max=F[0],
                                 probability=None, f_mss=mss, n_traj=n_traj))
                continue
            for lo, hi in TABLE1_INTERVALS:
                r = interval_report_from(pre, lo, hi, step)
                rows.append(dict(n=n, x=x, engine=engine, c_lo=lo, c_hi=hi, f_min=r.f_min, f_max=r.f_max,
                                 probability=r.probability, f_mss=mss, n_traj=n_traj))
            log.info("table1 N=%d x=%g done", n, x)
    return rows


def cmd_table1(args) -> None:
    emit(args, "table1", TABLE1_COLUMNS, table1_rows(args))


def cmd_sweep(args) -> None:
    if args.axis is None or not args.values:
        raise UsageError("--axis and --values are required")
    vals = [int(v) for v in args.values] if args.axis == "N" else list(args.values)
    n = args.n if args.n is not None else (vals[0] if args.axis == "N" else None)
    if n is None:
        raise UsageError("--n is required")
    base = _ps_params(args, n=n) if args.protocol == "ps" else _mss_params(args, n=n)
    rows = []
    for pt in sweep(base, args.axis, vals):
        row = {"axis": args.axis, "value": pt.value, "error": pt.error}
        if pt.result is not None:
            row.update(pt.result.row())
        rows.append(row)
    cols = ["axis", "value", "fidelity", "qfi", "probability", "witness", "sd", "se", "n_used", "error"]
    emit(args, "sweep", cols, rows)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = resolve_args(parser, argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    except (ValueError, OSError, KeyError) as exc:
        print(f"pssim: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except EngineGuardError as exc:
        print(f"pssim: engine guard: {exc}", file=sys.stderr)
        return EXIT_GUARD
    except NumericalInvariantError as exc:
        print(f"pssim: numerical invariant violated: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, TypeError) as exc:
        print(f"pssim: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
