"""Command-line front end: ``cvmc estimate | diagnose | study <kind>``.

Exit codes: 0 on success, 2 on usage or estimator errors, 3 when a study
verdict fails. The environment variable ``CVMC_SEED`` overrides ``--seed``.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import re
import sys
from dataclasses import asdict, dataclass, fields
from typing import Optional

from . import __version__
from .bases import FAMILY_ALIASES, make_basis
from .core import draw_samples
from .diagnostics import check_growth_rule, leverage_profile
from .errors import CVMCError, UsageError
from .estimator import naive_mc, olsmc
from .experiments import CSV_FIELDS, STUDIES, StudySpec, run_study
from .integrands import get_integrand
from .schedules import Schedule

SUBCOMMANDS = ("estimate", "diagnose", "study")
DEFAULT_DIAGNOSE_SCHEDULES = ("n^1/4", "n^1/3", "n^1/2")
DEFAULT_DIAGNOSE_GRID = (100, 10_000, 1_000_000)


@dataclass
class CliConfig:
    subcommand: str
    study: Optional[str] = None
    integrand: str = "exp"
    basis: str = "legendre"
    m: str = "0"
    schedule: Optional[str] = None
    n: tuple = (1000,)
    reps: int = 200
    alpha: float = 0.05
    seed: int = 0
    form: str = "regression"
    quantile: str = "normal"
    out: Optional[str] = None
    format: str = "csv"
    threads: int = 1
    dim: int = 1
    slope_band: Optional[tuple] = None
    control_slope_band: Optional[tuple] = None

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "CliConfig":
        data = json.loads(text)
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}", flag="--config")
        for key in ("n", "slope_band", "control_slope_band"):
            if data.get(key) is not None:
                data[key] = tuple(data[key])
        return cls(**data)

    @property
    def schedule_obj(self) -> Schedule:
        return Schedule.parse(self.schedule if self.schedule is not None else self.m)


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        m = re.search(r"argument (--?[\w-]+)", message) or re.search(r"arguments: (--?[\w-]+)", message)
        raise UsageError(message, flag=m.group(1) if m else None)


def _m_type(text: str) -> str:
    try:
        k = int(text)
    except ValueError:
        try:
            Schedule.parse(text)
        except ValueError as exc:
            raise argparse.ArgumentTypeError(str(exc)) from None
        return text
    if k < 0:
        raise argparse.ArgumentTypeError("m must be ≥ 0")
    return str(k)


def _schedule_type(text: str) -> str:
    try:
        Schedule.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None
    return text


def _grid_type(text: str) -> tuple:
    try:
        vals = tuple(int(float(v)) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError("expected comma-separated integers, e.g. 256,1024") from None
    if not vals or any(v < 1 for v in vals):
        raise argparse.ArgumentTypeError("sample sizes must be positive integers")
    return vals


def _band_type(text: str) -> tuple:
    try:
        lo, hi = (float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError("expected 'lo,hi'") from None
    return lo, hi


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError("expected an integer") from None
    if v < 1:
        raise argparse.ArgumentTypeError("must be ≥ 1")
    return v


def _alpha_type(text: str) -> float:
    try:
        a = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError("expected a number in (0, 1)") from None
    if not 0 < a < 1:
        raise argparse.ArgumentTypeError("alpha must lie in (0, 1)")
    return a


def _common(p: argparse.ArgumentParser):
    p.add_argument("--integrand", default="exp")
    p.add_argument("--basis", default="legendre",
                   choices=sorted({*FAMILY_ALIASES, "none"}))
    p.add_argument("--m", type=_m_type, default="0")
    p.add_argument("--dim", type=_positive_int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--alpha", type=_alpha_type, default=0.05)
    p.add_argument("--form", choices=("regression", "projection"), default="regression")
    p.add_argument("--quantile", choices=("normal", "student_t"), default="normal")
    p.add_argument("--out")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--threads", type=_positive_int, default=1)
    p.add_argument("--save-config", dest="save_config",
                   help="write the parsed configuration as JSON and continue")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cvmc", description="Monte Carlo integration with OLS control variates")
    parser.add_argument("--config", help="run a configuration saved with --save-config")
    parser.add_argument("--version", action="version", version=f"cvmc {__version__}")
    sub = parser.add_subparsers(dest="subcommand", parser_class=_Parser)

    est = sub.add_parser("estimate", help="one OLSMC (or naive, m=0) estimate")
    _common(est)
    est.add_argument("--n", type=_grid_type, default=(1000,))

    diag = sub.add_parser("diagnose", help="leverage diagnostics and growth-rule verdicts")
    _common(diag)
    diag.add_argument("--n", type=_grid_type, default=(1000,))
    diag.add_argument("--schedule", type=_schedule_type)
    diag.add_argument("--n-grid", dest="n_grid", type=_grid_type)

    st = sub.add_parser("study", help="replication study")
    st.add_argument("kind", choices=STUDIES)
    _common(st)
    st.add_argument("--schedule", type=_schedule_type)
    st.add_argument("--n-grid", "--n", dest="n_grid", type=_grid_type, default=(256, 1024, 4096))
    st.add_argument("--reps", type=_positive_int, default=200)
    st.add_argument("--slope-band", dest="slope_band", type=_band_type)
    st.add_argument("--control-slope-band", dest="control_slope_band", type=_band_type)
    return parser


def parse_config(argv) -> CliConfig:
    """Validate ``argv`` into a :class:`CliConfig`.

    Raises
    ------
    UsageError
        Naming the offending flag and the expected format.
    """
    args = build_parser().parse_args(list(argv))
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                cfg = CliConfig.from_json(fh.read())
        except OSError as exc:
            raise UsageError(f"cannot read config: {exc}", flag="--config") from None
    else:
        if args.subcommand is None:
            raise UsageError("a subcommand is required: estimate, diagnose or study")
        cfg = CliConfig(
            subcommand=args.subcommand,
            study=getattr(args, "kind", None),
            integrand=args.integrand, basis=args.basis, m=args.m,
            schedule=getattr(args, "schedule", None),
            n=tuple(args.n_grid if getattr(args, "n_grid", None) else args.n),
            reps=getattr(args, "reps", 200), alpha=args.alpha, seed=args.seed,
            form=args.form, quantile=args.quantile, out=args.out, format=args.format,
            threads=args.threads, dim=args.dim,
            slope_band=getattr(args, "slope_band", None),
            control_slope_band=getattr(args, "control_slope_band", None))
        if args.save_config:
            with open(args.save_config, "w", encoding="utf-8") as fh:
                fh.write(cfg.to_json() + "\n")
    env_seed = os.environ.get("CVMC_SEED")
    if env_seed is not None:
        try:
            cfg.seed = int(env_seed)
        except ValueError:
            raise UsageError("CVMC_SEED must be an integer", flag="CVMC_SEED") from None
    if cfg.subcommand == "estimate":
        if len(cfg.n) != 1:
            raise UsageError("estimate takes a single sample size", flag="--n")
        if not cfg.m.isdigit():
            raise UsageError("estimate needs an integer --m", flag="--m")
    if cfg.out:
        d = os.path.dirname(os.path.abspath(cfg.out))
        if not os.access(d, os.W_OK):
            raise UsageError(f"output directory {d} is not writable", flag="--out")
    return cfg


# ---------------------------------------------------------------------------
# Output
# ---------------------------------------------------------------------------

def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _json_safe(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if hasattr(obj, "item"):
        return _json_safe(obj.item())
    return obj


def _json_text(spec: dict, rows: list, verdicts: list) -> str:
    doc = {"spec": spec, "rows": rows, "verdicts": verdicts, "version": __version__}
    return json.dumps(_json_safe(doc), indent=2, sort_keys=True) + "\n"


def _emit(cfg: CliConfig, text: str):
    if cfg.out:
        with open(cfg.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def _family(cfg: CliConfig) -> str:
    return "legendre" if cfg.basis == "none" else cfg.basis


def _run_estimate(cfg: CliConfig, out) -> int:
    m = 0 if cfg.basis == "none" else int(cfg.m)
    basis = make_basis(_family(cfg), m, cfg.dim)
    f = get_integrand(cfg.integrand, basis.domain, basis)
    samples = draw_samples(basis.domain, cfg.n[0], cfg.seed)
    if m == 0:
        rep = naive_mc(f, samples, cfg.alpha, cfg.quantile)
    else:
        rep = olsmc(f, samples, basis, cfg.alpha, cfg.form, cfg.quantile)
    row = rep.to_dict()
    if cfg.format == "json":
        _emit(cfg, _json_text(asdict(cfg), [row], []))
    else:
        _emit(cfg, _csv_text(list(row), [list(row.values())]))
    print(rep.summary(), file=out)
    return 0


def _run_diagnose(cfg: CliConfig, out) -> int:
    m = Schedule.parse(cfg.m)(cfg.n[0])
    basis = make_basis(_family(cfg), m, cfg.dim)
    samples = draw_samples(basis.domain, cfg.n[0], cfg.seed)
    prof = leverage_profile(basis, samples)
    print(f"sup_q = {prof.sup_q:g}, mean_q = {prof.mean_q_quad:.10g}, "
          f"max n*leverage = {prof.n * prof.max_empirical:.6g}, "
          f"high-leverage points (>{prof.c:g} m/n) = {prof.high_leverage_flags.size}", file=out)
    schedules = (cfg.schedule,) if cfg.schedule else DEFAULT_DIAGNOSE_SCHEDULES
    grid = cfg.n if len(cfg.n) > 1 else DEFAULT_DIAGNOSE_GRID
    rows, verdicts = [], []
    for s in schedules:
        v = check_growth_rule(_family(cfg), s, grid, cfg.dim)
        ratios = ", ".join(f"{r:.4g}" for r in v.ratios)
        print(f"schedule {Schedule.parse(s)}: m = {list(v.m_values)}, sup_q*m/n = [{ratios}] "
              f"-> {v.verdict} (sufficient: {v.sufficient_rule})", file=out)
        rows += [[str(Schedule.parse(s)), n, mm, r, v.verdict]
                 for n, mm, r in zip(v.n_grid, v.m_values, v.ratios)]
        verdicts.append({"name": str(Schedule.parse(s)), "passed": v.passed})
    if cfg.format == "json":
        spec = asdict(cfg)
        spec["profile"] = {"m": prof.m, "n": prof.n, "sup_q": prof.sup_q,
                           "sup_q_exact": prof.sup_q_exact, "mean_q": prof.mean_q_quad,
                           "max_empirical": prof.max_empirical,
                           "high_leverage": prof.high_leverage_flags.tolist()}
        keys = ("schedule", "n", "m", "ratio", "verdict")
        _emit(cfg, _json_text(spec, [dict(zip(keys, r)) for r in rows], verdicts))
    else:
        _emit(cfg, _csv_text(("schedule", "n", "m", "ratio", "verdict"), rows))
    return 0


def _study_spec(cfg: CliConfig) -> StudySpec:
    kw = {}
    if cfg.slope_band is not None:
        kw["slope_band"] = cfg.slope_band
    if cfg.control_slope_band is not None:
        kw["control_slope_band"] = cfg.control_slope_band
    return StudySpec(study=cfg.study, integrand_id=cfg.integrand, basis_family=_family(cfg),
                     schedule=Schedule.const(0) if cfg.basis == "none" else cfg.schedule_obj,
                     n_grid=cfg.n, reps=cfg.reps, alpha=cfg.alpha, seed=cfg.seed, d=cfg.dim,
                     form=cfg.form, quantile=cfg.quantile, threads=cfg.threads, **kw)


def _run_study(cfg: CliConfig, out) -> int:
    try:
        spec = _study_spec(cfg)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    result = run_study(spec)
    if cfg.format == "json":
        _emit(cfg, _json_text(spec.to_dict(), [r.to_dict() for r in result.rows],
                              [asdict(v) for v in result.verdicts]))
    else:
        _emit(cfg, _csv_text(CSV_FIELDS, [r.csv_values() for r in result.rows]))
    print(result.summary(), file=out)
    return 0 if result.passed else 3


def run(config: CliConfig, out=None) -> int:
    """Execute a parsed configuration and return the process exit code."""
    out = out or sys.stdout
    handler = {"estimate": _run_estimate, "diagnose": _run_diagnose, "study": _run_study}
    try:
        return handler[config.subcommand](config, out)
    except UsageError as exc:
        print(f"cvmc: usage error: {exc}", file=sys.stderr)
        return 2
    except CVMCError as exc:
        print(f"{type(exc).__module__}.{type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


def main(argv=None) -> int:
    try:
        cfg = parse_config(sys.argv[1:] if argv is None else argv)
    except UsageError as exc:
        print(f"cvmc: usage error: {exc}", file=sys.stderr)
        return 2
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
