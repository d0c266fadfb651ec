"""Command-line front end.

  freeshear analyze    --builtin sine:1,1pi,1
  freeshear growth     --profile p.json --alpha-min 1 --alpha-max 12 --steps 25
  freeshear dispersion --builtin sine:1,1pi,1 --k 0.5,1,2
  freeshear neutral    --builtin sine:1,1pi,1 --verify
  freeshear modes      --builtin sine:1,1pi,1 --alpha 5

Exit codes: 0 ok, 2 input error, 3 numerical failure.  Output is assembled in
memory and written only when the command succeeds.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, dispersion, neutral, ode, rayleigh, sturm
from .errors import InputError, NotFplus, NumericalError
from .profile import ShearProfile, classify, find_inflections, load_profile, parse_builtin

SCHEMA_VERSION = "1.0"
EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3

GROWTH_COLUMNS = ("alpha", "re_c", "im_c", "growth_rate", "bc_residual", "identity_residual",
                  "semicircle_margin", "error")
DISPERSION_COLUMNS = ("k", "c", "f_residual", "status")
MODES_COLUMNS = ("mode", "y", "re_phi", "im_phi", "re_dphi", "im_dphi")


class _InputArgError(InputError):
    pass


@dataclass
class SweepResult:
    kind: str
    columns: tuple
    rows: list
    meta: dict = field(default_factory=dict)


@dataclass
class StabilityReport:
    profile_summary: dict
    alphas: dict
    intervals: list | None
    neutral: list
    notes: list

    def to_dict(self) -> dict:
        return {"schema_version": SCHEMA_VERSION, "freeshear_version": __version__,
                "profile_summary": self.profile_summary, "alphas": self.alphas,
                "intervals": self.intervals, "neutral": self.neutral, "notes": self.notes}


# -- formatting ---------------------------------------------------------------

def _num(x):
    """Finite float, or None for missing values (never NaN/Inf in output)."""
    if x is None:
        return None
    x = float(x)
    return x if math.isfinite(x) else None


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return _num(obj)
    return obj


def to_json(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    x = float(v)
    return format(x, ".17g") if math.isfinite(x) else ""


def to_csv(sweep: SweepResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(sweep.columns)
    for row in sweep.rows:
        w.writerow([_cell(row.get(c)) for c in sweep.columns])
    return buf.getvalue()


def sweep_json(sweep: SweepResult) -> str:
    return to_json({"schema_version": SCHEMA_VERSION, "kind": sweep.kind,
                    "columns": list(sweep.columns), "rows": sweep.rows, "meta": sweep.meta})


# -- commands -------------------------------------------------------------------

def _mode_summary(m: neutral.NeutralMode) -> dict:
    return {"alpha_s": m.alpha_s, "c_s": m.c_s, "lambda": m.lam, "variant": m.variant.tag,
            "robin_coeff": m.variant.robin_coeff, "K_sign": m.K_sign,
            "inflection_points": list(m.points), "normalization": m.normalization}


def cmd_analyze(profile: ShearProfile, N: int = ode.DEFAULT_N) -> StabilityReport:
    infl = find_inflections(profile)
    cls = classify(profile, infl)
    summary = profile.summary()
    summary.update({"g": profile.g, "grid": N,
                    "classification": {"is_Kplus": cls.is_Kplus, "is_F": cls.is_F,
                                       "is_Fplus": cls.is_Fplus, "is_monotone": cls.is_monotone,
                                       "has_inflection": cls.has_inflection},
                    "inflection_points": list(infl.points),
                    "inflection_values": list(infl.values)})
    notes = list(cls.notes)
    alphas = {"alpha_max": None, "alpha_d": None, "alpha_n": None}
    if infl.degenerate_linear or not infl.values:
        notes.append("stable: no inflection point")
        return StabilityReport(summary, alphas, [], [], notes)
    if len(infl.values) == 1:
        tri = sturm.alpha_triple(profile, N)
        alphas = {"alpha_max": tri.alpha_max, "alpha_d": tri.alpha_d, "alpha_n": tri.alpha_n}
        notes.extend(tri.notes)
    else:
        notes.append("several inflection values: alpha_max/alpha_d/alpha_n not defined")
    intervals = None
    try:
        ui = neutral.unstable_intervals(profile, N)
        intervals = [[a, b] for a, b in ui.intervals]
        modes = [m for e in ui.neutral_catalog for m in e.modes]
        notes.extend(ui.notes)
    except NotFplus as exc:
        notes.append(f"interval assembly skipped: {exc}")
        modes = neutral.neutral_modes(profile, N)
    return StabilityReport(summary, alphas, intervals, [_mode_summary(m) for m in modes], notes)


def _growth_row(args):
    profile, alpha, N = args
    rows = []
    try:
        res = rayleigh.search_modes(profile, alpha, N)
    except NumericalError as exc:
        return [{"alpha": alpha, "error": f"{type(exc).__name__}: {exc}"}]
    for m in res.modes:
        r = m.residuals
        rows.append({"alpha": alpha, "re_c": m.c.real, "im_c": m.c.imag,
                     "growth_rate": alpha * m.c.imag,
                     "bc_residual": max(r["bc_top"], r["bc_bottom"]),
                     "identity_residual": max(r["identity_Jq"], r["identity_imag"]),
                     "semicircle_margin": r["semicircle_margin"], "error": ""})
    return rows or [{"alpha": alpha, "error": ""}]


def cmd_growth(profile: ShearProfile, alpha_min: float, alpha_max: float, steps: int,
               N: int = ode.DEFAULT_N, jobs: int = 1) -> SweepResult:
    if not (0 < alpha_min < alpha_max) or steps < 2:
        raise _InputArgError("growth needs 0 < alpha-min < alpha-max and steps >= 2")
    alphas = [float(a) for a in np.linspace(alpha_min, alpha_max, steps)]
    work = [(profile, a, N) for a in alphas]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            chunks = list(ex.map(_growth_row, work))
    else:
        chunks = [_growth_row(w) for w in work]
    rows = [r for ch in chunks for r in ch]
    return SweepResult("growth", GROWTH_COLUMNS, rows, {"profile": profile.summary(), "grid": N})


def cmd_dispersion(profile: ShearProfile, k_list, N: int = ode.DEFAULT_N) -> SweepResult:
    ks = sorted(float(k) for k in k_list)
    if not ks or ks[0] <= 0:
        raise _InputArgError("all k must be > 0")
    rows = []
    for k in ks:
        try:
            pt = dispersion.solve_c_of_k(profile, k, N)
            rows.append({"k": k, "c": pt.c, "f_residual": pt.f_residual, "status": pt.status})
        except NumericalError as exc:
            rows.append({"k": k, "status": f"{type(exc).__name__}: {exc}"})
    meta = {"profile": profile.summary(), "grid": N}
    try:
        cb = dispersion.burns_speed(profile)
        first = next((r for r in rows if r.get("c") is not None), None)
        gap = abs(first["c"] - cb) / cb if first else None
        rows.append({"k": 0.0, "c": cb, "f_residual": gap, "status": "burns_limit"})
    except NumericalError as exc:
        rows.append({"k": 0.0, "status": f"burns_limit {type(exc).__name__}: {exc}"})
    return SweepResult("dispersion", DISPERSION_COLUMNS, rows, meta)


def cmd_neutral(profile: ShearProfile, verify: bool = False, N: int = ode.DEFAULT_N) -> list:
    out = []
    for m in neutral.neutral_modes(profile, N):
        rec = _mode_summary(m)
        r = neutral.bifurcation_rate(profile, m)
        rec["rate"] = {"A": r.A, "B": r.B, "C": r.C, "D": r.D, "dcdeps_re": r.dcdeps.real,
                       "dcdeps_im": r.dcdeps.imag, "pv_value": r.pv_value,
                       "singular_sum": r.singular_sum, "degenerate": r.degenerate,
                       "notes": list(r.notes)}
        if verify:
            rec["fd_check"] = [{"eps": d["eps"], "alpha": d["alpha"], "re_c": d["c"].real,
                                "im_c": d["c"].imag, "slope_re": d["slope"].real,
                                "slope_im": d["slope"].imag, "rel_err": d["rel_err"]}
                               for d in neutral.fd_rate_check(profile, m, r)]
        out.append(rec)
    return out


def cmd_modes(profile: ShearProfile, alpha: float, N: int = ode.DEFAULT_N,
              rigid: bool = False) -> SweepResult:
    if alpha <= 0:
        raise _InputArgError("alpha must be > 0")
    res = rayleigh.search_modes(profile, alpha, N, rigid)
    rows = []
    for i, m in enumerate(res.modes):
        for y, v, dv in zip(m.phi.nodes, m.phi.values, m.phi.deriv_values):
            rows.append({"mode": i, "y": y, "re_phi": v.real, "im_phi": v.imag,
                         "re_dphi": dv.real, "im_dphi": dv.imag})
    meta = {"alpha": alpha, "rigid": rigid, "grid": N,
            "modes": [{"mode": i, "re_c": m.c.real, "im_c": m.c.imag} for i, m in enumerate(res.modes)]}
    return SweepResult("modes", MODES_COLUMNS, rows, meta)


# -- argument handling --------------------------------------------------------------

def _floats(text: str) -> list:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise _InputArgError(f"bad number list {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    src = common.add_mutually_exclusive_group()
    src.add_argument("--profile", help="JSON profile description")
    src.add_argument("--builtin", help="builtin profile, e.g. sine:1,1pi,1")
    common.add_argument("--g", type=float, default=None, help="gravity (overrides the file)")
    common.add_argument("--grid", type=int, default=None, help="grid size N (default 2001)")
    common.add_argument("--out", default=None, help="output file (default stdout)")
    common.add_argument("--format", choices=("csv", "json"), default=None)
    common.add_argument("--verify", action="store_true", help="add finite-difference cross-checks")
    common.add_argument("--jobs", type=int, default=1, help="worker processes for sweeps")

    ap = argparse.ArgumentParser(prog="freeshear", description="Free-surface shear flow stability")
    ap.add_argument("--version", action="version", version=f"freeshear {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("analyze", parents=[common], help="classification, alphas, intervals")
    g = sub.add_parser("growth", parents=[common], help="unstable modes over an alpha sweep")
    g.add_argument("--alpha-min", type=float, required=True)
    g.add_argument("--alpha-max", type=float, required=True)
    g.add_argument("--steps", type=int, default=25)
    d = sub.add_parser("dispersion", parents=[common], help="c(k) for downstream waves")
    d.add_argument("--k", required=True, help="comma separated wavenumbers")
    sub.add_parser("neutral", parents=[common], help="neutral modes and bifurcation rates")
    m = sub.add_parser("modes", parents=[common], help="eigenfunction grid at one alpha")
    m.add_argument("--alpha", type=float, required=True)
    m.add_argument("--rigid", action="store_true", help="rigid lid instead of a free surface")
    return ap


def _load(args) -> ShearProfile:
    if args.profile:
        return load_profile(args.profile, g=args.g)
    if args.builtin:
        return parse_builtin(args.builtin, g=args.g)
    raise _InputArgError("one of --profile or --builtin is required")


def run(argv=None) -> tuple[int, str, str]:
    """Returns (exit code, output text, diagnostics)."""
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return (EXIT_OK if exc.code == 0 else EXIT_INPUT), "", ""
    try:
        profile = _load(args)
        N = ode.DEFAULT_N if args.grid is None else args.grid
        if N < 201:
            raise _InputArgError("--grid must be >= 201")
        if args.jobs < 1:
            raise _InputArgError("--jobs must be >= 1")
        fmt = args.format
        if args.command in ("analyze", "neutral"):
            if fmt == "csv":
                raise _InputArgError(f"{args.command} writes JSON only")
            if args.command == "analyze":
                text = to_json(cmd_analyze(profile, N).to_dict())
            else:
                recs = cmd_neutral(profile, args.verify, N)
                text = to_json({"schema_version": SCHEMA_VERSION, "neutral": recs})
        else:
            if args.command == "growth":
                sw = cmd_growth(profile, args.alpha_min, args.alpha_max, args.steps, N, args.jobs)
            elif args.command == "dispersion":
                sw = cmd_dispersion(profile, _floats(args.k), N)
            else:
                sw = cmd_modes(profile, args.alpha, N, args.rigid)
            text = sweep_json(sw) if fmt == "json" else to_csv(sw)
    except InputError as exc:
        return EXIT_INPUT, "", f"input error: {exc}\n"
    except NumericalError as exc:
        return EXIT_NUMERIC, "", f"numerical failure ({type(exc).__name__}): {exc}\n"
    return EXIT_OK, text, ""


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    code, text, diag = run(argv)
    if diag:
        sys.stderr.write(diag)
    if code == EXIT_OK:
        out = build_parser().parse_known_args(argv)[0].out
        if out:
            try:
                Path(out).write_text(text, encoding="utf-8")
            except OSError as exc:
                sys.stderr.write(f"cannot write {out}: {exc.strerror}\n")
                return EXIT_INPUT
        else:
            try:
                sys.stdout.write(text)
                sys.stdout.flush()
            except BrokenPipeError:
                pass
    return code


def load_schema() -> dict:
    return json.loads((Path(__file__).with_name("report_schema.json")).read_text(encoding="utf-8"))


if __name__ == "__main__":
    raise SystemExit(main())
