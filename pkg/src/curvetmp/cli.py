"""Command line front end working on JSON files.

Problem files hold a curve, a degree and the moments ``[i, j, value]``; measure
files hold atoms ``[x, y]`` with densities; reports carry the status, the
measure, diagnostics and the tolerances used.  Output is deterministic.
"""

from __future__ import annotations

import argparse
import json
import math
import re
import sys
from enum import Enum
from pathlib import Path

import numpy as np

from .completion import export_sdpa, solve_curve
from .core import (
    DEFAULT_TOLERANCES,
    AtomicMeasure2D,
    BivariateMomentSequence,
    CurveSpec,
    CurveTMPError,
    GraphCurve,
    HyperbolicCurve,
    InvalidInput,
    Status,
    ToleranceConfig,
    build_moment_matrix,
    check_curve_relations,
    moment_residual,
    simplex,
    synth_moments,
)
from .reduction import reduce_to_univariate

EXIT_OK, EXIT_ERROR, EXIT_NO, EXIT_UNKNOWN = 0, 1, 2, 3
_STATUS_EXIT = {Status.MEASURE_FOUND: EXIT_OK, Status.NO_MEASURE: EXIT_NO, Status.UNKNOWN: EXIT_UNKNOWN}
_TOL_FLAGS = ("rank_tol", "psd_tol", "residual_tol", "max_iter")


# ---------------------------------------------------------------------------
# JSON with 17 significant digits


def _num(v: float) -> str:
    if not math.isfinite(v):
        return "null"
    s = format(v, ".17g")
    return s if any(c in s for c in ".en") else s + ".0"


def _plain(obj):
    if isinstance(obj, Enum):
        return obj.value
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return obj


def dumps(obj, indent: int = 0) -> str:
    obj = _plain(obj)
    pad, inner = "  " * indent, "  " * (indent + 1)
    if obj is None or isinstance(obj, bool):
        return json.dumps(obj)
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        return _num(obj)
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{inner}{json.dumps(str(k))}: {dumps(v, indent + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, (list, tuple)):
        parts = [dumps(v, indent + 1) for v in obj]
        if all("\n" not in p for p in parts) and sum(len(p) for p in parts) < 100:
            return "[" + ", ".join(parts) + "]"
        return "[\n" + ",\n".join(inner + p for p in parts) + "\n" + pad + "]"
    raise InvalidInput(f"cannot serialize {type(obj).__name__}")


# ---------------------------------------------------------------------------
# parsing

_GRAPH_RE = re.compile(r"^y=x\^(\d+)$")
_HYPER_RE = re.compile(r"^y\*x\^(\d+)=1$")


def parse_curve(desc) -> CurveSpec:
    """``"y=x^k"``, ``"y*x^l=1"``, a coefficient list ``[q0, ..., ql]``,
    ``{"graph": [...]}`` or ``{"hyperbolic": l}``."""
    if isinstance(desc, str):
        s = desc.replace(" ", "")
        if m := _GRAPH_RE.match(s):
            k = int(m.group(1))
            return GraphCurve(tuple([0.0] * k + [1.0]))
        if m := _HYPER_RE.match(s):
            return HyperbolicCurve(int(m.group(1)))
        if s.startswith("["):
            try:
                return parse_curve(json.loads(s))
            except json.JSONDecodeError:
                pass
        raise InvalidInput(f"unrecognized curve descriptor {desc!r}")
    if isinstance(desc, dict) and len(desc) == 1:
        (kind, arg), = desc.items()
        if kind == "graph":
            return parse_curve(arg)
        if kind == "hyperbolic" and isinstance(arg, int) and not isinstance(arg, bool):
            return HyperbolicCurve(arg)
    if isinstance(desc, list) and desc and all(_is_number(c) for c in desc):
        return GraphCurve(tuple(float(c) for c in desc))
    raise InvalidInput(f"unrecognized curve descriptor {desc!r}")


def curve_descriptor(curve: CurveSpec):
    if isinstance(curve, HyperbolicCurve):
        return f"y*x^{curve.ell}=1"
    if all(c == 0.0 for c in curve.q[:-1]) and curve.q[-1] == 1.0:
        return f"y=x^{curve.ell}"
    return list(curve.q)


def _is_number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


def _load(path: str | None, what: str) -> dict:
    if path is None:
        raise InvalidInput(f"--{what} is required")
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise InvalidInput(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise InvalidInput(f"{path} is not valid JSON: {exc.msg} at line {exc.lineno}") from None
    if not isinstance(data, dict):
        raise InvalidInput(f"{path} must hold a JSON object")
    return data


def _tolerances(overrides: dict | None, args) -> ToleranceConfig:
    cfg = DEFAULT_TOLERANCES.as_dict()
    for name, value in (overrides or {}).items():
        if name not in cfg or not _is_number(value):
            raise InvalidInput(f"bad tolerance override {name!r}")
        cfg[name] = value
    for name in _TOL_FLAGS:
        value = getattr(args, name, None)
        if value is not None:
            cfg[name] = value
    cfg["max_iter"] = int(cfg["max_iter"])
    return ToleranceConfig(**cfg)


def read_problem(data: dict) -> tuple[CurveSpec, BivariateMomentSequence, dict | None]:
    for key in ("curve", "degree", "moments"):
        if key not in data:
            raise InvalidInput(f"problem file lacks {key!r}")
    curve = parse_curve(data["curve"])
    d = data["degree"]
    if not isinstance(d, int) or isinstance(d, bool) or d < 0:
        raise InvalidInput("degree must be a nonnegative integer")
    values = {}
    for entry in data["moments"]:
        if not (isinstance(entry, list) and len(entry) == 3 and all(_is_number(v) for v in entry)
                and all(float(v).is_integer() for v in entry[:2])):
            raise InvalidInput(f"bad moment entry {entry!r}")
        key = (int(entry[0]), int(entry[1]))
        if key in values:
            raise InvalidInput(f"moment {list(key)} given twice")
        values[key] = float(entry[2])
    beta = BivariateMomentSequence(d, values)
    tol = data.get("tolerances")
    if tol is not None and not isinstance(tol, dict):
        raise InvalidInput("tolerances must be an object")
    return curve, beta, tol


def problem_dict(curve: CurveSpec, beta: BivariateMomentSequence) -> dict:
    return {
        "curve": curve_descriptor(curve),
        "degree": beta.degree,
        "moments": [[i, j, v] for (i, j), v in beta.items()],
    }


def read_measure(data: dict, curve: CurveSpec | None) -> AtomicMeasure2D:
    atoms, dens = data.get("atoms"), data.get("densities")
    if not isinstance(atoms, list) or not isinstance(dens, list):
        raise InvalidInput("measure file needs lists 'atoms' and 'densities'")
    if "curve" in data and curve is None:
        curve = parse_curve(data["curve"])
    pts = []
    for a in atoms:
        if _is_number(a) and curve is not None and isinstance(curve, GraphCurve):
            pts.append((float(a), float(curve.evaluate(float(a)))))
        elif _is_number(a) and isinstance(curve, HyperbolicCurve) and a != 0:
            pts.append((float(a), float(a) ** -curve.ell))
        elif isinstance(a, list) and len(a) == 2 and all(_is_number(v) for v in a):
            pts.append((float(a[0]), float(a[1])))
        else:
            raise InvalidInput(f"bad atom {a!r}")
    if not all(_is_number(r) for r in dens):
        raise InvalidInput("densities must be finite numbers")
    return AtomicMeasure2D(tuple(pts), tuple(float(r) for r in dens), curve)


def measure_dict(mu: AtomicMeasure2D | None):
    if mu is None:
        return None
    return {"atoms": [list(a) for a in mu.atoms], "densities": list(mu.densities)}


# ---------------------------------------------------------------------------
# subcommands


def _emit(payload: dict, out: str | None) -> None:
    text = dumps(payload) + "\n"
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_solve(args) -> int:
    curve, beta, tol = read_problem(_load(args.input, "input"))
    cfg = _tolerances(tol, args)
    report = solve_curve(beta, curve, cfg)
    residual = moment_residual(beta, report.measure) if report.measure is not None else None
    _emit({
        "status": report.status,
        "curve": curve_descriptor(curve),
        "degree": beta.degree,
        "measure": measure_dict(report.measure),
        "residual": residual,
        "diagnostics": report.diagnostics,
        "tolerances": cfg.as_dict(),
    }, args.out)
    return _STATUS_EXIT[report.status]


def cmd_synth(args) -> int:
    data = _load(args.measure, "measure")
    curve = parse_curve(args.curve) if args.curve else None
    mu = read_measure(data, curve)
    if mu.curve is None:
        raise InvalidInput("the curve must be given by --curve or in the measure file")
    if args.degree is None:
        raise InvalidInput("--degree is required")
    beta = synth_moments(mu, args.degree)
    _emit(problem_dict(mu.curve, beta), args.out)
    return EXIT_OK


def cmd_verify(args) -> int:
    curve, beta, tol = read_problem(_load(args.input, "input"))
    cfg = _tolerances(tol, args)
    data = _load(args.measure, "measure")
    if isinstance(data.get("measure"), dict):
        data = data["measure"]  # a solve report is accepted as well
    mu = read_measure(data, curve)
    residual = moment_residual(beta, mu)
    ok = residual < cfg.residual_tol
    _emit({"represents": ok, "residual": residual, "atom_count": len(mu), "tolerances": cfg.as_dict()}, args.out)
    return EXIT_OK if ok else EXIT_NO


def cmd_check(args) -> int:
    curve, beta, tol = read_problem(_load(args.input, "input"))
    cfg = _tolerances(tol, args)
    bad = check_curve_relations(beta, curve, max(cfg.residual_tol * 1e-2, cfg.rank_tol))
    d = beta.degree
    M = build_moment_matrix(beta if d % 2 == 0 else beta.truncate(d - 1)).matrix()
    eig = np.linalg.eigvalsh(M)
    scale = max(float(np.max(np.abs(eig))), 1e-300)
    psd = bool(eig[0] >= -cfg.psd_tol * scale)
    _emit({
        "relations_hold": not bad,
        "relations_violated": [list(p) for p in bad],
        "moment_matrix_psd": psd,
        "min_eigenvalue": float(eig[0]),
        "rank": int(np.sum(eig > cfg.rank_tol * scale)),
        "tolerances": cfg.as_dict(),
    }, args.out)
    return EXIT_OK if psd and not bad else EXIT_NO


def cmd_export_sdpa(args) -> int:
    curve, beta, tol = read_problem(_load(args.input, "input"))
    cfg = _tolerances(tol, args)
    red = reduce_to_univariate(beta, curve, max(cfg.residual_tol * 1e-2, cfg.rank_tol))
    text = export_sdpa(red.partial)
    out = args.out or str(Path(args.input).with_suffix(".dat-s"))
    Path(out).write_text(text)
    sys.stdout.write(dumps({"written": out, "unknowns": len(red.partial.holes),
                            "block_size": (len(red.partial) + 1) // 2}) + "\n")
    return EXIT_OK


_COMMANDS = {
    "solve": cmd_solve,
    "synth": cmd_synth,
    "verify": cmd_verify,
    "check": cmd_check,
    "export-sdpa": cmd_export_sdpa,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise InvalidInput(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="curvetmp", description="Truncated moment problems on planar curves.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--input")
        p.add_argument("--out")
        p.add_argument("--measure")
        p.add_argument("--degree", type=int)
        p.add_argument("--curve")
        p.add_argument("--rank-tol", dest="rank_tol", type=float)
        p.add_argument("--psd-tol", dest="psd_tol", type=float)
        p.add_argument("--residual-tol", dest="residual_tol", type=float)
        p.add_argument("--max-iter", dest="max_iter", type=int)
    return parser


def parse_and_run(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return _COMMANDS[args.command](args)
    except CurveTMPError as exc:
        sys.stdout.write(dumps(exc.to_dict()) + "\n")
        return EXIT_ERROR


def main() -> None:
    sys.exit(parse_and_run())


if __name__ == "__main__":
    main()
