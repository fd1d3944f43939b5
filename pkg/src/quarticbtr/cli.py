"""Command-line driver: ``quarticbtr {bootstrap,eval,verify,scan} CONFIG ...``.

The configuration is one JSON document::

    {"lambda": 0.1, "N": 1, "e": [1.0], "r": [1],
     "contour": {"base_nodes": 64, ...},
     "recursion": {"tau_sep": 1e-6, "lambda_normalization": "scaled_u"},
     "cache_path": "values.json", "output_format": "json"}

Complex numbers are written as ``[re, im]`` in JSON and as ``re,im`` on the
command line.  Exit codes: 0 success, 1 verification failure, 2 bad input,
3 curve bootstrap failure, 4 evaluation failure.  ``BTR_LOG`` sets the log
level (``DEBUG``, ``INFO``, ...; default ``WARNING``).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
import tempfile
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from . import loopeq
from .contour import ContourSettings
from .curve import CurveConfig, SpectralCurve, bootstrap
from .errors import (AmbiguousConjugate, BadConfig, BTRError, DegenerateGeometry, NonConvergence,
                     PoleHit, RamificationPoint, StabilityViolation)
from .recursion import CorrelatorQuery, EvalCache, Engine, RecursionSettings, omega_eval, w_base

log = logging.getLogger("quarticbtr")

EXIT_OK, EXIT_VERIFY, EXIT_PARSE, EXIT_BOOTSTRAP, EXIT_EVAL = 0, 1, 2, 3, 4

THRESHOLDS = {"lin_g0": 1e-6, "quad_g0": 1e-6, "lin_g1": 1e-6, "quad_g1": 1e-5,
              "dse_u0": 1e-8, "dse_v0": 1e-8, "diag_u01": 1e-8, "qhat_identity": 1e-8,
              "sym_u01": 1e-8, "sym_p01": 1e-8, "residue": 1e-6}

SUITES = ("g0", "g1", "closedforms", "all")


class UsageError(BTRError):
    """Malformed command-line input (exit code 2)."""


def _cz(v) -> list:
    v = complex(v)
    return [v.real, v.imag]


@dataclass(frozen=True)
class RunConfig:
    """Everything a command needs besides its own flags."""

    curve: CurveConfig
    contour: ContourSettings = field(default_factory=ContourSettings)
    recursion: RecursionSettings = field(default_factory=RecursionSettings)
    cache_path: str | None = None
    output_format: str = "json"

    def to_dict(self) -> dict:
        rec = asdict(self.recursion)
        rec.pop("contour")
        return {"lambda": self.curve.lam, "N": self.curve.bigN, "e": list(self.curve.e),
                "r": list(self.curve.r), "contour": asdict(self.contour), "recursion": rec}


def parse_config(doc: dict) -> RunConfig:
    """Build a :class:`RunConfig` from a decoded JSON document.

    Raises
    ------
    BadConfig
        On missing keys, wrong types or non-positive tolerances.
    """
    if not isinstance(doc, dict):
        raise BadConfig("config must be a JSON object")
    try:
        curve = CurveConfig(float(doc["lambda"]), float(doc["N"]), tuple(doc["e"]), tuple(doc["r"]))
        contour = ContourSettings(**doc.get("contour", {}))
        rec = dict(doc.get("recursion", {}))
        recursion = RecursionSettings(contour=contour, **rec)
    except KeyError as exc:
        raise BadConfig(f"missing config key {exc}") from exc
    except (TypeError, ValueError) as exc:
        raise BadConfig(str(exc)) from exc
    if contour.agree_tol <= 0 or recursion.tau_sep <= 0:
        raise BadConfig("tolerances must be positive")
    fmt = doc.get("output_format", "json")
    if fmt not in ("json", "csv"):
        raise BadConfig("output_format must be json or csv")
    return RunConfig(curve, contour, recursion, doc.get("cache_path"), fmt)


def load_config(path: str) -> RunConfig:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise BadConfig(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise BadConfig(f"malformed JSON in {path}: {exc}") from exc
    return parse_config(doc)


def parse_complex(text: str) -> complex:
    """``"re"`` or ``"re,im"`` to a complex number."""
    parts = text.strip().split(",")
    try:
        if len(parts) == 1:
            return complex(float(parts[0]), 0.0)
        if len(parts) == 2:
            return complex(float(parts[0]), float(parts[1]))
    except ValueError:
        pass
    raise UsageError(f"cannot parse complex number {text!r}")


def parse_points(text: str) -> list:
    """Semicolon-separated complex numbers; empty string gives no points."""
    text = text.strip()
    return [parse_complex(p) for p in text.split(";")] if text else []


def format_complex(v: complex) -> str:
    return f"{complex(v).real!r},{complex(v).imag!r}"


class FileCache:
    """Content-addressed JSON store of correlator values.

    Keys are SHA-256 digests of the curve data, the engine settings and the
    bit patterns of the query; values are ``[re, im]``.  The file is only a
    shortcut: removing it changes runtime, never results.
    """

    def __init__(self, path: str | None):
        self.path = path
        self.data: dict = {}
        if path and os.path.exists(path):
            try:
                with open(path) as fh:
                    self.data = json.load(fh)
            except (OSError, json.JSONDecodeError):
                log.warning("ignoring unreadable cache file %s", path)
                self.data = {}

    @staticmethod
    def key(config: RunConfig, tag: str, g: int, points: Sequence[complex]) -> str:
        pts = [(complex(p).real.hex(), complex(p).imag.hex()) for p in points]
        blob = json.dumps([config.to_dict(), tag, g, pts], sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()

    def get(self, key: str):
        v = self.data.get(key)
        return None if v is None else complex(v[0], v[1])

    def put(self, key: str, value: complex) -> None:
        self.data[key] = _cz(value)

    def save(self) -> None:
        if not self.path:
            return
        folder = os.path.dirname(os.path.abspath(self.path))
        fd, tmp = tempfile.mkstemp(dir=folder, suffix=".tmp")
        with os.fdopen(fd, "w") as fh:
            json.dump(self.data, fh, sort_keys=True)
        os.replace(tmp, self.path)


# ---------------------------------------------------------------------------
# sampling


def generic_points(curve: SpectralCurve, rng: np.random.Generator, count: int,
                   min_sep: float = 0.2, radius: tuple = (0.3, 2.5)) -> list:
    """``count`` random points away from the curve's special points and from each other.

    Points are drawn uniformly in the annulus ``radius[0] <= |z| <= radius[1]``
    and rejected when closer than ``min_sep`` to a special point, a fiber
    point over a ramification value, or to ``+-`` an earlier point.
    """
    avoid = list(curve.special_points)
    if len(curve.beta):
        avoid += list(curve.beta_fiber_points)
    avoid = np.asarray(avoid, dtype=complex)
    out: list = []
    for _ in range(10_000):
        if len(out) == count:
            return out
        r = rng.uniform(*radius)
        t = rng.uniform(0, 2 * np.pi)
        p = complex(r * np.cos(t), r * np.sin(t))
        near = np.concatenate([avoid, out, -np.asarray(out, dtype=complex)]) if out else avoid
        if near.size == 0 or np.min(np.abs(near - p)) >= min_sep:
            out.append(p)
    raise NonConvergence("could not place generic sample points")


# ---------------------------------------------------------------------------
# commands


def _bootstrap(config: RunConfig) -> SpectralCurve:
    try:
        return bootstrap(config.curve)
    except NonConvergence as exc:
        raise _Exit(EXIT_BOOTSTRAP, f"bootstrap failed: {exc}") from exc


class _Exit(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def cmd_bootstrap(config: RunConfig) -> dict:
    """Curve data and bootstrap residuals."""
    curve = _bootstrap(config)
    out = curve.summary()
    out["warnings"] = []
    if curve.degenerate:
        msg = "degenerate: no ramification points"
        out["warnings"].append(msg)
        print(f"warning: {msg}", file=sys.stderr)
    return out


def _diagnostics(curve, eng, g, z, us) -> dict:
    """Loop-equation residual at the evaluation point, where one applies."""
    try:
        if g == 0 and us:
            rep = loopeq.check_linear_g0(curve, z, us, eng.cache, eng.settings)
        elif g == 1 and len(us) <= 1:
            rep = loopeq.check_linear_g1(curve, z, us, eng.cache, eng.settings)
        else:
            return {}
    except BTRError as exc:
        return {"skipped": str(exc)}
    return {rep.identity: rep.residual}


def cmd_eval(config: RunConfig, g: int, points: Sequence[complex], omega: bool = False,
             normalization: str | None = None) -> dict:
    """One correlator value (or density) as a JSON-ready record."""
    if not points:
        raise UsageError("--points needs at least z")
    curve = _bootstrap(config)
    settings = config.recursion
    if normalization:
        settings = RecursionSettings(settings.contour, settings.tau_sep, normalization,
                                     settings.origin_pair_weight, settings.trunc_tol,
                                     settings.chunk_points)
    z, us = points[0], tuple(points[1:])
    store = FileCache(config.cache_path)
    tag = f"omega:{settings.lambda_normalization}" if omega else "w"
    key = FileCache.key(config, tag, g, points)
    try:
        eng = Engine(curve, settings, EvalCache())
        value = store.get(key)
        if value is None:
            if omega:
                value = omega_eval(curve, g, points, eng.cache, settings)
            else:
                value = eng.evaluate(CorrelatorQuery(g, z, us))
            store.put(key, value)
            store.save()
        diag = _diagnostics(curve, eng, g, z, us)
    except (BTRError, ValueError) as exc:
        raise _Exit(EXIT_EVAL, f"evaluation failed: {exc}") from exc
    return {"g": g, "n": len(us), "points": [_cz(p) for p in points], "value": _cz(value),
            "omega": omega, "normalization": settings.lambda_normalization if omega else None,
            "residual_diagnostics": diag}


def _suite_reports(curve, eng, suite: str, rng, samples: int) -> list:
    reports = []
    if suite in ("closedforms", "all"):
        for _ in range(samples):
            z, w = generic_points(curve, rng, 2)
            reports += loopeq.check_closedforms(curve, z, w)
    if suite in ("g0", "all"):
        for _ in range(samples):
            z, *us = generic_points(curve, rng, 4)
            for k in (1, 2, 3):
                reports.append(loopeq.check_linear_g0(curve, z, us[:k], eng.cache, eng.settings))
                reports.append(loopeq.check_quadratic_g0(curve, z, us[:k], eng.cache, eng.settings))
    if suite in ("g1", "all"):
        for _ in range(samples):
            z, u = generic_points(curve, rng, 2)
            for us in ((), (u,)):
                reports.append(loopeq.check_linear_g1(curve, z, us, eng.cache, eng.settings))
                reports.append(loopeq.check_quadratic_g1(curve, z, us, eng.cache, eng.settings))
    return reports


def cmd_verify(config: RunConfig, suite: str = "all", samples: int = 3, seed: int = 0) -> dict:
    """Run identity checks at seeded random points; ``passed`` is the overall verdict."""
    if suite not in SUITES:
        raise UsageError(f"unknown suite {suite!r}")
    if samples < 1:
        raise UsageError("--samples must be positive")
    curve = _bootstrap(config)
    if curve.degenerate:
        raise _Exit(EXIT_EVAL, "verification needs lambda != 0")
    rng = np.random.default_rng(seed)
    try:
        eng = Engine(curve, config.recursion, EvalCache())
        reports = _suite_reports(curve, eng, suite, rng, samples)
    except BTRError as exc:
        raise _Exit(EXIT_EVAL, f"evaluation failed: {exc}") from exc
    rows, worst = [], None
    for rep in reports:
        row = rep.to_dict()
        row["threshold"] = THRESHOLDS[rep.identity]
        row["passed"] = rep.residual < row["threshold"]
        rows.append(row)
        ratio = rep.residual / row["threshold"]
        if worst is None or ratio > worst[0]:
            worst = (ratio, row)
    return {"suite": suite, "seed": seed, "samples": samples, "config": config.to_dict(),
            "passed": all(r["passed"] for r in rows), "worst": worst[1] if worst else None,
            "reports": rows}


def _parse_range(text: str):
    try:
        a, b, steps = text.split(":")
        steps = int(steps)
    except ValueError as exc:
        raise UsageError(f"--var-range must read a:b:steps, got {text!r}") from exc
    if steps < 1:
        raise UsageError("steps must be positive")
    return parse_complex(a), parse_complex(b), steps


def cmd_scan(config: RunConfig, g: int, fixed: Sequence[complex], var_range: str,
             quantity: str = "w", skip_window: float = 1e-3) -> list:
    """Rows ``(re z, im z, re W, im W, [residual,] skipped)`` along a segment.

    Points within ``skip_window`` of a ramification point, of ``-eps_k``, of
    the origin or of ``+-u_j`` are flagged with ``skipped = 1`` and left
    blank.  ``quantity="lin_residual"`` (genus one, at most one fixed point)
    adds the linear loop-equation residual of the fiber sum.
    """
    a, b, steps = _parse_range(var_range)
    curve = _bootstrap(config)
    if curve.degenerate and not (g == 0 and len(fixed) == 1):
        raise _Exit(EXIT_EVAL, "scan needs lambda != 0 beyond the two-point base case")
    eng = Engine(curve, config.recursion, EvalCache()) if not curve.degenerate else None
    excluded = np.concatenate([curve.beta, -curve.eps, [0.0], fixed, -np.asarray(fixed, dtype=complex)])
    rows = []
    ts = np.linspace(0.0, 1.0, steps) if steps > 1 else np.zeros(1)
    for t in ts:
        z = complex(a + (b - a) * t)
        row = {"re_z": z.real, "im_z": z.imag, "re_w": "", "im_w": "", "skipped": 0}
        if quantity == "lin_residual":
            row["residual"] = ""
        if np.min(np.abs(excluded - z)) < skip_window:
            row["skipped"] = 1
            rows.append(row)
            continue
        try:
            query = CorrelatorQuery(g, z, tuple(fixed))
            if eng is None:
                value = complex(w_base(curve, z, fixed[0]))
            else:
                value = eng.evaluate(query)
            row["re_w"], row["im_w"] = value.real, value.imag
            if quantity == "lin_residual":
                row["residual"] = loopeq.check_linear_g1(curve, z, fixed, eng.cache,
                                                         eng.settings).residual
        except (DegenerateGeometry, PoleHit, RamificationPoint, NonConvergence,
                AmbiguousConjugate) as exc:
            log.info("skipping z = %s: %s", z, exc)
            row["skipped"] = 1
        except StabilityViolation as exc:
            raise _Exit(EXIT_EVAL, f"evaluation failed: {exc}") from exc
        rows.append(row)
    return rows


# ---------------------------------------------------------------------------
# entry point


def _dump(obj, path: str | None) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _write_csv(rows: list, path: str | None) -> None:
    fields = list(rows[0].keys()) if rows else ["re_z", "im_z", "re_w", "im_w", "skipped"]
    fh = open(path, "w", newline="") if path else sys.stdout
    try:
        writer = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    finally:
        if path:
            fh.close()


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="quarticbtr",
                                description="Correlators of the quartic spectral curve.")
    sub = p.add_subparsers(dest="command", required=True)

    b = sub.add_parser("bootstrap", help="solve for the curve data")
    b.add_argument("config")
    b.add_argument("--output")

    e = sub.add_parser("eval", help="evaluate one correlator")
    e.add_argument("config")
    e.add_argument("--g", type=int, required=True, choices=(0, 1))
    e.add_argument("--points", required=True, help='"z;u1;u2" with each point as re,im')
    e.add_argument("--omega", action="store_true", help="return the density instead of W")
    e.add_argument("--normalization", choices=("scaled_u", "unscaled_x"))
    e.add_argument("--output")

    v = sub.add_parser("verify", help="check loop equations at random points")
    v.add_argument("config")
    v.add_argument("--suite", choices=SUITES, default="all")
    v.add_argument("--samples", type=int, default=3)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--output")

    s = sub.add_parser("scan", help="tabulate a correlator along a segment")
    s.add_argument("config")
    s.add_argument("--g", type=int, required=True, choices=(0, 1))
    s.add_argument("--fixed", default="", help='"u1;u2" with each point as re,im')
    s.add_argument("--var-range", required=True, help="a:b:steps with a, b as re or re,im")
    s.add_argument("--quantity", choices=("w", "lin_residual"), default="w")
    s.add_argument("--skip-window", type=float, default=1e-3,
                   help="flag rows closer than this to an excluded point")
    s.add_argument("--output")
    return p


def _setup_logging() -> None:
    level = os.environ.get("BTR_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def main(argv: Sequence[str] | None = None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config)
        if args.command == "bootstrap":
            _dump(cmd_bootstrap(config), args.output)
        elif args.command == "eval":
            _dump(cmd_eval(config, args.g, parse_points(args.points), args.omega,
                           args.normalization), args.output)
        elif args.command == "verify":
            report = cmd_verify(config, args.suite, args.samples, args.seed)
            _dump(report, args.output)
            if not report["passed"]:
                w = report["worst"]
                print(f"FAIL: worst {w['identity']} residual {w['residual']:.3e} "
                      f"at {w['sample_point']}", file=sys.stderr)
                return EXIT_VERIFY
        elif args.command == "scan":
            rows = cmd_scan(config, args.g, parse_points(args.fixed), args.var_range, args.quantity,
                            args.skip_window)
            _write_csv(rows, args.output)
    except (BadConfig, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except _Exit as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
