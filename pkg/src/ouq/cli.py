"""Command-line entry point.

Every command prints one JSON document on stdout (``oci --sweep`` prints CSV)
with a run manifest embedded. Exit codes: 0 success, 1 infeasible or
undecided, 2 input error, 3 internal error. Errors are reported as JSON on
stderr.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from importlib import resources
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import __version__
from .bounds import certify, draw_seed, solve_bound
from .experiments import (
    ExperimentFunctional,
    _interior,
    rank_scores,
    safe_unsafe_intervals,
    score_experiment,
)
from .expression import ExpressionError
from .inequalities import InequalityError, classic_mcdiarmid, optimal_mcdiarmid
from .optimizer import Infeasible, OptimizerConfig
from .problem import (
    AdmissibleProblem,
    AxisMean,
    AxisMedian,
    AxisPin,
    AxisProbability,
    AxisVariance,
    Known,
    ProblemError,
    SpecError,
    value_scale,
    functional_from_dict,
    load_problem,
    unit_scale,
)
from .response import ResponseError, oscillation

EXIT_OK, EXIT_UNDECIDED, EXIT_INPUT, EXIT_INTERNAL = 0, 1, 2, 3


class InputError(Exception):
    def __init__(self, message: str, pointer: str | None = None, offset: int | None = None):
        super().__init__(message)
        self.pointer = pointer
        self.offset = offset


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise InputError(message)


# output plumbing


def _clean(obj: Any) -> Any:
    """JSON-safe copy: numpy scalars become Python numbers, non-finite floats become null."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


_UMASK = os.umask(0)
os.umask(_UMASK)


def write_atomic(path: Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.chmod(tmp, 0o666 & ~_UMASK)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _schema(name: str) -> dict:
    return json.loads(resources.files("ouq").joinpath("schemas", f"{name}.schema.json").read_text("utf-8"))


def validate_result(doc: dict) -> None:
    import jsonschema

    jsonschema.validate(doc, _schema("result"))


def _dump(doc: dict) -> str:
    return json.dumps(doc, indent=2, allow_nan=False) + "\n"


class Run:
    """Manifest and output sink for one command invocation."""

    def __init__(self, args: argparse.Namespace, argv: Sequence[str]):
        self.args = args
        self.subcommand = args.command
        self.out = Path(args.out) if getattr(args, "out", None) else None
        self.seeds: list[int] = []
        self.config: dict = {}
        spec = getattr(args, "spec", None)
        if spec is not None:
            args.spec = str(Path(spec).resolve())
            argv = [args.spec if tok == spec else tok for tok in argv]
        self.argv = list(argv)
        if self.out is not None:
            self.out.mkdir(parents=True, exist_ok=True)
            if not os.access(self.out, os.W_OK):
                raise InputError(f"output directory {self.out} is not writable")

    def manifest(self) -> dict:
        return {
            "subcommand": self.subcommand,
            "input": getattr(self.args, "spec", None),
            "seeds": self.seeds,
            "config": self.config,
            "output_dir": None if self.out is None else str(self.out),
            "version": __version__,
            "argv": self.argv,
        }

    def emit(self, result: dict, extra_files: dict[str, str] | None = None) -> None:
        doc = _clean({"subcommand": self.subcommand, "manifest": self.manifest(), "result": result})
        validate_result(doc)
        text = _dump(doc)
        if self.out is not None:
            for name, content in (extra_files or {}).items():
                write_atomic(self.out / name, content)
            write_atomic(self.out / "manifest.json", _dump(doc["manifest"]))
            write_atomic(self.out / f"{self.subcommand}.json", text)
        sys.stdout.write(text)


# shared argument handling


def _read_spec(path: str) -> tuple[AdmissibleProblem, list[float]]:
    """Problem plus the per-axis factors from the problem file's declared units to internal units."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from exc
    problem = load_problem(text)
    axes = json.loads(text).get("domain", {}).get("axes", [])
    scales = [unit_scale(str(ax.get("unit", ""))) for ax in axes] or [1.0] * problem.domain.dim
    return problem, scales


def _config(args, run: Run) -> tuple[OptimizerConfig, list[int]]:
    overrides = {}
    if args.population is not None:
        overrides["population"] = args.population
    if args.generations is not None:
        overrides["max_generations"] = args.generations
    try:
        cfg = OptimizerConfig(**overrides)
    except (TypeError, ValueError) as exc:
        raise InputError(str(exc)) from exc
    if args.seeds:
        seeds = [int(s) for s in _floats(args.seeds, "--seeds", integer=True)]
    elif args.seed is not None:
        seeds = [args.seed]
    else:
        seeds = [draw_seed()]
    run.seeds = seeds
    run.config = {"overrides": overrides, "optimizer": cfg.to_dict()}
    run.argv = _pin_seeds(run.argv, seeds)
    return cfg, seeds


def _pin_seeds(argv: list[str], seeds: list[int]) -> list[str]:
    """argv with the seeds actually used made explicit, so a replay is deterministic."""
    out, skip = [], False
    for tok in argv:
        if skip:
            skip = False
            continue
        if tok in ("--seed", "--seeds"):
            skip = True
            continue
        if tok.startswith("--seed=") or tok.startswith("--seeds="):
            continue
        out.append(tok)
    return out + ["--seeds", ",".join(str(s) for s in seeds)]


def _floats(text: str, flag: str, integer: bool = False) -> list[float]:
    try:
        vals = [int(t) if integer else float(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise InputError(f"{flag}: expected a comma-separated list of numbers, got {text!r}") from exc
    if not vals:
        raise InputError(f"{flag}: empty list")
    return vals


def _solver_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, help="single seed; drawn and recorded when absent")
    p.add_argument("--seeds", help="comma-separated seeds; the best result over them is reported")
    p.add_argument("--generations", type=int, help="maximum optimizer generations")
    p.add_argument("--population", type=int, help="optimizer population size")
    p.add_argument("--out", help="directory for result, manifest and trace files")


# commands


def cmd_solve(args, run: Run) -> int:
    problem, _ = _read_spec(args.spec)
    cfg, seeds = _config(args, run)
    directions = [d for d, on in (("upper", args.upper), ("lower", args.lower)) if on] or ["upper", "lower"]
    result, files = {}, {}
    try:
        for d in directions:
            r = solve_bound(problem, d, cfg, seeds)
            result[d] = r.to_dict()
            if r.trace is not None:
                files[f"trace_{d}.csv"] = r.trace.to_csv()
    except Infeasible as exc:
        raise _Undecided("infeasible", str(exc), {"best_residual": exc.best_residual}) from exc
    run.emit(result, files)
    return EXIT_OK


def cmd_oci(args, run: Run) -> int:
    D = _floats(args.D, "-D")
    if any(d < 0 for d in D):
        raise InputError("-D: diameters must be non-negative")
    b = args.b
    if args.sweep:
        try:
            lo, hi, n = args.sweep.split(":")
            lo, hi, n = float(lo), float(hi), int(n)
        except ValueError as exc:
            raise InputError("--sweep expects LO:HI:N") from exc
        if n < 2:
            raise InputError("--sweep needs at least 2 rows")
        rows = ["a,classic,optimal"]
        for a in np.linspace(lo, hi, n).tolist():
            rows.append(f"{a!r},{classic_mcdiarmid(a, D, b)!r},{optimal_mcdiarmid(a, D, b).value!r}")
        text = "\n".join(rows) + "\n"
        if run.out is not None:
            write_atomic(run.out / "oci_sweep.csv", text)
            write_atomic(run.out / "manifest.json", _dump(_clean(run.manifest())))
        sys.stdout.write(text)
        return EXIT_OK
    if args.a is None:
        raise InputError("-a is required unless --sweep is given")
    res = optimal_mcdiarmid(args.a, D, b)
    run.emit({"optimal": res.to_dict(), "classic": classic_mcdiarmid(args.a, D, b)})
    return EXIT_OK


def cmd_certify(args, run: Run) -> int:
    problem, _ = _read_spec(args.spec)
    eps = args.epsilon if args.epsilon is not None else problem.epsilon
    if eps is None:
        raise InputError("no epsilon: pass --epsilon or set 'epsilon' in the problem file")
    if not 0.0 <= eps <= 1.0:
        raise InputError("--epsilon must lie in [0, 1]")
    cfg, seeds = _config(args, run)
    try:
        up = solve_bound(problem, "upper", cfg, seeds)
        lo = solve_bound(problem, "lower", cfg, seeds)
    except Infeasible as exc:
        raise _Undecided("infeasible", str(exc), {"best_residual": exc.best_residual}) from exc
    verdict = certify(min(lo.value, up.value), up.value, eps)
    run.emit(verdict.to_dict())
    return EXIT_UNDECIDED if verdict.verdict.value == "CannotDecide" else EXIT_OK


def _json_arg(text: str, flag: str) -> Any:
    """Inline JSON, or a path to a JSON file."""
    source = text
    if not text.lstrip().startswith(("{", "[")):
        try:
            source = Path(text).read_text(encoding="utf-8")
        except OSError as exc:
            raise InputError(f"{flag}: cannot read {text}: {exc.strerror}") from exc
    try:
        return json.loads(source)
    except json.JSONDecodeError as exc:
        raise InputError(f"{flag}: malformed JSON: {exc.msg}", offset=len(source[: exc.pos].encode("utf-8"))) from exc


def cmd_intervals(args, run: Run) -> int:
    problem, scales = _read_spec(args.spec)
    eps = args.epsilon if args.epsilon is not None else problem.epsilon
    if eps is None:
        raise InputError("no epsilon: pass --epsilon or set 'epsilon' in the problem file")
    item = _json_arg(args.functional, "--functional")
    fn = functional_from_dict(item, problem.domain, scales, "/functional")
    cfg, seeds = _config(args, run)
    try:
        iv = safe_unsafe_intervals(problem, fn, eps, cfg, seeds)
    except Infeasible as exc:
        raise _Undecided("infeasible", str(exc), {"best_residual": exc.best_residual}) from exc
    except ProblemError as exc:
        raise _Undecided("infeasible", str(exc), {}) from exc
    run.emit(iv.to_dict())
    return EXIT_OK


def experiments_from_dict(data: Any, problem: AdmissibleProblem, scales: Sequence[float]) -> list[ExperimentFunctional]:
    if isinstance(data, dict):
        data = data.get("candidates")
    if not isinstance(data, list) or not data:
        raise SpecError("candidates must be a non-empty list", "/candidates")
    out = []
    for i, item in enumerate(data):
        ptr = f"/candidates/{i}"
        fn = functional_from_dict(item, problem.domain, scales, ptr)
        scale = value_scale(fn, scales[fn.scope] if fn.scope is not None else 1.0)
        points = item.get("points", 9)
        if not isinstance(points, int) or isinstance(points, bool) or points < 1:
            raise SpecError("points must be a positive integer", f"{ptr}/points")
        if "outcomes" in item:
            raw = item["outcomes"]
            if not isinstance(raw, list) or not raw or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in raw):
                raise SpecError("outcomes must be a non-empty list of numbers", f"{ptr}/outcomes")
            grid = tuple(float(v) * scale for v in raw)
        elif isinstance(fn, (AxisMean, AxisMedian, AxisPin)):
            ax = problem.domain.axes[fn.scope]
            grid = _interior(ax.lo, ax.hi, points)
        elif isinstance(fn, AxisVariance):
            ax = problem.domain.axes[fn.scope]
            grid = _interior(0.0, ax.width**2 / 4, points)
        elif isinstance(fn, AxisProbability):
            grid = _interior(0.0, 1.0, points)
        else:
            raise SpecError("this experiment kind needs an explicit 'outcomes' list", ptr)
        out.append(ExperimentFunctional(str(item.get("name") or fn.describe()), fn, grid))
    return out


def _score_job(job):
    problem, experiment, cfg, seeds = job
    return score_experiment(problem, experiment, cfg, seeds)


def cmd_experiments(args, run: Run) -> int:
    problem, scales = _read_spec(args.spec)
    cands = experiments_from_dict(_json_arg(args.candidates, "--candidates"), problem, scales)
    cfg, seeds = _config(args, run)
    run.config["workers"] = args.workers
    run.config["tie_tolerance"] = args.tie_tol
    jobs = [(problem, e, cfg, seeds) for e in cands]
    if args.workers > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            scores = list(pool.map(_score_job, jobs))
    else:
        scores = [_score_job(j) for j in jobs]
    ranked = rank_scores(scores, args.tie_tol)
    run.emit({"ranking": [s.to_dict() for s in ranked]})
    return EXIT_OK


def cmd_osc(args, run: Run) -> int:
    problem, _ = _read_spec(args.spec)
    if not isinstance(problem.response, Known):
        raise InputError("osc needs a known response model")
    try:
        axis = problem.domain.axis_index(int(args.axis) if args.axis.lstrip("-").isdigit() else args.axis)
    except ResponseError as exc:
        raise InputError(str(exc)) from exc
    r = oscillation(problem.model, axis)
    run.emit({"axis": r.axis, "value": r.value, "point": list(r.point), "other_point": list(r.other_point)})
    return EXIT_OK


def cmd_replay(args, _run) -> int:
    """Re-run a recorded invocation from its manifest (or a result file that embeds one)."""
    try:
        data = json.loads(Path(args.manifest).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot load manifest {args.manifest}: {exc}") from exc
    manifest = data.get("manifest", data) if isinstance(data, dict) else None
    if not isinstance(manifest, dict) or not isinstance(manifest.get("argv"), list):
        raise InputError("not a manifest: missing 'argv'")
    argv = list(manifest["argv"])
    if args.out is not None:
        argv = _strip_flag(argv, "--out") + ["--out", args.out]
    return main(argv)


def _strip_flag(argv: list[str], flag: str) -> list[str]:
    out, skip = [], False
    for tok in argv:
        if skip:
            skip = False
        elif tok == flag:
            skip = True
        elif not tok.startswith(flag + "="):
            out.append(tok)
    return out


class _Undecided(Exception):
    def __init__(self, kind: str, message: str, extra: dict):
        super().__init__(message)
        self.kind = kind
        self.extra = extra


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ouq", description="Optimal bounds on failure probabilities under partial information.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("solve", help="upper and/or lower bound on the failure probability")
    s.add_argument("spec")
    s.add_argument("--upper", action="store_true")
    s.add_argument("--lower", action="store_true")
    _solver_flags(s)

    o = sub.add_parser("oci", help="optimal and classic McDiarmid bounds")
    o.add_argument("-a", type=float, help="margin: mean minus failure threshold")
    o.add_argument("-D", required=True, help="comma-separated sub-diameters")
    o.add_argument("-b", type=float, default=0.0, help="additive offset on the margin")
    o.add_argument("--sweep", help="LO:HI:N, emit a CSV of (a, classic, optimal)")
    o.add_argument("--out")

    c = sub.add_parser("certify", help="certify, decertify or report undecided at level epsilon")
    c.add_argument("spec")
    c.add_argument("--epsilon", type=float)
    _solver_flags(c)

    i = sub.add_parser("intervals", help="range of an input functional over safe and unsafe scenarios")
    i.add_argument("spec")
    i.add_argument("--functional", required=True, help="inline JSON or file: {scope, integrand}")
    i.add_argument("--epsilon", type=float)
    _solver_flags(i)

    e = sub.add_parser("experiments", help="rank candidate experiments by worst-case bound gap")
    e.add_argument("spec")
    e.add_argument("--candidates", required=True, help="inline JSON or file with a 'candidates' list")
    e.add_argument("--workers", type=int, default=1)
    e.add_argument("--tie-tol", type=float, default=0.005)
    _solver_flags(e)

    x = sub.add_parser("osc", help="oscillation of the response along one axis")
    x.add_argument("spec")
    x.add_argument("--axis", required=True, help="axis index (0-based) or name")
    x.add_argument("--out")

    r = sub.add_parser("replay", help="re-run the invocation recorded in a manifest")
    r.add_argument("manifest")
    r.add_argument("--out")
    return p


COMMANDS = {
    "solve": cmd_solve,
    "oci": cmd_oci,
    "certify": cmd_certify,
    "intervals": cmd_intervals,
    "experiments": cmd_experiments,
    "osc": cmd_osc,
    "replay": cmd_replay,
}


def _fail(code: int, kind: str, message: str, **extra) -> int:
    err = {"error": {"kind": kind, "message": message, **{k: v for k, v in extra.items() if v is not None}}, "exit_code": code}
    sys.stderr.write(json.dumps(_clean(err)) + "\n")
    return code


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
        run = None if args.command == "replay" else Run(args, argv)
        return COMMANDS[args.command](args, run)
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    except _Undecided as exc:
        return _fail(EXIT_UNDECIDED, exc.kind, str(exc), **exc.extra)
    except SpecError as exc:
        return _fail(EXIT_INPUT, "spec", exc.detail, pointer=exc.pointer or "/", byte_offset=exc.offset)
    except InputError as exc:
        return _fail(EXIT_INPUT, "input", str(exc), pointer=exc.pointer, byte_offset=exc.offset)
    except (ExpressionError, InequalityError, ResponseError, ProblemError, ValueError) as exc:
        return _fail(EXIT_INPUT, "input", str(exc), byte_offset=getattr(exc, "offset", None))
    except Exception as exc:  # noqa: BLE001
        return _fail(EXIT_INTERNAL, "internal", f"{type(exc).__name__}: {exc}")


if __name__ == "__main__":
    sys.exit(main())
