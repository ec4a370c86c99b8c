"""``wigner-lab`` command line.

Every subcommand writes its CSV tables and a ``manifest.json`` into ``--out``.
Settings resolve as built-in defaults, then the ``--config`` JSON file (a
previous ``manifest.json`` is accepted too), then explicit flags.

Exit codes: 0 success, 1 configuration error, 2 experiment failure.

Tables written per subcommand (headers are fixed):

    sample          eigenvalues.csv     sample,index,eigenvalue
                    matrix_<s>.bin      uint64 n, then n*n complex128 row-major (little endian)
    validate        identities.csv      check,n_checks,n_violations,worst_margin
                    perturbation.csv    alpha,i,analytic,finite_difference,constant,agreement_digits,skipped
    semicircle      semicircle.csv      eta,n_eta,p_exceed,ci_lo,ci_hi,n_samples
                    semicircle_count.csv eta_star,n_eta_star,p_exceed,ci_lo,ci_hi,n_samples
    wegner          wegner.csv, wegner_ratio.csv
    repulsion       repulsion.csv, repulsion_fit.csv
    gaps            gaps.csv            k,n_events,p_exceed,ci_lo,ci_hi,n_used,n_censored
    deloc           deloc_quantiles.csv, deloc_exceedance.csv
    concentration   concentration.csv   statistic,mean,ci_lo,ci_hi,n
    hanson-wright   hanson_wright.csv   delta,n_events,p,ci_lo,ci_hi,bound,n_samples
    xi-tail         xi_tail.csv, xi_tail_fit.csv
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import secrets
import subprocess
import sys
import time
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .eigensolver import SolverError, eigh
from .ensemble import DIAGONAL_FAMILIES, OFFDIAGONAL_FAMILIES, EntryDistributionSpec, dump_matrix, sample_wigner, stream_seed
from .mc import (
    ExperimentAborted,
    ExperimentConfig,
    available_workers,
    delocalization_stats,
    gap_tail,
    hanson_wright_trial,
    identity_suite,
    overlap_concentration,
    perturbation_gradient_check,
    repulsion_fit,
    semicircle_concentration,
    wegner_moments,
    xi_lower_tail,
)
from .spectral import SpectralInterval
from .tables import Table

SUBCOMMANDS = (
    "sample", "validate", "semicircle", "wegner", "repulsion",
    "gaps", "deloc", "concentration", "hanson-wright", "xi-tail",
)

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "n": {"type": "integer", "minimum": 1},
        "family": {"enum": list(OFFDIAGONAL_FAMILIES)},
        "diagonal": {"enum": list(DIAGONAL_FAMILIES)},
        "samples": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "E": {"type": "number"},
        "grid": {"type": "array", "minItems": 1, "items": {"type": "number", "minimum": 0}},
        "k": {"type": "integer", "minimum": 1},
        "p": {"type": "number", "minimum": 2},
        "workers": {"type": "integer", "minimum": 1},
        "kappa": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 2},
        "delta": {"type": "number", "exclusiveMinimum": 0},
        "m": {"type": "integer", "minimum": 1},
        "width": {"type": "number", "exclusiveMinimum": 0},
        "coefficients": {"enum": ["wigner", "identity"]},
    },
}

DEFAULTS = {
    "n": 128,
    "family": "complex-gaussian",
    "diagonal": "real-gaussian",
    "samples": 100,
    "E": 0.0,
    "k": 2,
    "p": 2.0,
    "kappa": 0.5,
    "delta": 0.1,
    "m": 4,
    "width": 8.0,
    "coefficients": "wigner",
}

# subcommand-specific defaults layered over DEFAULTS
COMMAND_DEFAULTS = {
    "sample": {"samples": 1},
    "validate": {"E": 0.3, "grid": [0.1]},
}

class ConfigError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _grid_arg(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _u64(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON config or a previous manifest.json")
    common.add_argument("--out", metavar="DIR", default="wigner-lab-out", help="output directory")
    common.add_argument("--seed", type=_u64, help="master seed (default: drawn from OS entropy)")
    common.add_argument("--workers", type=int, help="worker processes (env WIGNER_LAB_WORKERS)")
    common.add_argument("--n", type=int, help="matrix dimension")
    common.add_argument("--samples", type=int, help="number of samples")
    common.add_argument("--E", type=float, dest="E", help="energy")
    common.add_argument("--kappa", type=float, help="bulk margin: require |E| < 2 - kappa")
    common.add_argument("--delta", type=float, help="deviation threshold")
    common.add_argument("--k", type=int, help="repulsion order")
    common.add_argument("--p", type=float, help="norm exponent for deloc")
    common.add_argument("--grid", type=_grid_arg, help="comma-separated grid")
    common.add_argument("--family", choices=OFFDIAGONAL_FAMILIES)
    common.add_argument("--diagonal", choices=DIAGONAL_FAMILIES)
    common.add_argument("--m", type=int, help="number of overlaps summed (xi-tail)")
    common.add_argument("--width", type=float, help="deloc window width in units of 1/N")
    common.add_argument("--coefficients", choices=("wigner", "identity"), help="hanson-wright coefficient matrix")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="wigner-lab", description="Spectral statistics of Wigner matrices.")
    parser.add_argument("--version", action="version", version=f"wigner-lab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    helps = {
        "sample": "draw matrices; write them and their eigenvalues",
        "validate": "deterministic identity suite",
        "semicircle": "concentration of m around m_sc and of window counts",
        "wegner": "moments of the eigenvalue count in windows of width epsilon/N",
        "repulsion": "exponent of P(N_I >= k) in epsilon",
        "gaps": "tail of the gap above E",
        "deloc": "eigenvector sup-norm and l^p statistics",
        "concentration": "means of the overlaps xi and the X, Z statistics",
        "hanson-wright": "tails of a centered quadratic form",
        "xi-tail": "lower tail of the sum of m overlaps",
    }
    for name in SUBCOMMANDS:
        sub.add_parser(name, parents=[common], help=helps[name])
    return parser


def _pointer(path) -> str:
    return "/" + "/".join(str(p) for p in path) if path else "/"


def validate_config(doc: dict, command: str) -> None:
    """Schema check plus ordering rules; messages carry JSON pointer paths."""
    errors = sorted(jsonschema.Draft202012Validator(SCHEMA).iter_errors(doc), key=lambda e: list(e.path))
    if errors:
        raise ConfigError("; ".join(f"{_pointer(e.path)}: {e.message}" for e in errors))
    grid = doc.get("grid")
    if grid is not None:
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ConfigError("/grid: must be sorted strictly ascending")
        if command != "gaps" and any(x <= 0 for x in grid):
            raise ConfigError("/grid: entries must be strictly positive")
        if command == "repulsion" and grid[-1] > 1:
            raise ConfigError("/grid: repulsion epsilon grid must lie in (0, 1]")
    if abs(doc["E"]) >= 2 - doc["kappa"]:
        raise ConfigError(f"/E: |E| = {abs(doc['E'])} violates |E| < 2 - kappa = {2 - doc['kappa']}")
    if command == "xi-tail" and doc["m"] > doc["n"] - 1:
        raise ConfigError(f"/m: m = {doc['m']} exceeds n - 1 = {doc['n'] - 1}")
    if command in ("validate", "concentration", "xi-tail") and doc["n"] < 2:
        raise ConfigError("/n: this subcommand needs n >= 2")


def load_config_file(path, command: str | None = None) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON in {path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    if isinstance(doc, dict) and "config" in doc and isinstance(doc["config"], dict):
        if command is not None and doc.get("command", command) != command:
            raise ConfigError(f"{path} is a manifest of '{doc['command']}', not '{command}'")
        doc = doc["config"]
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return doc


def resolve(args: argparse.Namespace) -> dict:
    """Defaults, then config file, then flags.  Returns the validated settings."""
    doc = dict(DEFAULTS)
    doc.update(COMMAND_DEFAULTS.get(args.command, {}))
    file_doc = load_config_file(args.config, args.command) if args.config else {}
    errors = list(jsonschema.Draft202012Validator(SCHEMA).iter_errors(file_doc))
    if errors:
        raise ConfigError("; ".join(f"{_pointer(e.path)}: {e.message}" for e in errors))
    doc.update(file_doc)
    for key in ("n", "samples", "seed", "E", "kappa", "delta", "k", "p", "grid", "family", "diagonal",
                "workers", "m", "width", "coefficients"):
        v = getattr(args, key, None)
        if v is not None:
            doc[key] = v
    if "workers" not in doc:
        env = os.environ.get("WIGNER_LAB_WORKERS")
        if env:
            try:
                doc["workers"] = int(env)
            except ValueError:
                raise ConfigError(f"WIGNER_LAB_WORKERS must be an integer, got {env!r}") from None
        else:
            doc["workers"] = available_workers()
    if "seed" not in doc:
        doc["seed"] = secrets.randbits(64)
    validate_config(doc, args.command)
    return doc


def to_experiment_config(doc: dict, command: str) -> ExperimentConfig:
    grid = doc.get("grid")
    # gaps, deloc and xi-tail take their grid as a separate argument
    if command in ("gaps", "deloc", "xi-tail", "hanson-wright"):
        grid = None
    try:
        return ExperimentConfig(
            n=doc["n"],
            spec=EntryDistributionSpec(doc["family"], doc["diagonal"]),
            n_samples=doc["samples"],
            master_seed=doc["seed"],
            e=doc["E"],
            grid=tuple(grid) if grid is not None else None,
            k=doc["k"],
            p_norm=doc["p"],
            workers=doc["workers"],
            kappa=doc["kappa"],
            delta=doc["delta"],
            m=doc["m"],
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def git_describe() -> str:
    here = Path(__file__).resolve().parent
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty", "--tags"],
            cwd=here, capture_output=True, text=True, timeout=10,
        )
    except (OSError, subprocess.SubprocessError):
        return "unknown"
    return out.stdout.strip() if out.returncode == 0 and out.stdout.strip() else "unknown"


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    return x


def _run_sample(doc, cfg, out: Path):
    t = Table("eigenvalues", ["sample", "index", "eigenvalue"])
    outputs = []
    for s in range(cfg.n_samples):
        h = sample_wigner(cfg.n, cfg.spec, stream_seed(cfg.master_seed, s))
        name = f"matrix_{s}.bin"
        dump_matrix(h, out / name)
        outputs.append(name)
        for i, mu in enumerate(eigh(h, want_vectors=False).eigenvalues):
            t.add(s, i, mu)
    return [t], {"matrices": outputs}


def _run_validate(doc, cfg, out):
    res = identity_suite(cfg)
    h = sample_wigner(cfg.n, cfg.spec, stream_seed(cfg.master_seed, 0))
    pt = Table("perturbation", ["alpha", "i", "analytic", "finite_difference", "constant", "agreement_digits", "skipped"])
    constants = []
    for alpha in sorted({0, cfg.n // 2, cfg.n - 1}):
        for i in sorted({0, cfg.n - 1}):
            g = perturbation_gradient_check(h, alpha, i)
            pt.add(alpha, i, g.analytic, g.finite_difference, g.constant, g.agreement_digits, g.skipped)
            if not g.skipped:
                constants.append(g.constant)
    summary = dict(res.summary)
    summary["perturbation_constant_median"] = float(np.median(constants)) if constants else None
    if res.summary["violations"]:
        summary["failed"] = f"{res.summary['violations']} identity violations"
    return res.tables + [pt], summary


def _run_hanson_wright(doc, cfg, out):
    n = cfg.n
    if doc["coefficients"] == "identity":
        a = np.eye(n) / n
    else:
        # a Wigner matrix scaled to unit Frobenius norm on average
        a = sample_wigner(n, cfg.spec, stream_seed(cfg.master_seed, 2**62)).entries / math.sqrt(n)
    res = hanson_wright_trial(a, cfg.spec, cfg.n_samples, doc.get("grid"), seed=cfg.master_seed)
    return res.tables, res.summary


def _run(doc: dict, command: str, cfg: ExperimentConfig, out: Path):
    if command == "sample":
        return _run_sample(doc, cfg, out)
    if command == "validate":
        return _run_validate(doc, cfg, out)
    if command == "hanson-wright":
        return _run_hanson_wright(doc, cfg, out)
    if command == "semicircle":
        res = semicircle_concentration(cfg)
    elif command == "wegner":
        res = wegner_moments(cfg)
    elif command == "repulsion":
        res = repulsion_fit(cfg)
    elif command == "gaps":
        res = gap_tail(cfg, doc.get("grid"))
    elif command == "deloc":
        res = delocalization_stats(cfg, SpectralInterval(cfg.e, doc["width"] / cfg.n), doc["p"], doc.get("grid"))
    elif command == "concentration":
        res = overlap_concentration(cfg)
    elif command == "xi-tail":
        res = xi_lower_tail(cfg, doc["m"], doc.get("grid"))
    else:
        raise AssertionError(command)
    return res.tables, res.summary


def _warn(doc: dict) -> None:
    if doc["kappa"] < 0.5:
        print(f"warning: kappa = {doc['kappa']} is below 0.5; statements hold in the bulk only", file=sys.stderr)
    if abs(doc["E"]) > 1.5:
        print(f"warning: |E| = {abs(doc['E'])} is close to the spectral edge at 2", file=sys.stderr)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
        doc = resolve(args)
        cfg = to_experiment_config(doc, args.command)
    except ConfigError as exc:
        print(f"wigner-lab: config error: {exc}", file=sys.stderr)
        return 1
    _warn(doc)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    try:
        tables, summary = _run(doc, args.command, cfg, out)
    except ValueError as exc:
        print(f"wigner-lab: config error: {exc}", file=sys.stderr)
        return 1
    except (ExperimentAborted, SolverError, ArithmeticError) as exc:
        print(f"wigner-lab: experiment failed: {exc}", file=sys.stderr)
        return 2
    wall = time.perf_counter() - start
    entries = []
    for t in tables:
        path = f"{t.name}.csv"
        t.write(out / path)
        entries.append({"name": t.name, "path": path, "headers": t.headers})
    extra = summary.pop("matrices", []) if args.command == "sample" else []
    manifest = {
        "tool": "wigner-lab",
        "version": __version__,
        "git-describe": git_describe(),
        "command": args.command,
        "seed": doc["seed"],
        "config": doc,
        "wall_time_s": wall,
        "tables": entries,
        "outputs": [e["path"] for e in entries] + extra,
        "summary": _jsonable(summary),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    if "failed" in summary:
        print(f"wigner-lab: experiment failed: {summary['failed']}", file=sys.stderr)
        return 2
    for t in tables:
        print(f"wrote {out / (t.name + '.csv')}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
