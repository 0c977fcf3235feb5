"""Command-line front end.

Exit codes: 0 ok, 1 input error, 2 infeasible / infinite value,
3 property violation (failed verification, monotonicity failure, or a solve
that stopped without certifying optimality).
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields

import numpy as np

from . import approx, freesets, games, io, measures, sdp
from .linalg import NumericalError, ValidationError
from .quantum import depolarizing_channel

log = logging.getLogger("qresource")

EXIT_OK, EXIT_INPUT, EXIT_INFINITE, EXIT_PROPERTY = 0, 1, 2, 3

COMMANDS = ("robustness", "weight", "emax", "game-verify", "approx-sweep", "compat", "marginal")


class InputError(Exception):
    pass


@dataclass(frozen=True)
class RunConfig:
    command: str
    inputs: tuple = ()
    free_set: str | dict | None = None
    noise: str = "all"
    quantity: str = "robustness"
    mode: str = "robustness"
    levels: str | None = None
    ambient: int = 8
    anchor: str | dict | None = None
    tol_gap: float = 1e-8
    max_iters: int = 200
    out: str | None = None
    format: str = "json"
    jobs: int = 1
    emit_witness: bool = False
    samples: int = 200
    seed: int = 0

    def validate(self) -> "RunConfig":
        if self.command not in COMMANDS:
            raise InputError(f"unknown command {self.command!r}")
        if self.noise not in ("all", "free"):
            raise InputError(f"--noise must be 'all' or 'free', got {self.noise!r}")
        if self.quantity not in ("robustness", "weight"):
            raise InputError(f"--quantity must be 'robustness' or 'weight', got {self.quantity!r}")
        if self.mode not in ("robustness", "weight", "membership", "bisect"):
            raise InputError(f"--mode must be robustness, weight, membership or bisect, got {self.mode!r}")
        if self.format not in ("json", "csv"):
            raise InputError(f"--format must be 'json' or 'csv', got {self.format!r}")
        if self.format == "csv" and self.command != "approx-sweep":
            raise InputError("--format csv is only available for approx-sweep")
        if self.jobs < 1:
            raise InputError("--jobs must be at least 1")
        if self.max_iters < 1 or not self.tol_gap > 0:
            raise InputError("--max-iters must be positive and --tol-gap > 0")
        if not self.inputs:
            raise InputError("at least one input file is required")
        if self.command == "approx-sweep" and not self.levels:
            raise InputError("approx-sweep needs --levels a..b")
        return self

    def solver_options(self) -> sdp.SolverOptions:
        return sdp.SolverOptions(gap_tol=self.tol_gap, max_iters=self.max_iters)


CONFIG_FIELDS = {f.name for f in fields(RunConfig)} - {"command"}


def load_config(path: str) -> dict:
    doc = io.load_json(path)
    if not isinstance(doc, dict):
        raise InputError(f"{path}: config must be a JSON object")
    unknown = set(doc) - CONFIG_FIELDS - {"command"}
    if unknown:
        raise InputError(f"{path}: unknown config field(s) {sorted(unknown)}")
    if "inputs" in doc:
        if isinstance(doc["inputs"], str):
            doc["inputs"] = [doc["inputs"]]
        doc["inputs"] = tuple(doc["inputs"])
    return doc


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("inputs", nargs="*", help="object JSON file(s)")
    common.add_argument("--free-set", help="free-set JSON (file path or inline JSON)")
    common.add_argument("--noise", choices=["all", "free"])
    common.add_argument("--tol-gap", type=float)
    common.add_argument("--max-iters", type=int)
    common.add_argument("--out", help="write the report here instead of stdout")
    common.add_argument("--format", choices=["json", "csv"])
    common.add_argument("--jobs", type=int)
    common.add_argument("--emit-witness", action="store_const", const=True)
    common.add_argument("--config", help="JSON config file; command-line flags win")
    common.add_argument("--seed", type=int, help="seed for sampled checks")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="qresource", description="Convex resource quantifiers via SDP.")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("robustness", parents=[common], help="generalized or free robustness")
    sub.add_parser("weight", parents=[common], help="convex weight")
    sub.add_parser("emax", parents=[common], help="max-relative entropy of resource (bits)")
    g = sub.add_parser("game-verify", parents=[common], help="witness game advantage check")
    g.add_argument("--quantity", choices=["robustness", "weight"])
    g.add_argument("--samples", type=int, help="noise samples for admissibility (noise=free)")
    a = sub.add_parser("approx-sweep", parents=[common], help="truncation sweep over levels")
    a.add_argument("--levels", help="level range a..b (or comma list)")
    a.add_argument("--ambient", type=int, help="ambient cutoff dimension (default 8)")
    a.add_argument("--anchor", help="anchor state JSON (file path or inline JSON)")
    a.add_argument("--quantity", choices=["robustness", "weight"])
    for name in ("compat", "marginal"):
        c = sub.add_parser(name, parents=[common], help=f"{name} tuple quantifiers")
        c.add_argument("--mode", choices=["robustness", "weight", "membership", "bisect"])
    return p


def make_config(argv) -> tuple[RunConfig, bool]:
    args = build_parser().parse_args(argv)
    base = load_config(args.config) if args.config else {}
    if base.get("command", args.command) != args.command:
        raise InputError(f"config is for command {base['command']!r}, not {args.command!r}")
    base.pop("command", None)
    cli = {k: v for k, v in vars(args).items() if k in CONFIG_FIELDS and v is not None}
    if not cli.get("inputs"):
        cli.pop("inputs", None)
    else:
        cli["inputs"] = tuple(cli["inputs"])
    merged = {**base, **cli}
    try:
        cfg = RunConfig(command=args.command, **merged)
    except TypeError as exc:
        raise InputError(f"bad config: {exc}") from exc
    return cfg.validate(), args.verbose


# ---------------------------------------------------------------------------
# loaders
# ---------------------------------------------------------------------------

def _json_arg(text, what: str):
    if isinstance(text, (dict, list)):
        return text
    if text.lstrip().startswith(("{", "[")):
        try:
            return json.loads(text)
        except json.JSONDecodeError as exc:
            raise InputError(f"{what}: invalid inline JSON ({exc.msg} at column {exc.colno})") from exc
    return io.load_json(text)


def load_free_set(cfg: RunConfig, x=None) -> freesets.FreeSet:
    if cfg.free_set is None:
        if cfg.command == "compat" and isinstance(x, list):
            ch = x[0]
            return freesets.CompatibleTuple(ch.dim_in, tuple(c.dim_out for c in x))
        raise InputError("--free-set is required")
    return io.freeset_from_json(_json_arg(cfg.free_set, "--free-set"))


def load_object(path: str):
    doc = io.load_json(path)
    if isinstance(doc, dict) and doc.get("family") is not None:
        raise InputError(f"{path}: a family description is only valid with --mode bisect")
    return io.object_from_json(doc, path)


def parse_levels(text: str) -> list[int]:
    try:
        if ".." in text:
            a, b = text.split("..")
            levels = list(range(int(a), int(b) + 1))
        else:
            levels = [int(t) for t in text.split(",")]
    except ValueError as exc:
        raise InputError(f"--levels: expected 'a..b' or a comma list, got {text!r}") from exc
    if not levels:
        raise InputError("--levels is empty")
    return levels


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def _status_code(value: float, status: str) -> int:
    if math.isinf(value):
        return EXIT_INFINITE
    if status != sdp.OPTIMAL:
        return EXIT_PROPERTY
    return EXIT_OK


def _quantify(cfg: RunConfig, path: str, what: str):
    x = load_object(path)
    fs = load_free_set(cfg, x)
    opts = cfg.solver_options()
    if what == "weight":
        res = measures.weight(x, fs, opts)
    else:
        res = measures.robustness(x, fs, "all" if what == "emax" else cfg.noise, opts)
    doc = {"input": path, "free_set": fs.to_json(), **res.to_json(cfg.emit_witness)}
    if what == "emax":
        doc["quantity"] = "emax"
        doc["robustness"] = res.value
        doc["value"] = float(np.log2(1.0 + res.value))
        doc["unit"] = "bits"
    return doc, _status_code(res.value, res.status)


def _batch(cfg: RunConfig, what: str):
    def one(path):
        return _quantify(cfg, path, what)

    if cfg.jobs > 1 and len(cfg.inputs) > 1:
        with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
            outs = list(pool.map(one, cfg.inputs))
    else:
        outs = [one(p) for p in cfg.inputs]
    code = max(c for _, c in outs)
    if len(outs) == 1:
        return outs[0][0], code
    return {"reports": [d for d, _ in outs]}, code


def cmd_robustness(cfg):
    return _batch(cfg, "robustness")


def cmd_weight(cfg):
    return _batch(cfg, "weight")


def cmd_emax(cfg):
    return _batch(cfg, "emax")


def cmd_game_verify(cfg):
    path = cfg.inputs[0]
    x = load_object(path)
    fs = load_free_set(cfg, x)
    opts = cfg.solver_options()
    rng = np.random.default_rng(cfg.seed)
    if cfg.quantity == "weight":
        res = measures.weight(x, fs, opts)
        rep = games.verify_weight_advantage(x, fs, res)
    else:
        res = measures.robustness(x, fs, cfg.noise, opts)
        if math.isinf(res.value):
            return {"input": path, "value": res.value, "status": res.status}, EXIT_INFINITE
        rep = games.verify_advantage(x, fs, cfg.noise, res, rng, cfg.samples)
    doc = {"input": path, "free_set": fs.to_json(), "value": res.value, "status": res.status, **rep}
    if cfg.emit_witness:
        doc["games"] = [games.witness_to_game(y, fs.slot_dims[i]).to_json() for i, y in enumerate(res.witness)]
    if rep["excluded"]:
        return doc, EXIT_OK
    return doc, EXIT_OK if rep["passed"] else EXIT_PROPERTY


def cmd_approx_sweep(cfg):
    path = cfg.inputs[0]
    x = load_object(path)
    fs = load_free_set(cfg, x)
    anchor = None
    if cfg.anchor is not None:
        doc = _json_arg(cfg.anchor, "--anchor")
        anchor = io.state_from_json(doc, "--anchor") if "rho" in doc else io.matrix_from_json(doc, True, "--anchor")
    scheme = approx.TruncationScheme(cfg.ambient, parse_levels(cfg.levels), anchor)
    sweep = approx.approximate_quantifier(x, fs, cfg.noise, scheme, cfg.quantity, cfg.solver_options(),
                                          jobs=cfg.jobs)
    doc = {"input": path, "free_set": fs.to_json(), "ambient_dim": cfg.ambient,
           **sweep.to_json(cfg.emit_witness)}
    code = EXIT_PROPERTY if sweep.hard_failure or sweep.errors else EXIT_OK
    if cfg.format == "csv":
        return sweep.to_csv(), code
    return doc, code


def _tuple_cmd(cfg, kind):
    path = cfg.inputs[0]
    if cfg.mode == "bisect":
        return _bisect(cfg, path, kind)
    x = load_object(path)
    if not isinstance(x, list):
        raise InputError(f"{path}: {cfg.command} needs a tuple object with 'components'")
    fs = load_free_set(cfg, x)
    if not isinstance(fs, kind):
        raise InputError(f"{cfg.command} needs a {kind.__name__} free set, got {fs.kind}")
    opts = cfg.solver_options()
    if cfg.mode == "membership":
        verdict = fs.membership(x)
        return {"input": path, "free_set": fs.to_json(), "mode": "membership", "membership": verdict,
                "member": verdict != freesets.NOT_FREE}, EXIT_OK
    if cfg.mode == "weight":
        res = measures.tuple_weight(x, fs, opts)
    else:
        res = measures.tuple_robustness(x, fs, cfg.noise, opts)
    doc = {"input": path, "free_set": fs.to_json(), "mode": cfg.mode, **res.to_json(cfg.emit_witness)}
    return doc, _status_code(res.value, res.status)


def _bisect(cfg, path, kind):
    doc = io.load_json(path)
    if not isinstance(doc, dict) or doc.get("family") != "depolarizing":
        raise InputError(f"{path}: --mode bisect needs {{\"family\": \"depolarizing\", \"dim\": d, \"copies\": k}}")
    extra = set(doc) - {"family", "dim", "copies", "width"}
    if extra:
        raise InputError(f"{path}: unknown field(s) {sorted(extra)}")
    if kind is not freesets.CompatibleTuple:
        raise InputError("--mode bisect is available for compat only")
    d, k = int(doc.get("dim", 2)), int(doc.get("copies", 2))
    fs = freesets.CompatibleTuple(d, (d,) * k)
    out = freesets.membership_threshold(lambda e: [depolarizing_channel(d, e)] * k, fs, 0.0, 1.0,
                                        float(doc.get("width", 1e-3)))
    return {"input": path, "free_set": fs.to_json(), "mode": "bisect", "family": "depolarizing", **out}, EXIT_OK


def cmd_compat(cfg):
    return _tuple_cmd(cfg, freesets.CompatibleTuple)


def cmd_marginal(cfg):
    return _tuple_cmd(cfg, freesets.MarginalCompatible)


HANDLERS = {
    "robustness": cmd_robustness,
    "weight": cmd_weight,
    "emax": cmd_emax,
    "game-verify": cmd_game_verify,
    "approx-sweep": cmd_approx_sweep,
    "compat": cmd_compat,
    "marginal": cmd_marginal,
}


def run(cfg: RunConfig) -> tuple[str, int]:
    """Execute a validated config; returns the report text and exit code."""
    report, code = HANDLERS[cfg.command](cfg)
    text = report if isinstance(report, str) else io.dumps(report)
    return text, code


def main(argv=None) -> int:
    try:
        cfg, verbose = make_config(argv)
    except (InputError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        text, code = run(cfg)
    except (InputError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_PROPERTY
    if cfg.out:
        with open(cfg.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return code


if __name__ == "__main__":
    sys.exit(main())
