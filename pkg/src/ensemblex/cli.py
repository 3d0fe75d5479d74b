"""Command-line interface.

Exit codes: 0 success, 1 infeasible model or size cap, 2 malformed input.
Model files use 1-based layer indices; edge lists use 0-based global node ids.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .canonical import ConvergenceError, NonInteriorError, solve_model
from .core import (
    ConstraintSet,
    DegreeConstraint,
    LayerLimits,
    LinkCountConstraint,
    MasterGraph,
    ModelSpec,
    degree_matrix,
    unipartite_model,
    validate,
)
from .entropy import (
    DIRECT_KL_MAX_N,
    TOP_ONLY_CASES,
    limit_class_from_model,
    relative_entropy,
    relative_entropy_direct_kl,
    s_infinity,
)
from .graphical import NotRealizableError, erdos_gallai, realize_model
from .microcanonical import CapExceededError, count_model
from .sampling import SamplerConfig, default_burn_in, sample_canonical, sample_microcanonical
from .structure import s_infinity_scale_free

EXIT_OK, EXIT_DOMAIN, EXIT_INPUT = 0, 1, 2

MODEL_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["layers", "master", "constraints"],
    "properties": {
        "layers": {"type": "array", "minItems": 1, "items": {"type": "integer", "minimum": 1}},
        "master": {
            "type": "array",
            "items": {"type": "array", "items": {"enum": [0, 1]}},
        },
        "constraints": {
            "type": "array",
            "items": {
                "oneOf": [
                    {
                        "type": "object",
                        "additionalProperties": False,
                        "required": ["pair", "type", "values"],
                        "properties": {
                            "pair": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 2, "maxItems": 2},
                            "type": {"const": "degrees"},
                            "values": {"type": "array", "items": {"type": "integer"}},
                        },
                    },
                    {
                        "type": "object",
                        "additionalProperties": False,
                        "required": ["pair", "type", "value"],
                        "properties": {
                            "pair": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 2, "maxItems": 2},
                            "type": {"const": "link_count"},
                            "value": {"type": "integer"},
                        },
                    },
                ]
            },
        },
        "limits": {
            "type": "object",
            "additionalProperties": False,
            "required": ["A"],
            "properties": {"A": {"type": "array", "items": {"type": "number", "minimum": 0, "maximum": 1}}},
        },
        "class": {
            "type": "object",
            "additionalProperties": False,
            "required": ["case"],
            "properties": {
                "case": {"enum": list(TOP_ONLY_CASES)},
                "fixed_n2": {"type": "integer", "minimum": 1},
            },
        },
    },
}


class InputError(Exception):
    pass


def _fmt(x: float) -> str:
    return f"{x:.12g}"


def _num(x):
    """12-significant-digit value shared by JSON and CSV output."""
    x = float(x)
    if not math.isfinite(x):
        return "inf" if x > 0 else ("-inf" if x < 0 else "nan")
    return float(_fmt(x))


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("ENSEMBLEX_THREADS", "1")))
    except ValueError:
        return 1


def _ordered_map(fn, items):
    """``map`` that may run in parallel but always returns results in input order."""
    items = list(items)
    workers = min(_threads(), max(len(items), 1))
    if workers == 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(workers) as ex:
        return list(ex.map(fn, items))


# ---------------------------------------------------------------------------
# Model files
# ---------------------------------------------------------------------------


def parse_model(doc: dict) -> tuple[ModelSpec, dict | None]:
    """Turn a model document into a ModelSpec; raises InputError on malformed input."""
    try:
        jsonschema.validate(doc, MODEL_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise InputError(f"schema: {exc.message}") from exc
    sizes = doc["layers"]
    M = len(sizes)
    gamma = np.asarray(doc["master"], dtype=int)
    if gamma.shape != (M, M):
        raise InputError(f"master must be {M}x{M}")
    try:
        master = MasterGraph(gamma.astype(bool))
    except ValueError as exc:
        raise InputError(str(exc)) from exc

    degrees: dict[tuple[int, int], list[int]] = {}
    counts: list[LinkCountConstraint] = []
    for c in doc["constraints"]:
        s, t = c["pair"][0] - 1, c["pair"][1] - 1
        if s >= M or t >= M:
            raise InputError(f"pair {c['pair']} references a layer beyond M={M}")
        if c["type"] == "link_count":
            counts.append(LinkCountConstraint(s, t, c["value"]))
        else:
            if (s, t) in degrees:
                raise InputError(f"degrees for pair {c['pair']} given twice")
            degrees[(s, t)] = c["values"]
    cons: list = []
    for (s, t), vec in degrees.items():
        if s == t:
            cons.append(DegreeConstraint(s, t, vec))
        elif s < t or (t, s) not in degrees:
            cons.append(DegreeConstraint(s, t, vec, degrees.get((t, s))))
    cons += counts
    limits = None
    if "limits" in doc:
        try:
            limits = LayerLimits(tuple(doc["limits"]["A"]))
        except ValueError as exc:
            raise InputError(str(exc)) from exc
    return ModelSpec(master, tuple(sizes), ConstraintSet(tuple(cons)), limits), doc.get("class")


def load_model(path: str) -> tuple[ModelSpec, dict | None]:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"malformed JSON: {exc}") from exc
    return parse_model(doc)


def _emit(obj, out):
    json.dump(obj, out, indent=2, sort_keys=True)
    out.write("\n")


def _fail(message: str, code: int) -> int:
    print(f"error: {message}", file=sys.stderr)
    return code


def _block_label(key) -> str:
    return f"({key[0] + 1},{key[1] + 1})"


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_check(args, out) -> int:
    model, _ = load_model(args.model)
    violations = validate(model)
    report = {
        "valid": not violations,
        "violations": [
            {"block": None if v.pair is None else [v.pair[0] + 1, v.pair[1] + 1], "rule": v.rule, "message": v.message}
            for v in violations
        ],
    }
    if violations:
        report["feasible"] = False
        _emit(report, out)
        return EXIT_DOMAIN
    rep = realize_model(model)
    report["feasible"] = rep.feasible
    if rep.feasible:
        report["witness_digest"] = rep.witness.digest()
    else:
        report["failing_block"] = [rep.failing_block[0] + 1, rep.failing_block[1] + 1]
        report["reason"] = rep.reason
    _emit(report, out)
    return EXIT_OK if rep.feasible else EXIT_DOMAIN


def cmd_entropy(args, out) -> int:
    model, cls = load_model(args.model)
    scale = 1 / math.log(2) if args.bits else 1.0
    try:
        sol = solve_model(model, tol=args.tol)
        rep = relative_entropy(model, args.mode, canonical=sol)
    except CapExceededError as exc:
        return _fail(f"{exc} (cap exceeded; try --mode asymptotic)", EXIT_DOMAIN)
    except (NotRealizableError, NonInteriorError, ConvergenceError) as exc:
        return _fail(str(exc), EXIT_DOMAIN)
    except ValueError as exc:
        return _fail(str(exc), EXIT_DOMAIN)
    result = {
        "units": "bits" if args.bits else "nats",
        "mode": args.mode,
        "method": rep.method,
        "n": rep.n,
        "S_n": _num(rep.S_n * scale),
        "s_n": _num(rep.s_n * scale),
        "log_p_mic": _num(rep.log_p_mic * scale),
        "log_p_can": _num(rep.log_p_can * scale),
        "witness_digest": rep.witness_digest,
        "blocks": [
            {"block": _block_label(k), "log_p_mic": _num(a * scale), "log_p_can": _num(b * scale), "S": _num(c * scale)}
            for k, (a, b, c) in sorted(rep.per_block.items())
        ],
    }
    if args.mode == "asymptotic" and model.limits is not None:
        case = cls.get("case") if cls else None
        fixed = cls.get("fixed_n2") if cls else None
        try:
            lim = s_infinity(limit_class_from_model(model, case, fixed))
        except ValueError as exc:
            return _fail(str(exc), EXIT_DOMAIN)
        result["s_infinity"] = _num(lim.s_infinity * scale)
        result["formula"] = lim.formula
    if args.format == "csv":
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["block", "log_p_mic", "log_p_can", "S"])
        for b in result["blocks"]:
            w.writerow([b["block"], _csv(b["log_p_mic"]), _csv(b["log_p_can"]), _csv(b["S"])])
        w.writerow(["total", _csv(result["log_p_mic"]), _csv(result["log_p_can"]), _csv(result["S_n"])])
    else:
        _emit(result, out)
    return EXIT_OK


def _csv(v) -> str:
    return v if isinstance(v, str) else _fmt(v)


def _parse_range(text: str, cast):
    try:
        a, b, step = (cast(x) for x in text.split(":"))
    except ValueError as exc:
        raise InputError(f"range must be a:b:step, got {text!r}") from exc
    if step <= 0:
        raise InputError("range step must be positive")
    count = int(math.floor((b - a) / step + 1e-9)) + 1
    return [a + i * step for i in range(max(count, 0))]


SCAN_HELP = """columns:
  scale_free: gamma, s_infinity   (limit of S_n/n for f(k) ~ k^-gamma)
  regular:    n, k, S_n, s_n      (exact counts; n with n*k odd or k >= n skipped)"""


def cmd_scan(args, out) -> int:
    scale = 1 / math.log(2) if args.bits else 1.0
    w = csv.writer(out, lineterminator="\n")
    if args.family == "scale_free":
        if not args.gamma_range:
            raise InputError("--gamma-range is required for the scale_free family")
        grid = [round(x, 12) for x in _parse_range(args.gamma_range, float)]
        grid = [x for x in grid if x > 1]
        if not grid:
            return _fail("empty range", EXIT_DOMAIN)
        values = _ordered_map(s_infinity_scale_free, grid)
        w.writerow(["gamma", "s_infinity"])
        for gam, v in zip(grid, values):
            w.writerow([_fmt(gam), _fmt(_num(v * scale))])
        return EXIT_OK
    if args.k is None or not args.n_range:
        raise InputError("--k and --n-range are required for the regular family")
    ns = [n for n in _parse_range(args.n_range, int) if n > args.k and (n * args.k) % 2 == 0 and n >= 1]
    ns = [n for n in ns if erdos_gallai([args.k] * n)]
    if not ns:
        return _fail("empty range", EXIT_DOMAIN)

    def one(n):
        return relative_entropy(unipartite_model([args.k] * n), args.mode)

    try:
        reports = _ordered_map(one, ns)
    except CapExceededError as exc:
        return _fail(f"{exc} (cap exceeded; try --mode asymptotic)", EXIT_DOMAIN)
    w.writerow(["n", "k", "S_n", "s_n"])
    for n, r in zip(ns, reports):
        w.writerow([n, args.k, _fmt(_num(r.S_n * scale)), _fmt(_num(r.s_n * scale))])
    return EXIT_OK


def _constraint_stats(model: ModelSpec, graphs):
    stats = []
    for c in model.constraints:
        if isinstance(c, LinkCountConstraint):
            vals = np.array([g.block(c.s, c.t).sum() // (2 if c.intra else 1) for g in graphs], dtype=float)
            stats.append({"block": _block_label(c.key), "kind": "links", "mean": _num(vals.mean()), "variance": _num(vals.var())})
            continue
        for key, _ in sorted(c.vectors().items()):
            vals = np.array([degree_matrix(g, model.master)[key] for g in graphs], dtype=float)
            stats.append({
                "block": _block_label(key),
                "kind": "degrees",
                "mean": [_num(x) for x in vals.mean(axis=0)],
                "variance": [_num(x) for x in vals.var(axis=0)],
            })
    return stats


def cmd_sample(args, out) -> int:
    model, _ = load_model(args.model)
    problems = validate(model)
    if problems:
        return _fail("; ".join(str(v) for v in problems), EXIT_DOMAIN)
    rep = realize_model(model)
    if not rep.feasible:
        return _fail(f"infeasible: {rep.reason}", EXIT_DOMAIN)
    cfg = SamplerConfig(args.seed, args.swap_steps, args.burn_in, args.replicas)
    if args.ensemble == "can":
        try:
            sol = solve_model(model)
        except (NonInteriorError, ConvergenceError) as exc:
            return _fail(str(exc), EXIT_DOMAIN)
        draw = lambda r: sample_canonical(sol, cfg, r)  # noqa: E731
    else:
        draw = lambda r: sample_microcanonical(rep.witness, model.constraints, cfg, r)  # noqa: E731
    graphs = _ordered_map(draw, range(cfg.replicas))
    dest = Path(args.out)
    dest.mkdir(parents=True, exist_ok=True)
    width = max(4, len(str(cfg.replicas - 1)))
    for r, g in enumerate(graphs):
        (dest / f"replica_{r:0{width}d}.txt").write_text("".join(f"{u} {v}\n" for u, v in g.edges()))
    freq = Counter(g.digest() for g in graphs)
    summary = {
        "ensemble": args.ensemble,
        "replicas": cfg.replicas,
        "seed": cfg.seed,
        "swap_steps": cfg.swap_steps,
        "burn_in": cfg.burn_in if cfg.burn_in is not None else default_burn_in(rep.witness),
        "constraints": _constraint_stats(model, graphs),
        "graph_frequencies": {k: _num(v / cfg.replicas) for k, v in sorted(freq.items())},
    }
    (dest / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    _emit(summary, out)
    return EXIT_OK


def cmd_oracle(args, out) -> int:
    model, _ = load_model(args.model)
    if model.n > DIRECT_KL_MAX_N:
        return _fail(f"n={model.n} exceeds the enumeration cap {DIRECT_KL_MAX_N}", EXIT_DOMAIN)
    problems = validate(model)
    if problems:
        return _fail("; ".join(str(v) for v in problems), EXIT_DOMAIN)
    try:
        sol = solve_model(model)
        counts = count_model(model, "exact")
        kl2 = relative_entropy(model, "exact", canonical=sol, counts=counts)
        kl1 = relative_entropy_direct_kl(model, canonical=sol)
    except (NotRealizableError, NonInteriorError, ConvergenceError, CapExceededError) as exc:
        return _fail(str(exc), EXIT_DOMAIN)
    _emit(
        {
            "omega_exact": counts.omega,
            "S_n_via_kl1": _num(kl1),
            "S_n_via_kl2": _num(kl2.S_n),
            "max_discrepancy": _num(abs(kl1 - kl2.S_n)),
        },
        out,
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ensemblex", description="Microcanonical and canonical multilayer graph ensembles.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    c = sub.add_parser("check", help="validate a model file and build a witness graph")
    c.add_argument("model")
    c.set_defaults(func=cmd_check)

    e = sub.add_parser("entropy", help="relative entropy S_n and s_n of a model")
    e.add_argument("model")
    e.add_argument("--mode", choices=["exact", "asymptotic"], default="exact")
    e.add_argument("--tol", type=float, default=1e-10, help="canonical solver tolerance")
    e.add_argument("--seed", type=int, default=0, help="accepted for interface symmetry; results are deterministic")
    e.add_argument("--format", choices=["json", "csv"], default="json")
    e.add_argument("--bits", action="store_true", help="report entropies in bits")
    e.set_defaults(func=cmd_entropy)

    s = sub.add_parser("scan", help="CSV scan over a parameter grid", epilog=SCAN_HELP,
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    s.add_argument("--family", choices=["scale_free", "regular"], required=True)
    s.add_argument("--gamma-range", help="a:b:step, inclusive")
    s.add_argument("--k", type=int)
    s.add_argument("--n-range", help="a:b:step, inclusive")
    s.add_argument("--mode", choices=["exact", "asymptotic"], default="exact")
    s.add_argument("--bits", action="store_true")
    s.set_defaults(func=cmd_scan)

    m = sub.add_parser("sample", help="draw graphs from either ensemble")
    m.add_argument("model")
    m.add_argument("--ensemble", choices=["mic", "can"], required=True)
    m.add_argument("--replicas", type=int, default=1)
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("--swap-steps", type=int, default=0)
    m.add_argument("--burn-in", type=int, default=None)
    m.add_argument("--out", required=True)
    m.set_defaults(func=cmd_sample)

    o = sub.add_parser("oracle", help="compare the witness formula with full enumeration (n <= 5)")
    o.add_argument("model")
    o.set_defaults(func=cmd_oracle)
    return p


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    args = build_parser().parse_args(argv)
    try:
        return args.func(args, out)
    except InputError as exc:
        return _fail(str(exc), EXIT_INPUT)
    except ValueError as exc:
        # malformed constraint data (e.g. non-integer degrees)
        return _fail(str(exc), EXIT_INPUT)


def run(argv) -> tuple[int, str]:
    """Run the CLI in-process and capture stdout (used by tests)."""
    buf = io.StringIO()
    code = main(argv, buf)
    return code, buf.getvalue()


if __name__ == "__main__":
    sys.exit(main())
