"""``foldkit`` command line: data generation, reduction, encoder runs and sweeps.

Every subcommand that measures something writes a JSON report (full
precision) and optionally a CSV table.  Reports embed the tool version and the
complete effective configuration, so ``foldkit <cmd> --config report.json``
re-runs a report exactly.

Options may also come from ``--config FILE`` holding ``key = value`` lines
(keys are the long option names, dashes or underscores); flags on the command
line override file values.

Exit codes: 0 success, 2 argument error, 3 format error, 4 capacity error,
5 numerical/domain error, 1 anything else (e.g. I/O failures).
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import tempfile
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .aggregation import AggregationScheme
from .analysis import (
    aggregation_sweep,
    emd,
    energy_sweep,
    propagation_profile,
    schedule_sweep,
)
from .encoder import EncoderConfig, init_encoder, forward, parse_schedule
from .errors import ArgumentError, FoldkitError, FormatError
from .folder import folder_reduce
from .matching import DEFAULT_ALPHA, MatchContext, get_scorer
from .synthetic import generate_tokens
from .tokenseq import TokenSequence, load, save, to_bytes

DEFAULT_RATIOS = "0.25,0.5,0.75"
DEFAULT_THRESHOLDS = "0.5,0.9,0.99"

# options that never belong in an echoed config
_RUNTIME_KEYS = {"config", "command", "func", "out", "csv", "trace", "acts", "plan", "report"}


# -- output helpers -------------------------------------------------------


def atomic_write(path, data) -> None:
    """Write ``data`` (bytes or str) to ``path`` via a temporary file and rename."""
    path = Path(path)
    if isinstance(data, str):
        data = data.encode("utf-8")
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent or ".")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def table_csv(table: dict) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([table["index_name"], *table["columns"]])
    for idx, row in zip(table["index"], table["values"]):
        writer.writerow([idx, *[repr(v) if isinstance(v, float) else v for v in row]])
    return buf.getvalue()


def _table(index_name, index, columns, values) -> dict:
    return {"index_name": index_name, "index": list(index), "columns": list(columns), "values": values}


def make_report(command: str, kind: str, config: dict, table: Optional[dict], **extra) -> dict:
    seeds = {k: config[k] for k in ("seed", "data_seed") if config.get(k) is not None}
    report = {
        "tool": "foldkit",
        "version": __version__,
        "command": command,
        "kind": kind,
        "config": config,
        "seeds": seeds,
    }
    if table is not None:
        report["table"] = table
    report.update(extra)
    return report


def _emit(args, report: dict) -> None:
    text = dump_json(report)
    if getattr(args, "report", None):
        atomic_write(args.report, text)
    elif getattr(args, "out", None) and args.command not in ("gen", "fold", "simulate"):
        atomic_write(args.out, text)
    else:
        sys.stdout.write(text)
    if getattr(args, "csv", None) and "table" in report:
        atomic_write(args.csv, table_csv(report["table"]))


def effective_config(args) -> dict:
    cfg = {}
    for key, value in sorted(vars(args).items()):
        if key in _RUNTIME_KEYS or callable(value):
            continue
        cfg[key] = value
    return cfg


# -- shared option groups -------------------------------------------------


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise ArgumentError(f"expected a comma-separated list of numbers, got {text!r}") from None


def _add_encoder_opts(p):
    p.add_argument("--dim", type=int, default=64)
    p.add_argument("--heads", type=int, default=4)
    p.add_argument("--blocks", type=int, default=12)
    p.add_argument("--mlp-ratio", type=float, default=4.0)
    p.add_argument("--seed", type=int, default=7, help="encoder weight seed")
    p.add_argument("--class-token", action="store_true", help="prepend a pinned class token")


def _add_input_opts(p):
    p.add_argument("--in", dest="input", default=None, help=".ftsq token file")
    p.add_argument("--n", type=int, default=196, help="synthetic token count when --in is absent")
    p.add_argument("--correlation", type=float, default=0.3)
    p.add_argument("--data-seed", type=int, default=None, help="synthetic data seed (default: --seed)")


def _add_reduce_opts(p, agg=True):
    p.add_argument("--matcher", choices=["token", "key", "turbo"], default="token")
    p.add_argument("--alpha", type=float, default=DEFAULT_ALPHA)
    if agg:
        p.add_argument("--agg", choices=["avg", "weighted", "drop"], default="avg")


def _add_outputs(p, csv_out=True):
    p.add_argument("--report", default=None, help="JSON report path (default: stdout)")
    if csv_out:
        p.add_argument("--csv", default=None, help="CSV table path")


def _encoder(args):
    return init_encoder(
        EncoderConfig(args.dim, args.heads, args.blocks, args.mlp_ratio, args.seed, args.class_token)
    )


def _input_sequence(args) -> TokenSequence:
    if args.input:
        return load(args.input)
    if args.data_seed is None:
        args.data_seed = args.seed
    return generate_tokens(args.data_seed, args.n, args.dim, args.correlation)


def _scorer(args):
    return get_scorer(args.matcher)


# -- subcommands ----------------------------------------------------------


def cmd_gen(args):
    seq = generate_tokens(args.seed, args.n, args.d, args.correlation)
    if args.pinned:
        seq = TokenSequence(seq.tokens, seq.sizes, args.pinned)
    atomic_write(args.out, to_bytes(seq))
    return None


def cmd_fold(args):
    seq = load(args.input)
    if (args.r is None) == (args.ratio is None):
        raise ArgumentError("give exactly one of --r or --ratio")
    r = args.r if args.r is not None else int(np.floor(args.ratio * seq.reducible + 0.5))
    ctx = MatchContext(alpha=args.alpha) if args.matcher == "token" else None
    if args.matcher != "token":
        # bare token files carry no attention; turbo falls back to uniform importance
        if args.matcher == "key":
            raise ArgumentError("--matcher key needs attention keys; use `foldkit simulate`")
        imp = np.zeros(seq.n)
        imp[seq.pinned_prefix:] = 1.0
        ctx = MatchContext(importance=imp, alpha=args.alpha)
    out, trace = folder_reduce(seq, r, _scorer(args), AggregationScheme.parse(args.agg), ctx)
    atomic_write(args.out, to_bytes(out))
    if args.trace:
        atomic_write(args.trace, dump_json(trace.to_dict()))
    return None


def cmd_simulate(args):
    enc = _encoder(args)
    seq = _input_sequence(args)
    if args.schedule is None:
        args.schedule = "uniform:0"
    schedule = parse_schedule(args.schedule, args.blocks)
    out, acts = forward(enc, seq, schedule, _scorer(args), AggregationScheme.parse(args.agg), args.alpha)
    if args.out:
        atomic_write(args.out, to_bytes(out))
    if args.acts:
        root = Path(args.acts)
        root.mkdir(parents=True, exist_ok=True)
        for b, act in enumerate(acts, start=1):
            atomic_write(root / f"block_{b:02d}.ftsq", to_bytes(TokenSequence(act.tokens_out, act.sizes, out.pinned_prefix)))
            atomic_write(root / f"block_{b:02d}_keys.ftsq", to_bytes(TokenSequence(act.keys_head_mean, np.ones(len(act.keys_head_mean)), 0)))
            buf = io.BytesIO()
            np.save(buf, act.attention)
            atomic_write(root / f"block_{b:02d}_attn.npy", buf.getvalue())
    counts = [int(a.tokens_out.shape[0]) for a in acts]
    table = _table("block", range(1, args.blocks + 1), ["r", "tokens"], [[r, c] for r, c in zip(schedule.per_block_r, counts)])
    return make_report("simulate", "simulate", effective_config(args), table, weights_sha256=enc.checksum())


def cmd_energy(args):
    enc, seq = _encoder(args), _input_sequence(args)
    thresholds = _floats(args.thresholds)
    prof = energy_sweep(enc, seq, thresholds)
    table = _table(
        "block",
        range(1, args.blocks + 1),
        [f"t_E={t:g}" for t in thresholds],
        [[int(k) for k in row] for row in prof.per_block_k],
    )
    return make_report("energy", "energy", effective_config(args), table)


def cmd_emd(args):
    a, b = load(args.a), load(args.b)
    wa = a.sizes / a.sizes.sum() if args.weights == "sizes" else None
    wb = b.sizes / b.sizes.sum() if args.weights == "sizes" else None
    plan = emd(a.tokens, b.tokens, wa, wb)
    if args.plan:
        buf = io.StringIO()
        csv.writer(buf, lineterminator="\n").writerows([[repr(float(v)) for v in row] for row in plan.gamma])
        atomic_write(args.plan, buf.getvalue())
    return make_report("emd", "emd", effective_config(args), None, emd=plan.cost)


def cmd_propagate(args):
    enc, seq = _encoder(args), _input_sequence(args)
    scheme = AggregationScheme.parse(args.agg)
    if args.r is not None:
        settings = [("r", args.r)]
    else:
        settings = [("ratio", v) for v in _floats(args.ratios)]
    columns, cols = [], []
    for mode, value in settings:
        kw = {"r": int(value), "ratio": None} if mode == "r" else {"ratio": value}
        cols.append(propagation_profile(enc, seq, scorer=_scorer(args), scheme=scheme, weights=args.weights, **kw))
        columns.append(f"{mode}={value:g}")
    values = [list(row) for row in zip(*cols)]
    table = _table("block", range(1, args.blocks + 1), columns, values)
    return make_report("propagate", "propagation", effective_config(args), table)


def cmd_aggsweep(args):
    enc, seq = _encoder(args), _input_sequence(args)
    ratios = _floats(args.ratios)
    per_ratio = [
        aggregation_sweep(enc, seq, args.block, ratio, _scorer(args), weights=args.weights)
        for ratio in ratios
    ]
    schemes = [s.value for s in AggregationScheme]
    table = _table(
        "scheme", schemes, [f"ratio={r:g}" for r in ratios], [[res[s] for res in per_ratio] for s in schemes]
    )
    return make_report("aggsweep", "aggregation", effective_config(args), table)


def cmd_schedsweep(args):
    enc, seq = _encoder(args), _input_sequence(args)
    kinds = [k.strip() for k in args.kinds.split(",") if k.strip()]
    res = schedule_sweep(
        enc, seq, args.ratio, kinds, _scorer(args), AggregationScheme.parse(args.agg), weights=args.weights
    )
    table = _table("schedule", kinds, ["emd"], [[res[k]["emd"]] for k in kinds])
    return make_report(
        "schedsweep", "schedule", effective_config(args), table,
        schedules={k: res[k]["schedule"] for k in kinds},
    )


def _load_report(path) -> dict:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: not valid JSON ({exc})") from None
    for key in ("tool", "version", "kind", "config", "table"):
        if key not in data:
            raise FormatError(f"{path}: missing key {key!r}")
    table = data["table"]
    for key in ("index_name", "index", "columns", "values"):
        if key not in table:
            raise FormatError(f"{path}: table missing key {key!r}")
    return data


def merge_reports(paths) -> dict:
    """Join result tables of one kind side by side, keyed on their shared index."""
    reports = [_load_report(p) for p in paths]
    if not reports:
        raise ArgumentError("report needs at least one input")
    first = reports[0]
    columns, values = [], [[] for _ in first["table"]["index"]]
    for path, rep in zip(paths, reports):
        tbl = rep["table"]
        if rep["kind"] != first["kind"]:
            raise FormatError(f"{path}: kind {rep['kind']!r} does not match {first['kind']!r}")
        if tbl["index_name"] != first["table"]["index_name"] or tbl["index"] != first["table"]["index"]:
            raise FormatError(f"{path}: table index does not match {paths[0]}")
        label = Path(path).stem
        columns += tbl["columns"] if len(reports) == 1 else [f"{label}:{c}" for c in tbl["columns"]]
        for acc, row in zip(values, tbl["values"]):
            acc.extend(row)
    table = _table(first["table"]["index_name"], first["table"]["index"], columns, values)
    return {
        "tool": "foldkit",
        "version": __version__,
        "command": "report",
        "kind": first["kind"],
        "inputs": [{"file": str(p), "config": r["config"], "seeds": r.get("seeds", {}), "version": r["version"]} for p, r in zip(paths, reports)],
        "table": table,
    }


def cmd_report(args):
    return merge_reports(args.inputs)


# -- parser ---------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="foldkit", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"foldkit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", default=None, help="key = value file, or a report JSON to replay")
        p.set_defaults(func=func)
        return p

    p = add("gen", cmd_gen, "write a synthetic token file")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n", type=int, default=196)
    p.add_argument("--d", type=int, default=64)
    p.add_argument("--correlation", type=float, default=0.0)
    p.add_argument("--pinned", type=int, default=0)
    p.add_argument("--out", required=True)

    p = add("fold", cmd_fold, "reduce a token file")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--r", type=int, default=None)
    p.add_argument("--ratio", type=float, default=None)
    _add_reduce_opts(p)
    p.add_argument("--out", required=True)
    p.add_argument("--trace", default=None, help="write the fold trace as JSON")

    p = add("simulate", cmd_simulate, "run the toy encoder with a reduction schedule")
    _add_encoder_opts(p)
    _add_input_opts(p)
    p.add_argument("--schedule", default=None, help="last1:R, lastN:k:R, uniform:R or explicit:r1,...")
    _add_reduce_opts(p)
    p.add_argument("--out", default=None)
    p.add_argument("--acts", default=None, help="directory for per-block activations")
    _add_outputs(p)

    p = add("energy", cmd_energy, "minimum token count per block and energy threshold")
    _add_encoder_opts(p)
    _add_input_opts(p)
    p.add_argument("--thresholds", default=DEFAULT_THRESHOLDS)
    _add_outputs(p)

    p = add("emd", cmd_emd, "exact EMD between two token files")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--weights", choices=["uniform", "sizes"], default="uniform")
    p.add_argument("--plan", default=None, help="write the transport plan as CSV")
    _add_outputs(p, csv_out=False)

    p = add("propagate", cmd_propagate, "output EMD when reducing at each block in turn")
    _add_encoder_opts(p)
    _add_input_opts(p)
    _add_reduce_opts(p)
    p.add_argument("--ratios", default=DEFAULT_RATIOS)
    p.add_argument("--r", type=int, default=None, help="fixed reduction count (overrides --ratios)")
    p.add_argument("--weights", choices=["uniform", "sizes"], default="uniform")
    _add_outputs(p)

    p = add("aggsweep", cmd_aggsweep, "output EMD per aggregation scheme")
    _add_encoder_opts(p)
    _add_input_opts(p)
    _add_reduce_opts(p, agg=False)
    p.add_argument("--block", type=int, default=12)
    p.add_argument("--ratios", default="0.5")
    p.add_argument("--weights", choices=["uniform", "sizes"], default="uniform")
    _add_outputs(p)

    p = add("schedsweep", cmd_schedsweep, "output EMD per reduction schedule at a fixed total")
    _add_encoder_opts(p)
    _add_input_opts(p)
    _add_reduce_opts(p)
    p.add_argument("--ratio", type=float, default=0.6)
    p.add_argument("--kinds", default="last1,last3,uniform")
    p.add_argument("--weights", choices=["uniform", "sizes"], default="uniform")
    _add_outputs(p)

    p = add("report", cmd_report, "merge result reports into one table")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--out", default=None)
    p.add_argument("--csv", default=None)
    return parser


def read_config_file(path) -> dict:
    """``key = value`` lines (``#`` comments), or the ``config`` of a JSON report."""
    text = Path(path).read_text()
    if text.lstrip().startswith("{"):
        try:
            return dict(json.loads(text)["config"])
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise FormatError(f"{path}: not a report with an embedded config ({exc})") from None
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise FormatError(f"{path}:{lineno}: expected 'key = value'")
        values[key.strip().replace("-", "_")] = value.strip()
    return values


def _apply_config(parser, argv) -> argparse.Namespace:
    args = parser.parse_args(argv)
    if not args.config:
        return args
    file_values = read_config_file(args.config)
    subparser = parser._subparsers._group_actions[0].choices[args.command]
    known = {a.dest: a for a in subparser._actions}
    defaults = {}
    for key, value in file_values.items():
        if key not in known or key in _RUNTIME_KEYS:
            continue
        action = known[key]
        if isinstance(action, argparse._StoreTrueAction) and isinstance(value, str):
            value = value.lower() in ("1", "true", "yes", "on")
        defaults[key] = value
        # a config file satisfies required options
        action.required = False
    subparser.set_defaults(**defaults)
    return parser.parse_args(argv)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
        report = args.func(args)
        if report is not None:
            _emit(args, report)
        return 0
    except FoldkitError as exc:
        print(f"foldkit: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"foldkit: I/O error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
