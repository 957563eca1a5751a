"""Batch command-line frontend.

Subcommands: ``materialize`` (load rules and facts, run to fixpoint, export),
``query`` (answer one pattern over a fresh run), ``stats`` (summarize a stats
file from a prior run). Exit codes: 0 success, 1 input error, 2 timeout,
3 resource exhaustion.
"""

from __future__ import annotations

import argparse
import re
import sys

from .edb import Dictionary, EdbStore
from .engine import MaterializeOptions, export_facts, materialize
from .errors import DeltalogError
from .lang import parse_atom, parse_program
from .stats import StatsReport

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_TIMEOUT = 2
EXIT_RESOURCE = 3

_DURATION_RE = re.compile(r"^(\d+(?:\.\d+)?)(ms|s|m|h)?$")
_DURATION_MS = {"ms": 1.0, "s": 1000.0, "m": 60000.0, "h": 3600000.0, None: 1000.0}

_OPT_NAMES = ("mr", "rr", "sub")


def parse_duration_ms(text: str) -> float:
    m = _DURATION_RE.match(text.strip())
    if m is None:
        raise ValueError(f"bad duration {text!r} (use e.g. 500ms, 30s, 5m, 3h)")
    return float(m.group(1)) * _DURATION_MS[m.group(2)]


def _read_config(path: str) -> dict[str, str]:
    values: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as source:
        for lineno, raw in enumerate(source, start=1):
            line = raw.strip()
            if not line or line.startswith("#") or line.startswith("%"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            key, _, value = line.partition("=")
            values[key.strip()] = value.strip()
    return values


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="deltalog")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_run_flags(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="plain-text config file (key = value); flags override")
        p.add_argument("--rules", help="rule file (.dlog)")
        p.add_argument("--data", help="comma-separated fact files")
        p.add_argument("--format", choices=("tsv", "nt"), help="fact file format (default tsv)")
        p.add_argument("--opt", help="comma-separated optimizations: mr,rr,sub (default mr,rr)")
        p.add_argument("--no-opt", action="store_true", help="disable all optimizations")
        p.add_argument("--memo", choices=("on", "off"), help="memoization (default off)")
        p.add_argument("--memo-timeout-ms", type=int, help="per-atom memo deadline (default 1000)")
        p.add_argument("--dyn-check-limit", type=int, help="dynamic check binding cap (default 32)")
        p.add_argument("--timeout", help="wall-clock limit, e.g. 30s or 3h (default unlimited)")
        p.add_argument("--stats", help="write run statistics to this path (text + .json)")

    m = sub.add_parser("materialize", help="run a program to fixpoint and export facts")
    add_run_flags(m)
    m.add_argument("--output", help="export derived facts to this path (default stdout)")

    q = sub.add_parser("query", help="materialize and print facts matching a pattern")
    add_run_flags(q)
    q.add_argument("pattern", help="query atom, e.g. 'T(X,pO,Y)'")

    s = sub.add_parser("stats", help="summarize a stats file from a prior run")
    s.add_argument("path")
    return parser


def _merge_config(args: argparse.Namespace) -> None:
    if not getattr(args, "config", None):
        return
    values = _read_config(args.config)
    mapping = {
        "rules": "rules",
        "data": "data",
        "format": "format",
        "output": "output",
        "opt": "opt",
        "memo": "memo",
        "memo-timeout-ms": "memo_timeout_ms",
        "dyn-check-limit": "dyn_check_limit",
        "timeout": "timeout",
        "stats": "stats",
    }
    for key, attr in mapping.items():
        if key in values and getattr(args, attr, None) in (None, False):
            value = values[key]
            if attr in ("memo_timeout_ms", "dyn_check_limit"):
                value = int(value)
            setattr(args, attr, value)
    if values.get("no-opt", "").lower() in ("1", "true", "yes") and not args.no_opt:
        args.no_opt = True


def _options_from_args(args: argparse.Namespace) -> MaterializeOptions:
    opts = MaterializeOptions()
    if args.no_opt:
        opts.enable_mr = opts.enable_rr = opts.enable_sub = False
    elif args.opt is not None:
        wanted = [o.strip() for o in args.opt.split(",") if o.strip()]
        for name in wanted:
            if name not in _OPT_NAMES:
                raise ValueError(f"unknown optimization {name!r} (choose from {','.join(_OPT_NAMES)})")
        opts.enable_mr = "mr" in wanted
        opts.enable_rr = "rr" in wanted
        opts.enable_sub = "sub" in wanted
    if args.memo is not None:
        opts.enable_memo = args.memo == "on"
    if args.memo_timeout_ms is not None:
        opts.memo_timeout_ms = args.memo_timeout_ms
    if args.dyn_check_limit is not None:
        opts.dyn_check_limit = args.dyn_check_limit
    if args.timeout is not None:
        opts.timeout_ms = parse_duration_ms(args.timeout)
    opts.stats = StatsReport()
    return opts


def _load_inputs(args: argparse.Namespace):
    if not args.rules:
        raise ValueError("--rules is required")
    dictionary = Dictionary()
    with open(args.rules, "r", encoding="utf-8") as source:
        program = parse_program(source.read(), dictionary)
    db = EdbStore(dictionary)
    idb = program.idb_names()
    fmt = args.format or "tsv"
    if args.data:
        for path in args.data.split(","):
            path = path.strip()
            with open(path, "r", encoding="utf-8") as source:
                db.load_facts(source, fmt, idb, source_name=path)
    for fact in program.facts:
        db.add_fact(fact.pred.name, tuple(t.cid for t in fact.terms))
    return program, db


def _write_stats(args: argparse.Namespace, stats: StatsReport) -> None:
    if getattr(args, "stats", None):
        stats.write_text(args.stats)
        stats.write_json(args.stats + ".json")


def cmd_materialize(args: argparse.Namespace) -> int:
    try:
        _merge_config(args)
        program, db = _load_inputs(args)
        opts = _options_from_args(args)
    except (OSError, ValueError, DeltalogError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    try:
        store, stats = materialize(program, db, opts)
    except MemoryError:
        print("error: out of memory", file=sys.stderr)
        return EXIT_RESOURCE
    try:
        if args.output:
            with open(args.output, "w", encoding="utf-8") as sink:
                count = export_facts(store, db.dictionary, sink)
        else:
            count = export_facts(store, db.dictionary, sys.stdout)
        stats.put("export.facts", count)
        _write_stats(args, stats)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    if not store.completed:
        print("error: run did not reach the fixpoint (timeout or step cap)", file=sys.stderr)
        return EXIT_TIMEOUT
    return EXIT_OK


def cmd_query(args: argparse.Namespace) -> int:
    try:
        _merge_config(args)
        program, db = _load_inputs(args)
        opts = _options_from_args(args)
        pattern = parse_atom(args.pattern, program)
    except (OSError, ValueError, DeltalogError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    try:
        store, stats = materialize(program, db, opts)
    except MemoryError:
        print("error: out of memory", file=sys.stderr)
        return EXIT_RESOURCE
    if not store.completed:
        print("error: run did not reach the fixpoint (timeout or step cap)", file=sys.stderr)
        return EXIT_TIMEOUT
    if pattern.pred.is_idb:
        rows = store.match_pattern(pattern)
    else:
        rows = _edb_full_matches(db, pattern)
    name = pattern.pred.name
    for row in rows:
        sys.stdout.write(name + "\t" + "\t".join(db.dictionary.lookup(v) for v in row) + "\n")
    try:
        _write_stats(args, stats)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    return EXIT_OK


def _edb_full_matches(db: EdbStore, pattern) -> list[tuple[int, ...]]:
    from .lang import Const

    rows = sorted(db.tuples(pattern.pred.name))
    out = []
    for row in rows:
        first: dict[str, int] = {}
        ok = True
        for i, t in enumerate(pattern.terms):
            if isinstance(t, Const):
                ok = row[i] == t.cid
            elif t.name in first:
                ok = row[i] == row[first[t.name]]
            else:
                first[t.name] = i
            if not ok:
                break
        if ok:
            out.append(row)
    return out


def cmd_stats(args: argparse.Namespace) -> int:
    try:
        report = StatsReport.from_file(args.path)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    data = report.as_dict()

    def section(title: str, prefix: str) -> None:
        keys = [k for k in data if k.startswith(prefix)]
        if keys:
            print(title)
            for k in keys:
                value = data[k]
                shown = f"{value:.3f}" if isinstance(value, float) and not float(value).is_integer() else int(value)
                print(f"  {k} = {shown}")

    section("rule applications", "rule.")
    section("optimizations", "opt.")
    section("duplicate elimination", "dedup.")
    section("blocks", "blocks.")
    section("concatenation", "concat.")
    section("columns", "columns.")
    section("memoization", "memo.")
    section("facts", "facts.")
    section("run", "run.")
    before = data.get("dedup.rows_before", 0)
    removed = data.get("dedup.rows_removed", 0)
    if before:
        print(f"dedup ratio: {removed / before:.1%} of produced rows were duplicates")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "materialize":
        return cmd_materialize(args)
    if args.command == "query":
        return cmd_query(args)
    return cmd_stats(args)


def run() -> None:
    raise SystemExit(main())
