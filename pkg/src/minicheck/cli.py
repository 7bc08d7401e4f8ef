"""Command-line pipeline and server mode.

Subcommands::

    minicheck analyze   prog.mc   # from-scratch: solve, warn, persist state
    minicheck reanalyze prog.mc   # incremental: diff, destabilize, re-solve
    minicheck compare   prog.mc   # precision of the persisted state vs scratch
    minicheck serve     prog.mc   # line-delimited JSON request loop

State persists in a single bundle (``--state-dir``): source snapshot,
node-id assignment, solver state, warning store and the analysis options
that produced them.  A bundle whose format or analysis domain does not match
is refused; reusing solver data across differing abstractions is unsound.

Exit codes: 0 ok; 1 warnings present (with ``--fail-on-warn``); 2 errors.
"""

from __future__ import annotations

import argparse
import datetime
import json
import os
import socket
import sys
from dataclasses import dataclass
from typing import Optional, TextIO

from .consys import NodeCtx, unknown_key
from .domains import leq
from .increment import (
    ReanalyzeOptions,
    detect_changes,
    prepare_plain,
    prepare_reluctant,
    reanalyze,
    relabel_nodes,
    restart_globals,
    select_restart_globals,
)
from .minic import AnalysisConfig, MiniCError, build_system, parse
from .minic.cfg import NodeAssignment, assign_node_ids
from .postproc import WarnStore, diff_warnings, postprocess
from .tdsolver import (
    SolverOptions,
    SolverState,
    run,
    state_from_json,
    state_to_json,
    verify_solution,
)

BUNDLE_NAME = "bundle.json"
BUNDLE_FORMAT = 1


class CliError(Exception):
    pass


@dataclass
class Options:
    mode: str = "reluctant"
    restart: str = "minimal"
    wpoint_restart: bool = False
    domain: str = "valueset"
    state_dir: str = ".minicheck"
    stats: bool = False
    fail_on_warn: bool = False
    explain_diff: bool = False

    def config(self) -> AnalysisConfig:
        return AnalysisConfig(domain=self.domain)

    def solver(self) -> SolverOptions:
        return SolverOptions(restart_wpoint=self.wpoint_restart,
                             localized_widening=self.wpoint_restart)

    def reanalyze_options(self) -> ReanalyzeOptions:
        return ReanalyzeOptions(mode=self.mode, restart=self.restart, solver=self.solver())


@dataclass
class AnalysisResult:
    built: object
    state: SolverState
    store: WarnStore
    run_stats: dict
    post_stats: dict
    changes: Optional[dict] = None
    diff: Optional[dict] = None


# ---------------------------------------------------------------------------
# Bundles
# ---------------------------------------------------------------------------


def bundle_path(state_dir: str) -> str:
    return os.path.join(state_dir, BUNDLE_NAME)


def save_bundle(state_dir: str, source: str, source_path: str,
                assignment: NodeAssignment, state: SolverState,
                store: WarnStore, opts: Options) -> None:
    os.makedirs(state_dir, exist_ok=True)
    doc = {
        "format": BUNDLE_FORMAT,
        "created_at": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "compat": {"domain": opts.domain},
        "source": source,
        "source_path": source_path,
        "nodes": assignment.to_json(),
        "solver": state_to_json(state),
        "warnstore": store.to_json(),
    }
    with open(bundle_path(state_dir), "w") as f:
        json.dump(doc, f, indent=1)
        f.write("\n")


def load_bundle(state_dir: str, opts: Options) -> Optional[dict]:
    path = bundle_path(state_dir)
    if not os.path.exists(path):
        return None
    with open(path) as f:
        doc = json.load(f)
    if doc.get("format") != BUNDLE_FORMAT:
        raise CliError(f"state bundle format {doc.get('format')!r} is not supported")
    if doc.get("compat", {}).get("domain") != opts.domain:
        raise CliError(
            "state bundle was produced with different analysis options "
            f"(domain {doc.get('compat', {}).get('domain')!r} vs {opts.domain!r}); "
            "refusing to reuse it; delete the state dir to reanalyze from scratch")
    return doc


# ---------------------------------------------------------------------------
# Pipelines
# ---------------------------------------------------------------------------


def run_analysis(text: str, filename: str, opts: Options) -> AnalysisResult:
    prog = parse(text)
    assignment = assign_node_ids(prog, None, set(), set())
    built = build_system(prog, assignment, opts.config())
    state = SolverState()
    run_stats = run(built.sys, state, opts.solver())
    violations = verify_solution(built.sys, state)
    if violations:
        raise CliError(f"internal error: solution verification failed: {violations[:3]}")
    store, post_stats = postprocess(built, state, None, filename)
    return AnalysisResult(built, state, store, run_stats, post_stats)


def run_reanalysis(bundle: dict, text: str, filename: str, opts: Options) -> AnalysisResult:
    old_prog = parse(bundle["source"])
    new_prog = parse(text)
    old_asg = NodeAssignment.from_json(bundle["nodes"])
    state = state_from_json(bundle["solver"])
    prev_store = WarnStore.from_json(bundle["warnstore"])

    changes = detect_changes(old_prog, new_prog)
    restart_set = []
    if opts.restart == "minimal":
        restart_set = select_restart_globals(changes, state, old_asg)
    new_asg = relabel_nodes(changes, old_asg, new_prog)
    built = build_system(new_prog, new_asg, opts.config())

    ropts = opts.reanalyze_options()
    if ropts.mode == "reluctant":
        pre = prepare_reluctant(changes, state, old_asg, built.sys)
    else:
        pre = prepare_plain(changes, state, old_asg, built.sys)
    restart_globals(restart_set, state)
    run_stats = reanalyze(built.sys, state, ropts, pre_solve=pre)
    run_stats["restarted"] = [unknown_key(g) for g in restart_set]
    violations = verify_solution(built.sys, state)
    if violations:
        raise CliError(f"internal error: solution verification failed: {violations[:3]}")
    store, post_stats = postprocess(built, state, prev_store, filename)
    diff = diff_warnings(prev_store, store)
    return AnalysisResult(built, state, store, run_stats, post_stats,
                          changes=changes.to_json(), diff=diff)


def compare_report(bundle: dict, text: str, filename: str, opts: Options) -> dict:
    """From-scratch precision report for the persisted incremental state.

    The scratch run reuses the bundle's node-id assignment so that equal ids
    denote equal program points; a fresh numbering would shift after edits
    that change node counts."""
    if bundle["source"] != text:
        raise CliError("state bundle does not match the current source; run reanalyze first")
    prog = parse(text)
    assignment = NodeAssignment.from_json(bundle["nodes"])
    built = build_system(prog, assignment, opts.config())
    scratch_state = SolverState()
    run(built.sys, scratch_state, opts.solver())
    violations = verify_solution(built.sys, scratch_state)
    if violations:
        raise CliError(f"internal error: solution verification failed: {violations[:3]}")
    inc_sigma = state_from_json(bundle["solver"]).sigma
    scr_sigma = scratch_state.sigma
    inc_points = {u: v for u, v in inc_sigma.items() if isinstance(u, NodeCtx)}
    scr_points = {u: v for u, v in scr_sigma.items() if isinstance(u, NodeCtx)}
    shared = sorted(set(inc_points) & set(scr_points), key=unknown_key)
    equal = coarser = finer = incomparable = 0
    coarser_points = []
    for u in shared:
        a, b = inc_points[u], scr_points[u]
        down = leq(a, b)
        up = leq(b, a)
        if down and up:
            equal += 1
        elif up:
            coarser += 1
            coarser_points.append(unknown_key(u))
        elif down:
            finer += 1
        else:
            incomparable += 1
            coarser_points.append(unknown_key(u))
    total = len(shared)
    worse = coarser + incomparable
    return {
        "total": total,
        "equal": equal,
        "coarser": coarser,
        "finer": finer,
        "incomparable": incomparable,
        "coarser_fraction": (worse / total) if total else 0.0,
        "coarser_points": coarser_points,
        "only_incremental": len(inc_points) - total,
        "only_scratch": len(scr_points) - total,
    }


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def _read_source(path: str) -> str:
    try:
        with open(path) as f:
            return f.read()
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc}") from exc


def _emit_stats(result: AnalysisResult, opts: Options, err: TextIO) -> None:
    if not opts.stats:
        return
    stats = {
        "rhs_evals_total": result.state.rhs_evals,
        "destabilizations_total": result.state.destabilizations,
        "run": result.run_stats,
        "postprocess": {k: len(v) for k, v in result.post_stats.items()},
    }
    print(json.dumps(stats, indent=1), file=err)


def _exit_code(result: AnalysisResult, opts: Options) -> int:
    if opts.fail_on_warn and result.store.warnings:
        return 1
    return 0


def cmd_analyze(path: str, opts: Options, out: Optional[TextIO] = None,
                err: Optional[TextIO] = None) -> int:
    out = out if out is not None else sys.stdout
    err = err if err is not None else sys.stderr
    try:
        text = _read_source(path)
        result = run_analysis(text, path, opts)
    except (MiniCError, CliError) as exc:
        print(f"error: {exc}", file=err)
        return 2
    save_bundle(opts.state_dir, text, path, result.built.assignment,
                result.state, result.store, opts)
    print(json.dumps(result.store.warnings_json(), indent=1), file=out)
    _emit_stats(result, opts, err)
    return _exit_code(result, opts)


def cmd_reanalyze(path: str, opts: Options, out: Optional[TextIO] = None,
                  err: Optional[TextIO] = None) -> int:
    out = out if out is not None else sys.stdout
    err = err if err is not None else sys.stderr
    try:
        bundle = load_bundle(opts.state_dir, opts)
        if bundle is None:
            print("notice: no previous state; analyzing from scratch", file=err)
            return cmd_analyze(path, opts, out, err)
        text = _read_source(path)
        result = run_reanalysis(bundle, text, path, opts)
    except (MiniCError, CliError) as exc:
        print(f"error: {exc}", file=err)
        return 2
    save_bundle(opts.state_dir, text, path, result.built.assignment,
                result.state, result.store, opts)
    payload = {k: [w.to_json() for w in ws] for k, ws in result.diff.items()}
    if opts.explain_diff:
        payload["changes"] = result.changes
    print(json.dumps(payload, indent=1), file=out)
    _emit_stats(result, opts, err)
    return _exit_code(result, opts)


def cmd_compare(path: str, opts: Options, out: Optional[TextIO] = None,
                err: Optional[TextIO] = None) -> int:
    out = out if out is not None else sys.stdout
    err = err if err is not None else sys.stderr
    try:
        bundle = load_bundle(opts.state_dir, opts)
        if bundle is None:
            print("error: no state bundle; run analyze first", file=err)
            return 2
        text = _read_source(path)
        report = compare_report(bundle, text, path, opts)
    except (MiniCError, CliError) as exc:
        print(f"error: {exc}", file=err)
        return 2
    print(json.dumps(report, indent=1), file=out)
    return 0


# ---------------------------------------------------------------------------
# Server mode: line-delimited JSON over stdio or a Unix socket, strictly
# serialized (one request at a time, responses in request order).
# ---------------------------------------------------------------------------


def serve_loop(opts: Options, inp: TextIO, out: TextIO,
               err: Optional[TextIO] = None) -> int:
    err = err if err is not None else sys.stderr
    for line in inp:
        line = line.strip()
        if not line:
            continue
        try:
            req = json.loads(line)
        except json.JSONDecodeError as exc:
            _respond(out, {"error": f"malformed request: {exc}"})
            continue
        rid = req.get("id") if isinstance(req, dict) else None
        try:
            method = req.get("method") if isinstance(req, dict) else None
            if method == "shutdown":
                _respond(out, {"id": rid, "result": "bye"})
                return 0
            if method == "warnings":
                bundle = load_bundle(opts.state_dir, opts)
                if bundle is None:
                    _respond(out, {"id": rid, "error": "no analysis state"})
                else:
                    _respond(out, {"id": rid, "result": bundle["warnstore"]["warnings"]})
                continue
            if method == "reanalyze":
                path = req.get("path")
                if not path:
                    _respond(out, {"id": rid, "error": "missing 'path'"})
                    continue
                text = _read_source(path)
                bundle = load_bundle(opts.state_dir, opts)
                if bundle is None:
                    result = run_analysis(text, path, opts)
                    diff = diff_warnings(None, result.store)
                    fallback = True
                else:
                    result = run_reanalysis(bundle, text, path, opts)
                    diff = result.diff
                    fallback = False
                save_bundle(opts.state_dir, text, path, result.built.assignment,
                            result.state, result.store, opts)
                payload = {k: [w.to_json() for w in ws] for k, ws in diff.items()}
                if fallback:
                    payload["fallback"] = "analyze"
                if opts.stats:
                    payload["stats"] = {
                        "rhs_evals_total": result.state.rhs_evals,
                        "destabilizations_total": result.state.destabilizations,
                    }
                _respond(out, {"id": rid, "result": payload})
                continue
            _respond(out, {"id": rid, "error": f"unknown method {method!r}"})
        except (CliError, MiniCError) as exc:
            _respond(out, {"id": rid, "error": str(exc)})
    return 0


def _respond(out: TextIO, doc: dict) -> None:
    out.write(json.dumps(doc, separators=(",", ":")) + "\n")
    out.flush()


def cmd_serve(opts: Options, socket_path: Optional[str],
              err: Optional[TextIO] = None) -> int:
    err = err if err is not None else sys.stderr
    if socket_path is None:
        return serve_loop(opts, sys.stdin, sys.stdout, err)
    if os.path.exists(socket_path):
        os.unlink(socket_path)
    srv = socket.socket(socket.AF_UNIX, socket.SOCK_STREAM)
    srv.bind(socket_path)
    srv.listen(1)
    print(f"listening on {socket_path}", file=err)
    try:
        while True:
            conn, _ = srv.accept()
            with conn:
                rf = conn.makefile("r", encoding="utf-8")
                wf = conn.makefile("w", encoding="utf-8")
                code = serve_loop(opts, rf, wf, err)
                if code == 0 and wf.closed is False:
                    # shutdown request ends the server, disconnect re-accepts
                    try:
                        wf.flush()
                    except ValueError:
                        pass
                    return 0
    finally:
        srv.close()
        if os.path.exists(socket_path):
            os.unlink(socket_path)


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--mode", choices=["plain", "reluctant"], default="reluctant",
                   help="destabilization strategy for reanalysis")
    p.add_argument("--restart", choices=["off", "minimal"], default="minimal",
                   help="restarting of flow-insensitive unknowns")
    p.add_argument("--wpoint-restart", action="store_true",
                   help="restart an unknown when it first becomes a widening point "
                        "(enables localized widening)")
    p.add_argument("--domain", choices=["valueset", "interval"], default="valueset",
                   help="integer value domain")
    p.add_argument("--state-dir", default=".minicheck", help="where analysis state persists")
    p.add_argument("--stats", action="store_true", help="print solver counters to stderr")
    p.add_argument("--fail-on-warn", action="store_true",
                   help="exit 1 when warnings are present")


def _options(ns: argparse.Namespace) -> Options:
    return Options(mode=ns.mode, restart=ns.restart, wpoint_restart=ns.wpoint_restart,
                   domain=ns.domain, state_dir=ns.state_dir, stats=ns.stats,
                   fail_on_warn=ns.fail_on_warn,
                   explain_diff=getattr(ns, "explain_diff", False))


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="minicheck",
                                     description="incremental analyzer for MiniC programs")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="from-scratch analysis")
    p.add_argument("source")
    _add_common(p)

    p = sub.add_parser("reanalyze", help="incremental reanalysis against saved state")
    p.add_argument("source")
    p.add_argument("--explain-diff", action="store_true",
                   help="include the function-level change set in the output")
    _add_common(p)

    p = sub.add_parser("compare", help="compare saved state against a from-scratch run")
    p.add_argument("source")
    _add_common(p)

    p = sub.add_parser("serve", help="JSON line-protocol server (stdio or unix socket)")
    p.add_argument("--socket", default=None, help="unix socket path (default: stdio)")
    _add_common(p)

    ns = parser.parse_args(argv)
    opts = _options(ns)
    try:
        if ns.command == "analyze":
            return cmd_analyze(ns.source, opts)
        if ns.command == "reanalyze":
            return cmd_reanalyze(ns.source, opts)
        if ns.command == "compare":
            return cmd_compare(ns.source, opts)
        if ns.command == "serve":
            return cmd_serve(opts, ns.socket)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 2


if __name__ == "__main__":
    sys.exit(main())
