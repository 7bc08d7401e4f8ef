"""Incremental postprocessing: deferred accesses, warnings, warning reuse.

Warnings are generated only after solving has finished (widening can
introduce spurious values that narrowing later removes, so generating them
mid-solve would overreport).  Re-evaluations here are limited to stable
unknowns that left ``superstable`` during the incremental run; for the rest,
the previous run's per-producer access contributions are reused verbatim.
Because every contribution is attributed to the unknown that produced it,
contributions of vanished producers vanish with them, so stale data-race
evidence cannot accumulate across reanalyses.

Warning identity hashes the kind, the provenance unknowns and a message
skeleton, never source locations: moved-but-unchanged code keeps its warning
id while the reported locations are refreshed from the current CFG.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, List, Optional, Set, Tuple

from .consys import (
    AccCollector,
    NodeCtx,
    Unknown,
    eval_tree,
    sort_key,
    unknown_key,
)
from .domains import (
    Access,
    AccessSet,
    AddressSet,
    LocalState,
    access_from_json,
    access_to_json,
)
from .increment import prune, reachable_set
from .minic.syntax import Store
from .minic.system import BuiltSystem
from .tdsolver import SolverState


class StateCorruption(Exception):
    pass


@dataclass(frozen=True)
class Warning:
    id: str
    kind: str  # "race" | "assert" | "unsound-store" | "dead-code"
    message: str
    locations: Tuple[Tuple[str, int, int], ...]  # (file, line, col)
    provenance: Tuple[str, ...]  # canonical unknown keys

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "kind": self.kind,
            "message": self.message,
            "locations": [{"file": f, "line": l, "col": c} for f, l, c in self.locations],
            "provenance": list(self.provenance),
        }

    @staticmethod
    def from_json(d: dict) -> "Warning":
        return Warning(d["id"], d["kind"], d["message"],
                       tuple((loc["file"], loc["line"], loc["col"]) for loc in d["locations"]),
                       tuple(d["provenance"]))


def _warning_id(kind: str, skeleton: str, provenance: Iterable[str]) -> str:
    h = hashlib.sha256()
    h.update(kind.encode())
    h.update(b"|")
    h.update(skeleton.encode())
    for p in sorted(provenance):
        h.update(b"|")
        h.update(p.encode())
    return h.hexdigest()[:16]


def make_warning(kind: str, skeleton: str, message: str,
                 provenance: Iterable[str],
                 locations: Iterable[Tuple[str, int, int]]) -> Warning:
    prov = tuple(sorted(provenance))
    return Warning(_warning_id(kind, skeleton, prov), kind, message,
                   tuple(sorted(set(locations))), prov)


@dataclass
class WarnStore:
    """Materialized warnings plus per-producer access contributions."""

    accesses: Dict[str, Dict[str, FrozenSet[Access]]] = field(default_factory=dict)
    warnings: List[Warning] = field(default_factory=list)

    def merged_accesses(self, glob: str) -> List[Access]:
        out: Set[Access] = set()
        for records in self.accesses.get(glob, {}).values():
            out |= records
        return sorted(out, key=Access.sort_key)

    def warnings_json(self) -> list:
        return [w.to_json() for w in self.warnings]

    def to_json(self) -> dict:
        return {
            "accesses": {
                g: {p: [access_to_json(r) for r in sorted(rs, key=Access.sort_key)]
                    for p, rs in sorted(producers.items())}
                for g, producers in sorted(self.accesses.items())
            },
            "warnings": self.warnings_json(),
        }

    @staticmethod
    def from_json(doc: dict) -> "WarnStore":
        store = WarnStore()
        store.accesses = {
            g: {p: frozenset(access_from_json(r) for r in rs)
                for p, rs in producers.items()}
            for g, producers in doc["accesses"].items()
        }
        store.warnings = [Warning.from_json(w) for w in doc["warnings"]]
        return store


# ---------------------------------------------------------------------------
# Postprocessing pipeline
# ---------------------------------------------------------------------------


def postprocess(built: BuiltSystem, st: SolverState, prev: Optional[WarnStore],
                filename: str = "<input>") -> Tuple[WarnStore, dict]:
    """Re-evaluate what the incremental run touched, reuse the rest, then run
    whole-store analyses and prune the solver state.

    Returns the new store plus statistics (which unknowns were re-evaluated
    versus reused)."""
    sys_ = built.sys
    if st.superstable and prev is None:
        raise StateCorruption("superstable unknowns present but no previous warning store")

    reachable = reachable_set(sys_, st)
    live = [u for u in sorted(st.stable & reachable, key=sort_key) if sys_.has_rhs(u)]
    recompute = [u for u in live if u not in st.superstable]
    reused = [u for u in live if u in st.superstable]

    sigma_keys_before = frozenset(st.sigma.keys())
    look = sys_.lookup(st.sigma)

    store = WarnStore()
    prev_by_producer: Dict[str, List[Tuple[str, FrozenSet[Access]]]] = {}
    if prev is not None:
        for g, producers in prev.accesses.items():
            for p, records in producers.items():
                prev_by_producer.setdefault(p, []).append((g, records))

    for u in recompute:
        tree = sys_.rhs(u, postproc=True)
        es, _value = eval_tree(tree, look)
        for target, contribution in es.sides.items():
            if isinstance(target, AccCollector) and isinstance(contribution, AccessSet):
                if contribution.records:
                    store.accesses.setdefault(target.name, {})[unknown_key(u)] = contribution.records
    for u in reused:
        for g, records in prev_by_producer.get(unknown_key(u), ()):
            store.accesses.setdefault(g, {})[unknown_key(u)] = records

    assert frozenset(st.sigma.keys()) == sigma_keys_before, \
        "postprocessing must not modify the solution"

    warnings: List[Warning] = []
    warnings.extend(races(store, built, filename))
    warnings.extend(_unsound_stores(built, st, filename))
    warnings.extend(_dead_code(built, st, reachable, filename))
    store.warnings = sorted(warnings, key=lambda w: (w.kind, w.id, w.message))

    stats = {
        "reevaluated": [unknown_key(u) for u in recompute],
        "reused": [unknown_key(u) for u in reused],
    }
    prune(sys_, st, reachable)
    return store, stats


def _edge_location(built: BuiltSystem, fn: str, src: int, dst: int,
                   filename: str) -> Optional[Tuple[str, int, int]]:
    cfg = built.cfgs.get(fn)
    if cfg is None:
        return None
    e = cfg.edge_between(src, dst)
    if e is None:
        return None
    loc = cfg.label_loc(e)
    if loc is None:
        return (filename, cfg.fn.loc.line, cfg.fn.loc.col)
    return (filename, loc.line, loc.col)


def races(store: WarnStore, built: BuiltSystem, filename: str) -> List[Warning]:
    """Lockset rule: two accesses to the same global race when at least one
    writes and their must-held locksets are disjoint.  One warning per
    global, citing every access involved in some conflicting pair."""
    out: List[Warning] = []
    for glob in sorted(store.accesses):
        records = store.merged_accesses(glob)
        conflicting: Set[Access] = set()
        for i, a in enumerate(records):
            for b in records[i + 1:]:
                if a.kind != "write" and b.kind != "write":
                    continue
                if a.locks.disjoint(b.locks):
                    conflicting.add(a)
                    conflicting.add(b)
        if not conflicting:
            continue
        locs = []
        for r in sorted(conflicting, key=Access.sort_key):
            loc = _edge_location(built, r.fn, r.src, r.dst, filename)
            if loc is not None:
                locs.append(loc)
        out.append(make_warning(
            "race", f"race:{glob}",
            f"possible data race on global '{glob}'",
            [unknown_key(AccCollector(glob))], locs))
    return out


def _recorded_contexts(built: BuiltSystem, st: SolverState, fn: str) -> list:
    cfg = built.cfgs[fn]
    return sorted({u.ctx for u in st.sigma
                   if isinstance(u, NodeCtx) and u.fn == fn and u.node == cfg.entry},
                  key=lambda c: str(c.params))


def _unsound_stores(built: BuiltSystem, st: SolverState, filename: str) -> List[Warning]:
    """A `*p = e` whose pointer evaluates to Top cannot be reflected on any
    global soundly; surface it."""
    out: List[Warning] = []
    for fn, cfg in sorted(built.cfgs.items()):
        for e in cfg.edges:
            if not isinstance(e.label, Store):
                continue
            offending = []
            for ctx in _recorded_contexts(built, st, fn):
                s = st.sigma.get(NodeCtx(fn, e.src, ctx))
                if not isinstance(s, LocalState) or s.is_bot():
                    continue
                p = s.env.as_dict().get(e.label.pointer)
                if isinstance(p, AddressSet) and p.is_top():
                    offending.append(NodeCtx(fn, e.dst, ctx))
            if offending:
                loc = _edge_location(built, fn, e.src, e.dst, filename)
                out.append(make_warning(
                    "unsound-store", f"unsound-store:{fn}:{e.dst}",
                    f"store through pointer '{e.label.pointer}' with unknown targets",
                    [unknown_key(u) for u in offending],
                    [loc] if loc else []))
    return out


def _dead_code(built: BuiltSystem, st: SolverState, reachable: Set[Unknown],
               filename: str) -> List[Warning]:
    """One warning per maximal connected region of dead nodes inside an
    analyzed function (dead: Bot or absent in every recorded context)."""
    out: List[Warning] = []
    for fn, cfg in sorted(built.cfgs.items()):
        ctxs = _recorded_contexts(built, st, fn)
        if not ctxs:
            continue  # function never analyzed; not dead code, just unused
        dead: Set[int] = set()
        for node in cfg.node_ids:
            alive = False
            for ctx in ctxs:
                s = st.sigma.get(NodeCtx(fn, node, ctx))
                if isinstance(s, LocalState) and not s.is_bot():
                    alive = True
                    break
            if not alive:
                dead.add(node)
        if not dead:
            continue
        # connected components over undirected CFG edges
        adj: Dict[int, Set[int]] = {n: set() for n in dead}
        for e in cfg.edges:
            if e.src in dead and e.dst in dead:
                adj[e.src].add(e.dst)
                adj[e.dst].add(e.src)
        seen: Set[int] = set()
        for start in sorted(dead):
            if start in seen:
                continue
            comp = []
            stack = [start]
            while stack:
                n = stack.pop()
                if n in seen:
                    continue
                seen.add(n)
                comp.append(n)
                stack.extend(adj[n] - seen)
            comp.sort()
            locs = []
            for e in sorted(cfg.edges, key=lambda e: (e.dst, e.src)):
                if e.dst in comp:
                    loc = _edge_location(built, fn, e.src, e.dst, filename)
                    if loc is not None:
                        locs.append(loc)
                        break
            prov = [unknown_key(NodeCtx(fn, n, ctx)) for n in comp for ctx in ctxs]
            out.append(make_warning(
                "dead-code", f"dead:{fn}:{','.join(map(str, comp))}",
                f"unreachable code in '{fn}'",
                prov, locs))
    return out


def diff_warnings(old: Optional[WarnStore], new: WarnStore) -> dict:
    """Warning diff by id; `kept` carries the new (refreshed) locations."""
    old_by_id = {w.id: w for w in old.warnings} if old else {}
    new_by_id = {w.id: w for w in new.warnings}
    added = [w for wid, w in sorted(new_by_id.items()) if wid not in old_by_id]
    removed = [w for wid, w in sorted(old_by_id.items()) if wid not in new_by_id]
    kept = [w for wid, w in sorted(new_by_id.items()) if wid in old_by_id]
    return {"added": added, "removed": removed, "kept": kept}
