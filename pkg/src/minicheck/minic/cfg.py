"""Control-flow graphs with program-wide stable node identities.

Nodes are numbered in two steps.  A *local* numbering is purely structural:
entry is 0, interior nodes follow in statement order, the return node is
last.  A :class:`NodeAssignment` then maps local positions to program-wide
ids.  Unchanged functions keep their previous ids wholesale; edited
functions keep entry and return ids but draw fresh ids for interior nodes
from a monotone counter that never reuses an id.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from .syntax import (
    Assign,
    Block,
    Call,
    Create,
    Function,
    If,
    Loc,
    LockStmt,
    Program,
    Return,
    Store,
    UnlockStmt,
    While,
    function_locals,
)


@dataclass(frozen=True)
class Guard:
    cond: object
    sense: bool
    loc: Loc


@dataclass(frozen=True)
class Edge:
    src: int
    dst: int
    label: Optional[object]  # statement | Guard | None (skip)


@dataclass
class LocalCFG:
    name: str
    n_nodes: int
    edges: List[Edge]


def build_local_cfg(fn: Function) -> LocalCFG:
    edges: List[Edge] = []
    counter = 0

    def new_node() -> int:
        nonlocal counter
        n = counter
        counter += 1
        return n

    entry = new_node()
    RET = -1  # patched once the body is built

    def walk(block: Block, cur: Optional[int]) -> Optional[int]:
        for s in block.stmts:
            if cur is None:
                cur = new_node()  # unreachable continuation after a return
            if isinstance(s, (Assign, Store, LockStmt, UnlockStmt, Create, Call)):
                nxt = new_node()
                edges.append(Edge(cur, nxt, s))
                cur = nxt
            elif isinstance(s, Return):
                edges.append(Edge(cur, RET, s))
                cur = None
            elif isinstance(s, If):
                t_entry = new_node()
                edges.append(Edge(cur, t_entry, Guard(s.cond, True, s.loc)))
                t_exit = walk(s.then, t_entry)
                f_entry = new_node()
                edges.append(Edge(cur, f_entry, Guard(s.cond, False, s.loc)))
                f_exit = walk(s.orelse, f_entry) if s.orelse else f_entry
                if t_exit is None and f_exit is None:
                    cur = None
                else:
                    merge = new_node()
                    if t_exit is not None:
                        edges.append(Edge(t_exit, merge, None))
                    if f_exit is not None:
                        edges.append(Edge(f_exit, merge, None))
                    cur = merge
            elif isinstance(s, While):
                # dedicated head node: the back edge must never target the
                # function entry, whose rhs is the constant Bot
                head = new_node()
                edges.append(Edge(cur, head, None))
                b_entry = new_node()
                edges.append(Edge(head, b_entry, Guard(s.cond, True, s.loc)))
                b_exit = walk(s.body, b_entry)
                if b_exit is not None:
                    edges.append(Edge(b_exit, head, None))
                after = new_node()
                edges.append(Edge(head, after, Guard(s.cond, False, s.loc)))
                cur = after
            else:
                raise TypeError(f"unexpected statement {s!r}")
        return cur

    exit_node = walk(fn.body, entry)
    if exit_node is not None:
        edges.append(Edge(exit_node, RET, Return(None, fn.loc)))
    ret = new_node()
    edges = [Edge(e.src, ret if e.dst == RET else e.dst, e.label) for e in edges]
    return LocalCFG(fn.name, counter, edges)


@dataclass
class NodeAssignment:
    """Positional map from each function's local node numbering to global ids."""

    assign: Dict[str, Tuple[int, ...]] = field(default_factory=dict)
    counter: int = 0

    def entry_of(self, fn: str) -> int:
        return self.assign[fn][0]

    def return_of(self, fn: str) -> int:
        return self.assign[fn][-1]

    def to_json(self) -> dict:
        return {"assign": {k: list(v) for k, v in self.assign.items()},
                "counter": self.counter}

    @staticmethod
    def from_json(doc: dict) -> "NodeAssignment":
        return NodeAssignment({k: tuple(v) for k, v in doc["assign"].items()},
                              doc["counter"])


def assign_node_ids(prog: Program, old: Optional[NodeAssignment],
                    reuse_all: set, reuse_endpoints: set) -> NodeAssignment:
    """Compute the node-id assignment for `prog`.

    `reuse_all` functions keep every id from `old`; `reuse_endpoints`
    functions keep entry and return ids but get fresh interior ids; all
    remaining functions are new and fully fresh.  Ids of functions absent
    from `prog` are dropped (the counter still never goes backwards).
    """
    counter = old.counter if old else 0
    assign: Dict[str, Tuple[int, ...]] = {}
    for name, fn in prog.functions.items():
        local = build_local_cfg(fn)
        n = local.n_nodes
        if old is not None and name in reuse_all and name in old.assign:
            ids = old.assign[name]
            if len(ids) != n:
                raise ValueError(
                    f"structure of unchanged function {name!r} does not match its previous CFG")
            assign[name] = ids
        elif old is not None and name in reuse_endpoints and name in old.assign:
            entry = old.assign[name][0]
            ret = old.assign[name][-1]
            interior = tuple(range(counter, counter + n - 2))
            counter += n - 2
            assign[name] = (entry,) + interior + (ret,)
        else:
            assign[name] = tuple(range(counter, counter + n))
            counter += n
    return NodeAssignment(assign, counter)


@dataclass
class FuncCFG:
    """A function CFG with globalized node ids."""

    name: str
    fn: Function
    entry: int
    ret: int
    node_ids: Tuple[int, ...]
    edges: List[Edge]  # src/dst are global ids
    locals: List[str]

    def in_edges(self, node: int) -> List[Edge]:
        return [e for e in self.edges if e.dst == node]

    def edge_between(self, src: int, dst: int) -> Optional[Edge]:
        for e in self.edges:
            if e.src == src and e.dst == dst:
                return e
        return None

    def label_loc(self, e: Edge) -> Optional[Loc]:
        lbl = e.label
        if lbl is None:
            return None
        if isinstance(lbl, Guard):
            return lbl.loc
        return lbl.loc


def build_cfgs(prog: Program, assignment: NodeAssignment) -> Dict[str, FuncCFG]:
    global_names = prog.global_names() | prog.mutex_names()
    cfgs: Dict[str, FuncCFG] = {}
    for name, fn in prog.functions.items():
        local = build_local_cfg(fn)
        ids = assignment.assign[name]
        edges = [Edge(ids[e.src], ids[e.dst], e.label) for e in local.edges]
        # deterministic edge order: by target then source
        edges.sort(key=lambda e: (e.dst, e.src))
        cfgs[name] = FuncCFG(name, fn, ids[0], ids[-1], ids, edges,
                             function_locals(fn, global_names))
    return cfgs


def find_edge(cfgs: Dict[str, FuncCFG], fn: str, src: int, dst: int) -> Optional[Edge]:
    cfg = cfgs.get(fn)
    if cfg is None:
        return None
    return cfg.edge_between(src, dst)
