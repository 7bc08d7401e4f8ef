"""Demand-driven local fixpoint solver for side-effecting constraint systems.

``solve`` explores only the unknowns contributing to the queried one,
tracking influences as it goes.  Widening/narrowing phases are applied at
dynamically detected widening points (unknowns closing a dependency cycle,
and flow-insensitive leaves).  Side-effects widen the target's value and
destabilize its dependents.  The resulting ``SolverState`` is a *partial
post-solution*: re-evaluating any stable unknown under σ stays below its
stored value (checked by :func:`verify_solution`).

Two optional policies refine precision:

* ``localized_widening`` removes an unknown from the widening-point set once
  its narrowing iteration stabilizes, so inner cycles can be re-iterated
  without widening when outer values shrink.
* ``restart_wpoint`` resets an unknown to Bot (and destabilizes it) whenever
  it turns into a widening point, purging values accumulated before the
  cycle was known.  Restarts are bounded per unknown per run.

The solver keeps the natural recursive call structure; entry points execute
on a dedicated thread with a large stack, since dependency chains can run
thousands of frames deep.
"""

from __future__ import annotations

import enum
import logging
import sys as _sys
import threading
from dataclasses import dataclass
from typing import Callable, Dict, Iterable, List, Optional

from .consys import (
    AccCollector,
    EqSys,
    EvalError,
    Tree,
    Unknown,
    run_tree,
    eval_tree,
    sort_key,
    unknown_from_key,
    unknown_key,
)
from .domains import (
    DEFAULT_SET_BOUND,
    Value,
    join,
    leq,
    narrow,
    value_from_json,
    value_to_json,
    widen,
)

log = logging.getLogger(__name__)

STATE_FORMAT = 1


class Phase(enum.Enum):
    WIDEN = "widen"
    NARROW = "narrow"


@dataclass
class SolverOptions:
    restart_wpoint: bool = False
    localized_widening: bool = False
    valueset_bound: int = DEFAULT_SET_BOUND
    max_wpoint_restarts: int = 32  # per unknown per run, defensive
    max_depth: int = 400_000       # defensive recursion diagnostic


class SolverDepthError(Exception):
    pass


@dataclass
class Violation:
    unknown: Unknown
    kind: str  # "value" | "side"
    detail: str

    def __repr__(self) -> str:
        return f"Violation({self.kind} at {self.unknown!r}: {self.detail})"


class SolverState:
    """Mutable solver data, persistent between runs.

    ``infl``, ``side_dep`` and ``side_infl`` are insertion-ordered sets
    (dicts with None values); destabilization iterates ``infl`` in recorded
    order, which keeps counters and warning output reproducible.
    """

    def __init__(self):
        self.sigma: Dict[Unknown, Value] = {}
        self.infl: Dict[Unknown, Dict[Unknown, None]] = {}
        self.stable: set = set()
        self.called: set = set()
        self.point: set = set()
        self.side_dep: Dict[Unknown, Dict[Unknown, None]] = {}
        self.side_infl: Dict[Unknown, Dict[Unknown, None]] = {}
        self.superstable: set = set()
        self.starts: Dict[Unknown, Value] = {}
        self.rhs_evals = 0
        self.destabilizations = 0
        self.evals_by_unknown: Dict[Unknown, int] = {}
        self.diagnostics: List[str] = []

    def destabilize(self, x: Unknown) -> None:
        """Transitively remove everything influenced by `x` from stable and
        superstable, clearing the visited influence sets.  Recursion stops at
        unknowns currently being solved."""
        stack = [x]
        while stack:
            u = stack.pop()
            self.destabilizations += 1
            w = self.infl.pop(u, None)
            if not w:
                continue
            targets = list(w)
            for y in targets:
                self.stable.discard(y)
                self.superstable.discard(y)
            for y in reversed(targets):
                if y not in self.called:
                    stack.append(y)

    def check_side_maps_inverse(self) -> bool:
        """side_dep and side_infl must be exact inverses."""
        fwd = {(x, g) for g, xs in self.side_dep.items() for x in xs}
        bwd = {(x, g) for x, gs in self.side_infl.items() for g in gs}
        return fwd == bwd


class Solver:
    def __init__(self, sys_: EqSys, state: SolverState, opts: Optional[SolverOptions] = None):
        self.sys = sys_
        self.state = state
        self.opts = opts or SolverOptions()
        self._depth = 0
        self._wpoint_restarts: Dict[Unknown, int] = {}
        self._rhs_cache: Dict[Unknown, Optional[Tree]] = {}

    # -- σ and rhs access ---------------------------------------------------

    def _get(self, u: Unknown) -> Value:
        v = self.state.sigma.get(u)
        return self.sys.bot_of(u) if v is None else v

    def _rhs(self, u: Unknown) -> Optional[Tree]:
        if u in self._rhs_cache:
            return self._rhs_cache[u]
        t = self.sys.rhs(u)
        self._rhs_cache[u] = t
        return t

    # -- the TD machinery ---------------------------------------------------

    def seed(self, s: Unknown, d: Value) -> None:
        """Start unknowns get their initial value joined in and become stable."""
        cur = self._get(s)
        new = join(cur, d)
        st = self.state
        if new != cur:
            st.sigma[s] = new
            st.superstable.discard(s)
            st.destabilize(s)
        st.stable.add(s)

    def solve(self, phase: Phase, x: Unknown) -> None:
        st = self.state
        if x in st.stable or x in st.called:
            return
        self._depth += 1
        if self._depth > self.opts.max_depth:
            raise SolverDepthError(
                f"solve depth exceeded {self.opts.max_depth} at {x!r}")
        try:
            st.stable.add(x)
            st.called.add(x)
            tmp = self._eval_rhs(x)
            st.called.discard(x)
            if x in st.point:
                cur = self._get(x)
                if phase is Phase.WIDEN:
                    tmp = widen(cur, tmp, self.opts.valueset_bound)
                else:
                    tmp = narrow(cur, tmp)
            if x not in st.stable:
                # a side-effect during evaluation hit something we depend on
                self.solve(Phase.WIDEN, x)
            elif self._get(x) == tmp:
                if phase is Phase.WIDEN and x in st.point:
                    st.stable.discard(x)
                    self.solve(Phase.NARROW, x)
                    if self.opts.localized_widening:
                        st.point.discard(x)
            else:
                st.sigma[x] = tmp
                st.destabilize(x)
                self.solve(phase, x)
        finally:
            self._depth -= 1

    def _eval_rhs(self, x: Unknown) -> Value:
        st = self.state
        st.rhs_evals += 1
        st.evals_by_unknown[x] = st.evals_by_unknown.get(x, 0) + 1
        prev_sides = list(st.side_infl.get(x, ()))
        current: Dict[Unknown, None] = {}
        st.side_infl[x] = current
        tree = self._rhs(x)
        if tree is None:
            raise EvalError(x, "unknown has no right-hand side")
        value = run_tree(tree, lambda y: self.eval(x, y), lambda g, d: self.side(x, g, d))
        bot = self.sys.bot_of(x)
        if type(value) is not type(bot):
            raise EvalError(x, f"rhs produced {type(value).__name__}, expected {type(bot).__name__}")
        # side_infl reflects the *last* evaluation; keep side_dep the inverse
        for g in prev_sides:
            if g not in current:
                m = st.side_dep.get(g)
                if m is not None:
                    m.pop(x, None)
                    if not m:
                        del st.side_dep[g]
        if not current:
            del st.side_infl[x]
        return value

    def eval(self, x: Unknown, y: Unknown) -> Value:
        st = self.state
        if y in st.called or self._rhs(y) is None:
            newly = y not in st.point
            st.point.add(y)
            if newly and self.opts.restart_wpoint and y in st.called:
                self._restart_widening_point(y)
        else:
            self.solve(Phase.WIDEN, y)
        st.infl.setdefault(y, {})[x] = None
        return self._get(y)

    def _restart_widening_point(self, y: Unknown) -> None:
        st = self.state
        n = self._wpoint_restarts.get(y, 0)
        if n >= self.opts.max_wpoint_restarts:
            msg = f"widening-point restart bound hit at {y!r}"
            st.diagnostics.append(msg)
            log.warning(msg)
            return
        self._wpoint_restarts[y] = n + 1
        st.sigma.pop(y, None)
        st.destabilize(y)

    def side(self, x: Unknown, g: Unknown, d: Value) -> None:
        st = self.state
        bot = self.sys.bot_of(g)
        if type(d) is not type(bot):
            raise EvalError(g, f"side contribution of {type(d).__name__}, expected {type(bot).__name__}")
        if not isinstance(g, AccCollector):
            # Write-only collectors keep their bookkeeping but the value is
            # dropped during solving; postprocessing re-emits it.
            cur = self._get(g)
            new = widen(cur, d, self.opts.valueset_bound)
            if new != cur:
                st.sigma[g] = new
                st.stable.add(g)
                st.destabilize(g)
        st.side_dep.setdefault(g, {})[x] = None
        st.side_infl.setdefault(x, {})[g] = None


def _counter_delta(before: Dict, after: Dict) -> Dict[str, int]:
    out = {}
    for u, n in after.items():
        d = n - before.get(u, 0)
        if d:
            out[unknown_key(u)] = d
    return out


def run(sys_: EqSys, state: SolverState, opts: Optional[SolverOptions] = None,
        pre_solve: Iterable[Unknown] = (), deep_stack: bool = True) -> dict:
    """Seed start unknowns, solve `pre_solve` in order, then the query.

    Returns per-step statistics: rhs-evaluation counts overall and by
    unknown (canonical keys), for the pre-solve step and the query step.
    """

    def go():
        solver = Solver(sys_, state, opts)
        for s in sorted(sys_.starts, key=sort_key):
            solver.seed(s, sys_.starts[s])
        state.starts = dict(sys_.starts)
        evals0, by0 = state.rhs_evals, dict(state.evals_by_unknown)
        for a in pre_solve:
            solver.solve(Phase.WIDEN, a)
        evals1, by1 = state.rhs_evals, dict(state.evals_by_unknown)
        solver.solve(Phase.WIDEN, sys_.query)
        evals2, by2 = state.rhs_evals, dict(state.evals_by_unknown)
        assert not state.called, "called set must be empty at rest"
        return {
            "step1_rhs_evals": evals1 - evals0,
            "step2_rhs_evals": evals2 - evals1,
            "step1_evals_by_unknown": _counter_delta(by0, by1),
            "step2_evals_by_unknown": _counter_delta(by1, by2),
        }

    if deep_stack:
        return call_with_deep_stack(go)
    return go()


def verify_solution(sys_: EqSys, state: SolverState) -> List[Violation]:
    """Check the partial post-solution: every stable rhs re-evaluates below
    its stored value, and captured side contributions stay below their
    targets (access collectors excepted; they are deferred)."""
    assert not state.called, "verify_solution requires a state at rest"
    look = sys_.lookup(state.sigma)
    out: List[Violation] = []
    for x in sorted(state.stable, key=sort_key):
        tree = sys_.rhs(x)
        if tree is None:
            continue
        es, val = eval_tree(tree, look)
        cur = state.sigma.get(x)
        cur = sys_.bot_of(x) if cur is None else cur
        if not leq(val, cur):
            out.append(Violation(x, "value", f"rhs value {val!r} ⋢ σ {cur!r}"))
        for g, d in es.sides.items():
            if isinstance(g, AccCollector):
                continue
            tgt = state.sigma.get(g)
            tgt = sys_.bot_of(g) if tgt is None else tgt
            if not leq(d, tgt):
                out.append(Violation(g, "side", f"contribution {d!r} from {x!r} ⋢ σ {tgt!r}"))
    return out


# ---------------------------------------------------------------------------
# Persistence (format 1).  superstable and called are not persisted:
# superstable is reconstructed when an incremental run begins, called is
# empty at rest.
# ---------------------------------------------------------------------------


def state_to_json(state: SolverState) -> dict:
    def omap(m: Dict[Unknown, Dict[Unknown, None]]) -> dict:
        return {
            unknown_key(u): [unknown_key(v) for v in members]
            for u, members in sorted(m.items(), key=lambda kv: sort_key(kv[0]))
            if members
        }

    return {
        "format": STATE_FORMAT,
        "sigma": {unknown_key(u): value_to_json(v)
                  for u, v in sorted(state.sigma.items(), key=lambda kv: sort_key(kv[0]))},
        "infl": omap(state.infl),
        "stable": sorted((unknown_key(u) for u in state.stable)),
        "point": sorted((unknown_key(u) for u in state.point)),
        "side_dep": omap(state.side_dep),
        "side_infl": omap(state.side_infl),
        "starts": {unknown_key(u): value_to_json(v)
                   for u, v in sorted(state.starts.items(), key=lambda kv: sort_key(kv[0]))},
        "counters": {
            "rhs_evals": state.rhs_evals,
            "destabilizations": state.destabilizations,
        },
    }


def state_from_json(doc: dict) -> SolverState:
    if doc.get("format") != STATE_FORMAT:
        raise ValueError(f"unsupported solver state format: {doc.get('format')!r}")

    def from_omap(m: dict) -> Dict[Unknown, Dict[Unknown, None]]:
        return {unknown_from_key(k): {unknown_from_key(v): None for v in vs}
                for k, vs in m.items()}

    st = SolverState()
    st.sigma = {unknown_from_key(k): value_from_json(v) for k, v in doc["sigma"].items()}
    st.infl = from_omap(doc["infl"])
    st.stable = {unknown_from_key(k) for k in doc["stable"]}
    st.point = {unknown_from_key(k) for k in doc["point"]}
    st.side_dep = from_omap(doc["side_dep"])
    st.side_infl = from_omap(doc["side_infl"])
    st.starts = {unknown_from_key(k): value_from_json(v) for k, v in doc["starts"].items()}
    st.rhs_evals = doc["counters"]["rhs_evals"]
    st.destabilizations = doc["counters"]["destabilizations"]
    return st


# ---------------------------------------------------------------------------
# Deep-stack execution: dependency chains recurse far beyond the default
# thread stack, so solver entry points run on a worker thread with a large
# stack and a raised recursion limit.
# ---------------------------------------------------------------------------

_STACK_BYTES = 512 * 1024 * 1024
_RECURSION_LIMIT = 1_000_000


def call_with_deep_stack(fn: Callable, *args, **kwargs):
    box: dict = {}

    def work():
        old = _sys.getrecursionlimit()
        _sys.setrecursionlimit(_RECURSION_LIMIT)
        try:
            box["value"] = fn(*args, **kwargs)
        except BaseException as exc:  # propagate to caller
            box["error"] = exc
        finally:
            _sys.setrecursionlimit(old)

    old_size = threading.stack_size(_STACK_BYTES)
    try:
        t = threading.Thread(target=work, name="td-solve")
        t.start()
    finally:
        threading.stack_size(old_size)
    t.join()
    if "error" in box:
        raise box["error"]
    return box["value"]
