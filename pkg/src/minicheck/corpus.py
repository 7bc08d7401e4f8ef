"""Deterministic MiniC corpus generator and edit scripts.

Builds many-function programs for the efficiency and consistency harnesses:
`main` calls every generated function; some functions write globals under a
lock, some read globals, some loop.  Every aspect of a generated program is
a pure function of the spec (function count, seed, per-function variants),
so edits are expressed as variant changes and the edited source is simply
regenerated.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, replace
from typing import Dict, List, Tuple

N_GLOBALS = 4
N_MUTEXES = 2


@dataclass(frozen=True)
class CorpusSpec:
    n_functions: int = 200
    seed: int = 7
    variants: Tuple[Tuple[int, str], ...] = ()

    def variant_map(self) -> Dict[int, Tuple[str, ...]]:
        out: Dict[int, Tuple[str, ...]] = {}
        for idx, v in self.variants:
            out[idx] = out.get(idx, ()) + (v,)
        return out

    def with_variant(self, idx: int, variant: str) -> "CorpusSpec":
        return replace(self, variants=self.variants + ((idx, variant),))


def _fn_profile(i: int, seed: int) -> dict:
    rng = random.Random((seed << 20) ^ i)
    return {
        "base": rng.randrange(1, 50),
        "sub": rng.randrange(0, 9),
        "writes_global": i % 7 == 3,
        "global_idx": i % N_GLOBALS,
        "mutex_idx": i % N_MUTEXES,
        "write_value": rng.randrange(0, 30),
        "reads_global": i % 9 == 4,
        "read_idx": (i + 1) % N_GLOBALS,
        "loops": i % 13 == 5,
    }


def _fn_source(i: int, seed: int, variants: Tuple[str, ...]) -> str:
    p = _fn_profile(i, seed)
    base, sub = p["base"], p["sub"]
    double = "b = a * 2;"
    gwrite_locked = True
    write_value = p["write_value"]
    extra = None
    for v in variants:
        kind, _, arg = v.partition(":")
        if kind == "const":
            base = int(arg)
        elif kind == "sum":
            double = "b = a + a;"
        elif kind == "extra":
            extra = int(arg)
        elif kind == "nolock":
            gwrite_locked = False
        elif kind == "gval":
            write_value = int(arg)
    lines = [f"int f{i:03d}(int p) {{"]
    lines.append(f"  a = p + {base};")
    lines.append(f"  {double}")
    if extra is not None:
        lines.append(f"  b = b + {extra};")
        lines.append(f"  b = b - {extra};")
    lines.append(f"  c = b - {sub};")
    if p["loops"]:
        lines.append("  k = 0;")
        lines.append("  while (k < 3) {")
        lines.append("    k = k + 1;")
        lines.append("  }")
    if p["writes_global"]:
        g, m = p["global_idx"], p["mutex_idx"]
        if gwrite_locked:
            lines.append(f"  lock(m{m});")
            lines.append(f"  g{g} = {write_value};")
            lines.append(f"  unlock(m{m});")
        else:
            lines.append(f"  g{g} = {write_value};")
    if p["reads_global"]:
        lines.append(f"  c = c + g{p['read_idx']};")
    lines.append("  return c;")
    lines.append("}")
    return "\n".join(lines)


def corpus_source(spec: CorpusSpec) -> str:
    vmap = spec.variant_map()
    parts = []
    for gi in range(N_GLOBALS):
        parts.append(f"int g{gi} = 0;")
    for mi in range(N_MUTEXES):
        parts.append(f"mutex m{mi};")
    parts.append("")
    for i in range(spec.n_functions):
        parts.append(_fn_source(i, spec.seed, vmap.get(i, ())))
        parts.append("")
    main = ["int main() {"]
    for i in range(spec.n_functions):
        main.append(f"  r = f{i:03d}({i % 3});")
    main.append("  return r;")
    main.append("}")
    parts.append("\n".join(main))
    return "\n".join(parts) + "\n"


EDIT_KINDS = ("const", "sum", "extra", "gval")


def random_edit(spec: CorpusSpec, rng: random.Random) -> CorpusSpec:
    """One random single-function edit, expressed as a variant change."""
    idx = rng.randrange(spec.n_functions)
    kind = rng.choice(EDIT_KINDS)
    if kind == "const":
        return spec.with_variant(idx, f"const:{rng.randrange(1, 50)}")
    if kind == "sum":
        return spec.with_variant(idx, "sum")
    if kind == "extra":
        return spec.with_variant(idx, f"extra:{rng.randrange(1, 20)}")
    # change the written global value on a writer function (fall back to const)
    if _fn_profile(idx, spec.seed)["writes_global"]:
        return spec.with_variant(idx, f"gval:{rng.randrange(0, 30)}")
    return spec.with_variant(idx, f"const:{rng.randrange(1, 50)}")


def edit_sequence(spec: CorpusSpec, length: int, seed: int) -> List[CorpusSpec]:
    """Deterministic sequence of cumulative single-function edits."""
    rng = random.Random(seed)
    out = []
    cur = spec
    for _ in range(length):
        cur = random_edit(cur, rng)
        out.append(cur)
    return out
