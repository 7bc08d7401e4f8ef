import json

import pytest

from minicheck.consys import Context
from minicheck.domains import Access, AddressSet, Lockset
from minicheck.increment import (
    ReanalyzeOptions,
    detect_changes,
    prepare_reluctant,
    reanalyze,
    relabel_nodes,
    restart_globals,
    select_restart_globals,
)
from minicheck.minic import build_system, parse
from minicheck.postproc import (
    StateCorruption,
    WarnStore,
    diff_warnings,
    make_warning,
    postprocess,
    races,
)


from support import FIG2, FIG2_EDIT, analyze_source

BETA0 = Context.of({"p": AddressSet.of(["g"])})


def full_pipeline(text, domain="valueset"):
    built, st, _ = analyze_source(text, domain=domain)
    store, stats = postprocess(built, st, None, "<test>")
    return built, st, store, stats


def incremental_pipeline(old_text, new_text, prev_store, built_old, st,
                         restart="minimal"):
    old_prog, new_prog = parse(old_text), parse(new_text)
    changes = detect_changes(old_prog, new_prog)
    G_sel = select_restart_globals(changes, st, built_old.assignment) if restart == "minimal" else []
    new_asg = relabel_nodes(changes, built_old.assignment, new_prog)
    new_built = build_system(new_prog, new_asg)
    A = prepare_reluctant(changes, st, built_old.assignment, new_built.sys)
    restart_globals(G_sel, st)
    reanalyze(new_built.sys, st, ReanalyzeOptions(restart=restart), pre_solve=A)
    store, stats = postprocess(new_built, st, prev_store, "<test>")
    return new_built, store, stats


# -- the race rule ------------------------------------------------------------------


def _mini_store(records):
    store = WarnStore()
    store.accesses["G"] = {"p": frozenset(records)}
    return store


class _NoCfg:
    cfgs = {}


def test_common_lock_means_no_race():
    recs = [Access("write", Lockset.of(["m"]), "f", 0, 1),
            Access("read", Lockset.of(["m"]), "f", 1, 2)]
    assert races(_mini_store(recs), _NoCfg(), "<t>") == []


def test_disjoint_locksets_race_cites_both_accesses():
    recs = [Access("write", Lockset.top(), "f", 0, 1),
            Access("read", Lockset.of(["m"]), "f", 1, 2)]
    (w,) = races(_mini_store(recs), _NoCfg(), "<t>")
    assert w.kind == "race" and "'G'" in w.message


def test_two_reads_never_race():
    recs = [Access("read", Lockset.top(), "f", 0, 1),
            Access("read", Lockset.top(), "f", 1, 2)]
    assert races(_mini_store(recs), _NoCfg(), "<t>") == []


def test_fig2_reports_race_on_g():
    built, st, store, stats = full_pipeline(FIG2)
    kinds = {(w.kind, w.message) for w in store.warnings}
    assert ("race", "possible data race on global 'g'") in kinds
    (race,) = [w for w in store.warnings if w.kind == "race"]
    assert len(race.locations) == 2  # the store in foo and the read in main


# -- postprocess mechanics ------------------------------------------------------------


def test_from_scratch_postprocess_evaluates_every_stable_rhs():
    built, st, store, stats = full_pipeline(FIG2)
    assert stats["reused"] == []
    assert len(stats["reevaluated"]) == 8  # six nodes + init + __main


def test_incremental_postprocess_reevaluates_only_destabilized_unknowns():
    built, st, _ = analyze_source(FIG2)
    store0, _ = postprocess(built, st, None, "<test>")
    new_built, store1, stats = incremental_pipeline(FIG2, FIG2_EDIT, store0, built, st,
                                                    restart="off")
    ever = {json.loads(k).get("fn") for k in stats["reevaluated"]}
    node_keys = [json.loads(k) for k in stats["reevaluated"] if json.loads(k)["k"] == "node"]
    assert {(d["fn"], d["id"]) for d in node_keys} == {("foo", 6), ("foo", 2), ("main", 5)}
    assert len(stats["reused"]) >= 4


def test_two_postprocesses_without_edit_are_byte_identical():
    built, st, _ = analyze_source(FIG2)
    store0, _ = postprocess(built, st, None, "<test>")
    # an incremental no-op run: everything stays superstable
    new_built, store1, stats = incremental_pipeline(FIG2, FIG2, store0, built, st)
    assert stats["reevaluated"] == []
    assert json.dumps(store0.to_json()) == json.dumps(store1.to_json())


def test_missing_previous_store_with_superstable_is_a_hard_error():
    built, st, _ = analyze_source(FIG2)
    st.superstable = set(st.stable)
    with pytest.raises(StateCorruption):
        postprocess(built, st, None, "<test>")


def test_postprocess_never_changes_sigma():
    built, st, _ = analyze_source(FIG2)
    before = dict(st.sigma)
    postprocess(built, st, None, "<test>")
    # prune may drop entries, but no value may change
    for u, v in st.sigma.items():
        assert before[u] == v


def test_warnstore_json_roundtrip():
    _, _, store, _ = full_pipeline(FIG2)
    doc = store.to_json()
    again = WarnStore.from_json(doc)
    assert again.to_json() == doc
    payload = store.warnings_json()
    assert all(set(w) == {"id", "kind", "message", "locations", "provenance"}
               for w in payload)


# -- warning identity and diffs ----------------------------------------------------------


def test_warning_id_is_location_independent():
    w1 = make_warning("race", "race:g", "msg", ["prov"], [("a.c", 3, 1)])
    w2 = make_warning("race", "race:g", "msg", ["prov"], [("a.c", 99, 7)])
    assert w1.id == w2.id


def test_pure_code_move_keeps_warning_id_with_new_locations():
    built, st, _ = analyze_source(FIG2)
    store0, _ = postprocess(built, st, None, "<test>")
    moved = "// a new comment line\n\n" + FIG2
    new_built, store1, stats = incremental_pipeline(FIG2, moved, store0, built, st)
    diff = diff_warnings(store0, store1)
    assert diff["added"] == [] and diff["removed"] == []
    (race0,) = [w for w in store0.warnings if w.kind == "race"]
    (race1,) = [w for w in store1.warnings if w.kind == "race"]
    assert race0.id == race1.id
    assert race1.locations != race0.locations  # shifted by two lines
    assert {l[1] - 2 for l in race1.locations} == {l[1] for l in race0.locations}


def test_diff_warnings_identity():
    _, _, store, _ = full_pipeline(FIG2)
    d = diff_warnings(store, store)
    assert d["added"] == [] and d["removed"] == []
    assert [w.id for w in d["kept"]] == [w.id for w in store.warnings]


def test_incremental_warnings_match_from_scratch_when_sigma_agrees():
    # with minimal restarting the Fig-2 edit converges to the from-scratch σ,
    # so the incrementally maintained store must coincide with a fresh one
    built, st, _ = analyze_source(FIG2)
    store0, _ = postprocess(built, st, None, "<test>")
    new_built, store_inc, _ = incremental_pipeline(FIG2, FIG2_EDIT, store0, built, st,
                                                   restart="minimal")
    from support import analyze_source as fresh
    built2, st2, _ = fresh(FIG2_EDIT, assignment=new_built.assignment)
    store_scratch, _ = postprocess(built2, st2, None, "<test>")
    assert {(w.id, w.message) for w in store_inc.warnings} == \
           {(w.id, w.message) for w in store_scratch.warnings}


def test_superstable_subset_of_stable_at_phase_boundaries():
    built, st, _ = analyze_source(FIG2)
    store0, _ = postprocess(built, st, None, "<test>")
    changes = detect_changes(parse(FIG2), parse(FIG2_EDIT))
    new_asg = relabel_nodes(changes, built.assignment, parse(FIG2_EDIT))
    new_built = build_system(parse(FIG2_EDIT), new_asg)
    A = prepare_reluctant(changes, st, built.assignment, new_built.sys)
    assert st.superstable <= st.stable
    reanalyze(new_built.sys, st, ReanalyzeOptions(restart="off"), pre_solve=A)
    assert st.superstable <= st.stable
    postprocess(new_built, st, store0, "<test>")
    assert st.superstable <= st.stable


RACY = """int shared = 0;
mutex m;
void* worker(void* p) {
  *p = 1;
  return NULL;
}
int main() {
  create(worker, &shared);
  lock(m);
  shared = 2;
  unlock(m);
  return 0;
}
"""

FIXED = RACY.replace("  *p = 1;", "  lock(m);\n  *p = 1;\n  unlock(m);")


def test_fixing_a_race_removes_it_and_purges_stale_accesses():
    built, st, _ = analyze_source(RACY)
    store0, _ = postprocess(built, st, None, "<test>")
    race_ids = [w.id for w in store0.warnings if w.kind == "race"]
    assert len(race_ids) == 1
    new_built, store1, _ = incremental_pipeline(RACY, FIXED, store0, built, st)
    diff = diff_warnings(store0, store1)
    assert race_ids[0] in [w.id for w in diff["removed"]]
    assert not [w for w in store1.warnings if w.kind == "race"]
    # WO1 trace-back: the unlocked write of the old version is gone
    for rec in store1.merged_accesses("shared"):
        if rec.kind == "write":
            assert not rec.locks.disjoint(Lockset.of(["m"]))


# -- derived warnings -----------------------------------------------------------------


def test_dead_code_region_is_reported_once():
    built, st, store, _ = full_pipeline("""
int g = 0;
int main() {
  x = 1;
  if (x > 5) {
    g = 1;
    g = 2;
  }
  return x;
}
""")
    dead = [w for w in store.warnings if w.kind == "dead-code"]
    assert len(dead) == 1
    assert "'main'" in dead[0].message


def test_no_dead_code_in_fully_live_program():
    _, _, store, _ = full_pipeline(FIG2)
    assert [w for w in store.warnings if w.kind == "dead-code"] == []


def test_unsound_store_is_flagged():
    built, st, store, _ = full_pipeline("""
int g = 0;
void* launder(void* q) { return ret; }
int main() {
  p = launder(0);
  *p = 1;
  return g;
}
""")
    (w,) = [w for w in store.warnings if w.kind == "unsound-store"]
    assert "'p'" in w.message
    assert w.provenance  # anchored at the offending program point
