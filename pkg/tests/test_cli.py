import io
import json
import os

import pytest

from minicheck import cli
from minicheck.consys import GlobalVar
from minicheck.domains import ValueSet
from minicheck.tdsolver import state_from_json

from support import FIG2, FIG2_EDIT


def write(path, text):
    with open(path, "w") as f:
        f.write(text)


def invoke(fn, *args, **kw):
    out, err = io.StringIO(), io.StringIO()
    code = fn(*args, out=out, err=err, **kw)
    return code, out.getvalue(), err.getvalue()


@pytest.fixture
def ws(tmp_path):
    src = tmp_path / "prog.mc"
    state = tmp_path / "state"
    return str(src), str(state)


def bundle_of(state_dir):
    with open(os.path.join(state_dir, "bundle.json")) as f:
        return json.load(f)


def test_analyze_reports_race_and_persists_state(ws):
    src, sd = ws
    write(src, FIG2)
    code, out, err = invoke(cli.cmd_analyze, src, cli.Options(state_dir=sd))
    assert code == 0
    warnings = json.loads(out)
    assert any(w["kind"] == "race" for w in warnings)
    assert os.path.exists(os.path.join(sd, "bundle.json"))


def test_empty_main_has_no_warnings_and_exit_zero(ws):
    src, sd = ws
    write(src, "int main(){ return 0; }")
    code, out, _ = invoke(cli.cmd_analyze, src,
                          cli.Options(state_dir=sd, fail_on_warn=True))
    assert code == 0
    assert json.loads(out) == []


def test_fail_on_warn_sets_exit_one(ws):
    src, sd = ws
    write(src, FIG2)
    code, _, _ = invoke(cli.cmd_analyze, src,
                        cli.Options(state_dir=sd, fail_on_warn=True))
    assert code == 1


def test_unparsable_file_exits_two_with_location(ws):
    src, sd = ws
    write(src, "int main( {")
    code, _, err = invoke(cli.cmd_analyze, src, cli.Options(state_dir=sd))
    assert code == 2
    assert "error" in err and ":" in err


def test_missing_file_exits_two(ws):
    src, sd = ws
    code, _, err = invoke(cli.cmd_analyze, src + ".nope", cli.Options(state_dir=sd))
    assert code == 2


def test_repeated_analyze_is_byte_identical_modulo_timestamp(ws):
    src, sd = ws
    write(src, FIG2)
    _, out1, _ = invoke(cli.cmd_analyze, src, cli.Options(state_dir=sd))
    b1 = bundle_of(sd)
    _, out2, _ = invoke(cli.cmd_analyze, src, cli.Options(state_dir=sd))
    b2 = bundle_of(sd)
    assert out1 == out2
    b1.pop("created_at"), b2.pop("created_at")
    assert json.dumps(b1) == json.dumps(b2)


def test_reanalyze_round_trip_on_unchanged_source(ws):
    src, sd = ws
    write(src, FIG2)
    _, warn0, _ = invoke(cli.cmd_analyze, src, cli.Options(state_dir=sd))
    evals_before = bundle_of(sd)["solver"]["counters"]["rhs_evals"]
    code, out, err = invoke(cli.cmd_reanalyze, src, cli.Options(state_dir=sd, stats=True))
    assert code == 0
    diff = json.loads(out)
    assert diff["added"] == [] and diff["removed"] == []
    assert [w["id"] for w in diff["kept"]] == [w["id"] for w in json.loads(warn0)]
    assert bundle_of(sd)["solver"]["counters"]["rhs_evals"] == evals_before


def test_reanalyze_without_bundle_falls_back_to_analyze(ws):
    src, sd = ws
    write(src, FIG2)
    code, out, err = invoke(cli.cmd_reanalyze, src, cli.Options(state_dir=sd))
    assert code == 0
    assert "no previous state" in err
    assert isinstance(json.loads(out), list)  # analyze output shape


def test_reanalyze_reports_value_change_and_stats(ws):
    src, sd = ws
    write(src, FIG2)
    invoke(cli.cmd_analyze, src, cli.Options(state_dir=sd))
    write(src, FIG2_EDIT)
    opts = cli.Options(state_dir=sd, restart="off", stats=True, explain_diff=True)
    code, out, err = invoke(cli.cmd_reanalyze, src, opts)
    assert code == 0
    payload = json.loads(out)
    assert payload["changes"]["changed"] == ["foo"]
    stats = json.loads(err)
    assert stats["run"]["step1_rhs_evals"] >= 1
    st = state_from_json(bundle_of(sd)["solver"])
    assert st.sigma[GlobalVar("g")] == ValueSet.of([0, 1, 2])


def test_reanalyze_with_minimal_restart_recovers_precision(ws):
    src, sd = ws
    write(src, FIG2)
    invoke(cli.cmd_analyze, src, cli.Options(state_dir=sd))
    write(src, FIG2_EDIT)
    code, out, _ = invoke(cli.cmd_reanalyze, src,
                          cli.Options(state_dir=sd, restart="minimal"))
    assert code == 0
    st = state_from_json(bundle_of(sd)["solver"])
    assert st.sigma[GlobalVar("g")] == ValueSet.of([0, 2])


def test_options_mismatch_is_refused(ws):
    src, sd = ws
    write(src, FIG2)
    invoke(cli.cmd_analyze, src, cli.Options(state_dir=sd, domain="valueset"))
    code, _, err = invoke(cli.cmd_reanalyze, src,
                          cli.Options(state_dir=sd, domain="interval"))
    assert code == 2
    assert "different analysis options" in err


def test_compare_right_after_analyze_is_all_equal(ws):
    src, sd = ws
    write(src, FIG2)
    invoke(cli.cmd_analyze, src, cli.Options(state_dir=sd))
    code, out, _ = invoke(cli.cmd_compare, src, cli.Options(state_dir=sd))
    assert code == 0
    rep = json.loads(out)
    assert rep["total"] > 0
    assert rep["equal"] == rep["total"]
    assert rep["coarser_fraction"] == 0.0


def test_compare_requires_bundle(ws):
    src, sd = ws
    write(src, FIG2)
    code, _, err = invoke(cli.cmd_compare, src, cli.Options(state_dir=sd))
    assert code == 2


def test_compare_on_stale_bundle_is_refused(ws):
    src, sd = ws
    write(src, FIG2)
    invoke(cli.cmd_analyze, src, cli.Options(state_dir=sd))
    write(src, FIG2_EDIT)
    code, _, err = invoke(cli.cmd_compare, src, cli.Options(state_dir=sd))
    assert code == 2
    assert "reanalyze" in err


def test_main_entrypoint_wires_subcommands(ws, capsys):
    src, sd = ws
    write(src, FIG2)
    code = cli.main(["analyze", src, "--state-dir", sd])
    assert code == 0
    captured = capsys.readouterr()
    assert json.loads(captured.out)


# -- server mode ------------------------------------------------------------------


def serve_lines(opts, lines):
    inp = io.StringIO("".join(l + "\n" for l in lines))
    out = io.StringIO()
    code = cli.serve_loop(opts, inp, out, err=io.StringIO())
    return code, [json.loads(l) for l in out.getvalue().splitlines()]


def test_serve_reanalyze_and_warnings_flow(ws):
    src, sd = ws
    write(src, FIG2)
    opts = cli.Options(state_dir=sd)
    invoke(cli.cmd_analyze, src, opts)
    write(src, FIG2_EDIT)
    code, responses = serve_lines(opts, [
        json.dumps({"id": 1, "method": "reanalyze", "path": src}),
        json.dumps({"id": 2, "method": "warnings"}),
        json.dumps({"id": 3, "method": "shutdown"}),
    ])
    assert code == 0
    r1, r2, r3 = responses
    assert r1["id"] == 1 and "result" in r1
    assert set(r1["result"]) >= {"added", "removed", "kept"}
    assert r2["id"] == 2 and isinstance(r2["result"], list)
    assert r3["result"] == "bye"


def test_serve_survives_malformed_json(ws):
    src, sd = ws
    write(src, FIG2)
    opts = cli.Options(state_dir=sd)
    invoke(cli.cmd_analyze, src, opts)
    code, responses = serve_lines(opts, [
        "{this is not json",
        json.dumps({"id": 5, "method": "warnings"}),
        json.dumps({"method": "shutdown"}),
    ])
    assert code == 0
    assert "error" in responses[0]
    assert responses[1]["id"] == 5 and "result" in responses[1]


def test_serve_processes_requests_in_order(ws):
    src, sd = ws
    write(src, FIG2)
    opts = cli.Options(state_dir=sd)
    invoke(cli.cmd_analyze, src, opts)
    code, responses = serve_lines(opts, [
        json.dumps({"id": "a", "method": "reanalyze", "path": src}),
        json.dumps({"id": "b", "method": "reanalyze", "path": src}),
        json.dumps({"method": "shutdown"}),
    ])
    assert [r.get("id") for r in responses[:2]] == ["a", "b"]


def test_serve_unknown_method(ws):
    src, sd = ws
    opts = cli.Options(state_dir=sd)
    code, responses = serve_lines(opts, [
        json.dumps({"id": 9, "method": "bogus"}),
        json.dumps({"method": "shutdown"}),
    ])
    assert "error" in responses[0]


def test_serve_reanalyze_without_state_falls_back(ws):
    src, sd = ws
    write(src, FIG2)
    opts = cli.Options(state_dir=sd)
    code, responses = serve_lines(opts, [
        json.dumps({"id": 1, "method": "reanalyze", "path": src}),
        json.dumps({"method": "shutdown"}),
    ])
    assert responses[0]["result"]["fallback"] == "analyze"
    assert responses[0]["result"]["added"]  # first analysis: the race is new
