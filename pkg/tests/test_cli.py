import json

import numpy as np
import pytest

from entorder import cli
from entorder.statecore import ghz, save_state


def run(args, tmp_path, name="out.json"):
    out = tmp_path / name
    code = cli.main(args + ["--out", str(out)])
    return code, (json.loads(out.read_text()) if out.exists() else None)


def test_analyze_w(tmp_path):
    code, rep = run(["analyze", "--catalog", "W"], tmp_path)
    assert code == 0
    assert set(rep) == {"command", "inputs", "results", "seed", "version"}
    res = rep["results"]
    assert res["invariants"]["rank"]["upper"] == 3
    assert res["invariants"]["local_ranks"] == [2, 2, 2]
    assert res["partition"] == [[1, 2, 3]]
    assert res["ghz_witness"]["present"] is False


def test_analyze_fig1_and_psi4(tmp_path):
    code, rep = run(["analyze", "--catalog", "fig1", "--format", "raw"], tmp_path)
    assert code == 0 and rep["partition"] == [[1, 2, 3], [4]]
    independent = [t["pair"] for t in rep["independence"] if t["independent"]]
    assert independent == [[1, 3], [1, 4], [2, 4], [3, 4]]
    code, rep = run(["analyze", "--catalog", "Psi4", "--format", "raw"], tmp_path)
    assert rep["invariants"]["rank"]["upper"] == 4
    assert rep["invariants"]["local_ranks"] == [2, 3, 3]


def test_compare_all_regimes(tmp_path):
    code, rep = run(["compare", "--catalog", "GHZ2x3", "--catalog", "W", "--both-ways",
                     "--format", "raw"], tmp_path)
    assert code == 0
    by = {v["forward"]["regime"]: v for v in rep["verdicts"]}
    assert by["MCLOCC"]["forward"]["answer"] == "Yes" == by["MCLOCC"]["backward"]["answer"]
    assert by["SLOCC"]["forward"]["answer"] == "No"
    assert by["LOCC"]["forward"]["answer"] in ("No", "Unknown")


def test_compare_alias_and_unknown(tmp_path):
    code, rep = run(["compare", "--catalog", "Psi2", "--catalog", "Psi5", "--regime", "slocc",
                     "--format", "raw"], tmp_path)
    assert code == 0 and rep["verdicts"][0]["answer"] == "Unknown"
    code, rep = run(["compare", "--catalog", "W", "--catalog", "GHZ2x3", "--regime", "mcslocc",
                     "--format", "raw"], tmp_path)
    v = rep["verdicts"][0]
    assert v["regime"] == "MCLOCC" and v["notes"]


def test_compare_same_file(tmp_path):
    path = tmp_path / "a.json"
    save_state(ghz(3, 3), path)
    code, rep = run(["compare", str(path), str(path), "--regime", "locc", "--format", "raw"],
                    tmp_path)
    assert code == 0 and rep["verdicts"][0]["answer"] == "Yes"


def test_compare_party_mismatch_exits_2(tmp_path):
    code, _ = run(["compare", "--catalog", "Bell", "--catalog", "W"], tmp_path)
    assert code == 2


def test_source_order_is_kept(tmp_path):
    path = tmp_path / "b.json"
    save_state(ghz(2, 2), path)
    code, rep = run(["compare", str(path), "--catalog", "theta08", "--regime", "locc"], tmp_path)
    assert rep["inputs"] == [str(path), "catalog:theta08"]
    assert rep["results"]["verdicts"][0]["answer"] == "Yes"


def test_rank_commands(tmp_path):
    _, rep = run(["rank", "--catalog", "Psi6", "--format", "raw"], tmp_path)
    assert rep["rank"]["upper"] == 4 and rep["rank"]["exact"]
    _, rep = run(["rank", "--catalog", "GHZ5", "--format", "raw"], tmp_path)
    assert rep["rank"]["upper"] == 5 and rep["rank"]["method"] == "construction"
    _, rep = run(["rank", "--catalog", "W", "--budget", "high", "--format", "raw"], tmp_path)
    assert rep["rank"]["upper"] == 3 and rep["rank"]["exact"]


def test_graph_dot(tmp_path):
    dot = tmp_path / "g.dot"
    code, rep = run(["graph", "--catalog", "fig1", "--dot", str(dot), "--format", "raw"],
                    tmp_path)
    assert code == 0 and rep["edges"] == [[1, 2], [2, 3]]
    text = dot.read_text()
    assert "A1 -- A2;" in text and "A2 -- A3;" in text and "A4;" in text
    _, rep = run(["graph", "--catalog", "GHZ2x3", "--format", "raw"], tmp_path)
    assert rep["edges"] == [[1, 2], [1, 3], [2, 3]]
    _, rep = run(["graph", "--catalog", "prod3", "--format", "raw"], tmp_path)
    assert rep["edges"] == []


def test_graph_io_error_exits_4(tmp_path):
    code, _ = run(["graph", "--catalog", "W", "--dot", str(tmp_path / "no" / "g.dot")],
                  tmp_path)
    assert code == 4


def test_input_errors_exit_2(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"dims": [2], "amps": [{"idx": [5], "re": 1}]}')
    assert run(["analyze", str(bad)], tmp_path)[0] == 2
    assert run(["analyze", "--catalog", "nope"], tmp_path)[0] == 2
    assert run(["analyze"], tmp_path)[0] == 2
    with pytest.raises(SystemExit) as exc:
        cli.main(["compare", "--regime"])
    assert exc.value.code == 2


def test_missing_file_exits_4(tmp_path):
    assert run(["analyze", str(tmp_path / "missing.json")], tmp_path)[0] == 4


def test_simulate_ghz_merge(tmp_path):
    code, rep = run(["simulate", "ghz-merge", "-d", "3", "--left", "2", "--right", "3",
                     "--exhaustive", "--format", "raw"], tmp_path)
    assert code == 0 and rep["branch_count"] == 3
    assert rep["success_probability"] == pytest.approx(1.0)


def test_simulate_ghz_merge_sampled(tmp_path):
    code, rep = run(["--seed", "3", "simulate", "ghz-merge", "-d", "2", "--sample",
                     "--format", "raw"], tmp_path)
    assert code == 0 and rep["branch_count"] == 1
    assert rep["success_probability"] == pytest.approx(0.5)
    assert rep["final_overlap"] == pytest.approx(1.0)


def test_simulate_ghz_to_rsep(tmp_path):
    vecs = tmp_path / "vecs.state"
    h = 1 / np.sqrt(2)
    vecs.write_text(json.dumps({"dims": [2, 2], "terms": [[[1, 0], [h, h]],
                                                          [[0, 1], [h, -h]]]}))
    code, rep = run(["simulate", "ghz-to-rsep", "-d", "2", "-N", "3", "--p", "0.36,0.64",
                     "--a-file", str(vecs), "--exhaustive", "--format", "raw"], tmp_path)
    assert code == 0 and rep["branch_count"] == 8
    assert min(b["final_overlap"] for b in rep["branches"]) >= 1 - 1e-12


def test_simulate_rus(tmp_path):
    code, rep = run(["simulate", "rus", "--src-catalog", "theta08", "--target-catalog", "Bell",
                     "--trials", "10000", "--all-trials", "--seed", "7", "--format", "raw"],
                    tmp_path)
    assert code == 0
    assert rep["single_trial_probability"] == pytest.approx(0.72, abs=1e-9)
    assert abs(rep["empirical_frequency"] - 0.72) <= 5 * rep["binomial_sigma"]


def test_simulate_rus_without_witness_exits_2(tmp_path):
    code, _ = run(["simulate", "rus", "--src-catalog", "GHZ2x3", "--target-catalog", "W"],
                  tmp_path)
    assert code == 2


def test_simulate_teleport_and_bell_extract(tmp_path):
    code, rep = run(["simulate", "teleport", "--payload", "0.6,0.8", "--format", "raw"],
                    tmp_path)
    assert code == 0 and rep["branch_count"] == 4
    code, rep = run(["simulate", "bell-extract", "--src-catalog", "W", "-i", "1", "-j", "2",
                     "--format", "raw"], tmp_path)
    assert code == 0 and rep["success_probability"] == pytest.approx(2 / 3)


def test_simulate_plan(tmp_path):
    code, rep = run(["simulate", "plan", "--src-catalog", "W", "--target-catalog", "GHZ2x3",
                     "--format", "raw"], tmp_path)
    assert code == 0 and rep["trace"]["final_overlap"] >= 1 - 1e-8
    code, rep = run(["simulate", "plan", "--src-catalog", "Bell_0", "--target-catalog",
                     "0_Bell", "--format", "raw"], tmp_path)
    assert code == 0 and rep["plan"] is None and rep["verdict"]["answer"] == "No"


def test_protocol_failure_exits_3(tmp_path, monkeypatch):
    from entorder import protocols

    monkeypatch.setattr(protocols, "bell_extract", lambda *a, **k: None)
    code, _ = run(["simulate", "bell-extract", "--src-catalog", "W"], tmp_path)
    assert code == 3

    def broken(*a, **k):
        raise protocols.ProtocolError("forced")

    monkeypatch.setattr(protocols, "ghz_merge", broken)
    assert run(["simulate", "ghz-merge"], tmp_path)[0] == 3


def test_reports_are_deterministic(tmp_path):
    for args in (["compare", "--catalog", "theta08", "--catalog", "Bell"],
                 ["simulate", "ghz-merge", "-d", "2", "--sample", "--seed", "5"],
                 ["simulate", "plan", "--src-catalog", "W", "--target-catalog", "GHZ2x3"],
                 ["analyze", "--catalog", "Psi2"]):
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        cli.main(args + ["--out", str(a)])
        cli.main(args + ["--out", str(b)])
        assert a.read_bytes() == b.read_bytes()


def test_catalog_listing(tmp_path):
    code, rep = run(["catalog", "--format", "raw"], tmp_path)
    names = [e["name"] for e in rep["entries"]]
    assert code == 0 and {"W", "fig1", "tgp10", "Psi1", "theta08"} <= set(names)


def test_global_flags_before_command(tmp_path, capsys):
    assert cli.main(["--seed", "3", "--format", "raw", "catalog"]) == 0
    assert "entries" in json.loads(capsys.readouterr().out)
