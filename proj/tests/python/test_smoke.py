import math

import pytest

import personadb


def test_metrics():
    assert personadb.pearson([1, 2, 3, 4], [1, 3, 2, 4]) == pytest.approx(0.8)
    assert personadb.spearman([1, 2, 3], [3, 1, 2]) == pytest.approx(-0.5)
    micro, macro = personadb.micro_macro_f1([0] * 9, [0, 0, 0, 1, 1, 1, 2, 2, 2])
    assert micro == pytest.approx(1 / 3)
    assert macro == pytest.approx(1 / 6)
    assert personadb.alignment_and_mse([0, 3], [1, 1])[1] == pytest.approx(2.5)
    assert personadb.similarity([1, 1], [1, 0]) == pytest.approx(1 / math.sqrt(2))
    assert personadb.collaborative_quota(40, 0.25) == 10


def test_errors_carry_codes():
    with pytest.raises(personadb.Error) as info:
        personadb.pearson([1, 1, 1], [1, 2, 3])
    assert info.value.args[0] == "DegenerateSeries"


def test_config_overrides():
    cfg, digest = personadb.resolve_config(overrides=["composition.r=8"])
    assert cfg["composition"]["r"] == 8
    assert len(digest) == 64


def _sets(tmp_path):
    data = tmp_path / "data"
    return [
        f"store_path={tmp_path / 'store'}",
        f"runs_dir={tmp_path / 'runs'}",
        f"data.corpus={data / 'corpus.jsonl'}",
        f"data.tasks={data / 'tasks.jsonl'}",
        "backend.scripted.responder=synth",
        f"backend.scripted.oracle_key={data / 'oracle_key.json'}",
        f"backend.scripted.vocabulary={data / 'vocabulary.json'}",
        "synth.n_users=8",
        "synth.n_clusters=2",
        "composition.r=8",
    ]


def test_session_pipeline(tmp_path):
    sets = _sets(tmp_path)
    summary = personadb.synth(tmp_path / "data", sets)
    assert summary["users"] == 8
    s = personadb.Session(overrides=sets)
    assert s.ingest(tmp_path / "data" / "corpus.jsonl") == 8
    assert s.refine()["ok"] == 8
    joined = s.join("u000")
    assert joined["owner"] == "u000"
    rset = s.retrieve("u000", "dom0 news")
    assert rset["n_self"] + rset["n_collab"] == 8
    full = s.evaluate()
    ablated = s.evaluate("persona_db_wo_join")
    assert full["report"]["n"] == 24
    assert full["report"]["accuracy"] > ablated["report"]["accuracy"]


def test_cli_dry_run(tmp_path):
    sets = _sets(tmp_path)
    personadb.synth(tmp_path / "data", sets)
    status, out, err = personadb.run_cli(["predict", "--dry-run", "--set", *sets])
    assert status == 0, err
    assert out["backend_calls"] == 0
    assert out["predicted_analyzer_calls"] == 24
    status, out, err = personadb.run_cli(["predict", "--set", "composition.r=oops"])
    assert status == 2
    assert err["code"] == "ConfigError"
