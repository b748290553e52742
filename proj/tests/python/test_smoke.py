import math

import pytest

import recopt


def test_control_law_and_coordination():
    assert recopt.control_value(0, 1, 0.25, 0.75, 0.5) == 1
    assert recopt.control_value(0, 1, 0.25, 0.74, 0.5) == 0
    r = recopt.coordinate([0, 1, 0, 1], [0.5, 0.95, 0.05, 0.99], alpha=0.4)
    assert len(r["states"]) == 4
    assert all(s in (0, 1) for s in r["states"])


def test_collaboration_three_members():
    r = recopt.collaborate([1, 1, 0], [0.5, 0.5, 0.5], beta=0.05)
    assert r["states"] == [1, 1, 1]
    assert r["clusters"] == [[0, 1, 2]]
    assert len(r["flips"]) == 1


def test_metrics():
    assert recopt.auc([0, 1], [0.1, 0.9]) == 1.0
    assert recopt.auc([1, 1], [0.1, 0.9]) is None
    assert math.isclose(recopt.rmse([0, 1], [0.1, 0.9]), 0.1)
    with pytest.raises(ValueError):
        recopt.auc([0, 1], [0.5])


def test_synth_roundtrip_and_pipeline(tmp_path):
    corpus, mastery, latent = recopt.synth(students=40, questions=15, skills=4, len_min=10, len_max=20, seed=3)
    assert corpus.student_count == 40
    assert len(mastery) == 40 * 4
    sid = corpus.students()[0]
    assert len(latent[sid]) == len(corpus.responses(sid))

    path = tmp_path / "corpus.csv"
    corpus.write_csv(str(path))
    assert recopt.read_csv(str(path)) == corpus

    d = recopt.difficulty(corpus)
    assert min(d.values()) == 0.0 and max(d.values()) == 1.0

    cfg = {"train": {"epochs": 2}, "embed": {"epochs": 2}}
    rep = recopt.run_pipeline(corpus, cfg, tmp_path / "run")
    assert 0.0 <= rep["acc"] <= 1.0
    assert recopt.evaluate_run(tmp_path / "run")["acc"] == rep["acc"]

    rows = recopt.run_ablation(corpus, ["raw", "Coo+Col"], {"modules": {"predictor": False}})
    assert [r["label"] for r in rows] == ["raw", "Coo+Col"]
    assert rows[0]["changed"] == "0"


def test_bad_config_is_rejected():
    corpus, _, _ = recopt.synth(students=10, questions=5, skills=2, len_min=5, len_max=5)
    with pytest.raises(ValueError):
        recopt.run_pipeline(corpus, {"nonsense": 1})
