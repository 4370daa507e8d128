import json

import numpy as np
import pytest

from gift.errors import ConfigError, EmptyInput, KeyMismatch
from gift.evaluation import (
    MatchConfig,
    MatchCounts,
    baseline_mean_predictor,
    evaluate,
    f1_score,
    mae,
    match_occurrences,
    oracle_predictor,
    predictions_table,
    prf1,
)
from gift.model import OccurrencePrediction, TrainConfig, model_init
from gift.annotation import derive_velocities
from gift.synth import SynthConfig, generate_corpus

from conftest import make_clip


def P(frame, crossed=True):
    return OccurrencePrediction(frame, crossed, 1.0 if crossed else 0.1)


@pytest.mark.parametrize("pred,delta,expected", [
    (30, 0, MatchCounts(1, 0, 0)),
    (33, 0, MatchCounts(0, 1, 1)),
    (33, 5, MatchCounts(1, 0, 0)),
])
def test_match_rules(pred, delta, expected):
    assert match_occurrences({"a": P(pred)}, {"a": 30}, MatchConfig(delta)) == expected


def test_uncrossed_is_miss_only():
    assert match_occurrences({"a": P(30, False)}, {"a": 30}) == MatchCounts(0, 0, 1)


def test_match_key_mismatch():
    with pytest.raises(KeyMismatch):
        match_occurrences({"a": P(3)}, {"b": 3})


def test_negative_delta_rejected():
    with pytest.raises(ConfigError):
        MatchConfig(-1)


def test_prf1_published_row():
    p, r, f = prf1(MatchCounts(tp=3, fp=14, fn=372))
    assert p == pytest.approx(0.1765, abs=5e-5)
    assert r == pytest.approx(0.0080, abs=5e-5)
    assert f == pytest.approx(0.0153, abs=5e-4)
    assert f1_score(0.1765, 0.0080) == pytest.approx(0.0153, abs=5e-4)


def test_prf1_degenerate():
    assert prf1(MatchCounts(5, 0, 0)) == (1.0, 1.0, 1.0)
    assert prf1(MatchCounts(0, 4, 7)) == (0.0, 0.0, 0.0)
    assert prf1(MatchCounts()) == (0.0, 0.0, 0.0)


def test_mae_arithmetic_and_order():
    preds = {"x": P(12), "y": P(20)}
    gts = {"x": 10, "y": 25}
    assert mae(preds, gts) == 3.5
    assert mae(dict(reversed(list(preds.items()))), gts) == 3.5
    assert mae({"x": P(10)}, {"x": 10}) == 0.0
    with pytest.raises(EmptyInput):
        mae({}, {})


def _clips(occurrences):
    return [make_clip(T=50, occurrence=o, clip_id=f"c{i}") for i, o in enumerate(occurrences)]


def test_oracle_is_perfect():
    r = evaluate(oracle_predictor, _clips([20, 30, 44]))
    assert (r.recall, r.precision, r.f1, r.mae, r.coverage) == (1.0, 1.0, 1.0, 0.0, 1.0)


def test_never_crossing_predictor():
    r = evaluate(lambda c: OccurrencePrediction(40, False, 0.2, c.clip_id), _clips([20, 30]))
    assert (r.recall, r.precision, r.coverage) == (0.0, 0.0, 0.0)
    assert r.mae == pytest.approx(15.0)


def test_baseline_constant_and_mae():
    base = baseline_mean_predictor(_clips([20, 30]))
    assert base(make_clip(T=50, occurrence=11)).point_estimate == 25
    test = _clips([26, 31, 45])
    r = evaluate(base, test)
    assert r.mae == pytest.approx(np.mean([1, 6, 20]))
    with pytest.raises(EmptyInput):
        baseline_mean_predictor([])


def test_baseline_on_synthetic_range():
    clips, _ = generate_corpus(SynthConfig(seed=0, n_clips=60))
    frame = baseline_mean_predictor(clips)(clips[0]).point_estimate
    assert 34 <= frame <= 37
    assert baseline_mean_predictor(clips)(clips[1]).point_estimate == frame


def test_evaluate_model_and_report_serialization():
    clips, _ = generate_corpus(SynthConfig(seed=1, n_clips=3))
    clips = [derive_velocities(c) for c in clips]
    m = model_init(TrainConfig(embed_dim=8))
    r = evaluate(m, clips, tau=10, match=MatchConfig(2))
    assert r.n_clips == 3 and r.delta == 2
    assert json.loads(r.to_json())["n_clips"] == 3
    head, row = r.to_csv().splitlines()
    assert head == "recall,precision,f1,mae,coverage,n_clips,delta"
    assert row.endswith(",3,2")
    with pytest.raises(EmptyInput):
        evaluate(m, [])


def test_predictions_table_rows():
    rows = predictions_table(oracle_predictor, _clips([21, 22]))
    assert [r["abs_error"] for r in rows] == [0, 0]
    assert rows[1]["clip_id"] == "c1" and rows[1]["truth"] == 22
