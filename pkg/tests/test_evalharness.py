from __future__ import annotations

import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from astrodiag.backends import fenced
from astrodiag.evalharness import (
    CATEGORIES,
    DIMENSIONS,
    GroundTruth,
    ScoreTriple,
    TrueCause,
    aggregate,
    judge,
    load_truth,
    rubric_echo,
)
from astrodiag.rwb import DiagnosisReport

from _util import mock

TRUTH = GroundTruth("imgs/m31.fits", "galaxies", (TrueCause("guiding", "drift without dithering"),))
REPORT = DiagnosisReport("other/dir/m31.fits", [], {})


def scripted(r, a, d):
    return mock(
        {"judge:rationality": fenced({"score": r}), "judge:accuracy": fenced({"score": a}), "judge:diversity": fenced({"score": d})},
        strict=True,
    )


def test_scripted_judge_average():
    t = judge(REPORT, TRUTH, scripted(0.9, 0.8, 0.7))
    assert (t.rationality, t.accuracy, t.diversity) == (0.9, 0.8, 0.7)
    assert abs(t.average - 0.8) <= 1e-9 and not t.partial


def test_judge_clamps():
    t = judge(REPORT, TRUTH, scripted(1.3, -0.2, 0.5))
    assert (t.rationality, t.accuracy) == (1.0, 0.0)


def test_degraded_dimension_absent():
    chat = mock({"judge:rationality": fenced({"score": 0.6}), "judge:accuracy": "??", "judge:diversity": fenced({"score": 0.4})})
    t = judge(REPORT, TRUTH, chat, retries=1)
    assert t.accuracy is None and t.partial
    assert t.average == pytest.approx(0.5)


def test_mismatched_image_rejected():
    with pytest.raises(ValueError):
        judge(DiagnosisReport("m33.fits", [], {}), TRUTH, scripted(1, 1, 1))


def test_single_triple_is_itself():
    t = ScoreTriple(0.9, 0.5, 0.1)
    g = aggregate([("nebulas", t)])
    assert g.cells["nebulas"] == {"rationality": 0.9, "accuracy": 0.5, "diversity": 0.1}
    assert g.average == pytest.approx(0.5)


def test_two_triples_mean():
    g = aggregate([("galaxies", ScoreTriple(0.8, 0.8, 0.8)), ("galaxies", ScoreTriple(0.6, 0.6, 0.6))])
    assert all(v == pytest.approx(0.7) for v in g.cells["galaxies"].values())
    assert g.counts == {"galaxies": 2}


def test_partial_excluded_and_footnoted():
    g = aggregate([("galaxies", ScoreTriple(0.8, None, 0.8)), ("galaxies", ScoreTriple(0.6, 0.4, 0.6))])
    assert g.cells["galaxies"]["accuracy"] == 0.4
    assert g.excluded == {"galaxies": {"accuracy": 1}}
    assert g.to_dict()["footnote"] == {"partial_excluded": {"galaxies": {"accuracy": 1}}}


def test_average_over_all_cells():
    g = aggregate([(c, ScoreTriple(v, v, v)) for c, v in zip(CATEGORIES, [0.3, 0.6, 0.9])])
    assert list(g.cells) == list(CATEGORIES)
    assert g.average == pytest.approx(0.6)


score = st.one_of(st.none(), st.floats(0, 1))
triples = st.lists(
    st.tuples(st.sampled_from(CATEGORIES), st.builds(ScoreTriple, score, score, score)), min_size=1, max_size=12
)


@settings(max_examples=100)
@given(triples, st.randoms())
def test_aggregate_permutation_invariant(scores, rnd):
    shuffled = list(scores)
    rnd.shuffle(shuffled)
    a, b = aggregate(scores).to_dict(), aggregate(shuffled).to_dict()
    assert a == b
    for row in a["categories"].values():
        assert all(row[d] is None or 0 <= row[d] <= 1 for d in DIMENSIONS)


def test_score_range_enforced():
    with pytest.raises(ValueError):
        ScoreTriple(1.1, 0, 0)


def test_truth_validation_and_loading(tmp_path):
    with pytest.raises(ValueError):
        GroundTruth("x", "comets", (TrueCause("a", "b"),))
    with pytest.raises(ValueError):
        GroundTruth("x", "galaxies", ())
    p = tmp_path / "truth.json"
    p.write_text(json.dumps([{"image": "m31.fits", "category": "galaxies", "true_causes": [{"process": "focus", "description": "soft"}]}]))
    assert load_truth(p) == [GroundTruth("m31.fits", "galaxies", (TrueCause("focus", "soft"),))]


def test_rubrics_versioned():
    echo = rubric_echo()
    assert echo["version"] and set(DIMENSIONS) <= set(echo)
