from __future__ import annotations

import json
import math
import shutil
from pathlib import Path

import pytest

from astrodiag.cli import main
from astrodiag.kg import load_graph
from astrodiag.rwb import RwbConfig, load_report, verify_selection

FIXTURE = Path(__file__).parent / "fixtures" / "walking_noise"
DERIVED = ["kg.json", "embeddings.json", "wordlists.json", "report.json"]


@pytest.fixture
def work(tmp_path, monkeypatch):
    """A scratch copy of the walking-noise fixture, used as the working directory."""
    d = tmp_path / "wn"
    shutil.copytree(FIXTURE, d, ignore=shutil.ignore_patterns("__pycache__"))
    monkeypatch.chdir(d)
    return d


def run(*argv: str) -> int:
    return main(list(argv))


def test_kg_build_reproduces_fixture(work):
    assert run("kg", "build", "--config", "config.json", "--out", "out.json", "--embeddings", "emb.json") == 0
    assert (work / "out.json").read_bytes() == (FIXTURE / "kg.json").read_bytes()
    assert (work / "emb.json").read_bytes() == (FIXTURE / "embeddings.json").read_bytes()
    g = load_graph(work / "out.json")
    # the two documents share hot pixels, stacking and walking noise
    assert len(g.nodes) == 11 and g.has_edge("stacking", "hot-pixels")


def test_kg_build_empty_docs(work, capsys):
    (work / "empty").mkdir()
    assert run("kg", "build", "--config", "config.json", "--docs", "empty", "--out", "kg2.json") == 2
    assert "no non-empty" in capsys.readouterr().err


def test_wordlist_build_reproduces_fixture(work):
    assert run("wordlist", "build", "--config", "config.json", "--out", "w.json") == 0
    assert (work / "w.json").read_bytes() == (FIXTURE / "wordlists.json").read_bytes()


def test_askrag_reproduces_fixture(work):
    assert run("askrag", "run", "--config", "config.json", "--out", "sub2") == 0
    committed = sorted(p.name for p in (FIXTURE / "subkgs").iterdir())
    assert sorted(p.name for p in (work / "sub2").iterdir()) == committed
    for name in committed:
        assert (work / "sub2" / name).read_bytes() == (FIXTURE / "subkgs" / name).read_bytes(), name
    echo = json.loads((work / "sub2" / "run.json").read_text())["config_echo"]
    assert echo["beta"] == 0.0 and echo["mu"] == 0.8


def test_askrag_infinite_beta_never_aggregates(work):
    assert run("askrag", "run", "--config", "config.json", "--out", "sub3", "--set", "beta=inf") == 0
    actions = {d["action"] for d in json.loads((work / "sub3" / "decisions.json").read_text())}
    assert actions == {"partition"}


def write_two_agents(work: Path) -> None:
    (work / "two.json").write_text(
        json.dumps(
            [
                {"agent_id": "guiding", "stage": "shooting", "process_name": "guiding", "order_index": 0},
                {"agent_id": "calibration-frames", "stage": "shooting", "process_name": "calibration frames", "order_index": 1},
            ]
        )
    )
    (work / "two_wl.json").write_text(
        json.dumps(
            {
                "agents": [
                    {"agent_id": "calibration-frames", "layers": [{"keyword": "dark frames", "score": 0.8}, {"keyword": "hot pixels", "score": 0.6}]},
                    {"agent_id": "guiding", "layers": [{"keyword": "guiding", "score": 1.0}, {"keyword": "dithering", "score": 0.5}]},
                ]
            }
        )
    )
    e = lambda *v: list(v) + [0.0] * (16 - len(v))  # noqa: E731
    mock = json.loads((work / "mock.json").read_text())
    mock["embeddings"] = {
        "guiding": e(1.0),
        "dark frames": e(0.6, 0.8),
        "dithering": e(0.0, 1.0),
        "hot pixels": e(0.0, 0.6, 0.8),
    }
    (work / "two_mock.json").write_text(json.dumps(mock))


def test_askrag_two_agent_decisions(work):
    write_two_agents(work)
    argv = ["askrag", "run", "--config", "config.json", "--agents", "two.json", "--wordlists", "two_wl.json"]
    assert run(*argv, "--mock", "two_mock.json", "--set", "beta=-1", "--out", "two") == 0
    got = json.loads((work / "two" / "decisions.json").read_text())
    # layer q: theta = hypot(c_u, c_v) * (cos - gamma * e^q); cosines are 0.6 on both layers
    theta0 = math.hypot(1.0, 0.8) * (0.6 - 1.0)
    theta1 = math.hypot(0.5, 0.6) * (0.6 - math.e)
    assert [(d["layer"], d["pair"], d["action"]) for d in got] == [
        (0, ["calibration-frames", "guiding"], "aggregate"),
        (1, ["calibration-frames", "guiding"], "partition"),
    ]
    assert got[0]["theta"] == pytest.approx(theta0, abs=1e-12)
    assert got[1]["theta"] == pytest.approx(theta1, abs=1e-12)
    assert sorted(p.name for p in (work / "two").glob("*.json")) == [
        "calibration-frames.json", "decisions.json", "guiding.json", "run.json"
    ]


def test_askrag_single_agent(work):
    (work / "one.json").write_text(json.dumps([{"agent_id": "stacking", "stage": "post_processing", "process_name": "stacking", "order_index": 0}]))
    assert run("askrag", "run", "--config", "config.json", "--agents", "one.json", "--out", "one") == 0
    assert sorted(p.name for p in (work / "one").glob("*.json")) == ["decisions.json", "run.json", "stacking.json"]
    assert json.loads((work / "one" / "decisions.json").read_text()) == []


def test_askrag_missing_wordlists(work, capsys):
    (work / "w1.json").write_text(json.dumps({"agents": [{"agent_id": "focus", "layers": [{"keyword": "vignetting", "score": 1.0}]}]}))
    assert run("askrag", "run", "--config", "config.json", "--wordlists", "w1.json", "--out", "x") == 2
    err = capsys.readouterr().err
    assert "missing agents" in err and "stacking" in err and "guiding" in err


def test_diagnose_matches_golden_three_times(work):
    outputs = []
    for i in range(3):
        assert run("diagnose", "--config", "config.json", "--image", "image.fits", "--out", f"r{i}.json") == 0
        outputs.append((work / f"r{i}.json").read_bytes())
    assert outputs[0] == outputs[1] == outputs[2] == (FIXTURE / "report.json").read_bytes()


def test_golden_report_matches_hand_trace():
    report = load_report(FIXTURE / "report.json")
    (err,) = report.errors
    assert (err.origin_agent, err.summary) == ("stretch-denoise", "walking noise")
    tree = err.tree
    parents = {e["child"]: (e["parent"], e["weight"]) for e in tree["edges"]}
    assert parents == {
        "exposure-plan": ("stretch-denoise", 0.2),
        "stacking": ("stretch-denoise", 0.85),
        "background-extraction": ("stretch-denoise", 0.3),
        "color-calibration": ("stretch-denoise", 0.1),
        "guiding": ("stacking", 0.9),
        "calibration-frames": ("stacking", 0.6),
        "equipment-matching": ("calibration-frames", 0.1),
    }
    assert [(c.agent_id, c.weight, c.chain) for c in err.causes] == [
        ("guiding", 0.9, ["stretch-denoise", "stacking", "guiding"]),
        ("calibration-frames", 0.6, ["stretch-denoise", "stacking", "calibration-frames"]),
    ]
    assert [(r.node_id, r.before, r.after) for r in err.resolutions] == [
        ("guiding", {"confidence": 0.45, "weight": 0.9}, {"confidence": 0.9, "weight": 0.9})
    ]
    assert err.cross_links == [("stacking", "exposure-plan"), ("calibration-frames", "exposure-plan")]
    assert verify_selection(err, RwbConfig(0.5, 0.4, 0.5, 6))
    assert report.config_echo["tau"] == 0.5 and report.image == "image.fits"


def test_diagnose_all_clear(work):
    assert run("diagnose", "--config", "config.json", "--mock", "mock_all_clear.json", "--image", "image.fits", "--out", "c.json") == 0
    assert json.loads((work / "c.json").read_text())["errors"] == []


def test_diagnose_missing_subkgs(work, capsys):
    shutil.rmtree(work / "subkgs")
    assert run("diagnose", "--config", "config.json", "--image", "image.fits", "--out", "r.json") == 2
    assert "subkgs" in capsys.readouterr().err


def test_diagnose_missing_one_subkg(work, capsys):
    (work / "subkgs" / "focus.json").unlink()
    assert run("diagnose", "--config", "config.json", "--image", "image.fits", "--out", "r.json") == 2
    assert "focus.json" in capsys.readouterr().err


def test_diagnose_unreadable_image(work):
    assert run("diagnose", "--config", "config.json", "--image", "nope.fits", "--out", "r.json") == 2


def test_live_backend_without_credentials(work, monkeypatch, capsys):
    for var in ("ASTROVLM_API_KEY", "ASTROVLM_API_BASE", "ASTROVLM_CHAT_MODEL", "ASTROVLM_EMBED_MODEL"):
        monkeypatch.delenv(var, raising=False)
    code = run("diagnose", "--config", "config.json", "--backend", "live", "--image", "image.fits", "--out", "r.json")
    assert code != 0 and "ASTROVLM" in capsys.readouterr().err


def test_eval_scripted_judge(work):
    (work / "reports").mkdir()
    shutil.copy(FIXTURE / "report.json", work / "reports" / "image.json")
    assert run("eval", "--config", "config.json", "--reports", "reports", "--truth", "truth.json", "--out", "scores.json") == 0
    s = json.loads((work / "scores.json").read_text())
    triple = s["per_image"]["image.fits"]
    assert (triple["rationality"], triple["accuracy"], triple["diversity"]) == (0.9, 0.8, 0.7)
    assert triple["average"] == pytest.approx(0.8, abs=1e-9)
    assert s["categories"]["nebulas"]["n"] == 1 and s["skipped"] == []
    assert s["rubrics"]["version"] and s["config_echo"]["backend"] == "mock"


def test_eval_skips_unmatched_and_flags_partial(work):
    (work / "reports").mkdir()
    shutil.copy(FIXTURE / "report.json", work / "reports" / "image.json")
    other = json.loads((FIXTURE / "report.json").read_text()) | {"image": "m42.fits"}
    (work / "reports" / "m42.json").write_text(json.dumps(other))
    mock = json.loads((work / "mock.json").read_text())
    mock["replies"]["judge:accuracy"] = "not a score"
    (work / "partial.json").write_text(json.dumps(mock))
    argv = ["eval", "--config", "config.json", "--mock", "partial.json", "--reports", "reports"]
    assert run(*argv, "--truth", "truth.json", "--out", "s.json") == 0
    s = json.loads((work / "s.json").read_text())
    assert s["skipped"] == ["m42.json"]
    assert s["per_image"]["image.fits"]["partial"] is True
    assert s["footnote"]["partial_excluded"] == {"nebulas": {"accuracy": 1}}


def test_eval_empty_reports_dir(work):
    (work / "reports").mkdir()
    assert run("eval", "--reports", "reports", "--truth", "truth.json", "--out", "s.json") == 2


def test_help_lists_hyperparameter_symbols(capsys):
    with pytest.raises(SystemExit):
        main(["diagnose", "--help"])
    out = capsys.readouterr().out
    for sym in ("μ", "γ", "β", "τ", "ξ", "η"):
        assert sym in out


def test_bad_set_and_unknown_key(work, capsys):
    assert run("askrag", "run", "--config", "config.json", "--out", "x", "--set", "beta") == 2
    assert run("askrag", "run", "--config", "config.json", "--out", "x", "--set", "lambda=1") == 2
    assert run("askrag", "run", "--config", "config.json", "--out", "x", "--set", "tau=2") == 2
