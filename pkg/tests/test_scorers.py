import json

import pytest

from revforge.decode import EnsembleScorer, beam_search
from revforge.errors import ConfigError
from revforge.scorers import load_manifest, load_scorer
from revforge.toy_model import RuleScorer

SRC = tuple("this is nto the pizzza that i ordering".split())


def test_toy_spec_resolves_packaged_rules():
    scorer = load_scorer("toy:table1_demo")
    assert isinstance(scorer, RuleScorer) and len(scorer.table) == 6


def test_manifest_ensemble(tmp_path):
    (tmp_path / "one.rules").write_text("_\tnto\tnot\t_\t1.0\n")
    manifest = tmp_path / "m.json"
    manifest.write_text(json.dumps({
        "floor_margin": 5.0,
        "members": [
            {"kind": "toy", "rules": "one.rules", "copy_cost": 4.0},
            {"kind": "toy", "rules": "table1_demo"},
        ],
    }))
    scorer = load_scorer(f"ensemble:{manifest}")
    assert isinstance(scorer, EnsembleScorer) and scorer.floor_margin == 5.0
    assert beam_search(SRC, scorer, beam=2)


def test_single_member_manifest_is_the_member(tmp_path):
    manifest = tmp_path / "m.json"
    manifest.write_text(json.dumps({"members": [{"kind": "toy", "rules": "table1_demo"}]}))
    assert isinstance(load_manifest(manifest), RuleScorer)


@pytest.mark.parametrize(
    "spec",
    ["nonsense", "toy:", "neural:model.bin"],
)
def test_bad_specs(spec):
    with pytest.raises(ConfigError):
        load_scorer(spec)


def test_bad_manifests(tmp_path):
    empty = tmp_path / "empty.json"
    empty.write_text("{}")
    bad_kind = tmp_path / "kind.json"
    bad_kind.write_text(json.dumps({"members": [{"kind": "gpu"}]}))
    broken = tmp_path / "broken.json"
    broken.write_text("{")
    for path in (empty, bad_kind, broken, tmp_path / "missing.json"):
        with pytest.raises(ConfigError):
            load_manifest(path)
