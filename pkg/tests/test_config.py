from __future__ import annotations

import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from geomflux.config import DEFAULT_SAMPLES, RunConfig, canonical_json, load_config, validate_config
from geomflux.errors import SchemaError

SPIN_LINE = {"task": "phase", "family": {"kind": "builtin-spin"},
             "path": {"kind": "line", "start": [0, 0, 1], "end": [1, 0, 0]}}


def _errors(doc):
    with pytest.raises(SchemaError) as info:
        validate_config(doc)
    return dict(info.value.errors)


def test_defaults_are_filled_in():
    cfg = validate_config(SPIN_LINE)
    assert cfg.family["hbar"] == 1.0
    assert cfg.path["samples"] == DEFAULT_SAMPLES == 512
    assert cfg.seed == 0 and cfg.level == 0
    assert cfg.phase["routes"] == ["AP"] and cfg.phase["cyclic"] is False


def test_closed_path_enables_cyclic_phase():
    cfg = validate_config({"task": "phase", "family": {"kind": "builtin-spin"},
                           "path": {"kind": "latitude-circle", "theta": 1.0}})
    assert cfg.phase["cyclic"] is True


def test_dimension_mismatch_names_both_fields():
    errs = _errors({"task": "tensor", "family": {"kind": "builtin-spin"}, "points": [[0.1, 0.2]]})
    assert "points[0]" in errs
    assert "family.param_dim" in errs["points[0]"] and "2 coordinates" in errs["points[0]"]


def test_misspelt_key_gets_a_suggestion():
    errs = _errors({"task": "phase", "family": {"kind": "builtin-spin", "hbarr": 1.0},
                    "path": SPIN_LINE["path"]})
    assert errs["family.hbarr"] == "unknown key; did you mean 'hbar'?"


def test_key_for_another_task_is_named_as_such():
    errs = _errors(dict(SPIN_LINE, R0=[0, 0, 1]))
    assert "not used by task 'phase'" in errs["R0"]


def test_all_problems_are_reported_together():
    errs = _errors({"task": "theorem", "family": {"kind": "builtin-spinn"}, "seed": -1,
                    "level": "x", "points": "nope"})
    assert {"family.kind", "seed", "level", "points", "R0"} <= set(errs)


def test_unknown_task_and_bad_json():
    assert "task" in _errors({"task": "phasee"})
    with pytest.raises(SchemaError):
        validate_config("{not json")
    with pytest.raises(SchemaError):
        validate_config("[1, 2]")


def test_negative_values_rejected():
    errs = _errors({"task": "phase", "family": {"kind": "builtin-spin", "hbar": -1},
                    "path": dict(SPIN_LINE["path"], samples=1)})
    assert "family.hbar" in errs and "path.samples" in errs


def test_level_out_of_range():
    errs = _errors(dict(SPIN_LINE, level=2))
    assert "family.dim" in errs["level"]


def test_seed_override_changes_hash():
    cfg = validate_config(SPIN_LINE)
    other = cfg.with_seed(5)
    assert other.seed == 5 and other.config_hash() != cfg.config_hash()
    assert cfg.with_seed(0).config_hash() == cfg.config_hash()


def test_shipped_configs_load(tmp_path):
    from pathlib import Path

    for path in sorted(Path(__file__).resolve().parents[1].joinpath("configs").glob("*.json")):
        cfg = load_config(path)
        assert isinstance(cfg, RunConfig)
        assert validate_config(cfg.to_json()) == cfg


def test_canonical_json_is_order_independent():
    a = canonical_json({"b": 1, "a": [1.0, {"d": 2, "c": 3}]})
    b = canonical_json({"a": [1.0, {"c": 3, "d": 2}], "b": 1})
    assert a == b


phase_docs = st.fixed_dictionaries({
    "task": st.just("phase"),
    "seed": st.integers(0, 2 ** 31),
    "family": st.fixed_dictionaries({"kind": st.just("builtin-spin"),
                                     "spin": st.sampled_from([0.5, 1.0, 1.5]),
                                     "hbar": st.floats(0.1, 10)}),
    "path": st.fixed_dictionaries({"kind": st.just("latitude-circle"),
                                   "theta": st.floats(0.1, 3.0),
                                   "samples": st.integers(8, 4096)}),
    "phase": st.fixed_dictionaries({"routes": st.lists(st.sampled_from(["AP", "fluctuation", "sum-over-states", "metric"]),
                                                       min_size=1, max_size=4, unique=True)}),
})

random_docs = st.fixed_dictionaries({
    "task": st.sampled_from(["tensor", "theorem", "susceptibility", "correlation"]),
    "family": st.fixed_dictionaries({"kind": st.just("seeded-random-polynomial"),
                                     "dim": st.integers(2, 6), "param_dim": st.just(2),
                                     "seed": st.integers(0, 1000)}),
    "points": st.lists(st.lists(st.floats(-1, 1), min_size=2, max_size=2), min_size=1, max_size=4),
    "R0": st.lists(st.floats(-1, 1), min_size=2, max_size=2),
})


@given(phase_docs)
def test_phase_config_round_trip(doc):
    cfg = validate_config(doc)
    again = validate_config(json.loads(cfg.to_json()))
    assert again == cfg and again.to_json() == cfg.to_json()


@given(random_docs)
def test_point_config_round_trip(doc):
    if doc["task"] == "tensor":
        doc = {k: v for k, v in doc.items() if k != "R0"}
    cfg = validate_config(doc)
    assert validate_config(cfg.to_document()) == cfg
