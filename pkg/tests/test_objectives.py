import json

import numpy as np
import pytest

from shelladc.adc import adc_matrix
from shelladc.geometry import build_geometry
from shelladc.objectives import (ObjectiveParseError, ObjectiveSpec, check_target,
                                 evaluate_objective, load_target, parse_objective)
from shelladc.optimize import sample_targets
from shelladc.sensitivity import objective_gradient

TARGET = np.diag([0.6, 0.7, 0.6])


def _loader(path):
    return TARGET


def test_parse_combination():
    spec = parse_objective("k33 + aac - 4*isogap")
    assert spec.coefficients[2, 2] == 1.0
    assert spec.aac_weight == 1.0 and spec.isogap_weight == -4.0
    assert spec.kind == "composite" and spec.sense == "maximize"


def test_parse_entries_and_scientific_numbers():
    spec = parse_objective("2.5e-1*k12 - k23 + .5*k11")
    assert spec.coefficients[0, 1] == 0.25
    assert spec.coefficients[1, 2] == -1.0
    assert spec.coefficients[0, 0] == 0.5
    assert spec.kind == "linear-combo"


def test_parse_target_defaults_to_minimize():
    spec = parse_objective("target(t.json)", target_loader=_loader)
    assert spec.kind == "target-matrix" and spec.sense == "minimize"
    assert parse_objective("target(t.json)", sense="maximize", target_loader=_loader).sense == "maximize"


def test_parse_isogap_kind():
    assert parse_objective("isogap").kind == "iso-gap"


@pytest.mark.parametrize("text", ["", "k44", "aac aac", "2 aac", "aac +", "k11 / 2", "3*",
                                  "target(a)+target(b)"])
def test_parse_errors(text):
    loads = iter([TARGET, np.diag([0.1, 0.1, 0.1])])
    with pytest.raises(ObjectiveParseError) as info:
        parse_objective(text, target_loader=lambda p: next(loads))
    if text != "target(a)+target(b)":
        assert "grammar" in str(info.value)


def test_load_target_file(tmp_path):
    path = tmp_path / "t.json"
    path.write_text(json.dumps({"target": TARGET.tolist()}))
    np.testing.assert_array_equal(load_target(path), TARGET)
    path.write_text(json.dumps(TARGET.tolist()))
    np.testing.assert_array_equal(load_target(path), TARGET)


@pytest.mark.parametrize("bad", [np.eye(3), np.diag([1.2, 0.1, 0.1]), np.diag([-0.1, 0.5, 0.5]),
                                 np.array([[0.5, 0.1, 0], [0, 0.5, 0], [0, 0, 0.5]]), np.eye(2)])
def test_infeasible_targets_rejected(bad):
    with pytest.raises(ValueError):
        check_target(bad)


def test_bad_sense_rejected():
    with pytest.raises(ValueError):
        ObjectiveSpec(sense="up")


def test_dfdk_matches_finite_differences(rng):
    spec = parse_objective("k12 + 2*k33 - aac + 0.5*isogap + target(t)", target_loader=_loader)
    A = rng.standard_normal((3, 3))
    kA = 0.4 * np.eye(3) + 0.05 * (A + A.T)
    _, dfdk, flags = evaluate_objective(spec, kA)
    assert not flags
    np.testing.assert_allclose(dfdk, dfdk.T)
    h = 1e-6
    for i in range(3):
        for j in range(i, 3):
            E = np.zeros((3, 3))
            E[i, j] = E[j, i] = h
            fd = (spec.value(kA + E) - spec.value(kA - E)) / (2 * h)
            analytic = dfdk[i, j] * (1 if i == j else 2)
            assert fd == pytest.approx(analytic, abs=1e-7)


def test_isogap_zero_derivative_for_identity_rate():
    """A rate dk = I leaves the eigenvalue gap unchanged."""
    spec = parse_objective("isogap")
    _, dfdk, _ = evaluate_objective(spec, np.diag([0.3, 0.5, 0.6]))
    assert abs(np.sum(dfdk * np.eye(3))) < 1e-14


def test_degenerate_eigenvalue_flag():
    _, _, flags = evaluate_objective(parse_objective("isogap"), np.diag([0.5, 0.5, 0.6]))
    assert "degenerate-eigenvalue" in flags


def test_target_reached_flag_and_zero_gradient(plane):
    target = np.diag([1.0, 1.0, 0.0])
    spec = parse_objective("target(t)", target_loader=lambda p: target)
    cache = build_geometry(plane)
    value, G, flags = objective_gradient(plane, cache, adc_matrix(plane, cache), spec)
    assert value < 1e-10
    assert "target-reached" in flags
    assert not np.any(G)


def test_plane_aac_value_and_zero_gradient(plane):
    cache = build_geometry(plane)
    value, G, _ = objective_gradient(plane, cache, adc_matrix(plane, cache), parse_objective("aac"))
    assert value == pytest.approx(2 / 3, abs=1e-12)
    assert np.abs(G).max() < 1e-12


def test_sample_targets():
    targets = sample_targets(0.2)
    assert any(np.allclose(t, np.diag([0.2, 0.4, 0.6])) for t in targets)
    for t in targets:
        d = np.diag(t)
        assert d.min() > 0 and d.max() <= 1 + 1e-9 and d.sum() <= 2 + 1e-9
    assert sample_targets(1.0) == []
    with pytest.raises(ValueError):
        sample_targets(0.0)
