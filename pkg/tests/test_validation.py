import numpy as np

from chest_lab.config import load_config
from chest_lab.validation import (
    MATRIX_KINDS, coupling, crb_equality_check, inequality_case, jacobian_error, random_observation,
    random_paths, run_crb_validation, uncentered_config,
)
from chest_lab import analysis as an

from conftest import make_cfg


def test_validate_preset_passes():
    rep = run_crb_validation(load_config("validate"))
    assert rep["passed"], [p for p in rep["properties"] if not p["passed"]]
    names = [p["name"] for p in rep["properties"]]
    for want in ("crb_equality_identity", "crb_bound_below_trace", "equality_iff_c_opt", "fim_orthogonality",
                 "uncentered_control_detected", "jacobian_finite_difference", "fat_m_control"):
        assert want in names


def test_validation_is_seeded():
    cfg = load_config("validate").with_overrides(validation=load_config("validate").validation)
    cfg.validation.n_cases = 3
    cfg.validation.n_random_matrices = 6
    assert run_crb_validation(cfg) == run_crb_validation(cfg)


def test_uncentered_explicit_positions_fail():
    cfg = load_config("validate")
    for sc in cfg.scenarios:
        sc.tx.recenter = sc.rx.recenter = False
    cfg.validation.n_cases = 4
    rep = run_crb_validation(cfg)
    assert not rep["passed"]
    failed = {p["name"] for p in rep["properties"] if not p["passed"]}
    assert "fim_orthogonality" in failed


def test_random_paths_are_separated(rng):
    cfg = make_cfg(8, 2, 4)
    from chest_lab.channel import characteristic_matrix
    paths = random_paths(cfg, 3, rng)
    E = characteristic_matrix(cfg, paths)
    C = np.abs(E.conj().T @ E) - np.eye(3)
    assert C.max() < 0.5


def test_observation_kinds(rng):
    cfg = make_cfg(3, 2, 2)
    paths = random_paths(cfg, 2, rng)
    D = an.channel_jacobian(paths, cfg)
    for kind in MATRIX_KINDS:
        obs = random_observation(kind, cfg, D, 0.1, rng)
        assert obs.n_channel == cfg.size
        res = inequality_case(cfg, paths, obs)
        if kind in ("identity", "scaled_identity", "unitary_kronecker", "span"):
            bound, trace, c = res
            assert c.holds and abs(bound - trace) <= 1e-8 * trace


def test_helpers(rng):
    cfg = make_cfg(16, 2, 4)
    paths = random_paths(cfg, 2, rng)
    assert crb_equality_check(cfg, paths, 0.01) < 1e-8
    assert jacobian_error(cfg, paths) < 1e-6
    assert coupling(cfg, paths, "correlation") < 1e-8
    off = uncentered_config(cfg)
    assert not off.tx.recentered
    np.testing.assert_allclose(off.tx.positions.mean(axis=0), [cfg.tx.radius, 0, 0], atol=1e-15)
    assert coupling(off, random_paths(off, 2, rng), "correlation") > 1e-3
