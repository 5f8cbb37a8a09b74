import io
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from chest_lab.channel import (
    ChannelConfig, Path, build_observation, characteristic_vector, circular_noise, delay_vector,
    noise_variance_for_snr, observe, read_vector_csv, snr_db, steering_vector, synthesize_channel,
    write_vector_csv,
)
from chest_lab.geometry import ArrayGeometry, Direction, make_frequency_grid, make_ula

from conftest import FC, LAM, make_cfg, random_path

X_HAT = Direction(0.0, 0.0)
angles = st.tuples(st.floats(0, 2 * math.pi), st.floats(-1.5, 1.5))


def _brute_force_channel(cfg, paths):
    # h[k, j, i] = sum_l beta_l exp(-j2pi f_k tau) exp(+j2pi a_t.u_t/lam) exp(-j2pi a_r.u_r/lam)
    h = np.zeros((cfg.n_f, cfg.n_t, cfg.n_r), dtype=complex)
    for p in paths:
        for k, f in enumerate(cfg.grid.offsets):
            for j, at in enumerate(cfg.tx.positions):
                for i, ar in enumerate(cfg.rx.positions):
                    ph = (-2 * math.pi * f * p.delay
                          + 2 * math.pi * at @ p.dod.unit / LAM
                          - 2 * math.pi * ar @ p.doa.unit / LAM)
                    h[k, j, i] += p.gain * np.exp(1j * ph)
    return h.ravel()


def test_steering_single_antenna():
    np.testing.assert_allclose(steering_vector(make_ula(1, 0.5), 1.0, Direction(0.7, 0.2)), [1.0])


def test_steering_two_antennas_toward_axis():
    a = make_ula(2, 0.5, (1, 0, 0), 1.0)
    v = steering_vector(a, 1.0, X_HAT)
    # positions (-1/4, +1/4): exp(-j 2 pi a.u) = (e^{+j pi/2}, e^{-j pi/2}) / sqrt 2
    np.testing.assert_allclose(v, np.array([1j, -1j]) / math.sqrt(2), atol=1e-15)


def test_steering_broadside_is_flat():
    a = make_ula(5, 0.5, (1, 0, 0), 1.0)
    v = steering_vector(a, 1.0, Direction(math.pi / 2, 0.0))
    np.testing.assert_allclose(v, np.full(5, 1 / math.sqrt(5)), atol=1e-15)


def test_delay_vector_examples():
    g = make_frequency_grid(1e9, 4, 1e6)
    np.testing.assert_allclose(delay_vector(g, 0.0), np.full(4, 0.5))
    g2 = make_frequency_grid(1e9, 2, 1e6)
    np.testing.assert_allclose(delay_vector(g2, 1 / 2e6), np.array([1j, -1j]) / math.sqrt(2), atol=1e-15)


def test_characteristic_vector_trivial_dimensions():
    cfg = ChannelConfig(make_ula(1, 0.5), make_ula(1, 0.5), make_frequency_grid(FC, 1, 1e6))
    np.testing.assert_allclose(characteristic_vector(cfg, X_HAT, X_HAT, 0.0), [1.0])


@given(angles, angles, st.floats(0, 1e-6))
def test_vectors_have_unit_norm(doa, dod, tau):
    cfg = make_cfg(4, 3, 5)
    e = characteristic_vector(cfg, Direction(*doa), Direction(*dod), tau)
    assert abs(np.linalg.norm(e) - 1) <= 1e-12
    assert abs(np.linalg.norm(delay_vector(cfg.grid, tau)) - 1) <= 1e-12
    assert abs(np.linalg.norm(steering_vector(cfg.tx, LAM, Direction(*dod))) - 1) <= 1e-12


@given(angles, angles, angles, angles, st.floats(0, 1e-6), st.floats(0, 1e-6))
def test_inner_product_factorizes(doa1, dod1, doa2, dod2, t1, t2):
    cfg = make_cfg(4, 3, 5)
    d = [Direction(*a) for a in (doa1, dod1, doa2, dod2)]
    e1 = characteristic_vector(cfg, d[0], d[1], t1)
    e2 = characteristic_vector(cfg, d[2], d[3], t2)
    f = np.vdot(delay_vector(cfg.grid, t1), delay_vector(cfg.grid, t2))
    t = np.vdot(steering_vector(cfg.tx, LAM, d[1]), steering_vector(cfg.tx, LAM, d[3])).conj()
    r = np.vdot(steering_vector(cfg.rx, LAM, d[0]), steering_vector(cfg.rx, LAM, d[2]))
    assert abs(np.vdot(e1, e2) - f * t * r) <= 1e-12


def test_synthesize_empty_and_cancelling():
    cfg = make_cfg()
    assert np.array_equal(synthesize_channel(cfg, []), np.zeros(cfg.size))
    p = Path(0.7 - 0.2j, Direction(0.3, 0.1), Direction(1.2, -0.4), 3e-9)
    h = synthesize_channel(cfg, [p, p.with_gain(-p.gain)])
    assert np.max(np.abs(h)) <= 1e-14


def test_synthesize_matches_triple_loop(rng):
    cfg = make_cfg(4, 2, 3)
    paths = [random_path(rng) for _ in range(3)]
    np.testing.assert_allclose(synthesize_channel(cfg, paths), _brute_force_channel(cfg, paths),
                               rtol=0, atol=1e-12)


def test_synthesize_planar_array_matches_triple_loop(rng):
    tx = ArrayGeometry([(x * LAM / 2, 0, z * LAM / 2) for x in range(3) for z in range(2)])
    cfg = ChannelConfig(tx, make_ula(2, 0.5, (0, 1, 0), LAM), make_frequency_grid(FC, 3, 15e6))
    paths = [random_path(rng) for _ in range(4)]
    np.testing.assert_allclose(synthesize_channel(cfg, paths), _brute_force_channel(cfg, paths),
                               rtol=0, atol=1e-12)


@given(st.integers(0, 2**32 - 1))
def test_synthesize_is_linear_in_gains(seed):
    r = np.random.default_rng(seed)
    cfg = make_cfg(3, 2, 2)
    paths = [random_path(r) for _ in range(3)]
    g2 = r.standard_normal(3) + 1j * r.standard_normal(3)
    other = [p.with_gain(g) for p, g in zip(paths, g2)]
    both = [p.with_gain(p.gain + g) for p, g in zip(paths, g2)]
    lhs = synthesize_channel(cfg, both)
    rhs = synthesize_channel(cfg, paths) + synthesize_channel(cfg, other)
    assert np.max(np.abs(lhs - rhs)) <= 1e-12 * max(1.0, np.max(np.abs(lhs)))


def test_path_validation():
    with pytest.raises(ValueError):
        Path(1.0, X_HAT, X_HAT, -1e-9)
    with pytest.raises(ValueError):
        Path(complex(math.nan, 0), X_HAT, X_HAT, 0.0)


# ---- observations

def test_identity_observation():
    cfg = ChannelConfig(make_ula(2, 0.5), make_ula(2, 0.5), make_frequency_grid(FC, 1, 1e6))
    obs = build_observation("identity", cfg, 0.1)
    np.testing.assert_array_equal(obs.matrix, np.eye(4))
    assert obs.is_identity()


def test_kronecker_of_identities_is_identity():
    cfg = make_cfg(3, 2, 2)
    obs = build_observation("kronecker", cfg)
    np.testing.assert_array_equal(obs.matrix, np.eye(cfg.size))


def test_kronecker_subcarrier_selection(rng):
    cfg = make_cfg(3, 2, 3)
    F = np.eye(3)[[0, 2]]
    X = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
    W = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
    M = build_observation("kronecker", cfg, F=F, X=X, W=W).matrix
    assert M.shape == (2 * 3 * 2, cfg.size)
    # oracle: (M h) reshaped equals W^H H_k X for the selected subcarriers
    h = rng.standard_normal(cfg.size) + 1j * rng.standard_normal(cfg.size)
    H = h.reshape(cfg.shape)  # (f, t, r)
    expect = np.stack([(W.conj().T @ H[k].T @ X).T for k in (0, 2)])  # W^H H_k X
    np.testing.assert_allclose(M @ h, expect.ravel(), atol=1e-12)
    for row in M:
        blocks = np.abs(row.reshape(3, -1)).sum(axis=1) > 0
        assert blocks.sum() == 1


@pytest.mark.parametrize("kw", [dict(F=np.eye(2)), dict(X=np.eye(2)), dict(W=np.eye(3))])
def test_kronecker_dimension_mismatch(kw):
    with pytest.raises(ValueError):
        build_observation("kronecker", make_cfg(3, 2, 3), **kw)


def test_explicit_observation_checks_columns():
    cfg = make_cfg(2, 1, 1)
    with pytest.raises(ValueError):
        build_observation("explicit", cfg, M=np.eye(3))
    M = np.arange(4.0).reshape(2, 2)
    np.testing.assert_array_equal(build_observation("explicit", cfg, M=M).matrix, M)


def test_noise_covariance_must_be_positive_definite():
    cfg = make_cfg(2, 1, 1)
    with pytest.raises(ValueError):
        build_observation("identity", cfg, np.diag([1.0, -1.0]))


def test_noiseless_observe_is_exact(rng):
    cfg = make_cfg(2, 2, 2)
    M = rng.standard_normal((5, cfg.size))
    obs = build_observation("explicit", cfg, M=M)
    h = rng.standard_normal(cfg.size) + 1j * rng.standard_normal(cfg.size)
    np.testing.assert_array_equal(observe(obs, h, rng), M @ h)


def test_noise_sample_covariance():
    obs = build_observation("identity", make_cfg(2, 1, 2), 0.3)
    r = np.random.default_rng(5)
    Y = np.stack([observe(obs, np.zeros(4), r) for _ in range(100_000)])
    C = Y.T @ Y.conj() / len(Y)
    assert np.all(np.abs(np.diag(C) - 0.3) <= 0.05 * 0.3)
    assert np.max(np.abs(C - np.diag(np.diag(C)))) <= 0.05 * 0.3
    # circular: pseudo-covariance vanishes
    assert np.max(np.abs(Y.T @ Y / len(Y))) <= 0.05 * 0.3


def test_colored_noise_covariance():
    S = np.array([[2.0, 0.5j], [-0.5j, 1.0]])
    obs = build_observation("explicit", make_cfg(2, 1, 1), S, M=np.eye(2))
    r = np.random.default_rng(9)
    Y = np.stack([observe(obs, np.zeros(2), r) for _ in range(100_000)])
    np.testing.assert_allclose(Y.T @ Y.conj() / len(Y), S, atol=0.05)


def test_observe_is_deterministic():
    obs = build_observation("identity", make_cfg(2, 1, 2), 0.1)
    a = observe(obs, np.ones(4), np.random.default_rng(3))
    b = observe(obs, np.ones(4), np.random.default_rng(3))
    assert a.tobytes() == b.tobytes()


def test_snr_bookkeeping(rng):
    h = rng.standard_normal(40) + 1j * rng.standard_normal(40)
    for target in (-10.0, 0.0, 7.5):
        var = noise_variance_for_snr(h, target)
        assert var == pytest.approx(np.sum(np.abs(h) ** 2) / (40 * 10 ** (target / 10)))
        assert snr_db(h, var) == pytest.approx(target, abs=1e-12)
    assert noise_variance_for_snr(h, math.inf) == 0.0


def test_circular_noise_variance_split():
    n = circular_noise(np.random.default_rng(0), 200_000, 2.0)
    assert np.var(n.real) == pytest.approx(1.0, rel=0.02)
    assert np.var(n.imag) == pytest.approx(1.0, rel=0.02)


def test_vector_csv_round_trip(rng):
    v = rng.standard_normal(17) + 1j * rng.standard_normal(17)
    buf = io.StringIO()
    write_vector_csv(v, buf)
    assert buf.getvalue().splitlines()[0] == "index,re,im"
    buf.seek(0)
    np.testing.assert_array_equal(read_vector_csv(buf), v)
