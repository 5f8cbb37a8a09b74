"""Self-check suite for the variance analysis: CRB, its lower bound, C_opt,
within-path FIM orthogonality and the analytic Jacobian.

Each property is evaluated on random, well-separated virtual-path sets
drawn for every configured scenario and reported with the worst measured
deviation. Negative controls (uncentered array, random fat observation
matrix) are expected to *fail* the corresponding check; the suite passes
when those failures are detected.
"""

import math

import numpy as np

from . import analysis as an
from .channel import ChannelConfig, ObservationModel, Path, characteristic_matrix, kronecker_observation
from .errors import NonIdentifiableError
from .geometry import ArrayGeometry, Direction

CRB_EQUALITY_TOL = 1e-8
INEQUALITY_SLACK = 1e-10
EQUALITY_TOL = 1e-8
ORTHOGONALITY_TOL = 1e-8
NEGATIVE_CONTROL_MIN = 1e-3
JACOBIAN_TOL = 1e-6
MAX_COHERENCE = 0.5
EL_MAX = 1.2  # stay clear of the poles

MATRIX_KINDS = ("identity", "scaled_identity", "gaussian", "kronecker", "unitary_kronecker", "span")


def random_paths(cfg, n_paths, rng, max_coherence=MAX_COHERENCE, max_tries=1000):
    """Random virtual paths whose characteristic vectors have pairwise
    coherence below ``max_coherence``."""
    t_max = 0.5 / cfg.grid.spacing if cfg.n_f > 1 else 0.0
    for _ in range(max_tries):
        paths = []
        for _ in range(n_paths):
            g = rng.uniform(0.5, 1.5) * np.exp(1j * rng.uniform(0, 2 * math.pi))
            doa = Direction(rng.uniform(0, 2 * math.pi), rng.uniform(-EL_MAX, EL_MAX))
            dod = Direction(rng.uniform(0, 2 * math.pi), rng.uniform(-EL_MAX, EL_MAX))
            paths.append(Path(complex(g), doa, dod, float(rng.uniform(0, t_max))))
        E = characteristic_matrix(cfg, paths)
        C = np.abs(E.conj().T @ E) - np.eye(n_paths)
        if n_paths == 1 or C.max() < max_coherence:
            return paths
    raise RuntimeError("could not draw well-separated paths; relax max_coherence")


def _haar_unitary(n, rng):
    z = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) / math.sqrt(2)
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def _gauss(shape, rng):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2)


def random_observation(kind, cfg, D, noise_var, rng):
    """Observation model of the given kind for the channel size of ``cfg``."""
    n = cfg.size
    if kind == "identity":
        return ObservationModel(np.eye(n), noise_var)
    if kind == "scaled_identity":
        return ObservationModel(rng.uniform(0.2, 3.0) * np.eye(n), noise_var)
    if kind == "gaussian":
        m = int(rng.integers(max(D.shape[1] + 1, n // 2), 2 * n + 1))
        return ObservationModel(_gauss((m, n), rng), noise_var)
    if kind == "kronecker":
        F = _gauss((cfg.n_f, cfg.n_f), rng)
        X = _gauss((cfg.n_t, cfg.n_t), rng)
        W = _gauss((cfg.n_r, cfg.n_r), rng)
        return kronecker_observation(cfg, F, X, W, noise_var)
    if kind == "unitary_kronecker":
        c = rng.uniform(0.5, 2.0)
        F, X, W = (_haar_unitary(k, rng) for k in (cfg.n_f, cfg.n_t, cfg.n_r))
        return kronecker_observation(cfg, c * F, X, W, noise_var)
    if kind == "span":
        # rows form an orthonormal basis of span(D)
        Q, _ = np.linalg.qr(D)
        return ObservationModel(Q.conj().T, noise_var)
    raise ValueError(f"unknown observation kind {kind!r}")


def _rel(a, b):
    return abs(a - b) / max(abs(b), 1e-300)


def _prop(name, passed, measured, threshold, detail=None):
    out = {"name": name, "passed": bool(passed), "measured": float(measured), "threshold": threshold}
    if detail:
        out["detail"] = detail
    return out


def crb_equality_check(cfg, paths, noise_var):
    """Relative gap between crb_trace and N_theta sigma^2 / 2 for M = Id."""
    layout = an.ParamLayout.build(paths, cfg)
    D = an.channel_jacobian(paths, cfg, layout)
    obs = ObservationModel(np.eye(cfg.size), noise_var)
    crb = an.crb_trace(D, an.fisher_matrix(D, obs))
    return _rel(crb, layout.n_active * noise_var / 2.0)


def inequality_case(cfg, paths, obs):
    """(bound, trace, c_opt report) or None when the model is not identifiable."""
    layout = an.ParamLayout.build(paths, cfg)
    D = an.channel_jacobian(paths, cfg, layout)
    try:
        trace = an.crb_trace(D, an.fisher_matrix(D, obs))
    except NonIdentifiableError:
        return None
    return an.crb_lower_bound(layout, obs), trace, an.check_c_opt(D, obs)


def uncentered_config(cfg):
    """Same config with the transmit array pushed off its centroid by its radius."""
    pos = cfg.tx.positions
    R = cfg.tx.radius
    axis = cfg.tx.axis if cfg.tx.rank == 1 else np.array([1.0, 0.0, 0.0])
    return ChannelConfig(ArrayGeometry(pos + R * axis, recenter=False), cfg.rx, cfg.grid)


def coupling(cfg, paths, normalize):
    layout = an.ParamLayout.build(paths, cfg)
    D = an.channel_jacobian(paths, cfg, layout)
    fim = an.fisher_matrix(D, ObservationModel(np.eye(cfg.size), 1.0))
    return an.within_path_coupling(fim, layout, normalize)


def jacobian_error(cfg, paths, step=1e-6):
    """Largest relative column error between analytic and finite-difference Jacobians."""
    layout = an.ParamLayout.build(paths, cfg)
    Da = an.channel_jacobian(paths, cfg, layout)
    Df = an.finite_difference_jacobian(paths, cfg, layout, step)
    worst = 0.0
    for k in range(Da.shape[1]):
        na = np.linalg.norm(Da[:, k])
        err = np.linalg.norm(Da[:, k] - Df[:, k])
        worst = max(worst, err / na if na > 0 else err)
    return worst


def run_crb_validation(cfg, seed=None):
    """Run the suite over every scenario of ``cfg``; returns a JSON-ready dict."""
    opts = cfg.validation
    rng = np.random.default_rng(np.random.SeedSequence([cfg.master_seed if seed is None else seed, 7]))
    lo, hi = opts.n_paths
    sigma2 = opts.noise_var
    configs = [(sc.name, sc.channel_config()) for sc in cfg.scenarios]

    def draw(ch):
        return random_paths(ch, int(rng.integers(lo, hi + 1)), rng)

    props = []

    # CRB equality under M = Id
    worst = 0.0
    for _, ch in configs:
        for _ in range(opts.n_cases):
            worst = max(worst, crb_equality_check(ch, draw(ch), sigma2))
    props.append(_prop("crb_equality_identity", worst <= CRB_EQUALITY_TOL, worst, CRB_EQUALITY_TOL))

    # bound <= trace, and equality exactly when C_opt holds
    viol, eq_mismatch, n_id, n_skip, n_copt = 0.0, 0, 0, 0, 0
    for i in range(opts.n_random_matrices):
        name, ch = configs[i % len(configs)]
        paths = draw(ch)
        D = an.channel_jacobian(paths, ch)
        kind = MATRIX_KINDS[i % len(MATRIX_KINDS)]
        res = inequality_case(ch, paths, random_observation(kind, ch, D, sigma2, rng))
        if res is None:
            n_skip += 1
            continue
        n_id += 1
        bound, trace, c_opt = res
        viol = max(viol, (bound - trace) / trace)
        equal = _rel(bound, trace) <= EQUALITY_TOL
        n_copt += c_opt.holds
        eq_mismatch += equal != c_opt.holds
    props.append(_prop("crb_bound_below_trace", viol <= INEQUALITY_SLACK, viol, INEQUALITY_SLACK,
                       {"identifiable": n_id, "skipped": n_skip}))
    props.append(_prop("equality_iff_c_opt", eq_mismatch == 0, eq_mismatch, 0,
                       {"c_opt_cases": n_copt, "identifiable": n_id}))

    # within-path orthogonality on centered arrays, M = Id
    worst = 0.0
    for _, ch in configs:
        for _ in range(opts.n_cases):
            worst = max(worst, coupling(ch, draw(ch), "correlation"))
    props.append(_prop("fim_orthogonality", worst <= ORTHOGONALITY_TOL, worst, ORTHOGONALITY_TOL))

    if opts.inject_uncentered:
        # must be detected: some within-path coupling well above tolerance
        detected = []
        for name, ch in configs:
            if ch.n_t < 2:
                continue
            off = uncentered_config(ch)
            detected.append(max(coupling(off, draw(off), "correlation") for _ in range(opts.n_cases)))
        m = min(detected) if detected else 0.0
        props.append(_prop("uncentered_control_detected", m > NEGATIVE_CONTROL_MIN, m,
                           NEGATIVE_CONTROL_MIN))

    # analytic vs finite-difference Jacobian
    worst = 0.0
    for _, ch in configs:
        for _ in range(opts.n_cases):
            worst = max(worst, jacobian_error(ch, draw(ch), opts.fd_step))
    props.append(_prop("jacobian_finite_difference", worst < JACOBIAN_TOL, worst, JACOBIAN_TOL))

    if opts.inject_random_fat_m:
        ok, worst_viol, worst_dev = True, 0.0, math.inf
        for name, ch in configs:
            paths = draw(ch)
            D = an.channel_jacobian(paths, ch)
            m = max(D.shape[1] + 1, ch.size // 2)
            res = inequality_case(ch, paths, ObservationModel(_gauss((m, ch.size), rng), sigma2))
            if res is None:
                continue
            bound, trace, c_opt = res
            worst_viol = max(worst_viol, (bound - trace) / trace)
            worst_dev = min(worst_dev, c_opt.deviation)
            ok = ok and not c_opt.holds and bound <= trace * (1 + INEQUALITY_SLACK)
        props.append(_prop("fat_m_control", ok, worst_dev, EQUALITY_TOL,
                           {"max_inequality_violation": worst_viol}))

    return {
        "name": cfg.name,
        "scenarios": [n for n, _ in configs],
        "passed": all(p["passed"] for p in props),
        "properties": props,
    }
