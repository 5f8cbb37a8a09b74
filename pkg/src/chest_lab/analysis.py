"""Variance and bias analysis for parametric channel estimators.

Covers the analytic channel Jacobian with respect to the virtual-path
parameters, the Slepian-Bangs Fisher information, the Cramer-Rao trace and
its observation-matrix lower bound, and the single-virtual-path bias bounds.

Parameter layout per virtual path: modulus, phase, active DoA tangents,
active DoD tangents, and delay when there is more than one subcarrier.
Direction derivatives are taken along unit-speed great circles leaving the
direction through each tangent vector.
"""

from dataclasses import dataclass
import math

import numpy as np

from .channel import _delays, _steering, characteristic_matrix, characteristic_vector, synthesize_channel
from .errors import NonIdentifiableError
from .geometry import Direction, tangent_basis

FIM_COND_MAX = 1e12


@dataclass(frozen=True)
class Slot:
    path: int
    kind: str  # "rho", "phi", "doa", "dod" or "delay"
    tangent: np.ndarray = None


class ParamLayout:
    """Ordered list of the identifiable real parameters of a virtual-path set."""

    def __init__(self, slots):
        self.slots = list(slots)

    def __len__(self):
        return len(self.slots)

    @property
    def n_active(self):
        return len(self.slots)

    def groups(self, path):
        """Column indices of ``path`` grouped by parameter kind."""
        out = {}
        for i, s in enumerate(self.slots):
            if s.path == path:
                out.setdefault(s.kind, []).append(i)
        return out

    @classmethod
    def build(cls, paths, cfg):
        slots = []
        for n, p in enumerate(paths):
            slots.append(Slot(n, "rho"))
            slots.append(Slot(n, "phi"))
            for kind, d, arr in (("doa", p.doa, cfg.rx), ("dod", p.dod, cfg.tx)):
                tb = tangent_basis(d, arr)
                for b, on in zip((tb.b1, tb.b2), tb.active_mask):
                    if on:
                        slots.append(Slot(n, kind, b))
            if cfg.n_f > 1:
                slots.append(Slot(n, "delay"))
        return cls(slots)


def channel_jacobian(paths, cfg, layout=None):
    """Analytic d h / d theta, shape (N_r N_t N_f, n_active)."""
    if layout is None:
        layout = ParamLayout.build(paths, cfg)
    lam = cfg.wavelength
    scale = math.sqrt(cfg.size)
    fvec = -2j * math.pi * cfg.grid.offsets
    D = np.zeros((cfg.size, len(layout)), dtype=complex)
    cache = {}
    for col, s in enumerate(layout.slots):
        p = paths[s.path]
        if s.path not in cache:
            ef = _delays(cfg.grid.offsets, p.delay)
            et = _steering(cfg.tx.positions, lam, p.dod.unit)
            er = _steering(cfg.rx.positions, lam, p.doa.unit)
            cache[s.path] = (ef, et, er)
        ef, et, er = cache[s.path]
        g = p.gain
        if s.kind == "rho":
            rho = abs(g)
            coef, f, t, r = (g / rho if rho > 0 else 1.0), ef, et, er
        elif s.kind == "phi":
            coef, f, t, r = 1j * g, ef, et, er
        elif s.kind == "doa":
            a = (-2j * math.pi / lam) * (cfg.rx.positions @ s.tangent)
            coef, f, t, r = g, ef, et, a * er
        elif s.kind == "dod":
            a = (-2j * math.pi / lam) * (cfg.tx.positions @ s.tangent)
            coef, f, t, r = g, ef, a * et, er
        else:
            coef, f, t, r = g, fvec * ef, et, er
        D[:, col] = scale * coef * np.kron(f, np.kron(t.conj(), r))
    return D


def _rotate(d, tangent, angle):
    """Direction reached by moving ``angle`` radians from ``d`` along ``tangent``."""
    return Direction.from_unit(math.cos(angle) * d.unit + math.sin(angle) * tangent)


def _perturb(p, slot, t):
    if slot.kind == "rho":
        rho, phi = abs(p.gain), np.angle(p.gain)
        return p.with_gain((rho + t) * np.exp(1j * phi))
    if slot.kind == "phi":
        return p.with_gain(p.gain * np.exp(1j * t))
    if slot.kind == "doa":
        return type(p)(p.gain, _rotate(p.doa, slot.tangent, t), p.dod, p.delay)
    if slot.kind == "dod":
        return type(p)(p.gain, p.doa, _rotate(p.dod, slot.tangent, t), p.delay)
    return type(p)(p.gain, p.doa, p.dod, p.delay + t)


def _fd_scale(slot, p, cfg):
    if slot.kind == "rho":
        return max(abs(p.gain), 1.0)
    if slot.kind == "delay":
        return 1.0 / (2 * math.pi * float(np.max(np.abs(cfg.grid.offsets))))
    return 1.0


def finite_difference_jacobian(paths, cfg, layout=None, step=1e-6):
    """Central differences of ``synthesize_channel`` along each layout slot.

    ``step`` is relative: radians for phase and directions, a fraction of the
    modulus for the gain, and a fraction of 1/(2*pi*max|f_k|) for the delay.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    if layout is None:
        layout = ParamLayout.build(paths, cfg)
    D = np.zeros((cfg.size, len(layout)), dtype=complex)
    for col, s in enumerate(layout.slots):
        p = paths[s.path]
        t = step * _fd_scale(s, p, cfg)
        if s.kind == "delay" and p.delay < t:
            # delays must stay >= 0: second-order forward stencil
            one, two = list(paths), list(paths)
            one[s.path] = _perturb(p, s, t)
            two[s.path] = _perturb(p, s, 2 * t)
            D[:, col] = (
                -3 * synthesize_channel(cfg, paths)
                + 4 * synthesize_channel(cfg, one)
                - synthesize_channel(cfg, two)
            ) / (2 * t)
            continue
        plus, minus = list(paths), list(paths)
        plus[s.path] = _perturb(p, s, t)
        minus[s.path] = _perturb(p, s, -t)
        D[:, col] = (synthesize_channel(cfg, plus) - synthesize_channel(cfg, minus)) / (2 * t)
    return D


def fisher_matrix(D, obs):
    """Slepian-Bangs information 2 Re{D^H M^H Sigma^-1 M D}."""
    MD = obs.apply(D)
    fim = 2.0 * np.real(MD.conj().T @ obs.whiten(MD))
    return 0.5 * (fim + fim.T)


def _jacobi_scale(fim):
    """Diagonal scaling s with s*I*s unit-diagonal (units of delay vs. angle differ by ~1e8)."""
    d = np.diag(fim).copy()
    s = np.zeros_like(d)
    pos = d > 0
    s[pos] = 1.0 / np.sqrt(d[pos])
    return s


def crb_trace(D, fim):
    """Tr[D I^-1 D^H], the Cramer-Rao bound on the channel-estimate variance.

    Identifiability is judged on the unit-diagonal rescaled FIM, since the
    trace does not depend on the units of individual parameters.
    """
    if fim.size == 0:
        return 0.0
    s = _jacobi_scale(fim)
    fs = fim * np.outer(s, s)
    w = np.linalg.eigvalsh(fs)
    top = max(float(w[-1]), 1e-300)
    if np.any(s == 0) or w[0] <= top / FIM_COND_MAX:
        null_dim = int(np.sum(w <= top / FIM_COND_MAX)) if np.all(s > 0) else int(np.sum(s == 0))
        raise NonIdentifiableError(
            f"Fisher information matrix is singular ({null_dim} null directions): "
            "model not identifiable",
            null_dim,
        )
    Ds = D * s
    X = np.linalg.solve(fs, Ds.conj().T)
    tr = np.trace(Ds @ X)
    assert abs(tr.imag) <= 1e-10 * max(abs(tr.real), 1e-300), "CRB trace has an imaginary part"
    return float(tr.real)


def spectral_norm(A, tol=1e-10, max_iter=20000):
    """Largest eigenvalue of a Hermitian PSD matrix by power iteration.

    Deterministic start vector; stops when the eigen-residual is below
    ``tol`` relative. Falls back to a dense solver if convergence stalls.
    """
    n = A.shape[0]
    if n == 0:
        return 0.0
    rng = np.random.default_rng(0x5EED)
    v = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    v /= np.linalg.norm(v)
    mu = 0.0
    for _ in range(max_iter):
        w = A @ v
        mu = float(np.vdot(v, w).real)
        nw = np.linalg.norm(w)
        if nw == 0:
            return 0.0
        if np.linalg.norm(w - mu * v) <= tol * abs(mu):
            return mu
        v = w / nw
    return float(np.linalg.eigvalsh(A)[-1])


def crb_lower_bound(n_params, obs):
    """N_theta / (2 ||M^H Sigma^-1 M||_2). ``n_params`` may be a ParamLayout."""
    if isinstance(n_params, ParamLayout):
        n_params = n_params.n_active
    return n_params / (2.0 * spectral_norm(obs.precision()))


@dataclass(frozen=True)
class COptReport:
    holds: bool
    deviation: float


def check_c_opt(D, obs, tol=1e-8):
    """Whether M^H Sigma^-1 M, normalized, acts as the identity on span(D)."""
    A = obs.precision()
    An = A / spectral_norm(A)
    G = D.conj().T @ D
    dev = np.linalg.norm(D.conj().T @ An @ D - G) / np.linalg.norm(G)
    return COptReport(bool(dev <= tol), float(dev))


# --------------------------------------------------------------------------
# bias of a single virtual path


def _inner_products(paths, v, cfg):
    e = characteristic_vector(cfg, v.doa, v.dod, v.delay)
    E = characteristic_matrix(cfg, paths)
    return e, E, e.conj() @ E


def optimal_coefficient(paths, v, cfg):
    """sum_l beta_l e(v)^H e_l: the gain of the projection of h onto e(v)."""
    if not paths:
        return 0j
    _, _, ip = _inner_products(paths, v, cfg)
    return complex(ip @ np.array([p.gain for p in paths]))


def exact_single_path_error(paths, v, cfg):
    """||h - h~|| with h~ the orthogonal projection of h onto e(v)."""
    h = synthesize_channel(cfg, paths)
    e = characteristic_vector(cfg, v.doa, v.dod, v.delay)
    resid = h - np.vdot(e, h) * e
    return float(np.linalg.norm(resid))


def triangle_bias_bound(paths, v, cfg):
    """sqrt(N) * sum |beta_l| sqrt(1 - |e^H e_l|^2)."""
    if not paths:
        return 0.0
    e, E, ip = _inner_products(paths, v, cfg)
    # sqrt(1 - |e^H e_l|^2) as a residual norm: no cancellation when e_l ~ e
    resid = np.linalg.norm(E - np.outer(e, ip), axis=0)
    g = np.abs([p.gain for p in paths])
    return float(math.sqrt(cfg.size) * np.sum(g * resid))


@dataclass(frozen=True)
class PathTerms:
    x: float
    y: float
    z: float
    in_region: bool


@dataclass(frozen=True)
class BiasBoundReport:
    bound: float
    valid: bool
    per_path: list


def _array_term(array, lam, diff):
    """(2 pi^2 / N) sum_j ||a_j||^2/lam^2 cos^2(a_j, diff) ||diff||^2.

    ||a||^2 ||d||^2 cos^2(a, d) = (a . d)^2, so the 0/0 cosine of a zero
    difference (or an antenna at the centroid) contributes nothing."""
    proj = array.positions @ diff
    return 2 * math.pi**2 * float(np.mean(proj**2)) / lam**2


def _one_minus_sq_prod(x, y, z):
    """1 - ((1-x)(1-y)(1-z))^2, accurate when x, y, z are tiny."""
    if max(x, y, z) < 1:
        return -math.expm1(2 * (math.log1p(-x) + math.log1p(-y) + math.log1p(-z)))
    return 1 - ((1 - x) * (1 - y) * (1 - z)) ** 2


def bias_bound(paths, v, cfg):
    """Closed-form bound on the error of approximating ``paths`` by the single path ``v``."""
    lam = cfg.wavelength
    mean_f2 = float(np.mean(cfg.grid.offsets**2))
    B = cfg.grid.bandwidth
    lim_tau = math.inf if B == 0 else math.sqrt(2) / (math.pi * B)
    lim_t = math.inf if cfg.tx.radius == 0 else lam / (math.sqrt(2) * math.pi * cfg.tx.radius)
    lim_r = math.inf if cfg.rx.radius == 0 else lam / (math.sqrt(2) * math.pi * cfg.rx.radius)

    terms = []
    total = 0.0
    for p in paths:
        dtau = p.delay - v.delay
        dt = p.dod.unit - v.dod.unit
        dr = p.doa.unit - v.doa.unit
        x = 2 * math.pi**2 * dtau**2 * mean_f2 if cfg.n_f > 1 else 0.0
        y = _array_term(cfg.tx, lam, dt) if cfg.n_t > 1 else 0.0
        z = _array_term(cfg.rx, lam, dr) if cfg.n_r > 1 else 0.0
        ok = bool(
            (cfg.n_f == 1 or abs(dtau) < lim_tau)
            and (cfg.n_t == 1 or np.linalg.norm(dt) < lim_t)
            and (cfg.n_r == 1 or np.linalg.norm(dr) < lim_r)
        )
        terms.append(PathTerms(x, y, z, ok))
        total += abs(p.gain) * math.sqrt(max(0.0, _one_minus_sq_prod(x, y, z)))
    bound = math.sqrt(cfg.size) * total
    return BiasBoundReport(bound, all(t.in_region for t in terms), terms)


def gram_matrix(paths, v, cfg):
    """Q with q_ij = e_i^H e_j - e_i^H e e^H e_j."""
    e, E, ip = _inner_products(paths, v, cfg)
    return E.conj().T @ E - np.outer(ip.conj(), ip)


def bias_bound_gram(paths, v, cfg):
    """N * beta^H Q beta, which equals exact_single_path_error squared."""
    if not paths:
        return 0.0
    Q = gram_matrix(paths, v, cfg)
    beta = np.array([p.gain for p in paths])
    return float(cfg.size * np.real(np.vdot(beta, Q @ beta)))


# --------------------------------------------------------------------------
# reports


def within_path_coupling(fim, layout, normalize="correlation"):
    """Largest cross-group FIM entry inside any single path's block.

    ``normalize="correlation"`` divides each entry by sqrt(I_ii I_jj), which
    does not depend on parameter units; ``"max_diagonal"`` divides by the
    largest diagonal entry of the whole matrix (dominated by the delay slot
    in wideband cases, where it hides angular coupling).
    """
    if normalize not in ("correlation", "max_diagonal"):
        raise ValueError("normalize must be 'correlation' or 'max_diagonal'")
    d = np.abs(np.diag(fim))
    if normalize == "max_diagonal":
        top = float(d.max()) if d.size else 0.0
        scaled = np.abs(fim) / top if top > 0 else np.zeros_like(fim)
    else:
        s = np.where(d > 0, 1.0 / np.sqrt(np.where(d > 0, d, 1.0)), 0.0)
        scaled = np.abs(fim) * np.outer(s, s)
    worst = 0.0
    n_paths = max((s.path for s in layout.slots), default=-1) + 1
    for n in range(n_paths):
        groups = list(layout.groups(n).values())
        for i, gi in enumerate(groups):
            for gj in groups[i + 1:]:
                worst = max(worst, float(np.max(scaled[np.ix_(gi, gj)])))
    return worst


def analysis_report(paths, cfg, obs):
    """JSON-ready summary: FIM, CRB trace and bound, C_opt deviation."""
    layout = ParamLayout.build(paths, cfg)
    D = channel_jacobian(paths, cfg, layout)
    fim = fisher_matrix(D, obs)
    c_opt = check_c_opt(D, obs)
    try:
        crb = crb_trace(D, fim)
        null_dim = 0
    except NonIdentifiableError as exc:
        crb, null_dim = None, exc.null_dim
    return {
        "n_params": layout.n_active,
        "slots": [{"path": s.path, "kind": s.kind} for s in layout.slots],
        "fim": fim.tolist(),
        "crb_trace": crb,
        "crb_lower_bound": crb_lower_bound(layout, obs),
        "null_dim": null_dim,
        "c_opt": {"holds": c_opt.holds, "deviation": c_opt.deviation},
        "within_path_coupling": within_path_coupling(fim, layout),
    }


def bias_report(paths, v, cfg):
    rep = bias_bound(paths, v, cfg)
    return {
        "bound": rep.bound,
        "valid": rep.valid,
        "exact_error": exact_single_path_error(paths, v, cfg),
        "triangle_bound": triangle_bias_bound(paths, v, cfg),
        "per_path": [
            {"x": t.x, "y": t.y, "z": t.z, "in_region": t.in_region} for t in rep.per_path
        ],
    }
