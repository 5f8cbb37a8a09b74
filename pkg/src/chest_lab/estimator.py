"""Greedy (OMP-style) channel estimation over an oversampled parametric dictionary.

Each iteration extracts one characteristic vector from the current residual,
either by exhaustive joint search over (delay, DoD, DoA) or by the sequential
strategy that estimates one parameter at a time while treating the others as
nuisance, then refits all coefficients by least squares.
"""

from dataclasses import dataclass, field
from enum import Enum
import math
import time

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.linalg.lapack import zpocon

from .channel import Path, _delays, _steering
from .errors import EstimationFailure, UndefinedCostError
from .geometry import X_AXIS, Direction

DIMENSIONS = ("delay", "dod", "doa")
DEFAULT_ORDER = ("delay", "dod", "doa")

RIDGE_COND = 1e12
RIDGE_SCALE = 1e-10


class Method(str, Enum):
    JOINT = "joint"
    SEQUENTIAL = "sequential"


# --------------------------------------------------------------------------
# dictionary grids


def direction_grid(array, n_points):
    """Evenly spread candidate directions for ``array``.

    Collinear arrays: the cosine to the array axis is sampled on the
    half-open interval [-1, 1), which is the oversampled-DFT dictionary for
    half-wavelength spacing. Planar/volumetric arrays: an azimuth x elevation
    product grid with exactly ``n_points`` entries.
    """
    if array.n == 1 or n_points <= 1 or array.rank == 0:
        return [X_AXIS]
    if array.rank == 1:
        axis = array.axis
        perp = np.cross([0.0, 0.0, 1.0], axis)
        if np.linalg.norm(perp) < 1e-12:
            perp = np.array([1.0, 0.0, 0.0])
        perp = perp / np.linalg.norm(perp)
        u = -1.0 + 2.0 * np.arange(n_points) / n_points
        dirs = []
        for ui in u:
            d = ui * axis + math.sqrt(max(0.0, 1.0 - ui * ui)) * perp
            dirs.append(Direction.from_unit(d))
        return dirs
    n_el = 1
    for k in range(1, int(math.isqrt(n_points // 2)) + 1):
        if n_points % k == 0:
            n_el = k
    n_az = n_points // n_el
    az = 2 * math.pi * np.arange(n_az) / n_az
    el = -math.pi / 2 + (np.arange(n_el) + 0.5) * math.pi / n_el
    return [Direction(a, e) for e in el for a in az]


class DictionaryGrid:
    """Candidate delays and directions searched during path extraction."""

    def __init__(self, delays, doas, dods, oversampling=1):
        self.delays = np.asarray(delays, dtype=float).ravel()
        self.doas = list(doas)
        self.dods = list(dods)
        self.oversampling = int(oversampling)
        if self.delays.size == 0 or not self.doas or not self.dods:
            raise ValueError("dictionary grid must be non-empty in every dimension")
        if np.any(self.delays < 0):
            raise ValueError("grid delays must be >= 0")
        self.doa_units = np.array([d.unit for d in self.doas])
        self.dod_units = np.array([d.unit for d in self.dods])

    @property
    def shape(self):
        """(N_zeta, N_vt, N_vr) in tie-break order."""
        return (self.delays.size, len(self.dods), len(self.doas))

    @property
    def size(self):
        return int(np.prod(self.shape))

    def __repr__(self):
        return f"DictionaryGrid(N_zeta={self.shape[0]}, N_vt={self.shape[1]}, N_vr={self.shape[2]})"

    @classmethod
    def build(cls, cfg, oversampling):
        """Oversampled grid: S*N points per non-degenerate dimension, 1 otherwise."""
        S = int(oversampling)
        if S < 1:
            raise ValueError("oversampling must be a positive integer")
        if cfg.n_f > 1:
            n_zeta = S * cfg.n_f
            # delay vectors are 1/df periodic on a uniform grid
            delays = np.arange(n_zeta) / (n_zeta * cfg.grid.spacing)
        else:
            delays = np.zeros(1)
        doas = direction_grid(cfg.rx, S * cfg.n_r if cfg.n_r > 1 else 1)
        dods = direction_grid(cfg.tx, S * cfg.n_t if cfg.n_t > 1 else 1)
        return cls(delays, doas, dods, S)

    def path(self, indices, gain=1.0):
        i_tau, i_dod, i_doa = indices
        return Path(gain, self.doas[i_doa], self.dods[i_dod], float(self.delays[i_tau]))


# --------------------------------------------------------------------------
# cost evaluation


def cost_f(x, obs, r):
    """|x^H M^H r|^2 / ||M x||^2; invariant to rescaling ``x``."""
    Mx = obs.apply(np.asarray(x))
    den = float(np.vdot(Mx, Mx).real)
    if den == 0.0:
        raise UndefinedCostError("M x = 0: cost is undefined")
    return abs(np.vdot(Mx, r)) ** 2 / den


class EvalCounter:
    """Counts cost-function evaluations across extractions."""

    def __init__(self):
        self.count = 0

    def add(self, n):
        self.count += int(n)


def _contract(Z, factors):
    """sum_{f,t,r} C[f,a] D[t,b] R[r,c] Z[f,t,r] -> (a, b, c) for pre-conjugated factors.

    A ``None`` factor stands for the identity (standard basis)."""
    out = Z
    for axis, G in enumerate(factors):
        if G is not None:
            moved = np.moveaxis(out, axis, -1)
            flat = moved.reshape(-1, moved.shape[-1]) @ G
            out = np.moveaxis(flat.reshape(moved.shape[:-1] + (G.shape[1],)), -1, axis)
    return out


def _quadratic(A6, factors, dims):
    """Den[a,b,c] = x_abc^H A x_abc for the Kronecker atoms x_abc."""
    Gf, Gt, Gr = (np.eye(n) if G is None else G for G, n in zip(factors, dims))
    T = np.einsum("fa,ftrgsq,ga->atrsq", Gf.conj(), A6, Gf, optimize=True)
    T = np.einsum("tb,atrsq,sb->abrq", Gt.conj(), T, Gt, optimize=True)
    return np.einsum("rc,abrq,qc->abc", Gr.conj(), T, Gr, optimize=True).real


def _as_index_array(exclude):
    if isinstance(exclude, np.ndarray):
        return exclude
    return np.array(exclude, dtype=np.intp).reshape(-1, 3)


class _Matcher:
    """Precomputed dictionary factors and normalizations for one (cfg, grid, obs)."""

    def __init__(self, cfg, grid, obs):
        if obs.n_channel != cfg.size:
            raise ValueError(f"observation expects {obs.n_channel} entries, channel has {cfg.size}")
        self.cfg = cfg
        self.grid = grid
        self.obs = obs
        self.dims = cfg.shape
        # factor matrices: atom = Gf[:, a] (x) Gt[:, b] (x) Gr[:, c]
        self.grid_factors = {
            "delay": _delays(cfg.grid.offsets, grid.delays),
            "dod": _steering(cfg.tx.positions, cfg.wavelength, grid.dod_units).conj(),
            "doa": _steering(cfg.rx.positions, cfg.wavelength, grid.doa_units),
        }
        self._conj = {d: np.ascontiguousarray(G.conj()) for d, G in self.grid_factors.items()}
        self.identity = obs.is_identity()
        A = None if self.identity else obs.gram()
        self.scale = 1.0
        self.A6 = None
        if A is not None:
            c = float(np.mean(np.diag(A).real))
            if c > 0 and np.allclose(A, c * np.eye(A.shape[0]), rtol=0, atol=1e-12 * c):
                self.scale = c
            else:
                self.A6 = A.reshape(self.dims + self.dims)

    def correlate(self, r):
        z = r if self.identity else self.obs.matrix.conj().T @ r
        return z.reshape(self.dims)

    def _factors(self, spec):
        """``spec[d]`` is None (identity), ``slice(None)`` (full grid) or a column index."""
        plain, conj = [], []
        for d in DIMENSIONS:
            sel = spec.get(d)
            if sel is None:
                plain.append(None)
                conj.append(None)
            elif isinstance(sel, slice):
                plain.append(self.grid_factors[d])
                conj.append(self._conj[d])
            else:
                plain.append(self.grid_factors[d][:, [sel]])
                conj.append(self._conj[d][:, [sel]])
        return plain, conj

    def _costs(self, Z, spec):
        factors, cfactors = self._factors(spec)
        num = _contract(Z, cfactors)
        num = num.real**2 + num.imag**2
        if self.A6 is None:
            # columns of every factor (grid atoms and basis vectors) have unit norm
            return num / self.scale, None
        den = _quadratic(self.A6, factors, self.dims)
        dmax = float(den.max(initial=0.0))
        if dmax <= 0:
            raise EstimationFailure("observation annihilates every candidate atom")
        undefined = den <= 1e-14 * dmax
        safe = np.where(undefined, 1.0, den)
        return np.where(undefined, 0.0, num / safe), undefined

    def joint(self, Z, exclude=()):
        exclude = _as_index_array(exclude)
        cost, undefined = self._costs(Z, {d: slice(None) for d in DIMENSIONS})
        n_eval = cost.size
        if undefined is not None:
            cost = np.where(undefined, -np.inf, cost)
        if len(exclude):
            cost.reshape(-1)[np.ravel_multi_index(tuple(exclude.T), cost.shape)] = -np.inf
        if not np.any(np.isfinite(cost)):
            if len(exclude):
                return self.joint(Z)
            raise EstimationFailure("no candidate with a defined cost")
        # np.argmax returns the first maximum in C order: lowest (delay, dod, doa)
        flat = int(np.argmax(cost))
        return np.unravel_index(flat, cost.shape), n_eval

    def sequential(self, Z, order=DEFAULT_ORDER, exclude=()):
        exclude = _as_index_array(exclude)
        if self.A6 is None:
            return self._sequential_white(Z, order, exclude)
        chosen = {}
        n_eval = 0
        for step, dim in enumerate(order):
            cost, undefined = self._costs(Z, {**chosen, dim: slice(None)})
            n_eval += cost.size
            axis = DIMENSIONS.index(dim)
            other = tuple(a for a in range(3) if a != axis)
            score = cost.sum(axis=other)
            if undefined is not None:
                score = np.where(np.all(undefined, axis=other), -np.inf, score)
            if step == len(order) - 1 and len(exclude):
                masked = score.copy()
                for idx in exclude:
                    if all(idx[DIMENSIONS.index(d)] == chosen[d] for d in chosen):
                        masked[idx[axis]] = -np.inf
                if np.any(np.isfinite(masked)):
                    score = masked
            if not np.any(np.isfinite(score)):
                raise EstimationFailure(f"no {dim} candidate with a defined cost")
            chosen[dim] = int(np.argmax(score))
        return tuple(chosen[d] for d in DIMENSIONS), n_eval

    def _sequential_white(self, Z, order, exclude):
        # With unit-norm factors the denominators are constant, so each step is
        # one contraction of the partially reduced tensor W; the chosen column
        # of that contraction becomes the next W.
        W = Z
        chosen = {}
        n_eval = 0
        last = len(order) - 1
        for step, dim in enumerate(order):
            axis = DIMENSIONS.index(dim)
            G = self._conj[dim]
            if G.shape == (1, 1):
                # inactive dimension: the single candidate still counts once
                n_eval += W.size
                chosen[dim] = 0
                continue
            moved = np.moveaxis(W, axis, -1)
            C = moved.reshape(-1, moved.shape[-1]) @ G
            n_eval += C.size
            score = (C.real**2 + C.imag**2).sum(axis=0)
            if step == last and len(exclude):
                hit = np.ones(len(exclude), dtype=bool)
                for d, k in chosen.items():
                    hit &= exclude[:, DIMENSIONS.index(d)] == k
                if hit.any():
                    masked = score.copy()
                    masked[exclude[hit, axis]] = -np.inf
                    if np.isfinite(masked).any():
                        score = masked
            k = int(np.argmax(score))
            chosen[dim] = k
            W = np.moveaxis(C[:, k].reshape(moved.shape[:-1] + (1,)), -1, axis)
        return tuple(chosen[d] for d in DIMENSIONS), n_eval


def _check_order(order):
    order = tuple(order)
    if sorted(order) != sorted(DIMENSIONS):
        raise ValueError(f"order must be a permutation of {DIMENSIONS}, got {order}")
    return order


def joint_estimate_path(r, obs, grid, cfg, counter=None):
    """Grid point maximizing the matching cost over the full Cartesian grid."""
    m = _Matcher(cfg, grid, obs)
    idx, n = m.joint(m.correlate(np.asarray(r, dtype=complex)))
    if counter is not None:
        counter.add(n)
    return grid.path(idx)


def sequential_estimate_path(r, obs, grid, cfg, order=DEFAULT_ORDER, counter=None):
    """One-dimension-at-a-time extraction (default delay, then DoD, then DoA).

    A dimension not yet estimated is a nuisance: its factor is replaced by
    each standard basis vector in turn and the costs are summed.
    """
    m = _Matcher(cfg, grid, obs)
    idx, n = m.sequential(m.correlate(np.asarray(r, dtype=complex)), _check_order(order))
    if counter is not None:
        counter.add(n)
    return grid.path(idx)


# --------------------------------------------------------------------------
# least squares and the greedy loop


def _solve_gram(G, rhs):
    # 1-norm condition number estimated from the Cholesky factor (LAPACK
    # pocon, O(p^2)); a failed factorization counts as singular.
    try:
        c = cho_factor(G, lower=True, check_finite=False)
        anorm = float(np.abs(G).sum(axis=0).max())
        rcond, info = zpocon(c[0], anorm, uplo="L")
        degenerate = bool(info != 0 or rcond * RIDGE_COND < 1.0)
    except np.linalg.LinAlgError:
        degenerate = True
    if degenerate:
        eps = RIDGE_SCALE * float(np.trace(G).real) / G.shape[0]
        c = cho_factor(G + eps * np.eye(G.shape[0]), lower=True, check_finite=False)
    return cho_solve(c, rhs, check_finite=False), degenerate


def ls_coefficients(E, obs, y):
    """Least-squares coefficients of ``y`` on the columns of ``M E``.

    Returns ``(alpha, degenerate)``; a ridge term is added when the Gram
    matrix is too ill-conditioned to invert reliably.
    """
    E = np.asarray(E)
    if E.ndim != 2 or E.shape[1] == 0:
        raise ValueError("E needs at least one column")
    B = obs.apply(E)
    return _solve_gram(B.conj().T @ B, B.conj().T @ y)


@dataclass
class ChannelEstimate:
    virtual_paths: list
    estimate: np.ndarray
    residual_norms: list
    method: str
    indices: list = field(default_factory=list)
    eval_counts: list = field(default_factory=list)
    extraction_times: list = field(default_factory=list)
    history: np.ndarray = None
    degenerate: bool = False
    overparameterized: bool = False

    @property
    def p(self):
        return len(self.virtual_paths)

    def to_dict(self):
        return {
            "method": self.method,
            "virtual_paths": [
                {
                    "gain_re": p.gain.real, "gain_im": p.gain.imag,
                    "doa_az_rad": p.doa.azimuth, "doa_el_rad": p.doa.elevation,
                    "dod_az_rad": p.dod.azimuth, "dod_el_rad": p.dod.elevation,
                    "delay_s": p.delay,
                }
                for p in self.virtual_paths
            ],
            "residual_norms": [float(v) for v in self.residual_norms],
            "eval_counts": [int(v) for v in self.eval_counts],
            "extraction_times_s": [float(v) for v in self.extraction_times],
            "degenerate": self.degenerate,
            "overparameterized": self.overparameterized,
        }


class GreedyEstimator:
    """Greedy estimator bound to one (cfg, grid, observation matrix).

    Building the dictionary factors is the expensive part; reuse one
    instance across trials that share geometry and observation matrix.
    """

    def __init__(self, cfg, grid, obs):
        self.cfg = cfg
        self.grid = grid
        self.obs = obs
        self._m = _Matcher(cfg, grid, obs)

    def atom(self, idx):
        F = self._m.grid_factors
        return np.kron(F["delay"][:, idx[0]], np.kron(F["dod"][:, idx[1]], F["doa"][:, idx[2]]))

    def run(self, y, p, method=Method.JOINT, order=DEFAULT_ORDER):
        """Run ``p`` iterations on observation ``y``.

        ``history[i]`` of the result is the channel estimate after i+1
        iterations, i.e. exactly what a run with p = i+1 returns.
        """
        if p < 1:
            raise ValueError("p must be >= 1")
        method = Method(method)
        order = _check_order(order)
        y = np.asarray(y, dtype=complex)
        if y.shape != (self.obs.n_meas,):
            raise ValueError(f"y must have length {self.obs.n_meas}")
        m, obs, cfg = self._m, self.obs, self.cfg

        r = y.copy()
        indices, counts, times = [], [], []
        norms = [float(np.linalg.norm(r))]
        history = np.zeros((p, cfg.size), dtype=complex)
        E = np.zeros((cfg.size, p), dtype=complex)
        B = np.zeros((obs.n_meas, p), dtype=complex)  # M E, grown column by column
        G = np.zeros((p, p), dtype=complex)
        rhs = np.zeros(p, dtype=complex)
        degenerate = False
        alpha = None
        for i in range(p):
            Z = m.correlate(r)
            t0 = time.perf_counter()
            if method is Method.JOINT:
                idx, n = m.joint(Z, exclude=indices)
            else:
                idx, n = m.sequential(Z, order, exclude=indices)
            times.append(time.perf_counter() - t0)
            counts.append(n)
            idx = tuple(int(v) for v in idx)
            indices.append(idx)
            E[:, i] = self.atom(idx)
            B[:, i] = obs.apply(E[:, i])
            col = (B[:, i].conj() @ B[:, : i + 1]).conj()
            G[: i + 1, i] = col
            G[i, : i + 1] = col.conj()
            rhs[i] = np.vdot(B[:, i], y)
            alpha, deg = _solve_gram(G[: i + 1, : i + 1], rhs[: i + 1])
            degenerate = degenerate or deg
            history[i] = E[:, : i + 1] @ alpha
            r = y - B[:, : i + 1] @ alpha
            norms.append(float(np.linalg.norm(r)))

        scale = math.sqrt(cfg.size)
        paths = [self.grid.path(idx, gain=complex(a) / scale) for idx, a in zip(indices, alpha)]
        return ChannelEstimate(
            virtual_paths=paths,
            estimate=history[-1].copy(),
            residual_norms=norms,
            method=method.value,
            indices=indices,
            eval_counts=counts,
            extraction_times=times,
            history=history,
            degenerate=degenerate,
            overparameterized=p > obs.n_meas,
        )


def greedy_estimate(y, obs, p, grid, method, cfg, order=DEFAULT_ORDER):
    """Greedy channel estimation: extract, append, refit all coefficients, update residual."""
    return GreedyEstimator(cfg, grid, obs).run(y, p, method, order)


def relative_error(h, h_hat):
    """||h - h_hat||^2 / ||h||^2."""
    h = np.asarray(h)
    nh = float(np.vdot(h, h).real)
    if nh == 0:
        raise ValueError("relative error is undefined for a zero channel")
    d = h - np.asarray(h_hat)
    return float(np.vdot(d, d).real) / nh
