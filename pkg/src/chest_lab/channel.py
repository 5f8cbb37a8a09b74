"""Steering, delay and characteristic vectors; channel synthesis and observations.

Channel vectors are flat complex arrays of length N_r*N_t*N_f, receive index
fastest, then transmit, then frequency, i.e. the layout of
``kron(e_f, kron(conj(e_t), e_r))``.
"""

from dataclasses import dataclass
import csv
import math

import numpy as np

from .geometry import Direction


@dataclass(frozen=True)
class Path:
    """One propagation path (physical, virtual or estimated).

    ``gain`` is the complex amplitude in the convention
    h = sqrt(N_r N_t N_f) * sum(gain * e(doa, dod, delay)).
    """

    gain: complex
    doa: Direction
    dod: Direction
    delay: float

    def __post_init__(self):
        g = complex(self.gain)
        if not (math.isfinite(g.real) and math.isfinite(g.imag)):
            raise ValueError("path gain must be finite")
        if not (math.isfinite(self.delay) and self.delay >= 0):
            raise ValueError(f"path delay must be finite and >= 0, got {self.delay}")
        object.__setattr__(self, "gain", g)
        object.__setattr__(self, "delay", float(self.delay))

    def with_gain(self, gain):
        return Path(gain, self.doa, self.dod, self.delay)


@dataclass(frozen=True)
class ChannelConfig:
    tx: "ArrayGeometry"
    rx: "ArrayGeometry"
    grid: "FrequencyGrid"

    @property
    def n_t(self):
        return self.tx.n

    @property
    def n_r(self):
        return self.rx.n

    @property
    def n_f(self):
        return self.grid.n

    @property
    def size(self):
        return self.n_r * self.n_t * self.n_f

    @property
    def shape(self):
        """Tensor shape (N_f, N_t, N_r) matching the flat index order."""
        return (self.n_f, self.n_t, self.n_r)

    @property
    def wavelength(self):
        return self.grid.wavelength


def _steering(positions, wavelength, units):
    """Steering vectors for unit directions ``units`` (..., 3); shape (N, ...)."""
    units = np.asarray(units, dtype=float)
    phase = (2.0 * np.pi / wavelength) * np.tensordot(positions, units, axes=([1], [-1]))
    return np.exp(-1j * phase) / math.sqrt(positions.shape[0])


def _delays(offsets, taus):
    taus = np.asarray(taus, dtype=float)
    phase = 2.0 * np.pi * np.multiply.outer(offsets, taus)
    return np.exp(-1j * phase) / math.sqrt(offsets.size)


def steering_vector(array, wavelength, d):
    return _steering(array.positions, wavelength, d.unit)


def delay_vector(grid, tau):
    return _delays(grid.offsets, tau)


def characteristic_vector(cfg, doa, dod, tau):
    """e = e_f(tau) (x) conj(e_t(dod)) (x) e_r(doa), unit norm."""
    ef = delay_vector(cfg.grid, tau)
    et = steering_vector(cfg.tx, cfg.wavelength, dod)
    er = steering_vector(cfg.rx, cfg.wavelength, doa)
    return np.kron(ef, np.kron(et.conj(), er))


def characteristic_matrix(cfg, paths):
    """Columns are the characteristic vectors of ``paths``; shape (N, len(paths))."""
    if not paths:
        return np.zeros((cfg.size, 0), dtype=complex)
    doa = np.array([p.doa.unit for p in paths])
    dod = np.array([p.dod.unit for p in paths])
    tau = np.array([p.delay for p in paths])
    ef = _delays(cfg.grid.offsets, tau)
    et = _steering(cfg.tx.positions, cfg.wavelength, dod).conj()
    er = _steering(cfg.rx.positions, cfg.wavelength, doa)
    cols = np.einsum("fp,tp,rp->ftrp", ef, et, er)
    return cols.reshape(cfg.size, len(paths))


def synthesize_channel(cfg, paths):
    """h = sqrt(N_r N_t N_f) * sum_l gain_l * e(doa_l, dod_l, delay_l)."""
    if not paths:
        return np.zeros(cfg.size, dtype=complex)
    gains = np.array([p.gain for p in paths])
    return math.sqrt(cfg.size) * (characteristic_matrix(cfg, paths) @ gains)


class ObservationModel:
    """Observation matrix M and circular Gaussian noise covariance.

    ``noise`` is either a scalar variance (white noise) or a Hermitian
    positive-definite covariance matrix.
    """

    def __init__(self, matrix, noise=0.0):
        M = np.array(matrix, dtype=complex)
        if M.ndim != 2:
            raise ValueError("observation matrix must be 2-D")
        M.setflags(write=False)
        self.matrix = M
        self._identity = M.shape[0] == M.shape[1] and np.array_equal(M, np.eye(M.shape[0]))
        if np.ndim(noise) == 0:
            s2 = float(noise)
            if s2 < 0 or not math.isfinite(s2):
                raise ValueError("noise variance must be finite and >= 0")
            self.noise_var = s2
            self.noise_cov = None
            self._chol = None
        else:
            S = np.array(noise, dtype=complex)
            if S.shape != (M.shape[0], M.shape[0]):
                raise ValueError(f"noise covariance must be {M.shape[0]}x{M.shape[0]}")
            if np.max(np.abs(S - S.conj().T)) > 1e-12 * max(1.0, np.max(np.abs(S))):
                raise ValueError("noise covariance is not Hermitian")
            S = 0.5 * (S + S.conj().T)
            try:
                self._chol = np.linalg.cholesky(S)
            except np.linalg.LinAlgError:
                raise ValueError("noise covariance is not positive definite") from None
            S.setflags(write=False)
            self.noise_var = None
            self.noise_cov = S

    @property
    def n_meas(self):
        return self.matrix.shape[0]

    @property
    def n_channel(self):
        return self.matrix.shape[1]

    @property
    def is_white(self):
        return self.noise_cov is None

    def with_noise(self, noise):
        return ObservationModel(self.matrix, noise)

    def whiten(self, v):
        """Sigma^{-1} v for a vector or matrix in measurement space."""
        if self.is_white:
            if self.noise_var == 0:
                raise ValueError("noise covariance is singular (zero variance)")
            return v / self.noise_var
        L = self._chol
        return np.linalg.solve(L.conj().T, np.linalg.solve(L, v))

    def precision(self):
        """A = M^H Sigma^{-1} M."""
        M = self.matrix
        return M.conj().T @ self.whiten(M)

    def gram(self):
        """M^H M."""
        return self.matrix.conj().T @ self.matrix

    def apply(self, h):
        if self._identity:
            return np.array(h, dtype=complex)
        return self.matrix @ h

    def is_identity(self):
        return self._identity


def identity_observation(n, noise=0.0):
    return ObservationModel(np.eye(n), noise)


def kronecker_observation(cfg, F, X, W, noise=0.0):
    """M = F (x) X^T (x) W^H for subcarrier selection F, pilots X, combiner W."""
    F = np.atleast_2d(np.asarray(F, dtype=complex))
    X = np.atleast_2d(np.asarray(X, dtype=complex))
    W = np.atleast_2d(np.asarray(W, dtype=complex))
    if F.shape[1] != cfg.n_f:
        raise ValueError(f"F must have {cfg.n_f} columns, got {F.shape[1]}")
    if X.shape[0] != cfg.n_t:
        raise ValueError(f"X must have {cfg.n_t} rows, got {X.shape[0]}")
    if W.shape[1] != cfg.n_r:
        raise ValueError(f"W must have {cfg.n_r} columns, got {W.shape[1]}")
    return ObservationModel(np.kron(F, np.kron(X.T, W.conj().T)), noise)


def build_observation(kind, cfg, noise=0.0, *, F=None, X=None, W=None, M=None):
    """Dispatch on ``kind`` in {"identity", "kronecker", "explicit"}."""
    kind = kind.lower()
    if kind == "identity":
        return identity_observation(cfg.size, noise)
    if kind in ("kronecker", "kronecker_pilot"):
        F = np.eye(cfg.n_f) if F is None else F
        X = np.eye(cfg.n_t) if X is None else X
        W = np.eye(cfg.n_r) if W is None else W
        return kronecker_observation(cfg, F, X, W, noise)
    if kind == "explicit":
        if M is None:
            raise ValueError("explicit observation needs M")
        M = np.asarray(M)
        if M.ndim != 2 or M.shape[1] != cfg.size:
            raise ValueError(f"M must have {cfg.size} columns")
        return ObservationModel(M, noise)
    raise ValueError(f"unknown observation kind {kind!r}")


def circular_noise(rng, shape, var=1.0):
    """CN(0, var) samples: real and imaginary parts each have variance var/2."""
    return math.sqrt(var / 2.0) * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def observe(obs, h, rng):
    """y = M h + n with n ~ CN(0, Sigma)."""
    h = np.asarray(h)
    if h.shape != (obs.n_channel,):
        raise ValueError(f"channel has length {h.size}, observation expects {obs.n_channel}")
    y = obs.apply(h)
    if obs.is_white:
        if obs.noise_var > 0:
            y = y + circular_noise(rng, obs.n_meas, obs.noise_var)
    else:
        y = y + obs._chol @ circular_noise(rng, obs.n_meas)
    return y


def noise_variance_for_snr(clean, snr_db):
    """White-noise variance giving per-entry SNR 10*log10(||Mh||^2 / (N_m sigma^2))."""
    clean = np.asarray(clean)
    if math.isinf(snr_db) and snr_db > 0:
        return 0.0
    return float(np.vdot(clean, clean).real) / (clean.size * 10.0 ** (snr_db / 10.0))


def snr_db(clean, noise_var):
    clean = np.asarray(clean)
    if noise_var == 0:
        return math.inf
    return 10.0 * math.log10(float(np.vdot(clean, clean).real) / (clean.size * noise_var))


def write_vector_csv(v, file):
    """Write a complex vector as ``index,re,im`` rows."""
    own = isinstance(file, (str, bytes)) or hasattr(file, "__fspath__")
    fh = open(file, "w", newline="") if own else file
    try:
        w = csv.writer(fh)
        w.writerow(["index", "re", "im"])
        for i, z in enumerate(np.asarray(v, dtype=complex)):
            w.writerow([i, repr(float(z.real)), repr(float(z.imag))])
    finally:
        if own:
            fh.close()


def read_vector_csv(file):
    own = isinstance(file, (str, bytes)) or hasattr(file, "__fspath__")
    fh = open(file, newline="") if own else file
    try:
        rows = list(csv.reader(fh))
    finally:
        if own:
            fh.close()
    if not rows or [c.strip() for c in rows[0]] != ["index", "re", "im"]:
        raise ValueError("vector CSV header must be 'index,re,im'")
    body = [r for r in rows[1:] if r]
    out = np.zeros(len(body), dtype=complex)
    for lineno, r in enumerate(body, start=2):
        try:
            i, re, im = int(r[0]), float(r[1]), float(r[2])
        except (ValueError, IndexError):
            raise ValueError(f"line {lineno}: malformed vector row {r!r}") from None
        if not 0 <= i < len(body):
            raise ValueError(f"line {lineno}: index {i} out of range")
        out[i] = complex(re, im)
    return out
