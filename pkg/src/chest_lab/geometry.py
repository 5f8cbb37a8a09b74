"""Antenna arrays, subcarrier grids and direction parameterization.

Positions are always stored relative to the array centroid and subcarrier
frequencies relative to the carrier. That convention makes the first-order
terms of every phase expansion vanish, which is what decouples gain, phase,
direction and delay in the Fisher information.
"""

from dataclasses import dataclass
from functools import cached_property
import json
import math

import numpy as np

from .errors import PoleSingularityError

SPEED_OF_LIGHT = 299_792_458.0
TWO_PI = 2.0 * math.pi

# |elevation| closer than this to pi/2 has no usable azimuth tangent
POLE_TOL = 1e-9
# relative sensitivity below which a tangent direction is unidentifiable
SENSITIVITY_TOL = 1e-9


def _unit_from_angles(azimuth, elevation):
    ce = np.cos(elevation)
    return np.stack(
        [ce * np.cos(azimuth), ce * np.sin(azimuth), np.sin(elevation)], axis=-1
    )


@dataclass(frozen=True)
class Direction:
    """A direction on the unit sphere in (azimuth, elevation) radians.

    Azimuth is wrapped into [0, 2*pi); elevation must lie in [-pi/2, pi/2].
    """

    azimuth: float
    elevation: float

    def __post_init__(self):
        az = float(self.azimuth)
        el = float(self.elevation)
        if not (math.isfinite(az) and math.isfinite(el)):
            raise ValueError(f"non-finite direction ({az}, {el})")
        if abs(el) > math.pi / 2:
            raise ValueError(f"elevation {el} outside [-pi/2, pi/2]")
        az = az % TWO_PI
        if az >= TWO_PI:
            az = 0.0
        object.__setattr__(self, "azimuth", az)
        object.__setattr__(self, "elevation", el)

    @cached_property
    def unit(self):
        u = _unit_from_angles(self.azimuth, self.elevation)
        u.setflags(write=False)
        return u

    @classmethod
    def from_unit(cls, vec):
        v = np.asarray(vec, dtype=float)
        n = np.linalg.norm(v)
        if n == 0:
            raise ValueError("zero vector has no direction")
        v = v / n
        el = math.asin(max(-1.0, min(1.0, v[2])))
        az = math.atan2(v[1], v[0])
        return cls(az, el)


X_AXIS = Direction(0.0, 0.0)


class ArrayGeometry:
    """Antenna positions (meters), recentered on their centroid.

    ``recenter=False`` keeps the positions as given; it exists only to
    demonstrate what breaks when the centroid convention is violated.
    """

    def __init__(self, positions, recenter=True):
        pos = np.array(positions, dtype=float)
        if pos.ndim == 1 and pos.size == 3:
            pos = pos.reshape(1, 3)
        if pos.ndim != 2 or pos.shape[1] != 3:
            raise ValueError(f"positions must be an (N, 3) array, got shape {pos.shape}")
        if pos.shape[0] == 0:
            raise ValueError("an array needs at least one antenna")
        if not np.all(np.isfinite(pos)):
            raise ValueError("positions must be finite")
        if recenter:
            pos = pos - pos.mean(axis=0)
        pos.setflags(write=False)
        self.positions = pos
        self.recentered = recenter
        self.radius = float(np.max(np.linalg.norm(pos, axis=1)))

    @property
    def n(self):
        return self.positions.shape[0]

    def __len__(self):
        return self.n

    def __repr__(self):
        return f"ArrayGeometry(n={self.n}, radius={self.radius:.4g})"

    def __eq__(self, other):
        if not isinstance(other, ArrayGeometry):
            return NotImplemented
        return self.recentered == other.recentered and np.array_equal(
            self.positions, other.positions
        )

    __hash__ = None

    @cached_property
    def rank(self):
        """Dimension of the affine span of the antennas (0 to 3)."""
        if self.n == 1:
            return 0
        s = np.linalg.svd(self.positions - self.positions.mean(axis=0), compute_uv=False)
        return int(np.sum(s > 1e-9 * max(self.radius, 1e-300)))

    @cached_property
    def axis(self):
        """Unit vector along a collinear array, sign fixed so the first
        nonzero component is positive. None unless ``rank == 1``."""
        if self.rank != 1:
            return None
        _, _, vt = np.linalg.svd(self.positions - self.positions.mean(axis=0))
        a = vt[0]
        first = a[np.flatnonzero(np.abs(a) > 1e-12)[0]]
        a = a if first > 0 else -a
        a.setflags(write=False)
        return a

    def to_json(self):
        return json.dumps({"positions_m": self.positions.tolist()})

    @classmethod
    def from_json(cls, text, recenter=True):
        data = json.loads(text) if isinstance(text, str) else text
        if "positions_m" not in data:
            raise ValueError("array JSON needs a 'positions_m' field")
        return cls(data["positions_m"], recenter=recenter)


def center(positions):
    """Return an ArrayGeometry whose positions are ``positions`` minus their centroid."""
    if len(positions) == 0:
        raise ValueError("cannot center an empty position list")
    return ArrayGeometry(positions, recenter=True)


def make_ula(n, spacing, axis=(1.0, 0.0, 0.0), wavelength=1.0):
    """Uniform linear array of ``n`` antennas spaced ``spacing`` wavelengths apart."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if spacing <= 0:
        raise ValueError("spacing must be positive")
    if wavelength <= 0:
        raise ValueError("wavelength must be positive")
    ax = np.asarray(axis, dtype=float)
    norm = np.linalg.norm(ax)
    if ax.shape != (3,) or norm == 0:
        raise ValueError("axis must be a nonzero 3-vector")
    ax = ax / norm
    k = np.arange(n) - (n - 1) / 2.0
    return ArrayGeometry(np.outer(k * spacing * wavelength, ax))


class FrequencyGrid:
    """Subcarrier offsets (Hz) around the carrier ``fc``; offsets are recentered."""

    def __init__(self, fc, offsets):
        if fc <= 0:
            raise ValueError("carrier frequency must be positive")
        off = np.array(offsets, dtype=float).ravel()
        if off.size == 0:
            raise ValueError("at least one subcarrier is required")
        off = off - off.mean()
        off.setflags(write=False)
        self.fc = float(fc)
        self.offsets = off
        self.bandwidth = float(off.max() - off.min())
        self.wavelength = SPEED_OF_LIGHT / self.fc

    @property
    def n(self):
        return self.offsets.size

    def __len__(self):
        return self.n

    def __repr__(self):
        return f"FrequencyGrid(fc={self.fc:.4g}, n_f={self.n}, B={self.bandwidth:.4g})"

    @cached_property
    def spacing(self):
        """Smallest gap between adjacent subcarriers (0 for a single carrier)."""
        if self.n == 1:
            return 0.0
        return float(np.min(np.diff(np.sort(self.offsets))))

    def to_json(self):
        return json.dumps({"fc_hz": self.fc, "n_f": self.n, "spacing_hz": self.spacing})

    @classmethod
    def from_json(cls, text):
        data = json.loads(text) if isinstance(text, str) else text
        return make_frequency_grid(data["fc_hz"], int(data["n_f"]), data.get("spacing_hz", 0.0))


def make_frequency_grid(fc, n_f, spacing):
    if n_f < 1:
        raise ValueError("n_f must be >= 1")
    if n_f > 1 and spacing <= 0:
        raise ValueError("spacing must be positive when n_f > 1")
    return FrequencyGrid(fc, np.arange(n_f) * float(spacing if n_f > 1 else 0.0))


@dataclass(frozen=True)
class TangentBasis:
    """Orthonormal tangent vectors at a direction plus which of them the array resolves."""

    b1: np.ndarray
    b2: np.ndarray
    active_mask: tuple

    @property
    def active(self):
        return [b for b, on in zip((self.b1, self.b2), self.active_mask) if on]


def tangent_basis(d, array):
    """Azimuth (b1) and elevation (b2) tangents of ``d``, masked by array sensitivity.

    A tangent is inactive when every antenna is (numerically) orthogonal to
    it. For collinear arrays both tangents can be sensitive yet produce
    proportional phase patterns; only the more sensitive one is kept so the
    per-path Fisher block stays invertible.
    """
    if abs(abs(d.elevation) - math.pi / 2) < POLE_TOL:
        raise PoleSingularityError(
            f"elevation {d.elevation} is at a pole; re-parameterize the direction"
        )
    az, el = d.azimuth, d.elevation
    b1 = np.array([-math.sin(az), math.cos(az), 0.0])
    b2 = np.array([-math.sin(el) * math.cos(az), -math.sin(el) * math.sin(az), math.cos(el)])
    if array.radius == 0:
        return TangentBasis(b1, b2, (False, False))
    s1 = array.positions @ b1
    s2 = array.positions @ b2
    thresh = SENSITIVITY_TOL * array.radius
    m1 = bool(np.max(np.abs(s1)) >= thresh)
    m2 = bool(np.max(np.abs(s2)) >= thresh)
    if m1 and m2:
        sv = np.linalg.svd(np.column_stack([s1, s2]), compute_uv=False)
        if sv[1] < SENSITIVITY_TOL * sv[0]:
            if np.linalg.norm(s1) >= np.linalg.norm(s2):
                m2 = False
            else:
                m1 = False
    return TangentBasis(b1, b2, (m1, m2))


def validity_ratios(tx, rx, grid):
    """The narrowband-array ratios (R_r*B/c, R_t*B/c); both should be << 1."""
    return (rx.radius * grid.bandwidth / SPEED_OF_LIGHT, tx.radius * grid.bandwidth / SPEED_OF_LIGHT)
