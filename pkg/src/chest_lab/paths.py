"""Clustered multipath generator and path-list CSV interchange.

The generator is a light stand-in for a full mmWave channel simulator:
clusters with uniformly spread azimuths and tightly concentrated
elevations, Laplacian intra-cluster angle spread, exponential cluster
delays and an exponentially decaying power profile. Externally produced
path lists can be brought in through the CSV format instead.
"""

from dataclasses import dataclass, fields
import csv
import math

import numpy as np

from .channel import Path
from .errors import PathCSVError
from .geometry import Direction

CSV_HEADER = ["gain_re", "gain_im", "doa_az_rad", "doa_el_rad", "dod_az_rad", "dod_el_rad", "delay_s"]

_EL_LIMIT = math.pi / 2


@dataclass(frozen=True)
class ClusterGenConfig:
    n_clusters_range: tuple = (3, 8)
    subpaths_per_cluster_range: tuple = (10, 15)
    delay_scale: float = 25e-9
    intra_cluster_delay_spread: float = 10e-9
    intra_cluster_angle_spread: float = math.radians(5.0)
    elevation_spread: float = math.radians(5.0)
    total_power: float = 1.0
    seed: int = 0

    def __post_init__(self):
        for name in ("n_clusters_range", "subpaths_per_cluster_range"):
            lo, hi = (int(v) for v in getattr(self, name))
            if lo < 1 or hi < lo:
                raise ValueError(f"{name} must be a non-empty range of positive integers")
            object.__setattr__(self, name, (lo, hi))
        for name in ("delay_scale", "intra_cluster_delay_spread",
                     "intra_cluster_angle_spread", "elevation_spread"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.total_power <= 0:
            raise ValueError("total_power must be positive")
        if self.n_clusters_range[1] * self.subpaths_per_cluster_range[1] > 1000:
            raise ValueError("configuration allows more than 1000 paths")

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown generator options: {sorted(unknown)}")
        return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in data.items()})


def _laplace(rng, scale, size):
    if scale == 0:
        return np.zeros(size)
    return rng.laplace(0.0, scale, size)


def generate_clustered_paths(cfg, rng=None):
    """Draw a random path list; ``rng`` defaults to one seeded from ``cfg.seed``."""
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    n_clusters = int(rng.integers(cfg.n_clusters_range[0], cfg.n_clusters_range[1] + 1))
    sizes = rng.integers(cfg.subpaths_per_cluster_range[0],
                         cfg.subpaths_per_cluster_range[1] + 1, size=n_clusters)

    doa_az, doa_el, dod_az, dod_el, delays = [], [], [], [], []
    for size in sizes:
        size = int(size)
        c_doa_az, c_dod_az = rng.uniform(0.0, 2 * math.pi, 2)
        c_doa_el, c_dod_el = rng.normal(0.0, 1.0, 2) * cfg.elevation_spread
        c_delay = rng.exponential(cfg.delay_scale) if cfg.delay_scale > 0 else 0.0
        s = cfg.intra_cluster_angle_spread
        doa_az.append(c_doa_az + _laplace(rng, s, size))
        doa_el.append(c_doa_el + _laplace(rng, s, size))
        dod_az.append(c_dod_az + _laplace(rng, s, size))
        dod_el.append(c_dod_el + _laplace(rng, s, size))
        delays.append(c_delay + rng.uniform(0.0, 1.0, size) * cfg.intra_cluster_delay_spread)

    doa_az, doa_el, dod_az, dod_el, delays = (
        np.concatenate(v) for v in (doa_az, doa_el, dod_az, dod_el, delays)
    )
    doa_el = np.clip(doa_el, -_EL_LIMIT, _EL_LIMIT)
    dod_el = np.clip(dod_el, -_EL_LIMIT, _EL_LIMIT)

    if cfg.delay_scale > 0:
        mags = np.exp(-delays / (2.0 * cfg.delay_scale))
    else:
        mags = np.ones_like(delays)
    mags *= math.sqrt(cfg.total_power / np.sum(mags**2))
    phases = rng.uniform(0.0, 2 * math.pi, delays.size)
    gains = mags * np.exp(1j * phases)

    return [
        Path(complex(g), Direction(a1, e1), Direction(a2, e2), float(t))
        for g, a1, e1, a2, e2, t in zip(gains, doa_az, doa_el, dod_az, dod_el, delays)
    ]


def _open(file, mode):
    if isinstance(file, (str, bytes)) or hasattr(file, "__fspath__"):
        return open(file, mode, newline=""), True
    return file, False


def export_paths_csv(paths, file):
    fh, own = _open(file, "w")
    try:
        w = csv.writer(fh)
        w.writerow(CSV_HEADER)
        for p in paths:
            w.writerow([repr(v) for v in (
                p.gain.real, p.gain.imag, p.doa.azimuth, p.doa.elevation,
                p.dod.azimuth, p.dod.elevation, p.delay)])
    finally:
        if own:
            fh.close()


def import_paths_csv(file):
    fh, own = _open(file, "r")
    try:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != CSV_HEADER:
            raise PathCSVError(f"header must be exactly {','.join(CSV_HEADER)}", line=1)
        paths = []
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(CSV_HEADER):
                raise PathCSVError(f"expected {len(CSV_HEADER)} fields, got {len(row)}", line)
            try:
                vals = [float(c) for c in row]
            except ValueError:
                raise PathCSVError(f"non-numeric field in {row!r}", line) from None
            g_re, g_im, a_az, a_el, d_az, d_el, tau = vals
            if abs(a_el) > _EL_LIMIT or abs(d_el) > _EL_LIMIT:
                raise PathCSVError("elevation outside [-pi/2, pi/2]", line)
            try:
                paths.append(Path(complex(g_re, g_im), Direction(a_az, a_el),
                                  Direction(d_az, d_el), tau))
            except ValueError as exc:
                raise PathCSVError(str(exc), line) from None
        return paths
    finally:
        if own:
            fh.close()
