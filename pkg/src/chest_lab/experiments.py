"""Monte Carlo harness for the bias and joint-vs-sequential tradeoff studies.

Every trial draws its randomness from generators seeded by
``(master_seed, trial, stream, ...)``, so results do not depend on the
order in which trials execute. Rows are always written in trial order.
Only the ``time_s`` column and the timing summary vary between runs.
"""

from concurrent.futures import ProcessPoolExecutor
import csv
import logging
import math
import os
from pathlib import Path as FsPath

import numpy as np

from .channel import identity_observation, noise_variance_for_snr, circular_noise, synthesize_channel
from .estimator import DictionaryGrid, GreedyEstimator, relative_error
from .paths import generate_clustered_paths, import_paths_csv, ClusterGenConfig

log = logging.getLogger(__name__)

BIAS_COLUMNS = ["scenario", "p", "trial", "rel_error"]
BIAS_MEAN_COLUMNS = ["scenario", "p", "mean_rel_error"]
TRADEOFF_COLUMNS = ["S", "snr_db", "p", "method", "trial", "rel_error", "time_s"]
TRADEOFF_MEAN_COLUMNS = ["S", "snr_db", "p", "method", "mean_rel_error", "mean_time_s"]
TIMING_COLUMNS = ["S", "t_joint_s", "t_seq_s", "ratio"]

# seed streams
_PATHS, _NOISE = 0, 1


def trial_rng(master_seed, trial, *stream):
    return np.random.default_rng(np.random.SeedSequence([int(master_seed), int(trial), *stream]))


def worker_count(cfg):
    env = os.environ.get("CHEST_LAB_WORKERS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ValueError(f"CHEST_LAB_WORKERS must be an integer, got {env!r}") from None
    return max(1, int(cfg.workers))


def _map_trials(fn, args, workers):
    if workers <= 1 or len(args) <= 1:
        return [fn(a) for a in args]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, args))


def fmt(v):
    if isinstance(v, float):
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    return str(v)


def _write_csv(path, header, rows):
    path = FsPath(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(v) for v in r])
    return path


def scenario_paths(scenario, generator, master_seed, trial, _cache={}):
    """Physical paths for one trial of one scenario."""
    if scenario.paths_csv:
        key = os.path.abspath(scenario.paths_csv)
        if key not in _cache:
            _cache[key] = import_paths_csv(scenario.paths_csv)
        return _cache[key]
    gen = generator
    if scenario.generator:
        gen = ClusterGenConfig.from_dict({**_gen_dict(generator), **scenario.generator})
    return generate_clustered_paths(gen, trial_rng(master_seed, trial, _PATHS))


def _gen_dict(g):
    return {k: getattr(g, k) for k in g.__dataclass_fields__}


# --------------------------------------------------------------------------
# bias


def _bias_series(cfg):
    """(label, scenario, S, method) for every curve of the bias experiment."""
    out = []
    many_s = len(cfg.oversampling_values) > 1
    many_m = len(cfg.methods()) > 1
    for sc in cfg.scenarios:
        for S in cfg.oversampling_values:
            for method in cfg.methods():
                label = sc.name
                if many_s:
                    label += f"/S={S}"
                if many_m:
                    label += f"/{method}"
                out.append((label, sc, S, method))
    return out


_ESTIMATORS = {}


def _estimator(key, cfg_builder):
    est = _ESTIMATORS.get(key)
    if est is None:
        est = cfg_builder()
        _ESTIMATORS.clear() if len(_ESTIMATORS) > 16 else None
        _ESTIMATORS[key] = est
    return est


def _bias_trial(args):
    cfg, trial = args
    p_max = cfg.p_values[-1]
    rows = []
    for label, sc, S, method in _bias_series(cfg):
        ch = sc.channel_config()
        est = _estimator(
            (cfg.name, sc.name, S),
            lambda: GreedyEstimator(ch, DictionaryGrid.build(ch, S), identity_observation(ch.size)),
        )
        h = synthesize_channel(ch, scenario_paths(sc, cfg.generator, cfg.master_seed, trial))
        res = est.run(h, p_max, method, cfg.order)
        for p in cfg.p_values:
            rows.append((label, p, trial, relative_error(h, res.history[p - 1])))
    return rows


def run_bias_experiment(cfg, output_dir=None):
    """Approximate model bias: greedy projection of the noiseless channel (M = Id).

    Writes ``bias.csv`` (one row per scenario, p, trial) and
    ``bias_mean.csv``; returns their paths.
    """
    out = FsPath(output_dir or cfg.output_dir)
    trials = list(range(cfg.n_trials))
    per_trial = _map_trials(_bias_trial, [(cfg, t) for t in trials], worker_count(cfg))
    rows = [r for tr in per_trial for r in tr]
    raw = _write_csv(out / "bias.csv", BIAS_COLUMNS, rows)

    acc = {}
    for label, p, _, err in rows:
        acc.setdefault((label, p), []).append(err)
    order = [s[0] for s in _bias_series(cfg)]
    mean_rows = [(label, p, float(np.mean(acc[(label, p)]))) for label in order for p in cfg.p_values]
    mean = _write_csv(out / "bias_mean.csv", BIAS_MEAN_COLUMNS, mean_rows)
    log.info("bias experiment %s: %d rows -> %s", cfg.name, len(rows), raw)
    return {"raw": raw, "mean": mean}


# --------------------------------------------------------------------------
# joint vs. sequential tradeoff


def _tradeoff_trial(args):
    cfg, trial = args
    p_max = cfg.p_values[-1]
    sc = cfg.scenarios[0]
    ch = sc.channel_config()
    obs = identity_observation(ch.size)
    h = synthesize_channel(ch, scenario_paths(sc, cfg.generator, cfg.master_seed, trial))
    ys = []
    for k, snr in enumerate(cfg.snr_db_values):
        var = noise_variance_for_snr(h, snr)
        noise = circular_noise(trial_rng(cfg.master_seed, trial, _NOISE, k), ch.size, var)
        ys.append(h + noise)
    rows = []
    for S in cfg.oversampling_values:
        est = _estimator(
            (cfg.name, sc.name, S),
            lambda: GreedyEstimator(ch, DictionaryGrid.build(ch, S), obs),
        )
        for snr, y in zip(cfg.snr_db_values, ys):
            for method in cfg.methods():
                res = est.run(y, p_max, method, cfg.order)
                elapsed = np.cumsum(res.extraction_times)
                for p in cfg.p_values:
                    err = relative_error(h, res.history[p - 1])
                    rows.append((S, snr, p, method, trial, err, float(elapsed[p - 1])))
    return rows


def run_tradeoff_experiment(cfg, output_dir=None):
    """Error of joint and sequential extraction on noisy observations.

    Uses the first scenario, M = Id and white noise at each requested
    per-entry SNR (``inf`` gives the noiseless bias reference). Writes
    ``tradeoff.csv``, ``tradeoff_mean.csv`` and ``timing.csv``.
    """
    if not cfg.snr_db_values:
        raise ValueError("tradeoff experiment needs snr_db_values")
    out = FsPath(output_dir or cfg.output_dir)
    trials = list(range(cfg.n_trials))
    per_trial = _map_trials(_tradeoff_trial, [(cfg, t) for t in trials], worker_count(cfg))
    rows = [r for tr in per_trial for r in tr]
    raw = _write_csv(out / "tradeoff.csv", TRADEOFF_COLUMNS, rows)

    acc = {}
    for S, snr, p, method, _, err, t in rows:
        acc.setdefault((S, snr, p, method), []).append((err, t))
    mean_rows = []
    for (S, snr, p, method), vals in acc.items():
        v = np.array(vals)
        mean_rows.append((S, snr, p, method, float(v[:, 0].mean()), float(v[:, 1].mean())))
    mean = _write_csv(out / "tradeoff_mean.csv", TRADEOFF_MEAN_COLUMNS, mean_rows)

    files = {"raw": raw, "mean": mean}
    if set(cfg.methods()) == {"joint", "sequential"}:
        p_max = cfg.p_values[-1]
        timing_rows = []
        for S in cfg.oversampling_values:
            # cumulative time at p_max, averaged, divided by the extraction count
            tj = np.mean([t for (s, _, p, m), vals in acc.items() if s == S and p == p_max
                          and m == "joint" for _, t in vals]) / p_max
            ts = np.mean([t for (s, _, p, m), vals in acc.items() if s == S and p == p_max
                          and m == "sequential" for _, t in vals]) / p_max
            timing_rows.append((S, float(tj), float(ts), float(tj / ts)))
        files["timing"] = _write_csv(out / "timing.csv", TIMING_COLUMNS, timing_rows)
    log.info("tradeoff experiment %s: %d rows -> %s", cfg.name, len(rows), raw)
    return files


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
