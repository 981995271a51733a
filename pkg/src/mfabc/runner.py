"""Experiment runner behind the command line.

Builds the model and sampler from a validated config, runs the replicates
and writes, per replicate, ``ensemble.csv``, ``trace.csv`` and
``summary.json`` (plus figures), and a ``manifest.json`` from which the run
can be repeated. Output is staged in a sibling directory and moved into
place only when every replicate succeeded.
"""

from __future__ import annotations

import csv
import json
import shutil
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from mfabc import config as cfgmod
from mfabc.abc_is import ISConfig, run_prefilter_is
from mfabc.asmc import AsmcConfig, run_asmc
from mfabc.core import Ensemble
from mfabc.diagnostics import TOY_GRID, abc_mcmc, kl_binned, kl_divergence, toy_exact_abc_posterior
from mfabc.errors import ConfigError, MetricUnavailable
from mfabc.kernels import GaussianRandomWalk, GridRandomWalk
from mfabc.maps import MapsConfig, run_maps
from mfabc.models import grid, kuramoto, ou, toy
from mfabc.models.base import parallel_map

PARAM_NAMES = {
    "toy": ["theta"],
    "grid": ["theta"],
    "ou": ["mu", "sigma", "gamma", "mu_offset"],
    "kuramoto": ["K", "omega0", "gamma"],
}
TRACE_COLUMNS = {
    "asmc": ["iteration", "epsilon", "ess", "pa", "resampled", "hf_calls", "mh_accept_rate"],
    "maps": ["iteration", "epsilon", "eps_aux", "eps_lower", "clamp_bound", "ess", "pa", "resampled",
             "hf_calls", "lf_calls", "prefilter_rejects", "mh_accept_rate"],
    "is": ["iteration", "epsilon", "eps_aux", "ess", "survivors", "hf_calls", "lf_calls"],
    "mcmc-reference": ["chains", "iterations_per_chain", "kept_per_chain", "epsilon", "accept_rate", "hf_calls"],
}
COMPARE_COLUMNS = ["method", "y_obs", "kl", "ess", "hf_calls", "wall_time", "replicate"]
COMPARE_METRICS = ("kl", "ess", "hf_calls", "lf_calls", "wall_time")


@dataclass
class ReplicateResult:
    index: int
    seed: int
    ensemble: Ensemble
    trace: list
    hf_calls: int
    lf_calls: int
    wall_time: float
    iteration_wall_time: list


# ---------------------------------------------------------------- models


def read_observed(path) -> np.ndarray:
    """Observed-data CSV written by ``gen-observed``; returns the value columns."""
    try:
        data = np.genfromtxt(path, delimiter=",", names=True)
    except OSError as exc:
        raise ConfigError(f"cannot read observed data: {exc}", field="model.observed_file") from exc
    return np.column_stack([data[n] for n in data.dtype.names if n != "t"])


def observed_data(model: dict):
    name = model["name"]
    if name == "ou":
        if "observed_file" in model:
            return read_observed(model["observed_file"])[:, 0]
        return ou.observed_trajectory(model["observed_seed"])
    if name == "kuramoto":
        if "observed_file" in model:
            cols = read_observed(model["observed_file"])
            return cols[:, 0], cols[:, 1]
        return kuramoto.observed_data(model["observed_seed"])
    return np.array([float(model["y_obs"])])


def build_model(model: dict, threads: int = 1):
    """Return ``(pair, prior, kernel)`` for a validated model section."""
    name = model["name"]
    if name == "toy":
        return toy.toy_pair(model["y_obs"], threads), toy.toy_prior(), GaussianRandomWalk()
    if name == "grid":
        kernel = GridRandomWalk(float(grid.GRID[1] - grid.GRID[0]))
        return grid.grid_pair(int(model["y_obs"]), threads), grid.grid_prior(), kernel
    if name == "ou":
        obs = observed_data(model)
        return ou.ou_pair(obs, threads, model["s1_divisor"]), ou.ou_prior(), GaussianRandomWalk()
    R, Phi = observed_data(model)
    pair = kuramoto.kuramoto_pair(R, Phi, threads, tuple(model["window"]))
    return pair, kuramoto.kuramoto_prior(), GaussianRandomWalk()


# ---------------------------------------------------------------- sampling


def _iteration_times(trace):
    return [row.pop("wall_time") for row in trace if "wall_time" in row]


def run_replicate(config: dict, index: int, threads: int = 1) -> ReplicateResult:
    s = config["sampler"]
    seed = config["output"]["seed"] + index
    pair, prior, kernel = build_model(config["model"], threads)
    method = s["method"]
    start = time.perf_counter()
    if method == "asmc":
        c = AsmcConfig(s["n_particles"], s["n_hf"], s["alpha"], s["eps_target"], s["ess_fraction"],
                       s["mcmc_moves"], s["kernel_scale"], s["resampling"], s["max_iterations"])
        kernel.scale = s["kernel_scale"]
        res = run_asmc(c, pair, prior, seed, kernel)
        trace = [dict(r) for r in res.trace]
        times = _iteration_times(trace)
        return ReplicateResult(index, seed, res.ensemble, trace, res.hf_calls, res.lf_calls,
                               res.wall_time, times)
    if method == "maps":
        c = MapsConfig(s["n_particles"], s["n_hf"], s["n_lf"], s["alpha"], s["alpha_lf"], s["a_lf"],
                       s["eps_target"], s["ess_fraction"], s["mcmc_moves"], s["kernel_scale"],
                       s["resampling"], s["max_iterations"], s["defer_hf"])
        kernel.scale = s["kernel_scale"]
        res = run_maps(c, pair, prior, seed, kernel)
        trace = [dict(r) for r in res.trace]
        times = _iteration_times(trace)
        return ReplicateResult(index, seed, res.ensemble, trace, res.hf_calls, res.lf_calls,
                               res.wall_time, times)
    if method == "is":
        c = ISConfig(s["n_particles"], s["n_lf"], s["n_hf"], s["eps_target"], s["eps_lf"])
        res = run_prefilter_is(c, pair, prior, seed)
        elapsed = time.perf_counter() - start
        row = {"iteration": 1, "epsilon": s["eps_target"], "eps_aux": s["eps_lf"], "ess": res.ensemble.ess(),
               "survivors": int(res.survived.sum()), "hf_calls": res.hf_calls, "lf_calls": res.lf_calls}
        return ReplicateResult(index, seed, res.ensemble, [row], res.hf_calls, res.lf_calls, elapsed, [elapsed])
    samples, rate = abc_mcmc(pair, prior, s["eps_target"], s["n_hf"], s["n_iter"], s["n_chains"], seed,
                             s["burn_in"])
    elapsed = time.perf_counter() - start
    n = len(samples)
    ens = Ensemble(samples, np.full(n, 1.0 / n), np.full((n, 0), np.nan))
    row = {"chains": s["n_chains"], "iterations_per_chain": s["n_iter"], "kept_per_chain": n // s["n_chains"],
           "epsilon": s["eps_target"], "accept_rate": rate, "hf_calls": pair.hf_calls}
    return ReplicateResult(index, seed, ens, [row], pair.hf_calls, pair.lf_calls, elapsed, [elapsed])


def reference_for(config: dict):
    """``(kind, payload)``: analytic grid density, reference samples, or nothing."""
    ref = config["output"]["reference"]
    if ref == "none":
        return None, None
    if ref == "analytic":
        y = config["model"]["y_obs"]
        return "grid", toy_exact_abc_posterior(y, config["sampler"]["eps_target"], TOY_GRID)
    path = Path(ref)
    if path.is_dir():
        path = path / "ensemble.csv"
    try:
        data = np.genfromtxt(path, delimiter=",", names=True)
    except OSError as exc:
        raise ConfigError(f"cannot read reference samples: {exc}", field="output.reference") from exc
    names = PARAM_NAMES[config["model"]["name"]]
    return "samples", np.column_stack([data[n] for n in names])


def compute_kl(ens: Ensemble, kind, payload):
    if kind == "grid":
        return kl_binned(ens.theta, ens.weights, TOY_GRID, payload)
    if kind == "samples":
        return kl_divergence(ens.theta, ens.weights, reference=payload)
    return None


# ---------------------------------------------------------------- output


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def write_csv(path, columns, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(x) for x in row])


def write_replicate(directory: Path, config: dict, rep: ReplicateResult, kl, figures: bool) -> list[str]:
    directory.mkdir(parents=True, exist_ok=True)
    names = PARAM_NAMES[config["model"]["name"]]
    ens = rep.ensemble
    write_csv(directory / "ensemble.csv", names + ["weight"],
              [list(ens.theta[i]) + [ens.weights[i]] for i in range(ens.size)])
    cols = TRACE_COLUMNS[config["sampler"]["method"]]
    write_csv(directory / "trace.csv", cols, [[row[c] for c in cols] for row in rep.trace])
    summary = {
        "method": config["sampler"]["method"],
        "model": config["model"]["name"],
        "y_obs": config["model"].get("y_obs"),
        "replicate": rep.index,
        "seed": rep.seed,
        "iterations": len(rep.trace),
        "final_epsilon": rep.trace[-1].get("epsilon"),
        "kl": kl,
        "kl_estimator": None if kl is None else ("binned-200" if config["output"]["reference"] == "analytic"
                                                 else "knn-5"),
        "ess": ens.ess(),
        "hf_calls": rep.hf_calls,
        "lf_calls": rep.lf_calls,
        "wall_time": rep.wall_time,
        "iteration_wall_time": rep.iteration_wall_time,
        "posterior_mean": ens.mean().tolist(),
    }
    (directory / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    files = ["ensemble.csv", "trace.csv", "summary.json"]
    if figures:
        from mfabc import plotting

        files += plotting.replicate_figures(directory, config, rep, names)
    return files


def _stage(out: Path) -> Path:
    out.parent.mkdir(parents=True, exist_ok=True)
    return Path(tempfile.mkdtemp(prefix=f".{out.name}.partial-", dir=out.parent))


def _commit(stage: Path, out: Path):
    if out.exists():
        shutil.rmtree(out)
    stage.rename(out)


def run(config: dict, out=None) -> Path:
    """Run every replicate of ``config`` and return the output directory."""
    cfgmod.check_run(config)
    out = Path(out if out is not None else config["output"]["dir"])
    threads = config["output"]["threads"]
    n_rep = config["output"]["replicates"]
    kind, payload = reference_for(config)
    stage = _stage(out)
    try:
        # replicates share the worker budget; a lone replicate parallelises inside
        inner = threads if n_rep == 1 else 1
        reps = parallel_map(lambda r: run_replicate(config, r, inner), list(range(n_rep)),
                            threads if n_rep > 1 else 1)
        files = []
        for rep in reps:
            sub = f"replicate_{rep.index:03d}"
            kl = compute_kl(rep.ensemble, kind, payload)
            files += [f"{sub}/{f}" for f in write_replicate(stage / sub, config, rep, kl,
                                                            config["output"]["figures"])]
        (stage / "manifest.json").write_text(cfgmod.dumps_manifest(config, files + ["manifest.json"]))
        _commit(stage, out)
    except BaseException:
        shutil.rmtree(stage, ignore_errors=True)
        raise
    return out


# ---------------------------------------------------------------- comparison


def load_summaries(run_dir) -> list[dict]:
    run_dir = Path(run_dir)
    paths = sorted(run_dir.glob("replicate_*/summary.json"))
    if not paths:
        raise ConfigError(f"no replicate summaries under {run_dir}", field="compare")
    return [json.loads(p.read_text()) for p in paths]


def compare_rows(summaries_a, summaries_b, metrics=COMPARE_METRICS):
    """Per-replicate rows and the relative change of B against A per metric."""
    for m in metrics:
        if m not in COMPARE_METRICS:
            raise MetricUnavailable(f"unknown metric '{m}'")
        for s in summaries_a + summaries_b:
            if s.get(m) is None:
                raise MetricUnavailable(f"metric '{m}' was not recorded for {s['method']} "
                                        f"replicate {s['replicate']} (no reference?)")
    rows = [[s["method"], s.get("y_obs"), s.get("kl"), s["ess"], s["hf_calls"], s["wall_time"], s["replicate"]]
            for s in summaries_a + summaries_b]
    changes = []
    for m in metrics:
        a = float(np.mean([s[m] for s in summaries_a]))
        b = float(np.mean([s[m] for s in summaries_b]))
        pct = 0.0 if a == b else (100.0 * (b - a) / a if a != 0 else float("inf"))
        changes.append([m, a, b, pct])
    return rows, changes


def _fmt_cell(v):
    if v is None:
        return ""
    if isinstance(v, str):
        return v
    return _fmt(v)


def compare(dir_a, dir_b, out, metrics=COMPARE_METRICS) -> Path:
    rows, changes = compare_rows(load_summaries(dir_a), load_summaries(dir_b), metrics)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "comparison.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COMPARE_COLUMNS)
        for r in rows:
            w.writerow([_fmt_cell(x) for x in r])
    with open(out / "relative_change.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["metric", "mean_a", "mean_b", "change_pct"])
        for r in changes:
            w.writerow([_fmt_cell(x) for x in r])
    return out
