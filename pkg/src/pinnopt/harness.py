"""Config-driven experiment runner, random-search tuner, and Nyström benchmark.

A run loops: sample a fresh collocation batch, assemble the residual
system, compute the optimizer direction (exact or sketched kernel solve),
pick a step size (grid line search or fixed), update, and log metrics at
the configured cadence until the step or wall-clock budget is exhausted.
Non-finite losses end the run with a recorded "diverged" status instead
of raising.
"""

from __future__ import annotations

import csv
import json
import math
import subprocess
import time
import tracemalloc
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .config import RunConfig, SearchSpace
from .mlp import MlpArchitecture, init_params
from .nystrom import (
    effective_dimension,
    kernel_spectrum,
    nystrom_gpu_efficient,
    nystrom_inv_apply,
    nystrom_stable_factors,
    nystrom_stable_inv_apply,
)
from .optim import (
    AdamState,
    IndefiniteKernelError,
    OptimizerState,
    adam_step,
    constrained_update,
    kernel_with_retry,
    line_search,
    sgd_step,
    spring_step,
)
from .problems import assemble_residual, batch_loss, eval_points, l2_error, make_problem, sample_batch

CSV_COLUMNS = (
    "step", "wall_time_s", "train_loss", "l2_error", "eta_used",
    "phi_norm", "d_eff", "seed", "optimizer",
)


@dataclass
class MetricsRecord:
    step: int
    wall_time_s: float
    train_loss: float
    l2_error: float
    eta_used: float
    phi_norm: float
    d_eff: Optional[float]
    seed: int
    optimizer: str

    def row(self) -> list:
        d_eff = "" if self.d_eff is None else repr(self.d_eff)
        return [self.step, repr(self.wall_time_s), repr(self.train_loss),
                repr(self.l2_error), repr(self.eta_used), repr(self.phi_norm),
                d_eff, self.seed, self.optimizer]


@dataclass
class RunResult:
    records: list[MetricsRecord]
    summary: dict
    csv_path: Optional[Path] = None
    summary_path: Optional[Path] = None


def _build_id() -> str:
    try:
        out = subprocess.run(["git", "rev-parse", "--short", "HEAD"],
                             capture_output=True, text=True, timeout=5)
        if out.returncode == 0:
            return out.stdout.strip()
    except OSError:
        pass
    return "unknown"


def _should_log(step: int, metric_every: int) -> bool:
    if metric_every > 0:
        return step % metric_every == 0
    return step <= 1000 or step % 10 == 0


def run_experiment(config: RunConfig, out_dir: Optional[str | Path] = None) -> RunResult:
    """Train per the config; write metrics.csv and summary.json when out_dir is set."""
    config.validate()
    problem = make_problem(config.problem)
    params = init_params(MlpArchitecture(tuple(config.arch)), config.seed_params)

    batch_seq, eval_seq = np.random.SeedSequence(config.seed_batches).spawn(2)
    batch_rng = np.random.default_rng(batch_seq)
    eval_rng = np.random.default_rng(eval_seq)
    sketch_rng = np.random.default_rng(config.seed_sketch)
    eval_set = eval_points(problem, eval_rng, config.eval_points)

    spring_state = OptimizerState.initial(
        params.arch.n_params, mu=config.momentum, lam=config.damping,
        norm_constraint=config.norm_constraint,
    )
    sgd_buffer = np.zeros(params.arch.n_params)
    adam_state = AdamState.initial(params.arch.n_params)

    records: list[MetricsRecord] = []
    start = time.perf_counter()
    status = "ok"

    def log(step, train_loss, eta, phi_norm, d_eff=None):
        records.append(MetricsRecord(
            step=step, wall_time_s=time.perf_counter() - start,
            train_loss=float(train_loss),
            l2_error=l2_error(problem, params, eval_set),
            eta_used=float(eta), phi_norm=float(phi_norm), d_eff=d_eff,
            seed=config.seed_batches, optimizer=config.optimizer,
        ))

    probe = _sample(problem, batch_rng, config)
    log(0, batch_loss(problem, params, probe), 0.0, 0.0)
    last = {"loss": records[0].train_loss, "eta": 0.0, "phi_norm": 0.0}

    step = 0
    while True:
        if config.max_steps is not None and step >= config.max_steps:
            break
        if config.max_seconds is not None and time.perf_counter() - start >= config.max_seconds:
            break
        step += 1
        batch = _sample(problem, batch_rng, config)

        with np.errstate(over="ignore", invalid="ignore"):
            system = assemble_residual(problem, params, batch)
            if not math.isfinite(system.loss):
                status = "diverged"
                log(step, system.loss, 0.0, 0.0)
                break

            want_deff = config.deff_every > 0 and step % config.deff_every == 0
            d_eff = None
            try:
                if config.optimizer in ("engd_w", "spring"):
                    solve, kernel = _kernel_solver(system.jac, config, sketch_rng)
                    if config.optimizer == "engd_w":
                        phi = system.jac.T @ solve(system.r)
                    else:
                        phi, spring_state = spring_step(spring_state, system.jac,
                                                        system.r, solve=solve)
                    if want_deff:
                        d_eff = _effective_dimension_diag(system.jac, kernel,
                                                          config.damping)
                    if not np.all(np.isfinite(phi)) or not np.any(phi):
                        eta = 0.0
                    else:
                        if config.line_search:
                            result = line_search(
                                lambda t: batch_loss(problem, params.replace_theta(t),
                                                     batch),
                                params.theta, phi,
                            )
                            eta = result.eta
                        else:
                            eta = config.lr
                        if config.optimizer == "spring":
                            theta = constrained_update(params.theta, phi, eta,
                                                       config.norm_constraint)
                        else:
                            theta = params.theta - eta * phi
                        params = params.replace_theta(theta)
                    phi_norm = float(np.linalg.norm(phi))
                else:
                    grad = system.jac.T @ system.r
                    if config.optimizer == "sgd":
                        theta, sgd_buffer = sgd_step(params.theta, grad, config.lr,
                                                     config.momentum, sgd_buffer)
                        phi_norm = float(np.linalg.norm(sgd_buffer))
                    else:
                        theta, adam_state = adam_step(params.theta, grad, config.lr,
                                                      adam_state)
                        phi_norm = float(np.linalg.norm(theta - params.theta)) / config.lr
                    eta = config.lr
                    params = params.replace_theta(theta)
                    if want_deff:
                        d_eff = _effective_dimension_diag(system.jac, None,
                                                          config.damping)
            except IndefiniteKernelError:
                status = "diverged"
                step -= 1  # the failed iteration applied no update
                break

        last = {"loss": system.loss, "eta": eta, "phi_norm": phi_norm}
        if _should_log(step, config.metric_every):
            log(step, system.loss, eta, phi_norm, d_eff)

    if records[-1].step != step:
        # always close the log with the final state
        log(step, last["loss"], last["eta"], last["phi_norm"])

    l2_values = [r.l2_error for r in records]
    summary = {
        "status": status,
        "steps": step,
        "seconds": time.perf_counter() - start,
        "final_loss": records[-1].train_loss,
        "final_l2": records[-1].l2_error,
        "best_l2": min(l2_values),
        "l2_relative": l2_error(problem, params, eval_set, detail=True)[1],
        "config": config.to_dict(),
        "build_id": _build_id(),
    }

    result = RunResult(records=records, summary=summary)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        result.csv_path = out / "metrics.csv"
        with open(result.csv_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(CSV_COLUMNS)
            writer.writerows(r.row() for r in records)
        result.summary_path = out / "summary.json"
        with open(result.summary_path, "w") as fh:
            json.dump(summary, fh, indent=2)
    return result


def _sample(problem, rng, config: RunConfig):
    return sample_batch(problem, rng, config.n_interior, config.n_boundary,
                        config.weight_interior, config.weight_boundary)


def _kernel_solver(jac: np.ndarray, config: RunConfig, sketch_rng
                   ) -> tuple[Callable[[np.ndarray], np.ndarray], Optional[np.ndarray]]:
    """Exact or sketched solver for (K + lam I)^{-1}; returns K when it was formed."""
    n = jac.shape[0]
    if not config.rand_enabled:
        system = kernel_with_retry(jac, config.damping)
        return system.solve, system.kernel
    sketch_size = max(1, min(n, int(config.rand_sketch_frac * n)))
    if config.rand_variant == "gpu_efficient":
        approx = nystrom_gpu_efficient(
            lambda block: jac @ (jac.T @ block), n, sketch_size, config.damping,
            rng=sketch_rng,
        )
        return (lambda v: nystrom_inv_apply(approx, v)), None
    kernel = jac @ jac.T
    kernel = 0.5 * (kernel + kernel.T)
    factors = nystrom_stable_factors(kernel, sketch_size, rng=sketch_rng)
    return (lambda v: nystrom_stable_inv_apply(factors, config.damping, v)), kernel


def _effective_dimension_diag(jac, kernel, damping) -> Optional[float]:
    try:
        if kernel is None:
            kernel = jac @ jac.T
            kernel = 0.5 * (kernel + kernel.T)
        return effective_dimension(kernel_spectrum(kernel), damping)
    except (np.linalg.LinAlgError, ValueError):
        return None  # diagnostic failure; the run continues without this sample


# ---------------------------------------------------------------------------
# two-stage random search


@dataclass
class TrialRecord:
    stage: int
    index: int
    overrides: dict
    status: str
    final_l2: float
    best_l2: float
    steps: int
    seconds: float


@dataclass
class SearchResult:
    status: str  # "ok" | "all_diverged"
    ranking: list[TrialRecord]
    attempted: int


def _apply_overrides(config: RunConfig, overrides: dict) -> RunConfig:
    known = set(config.to_dict())
    unknown = set(overrides) - known
    if unknown:
        raise ValueError(f"search space names unknown config fields: {sorted(unknown)}")
    return config.replace(**overrides)


def random_search(space: SearchSpace, base: RunConfig, rng: np.random.Generator,
                  out_dir: Optional[str | Path] = None) -> SearchResult:
    """Two-stage random search ranked by final L2 error.

    Stage one samples the given ranges; stage two re-centers each range
    around the stage-one best (one decade either side for log-uniform,
    clipped to the original bounds) and samples again. Diverged or failed
    trials rank last; they never crash the search.
    """
    trials: list[TrialRecord] = []

    def run_stage(stage: int, stage_space: SearchSpace):
        for index in range(stage_space.trials_per_stage):
            overrides = stage_space.sample(rng)
            trial_dir = None
            if out_dir is not None:
                trial_dir = Path(out_dir) / f"stage{stage}_trial{index:03d}"
            try:
                result = run_experiment(_apply_overrides(base, overrides), trial_dir)
                record = TrialRecord(
                    stage=stage, index=index, overrides=overrides,
                    status=result.summary["status"],
                    final_l2=result.summary["final_l2"],
                    best_l2=result.summary["best_l2"],
                    steps=result.summary["steps"],
                    seconds=result.summary["seconds"],
                )
            except Exception as exc:  # a broken trial must not kill the search
                record = TrialRecord(stage=stage, index=index, overrides=overrides,
                                     status=f"failed: {exc}", final_l2=math.inf,
                                     best_l2=math.inf, steps=0, seconds=0.0)
            trials.append(record)

    run_stage(1, space)
    finished = [t for t in trials if t.status == "ok" and math.isfinite(t.final_l2)]
    if finished:
        best = min(finished, key=lambda t: t.final_l2)
        run_stage(2, space.narrowed(best.overrides))

    finished = [t for t in trials if t.status == "ok" and math.isfinite(t.final_l2)]
    if not finished:
        result = SearchResult(status="all_diverged", ranking=[], attempted=len(trials))
    else:
        failed = [t for t in trials if t not in finished]
        ranking = sorted(finished, key=lambda t: t.final_l2) + failed
        result = SearchResult(status="ok", ranking=ranking, attempted=len(trials))

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "trials.json", "w") as fh:
            json.dump({"status": result.status, "attempted": result.attempted,
                       "ranking": [asdict(t) for t in result.ranking]}, fh, indent=2)
    return result


# ---------------------------------------------------------------------------
# Nyström microbenchmark


@dataclass
class BenchRow:
    sketch_frac: float
    sketch_size: int
    time_gpu_s: float
    time_stable_s: float
    speedup: float  # stable / gpu
    mem_gpu_mib: float
    mem_stable_mib: float
    projector_distance: float


def bench_nystrom(n: int, sketch_fracs: list[float], reps: int = 100,
                  warmup: int = 10, lam: float = 1e-7, seed: int = 0,
                  gate_n: int = 256) -> list[BenchRow]:
    """Time the Cholesky-only Nyström against the SVD-based one on CPU.

    Each cell times construction plus one regularized inverse-apply on a
    synthetic dense PSD matrix, averaging `reps` runs after `warmup`
    discarded ones. Before timing, both variants are checked on a shared
    test matrix (at a reduced size) via the range-projector distance.
    """
    if n < 10:
        raise ValueError("n must be >= 10")
    rng = np.random.default_rng(seed)
    g = rng.normal(size=(n, n))
    a = (g @ g.T) / n
    v = rng.normal(size=n)

    gate_n = min(gate_n, n)
    g_small = rng.normal(size=(gate_n, gate_n))
    a_small = (g_small @ g_small.T) / gate_n

    rows = []
    for frac in sketch_fracs:
        l = max(1, min(n, int(frac * n)))

        # correctness gate on a shared sketch before any timing
        l_gate = max(1, min(gate_n, int(frac * gate_n)))
        omega = rng.standard_normal((gate_n, l_gate))
        gpu_hat = nystrom_gpu_efficient(lambda b: a_small @ b, gate_n, l_gate, lam,
                                        omega=omega).dense()
        stable_f = nystrom_stable_factors(a_small, l_gate, omega=omega)
        stable_hat = (stable_f.u * stable_f.lam_hat) @ stable_f.u.T
        u_g = np.linalg.svd(gpu_hat)[0][:, :l_gate]
        u_s = np.linalg.svd(stable_hat)[0][:, :l_gate]
        proj_dist = float(np.linalg.norm(u_g @ u_g.T - u_s @ u_s.T, 2))
        if proj_dist > 1e-6:
            raise RuntimeError(
                f"variants disagree before timing: projector distance {proj_dist:.3e}"
            )

        def run_gpu():
            approx = nystrom_gpu_efficient(lambda b: a @ b, n, l, lam, rng=rng)
            return nystrom_inv_apply(approx, v)

        def run_stable():
            factors = nystrom_stable_factors(a, l, rng=rng)
            return nystrom_stable_inv_apply(factors, lam, v)

        times = {}
        mems = {}
        for name, fn in (("gpu", run_gpu), ("stable", run_stable)):
            for _ in range(warmup):
                fn()
            samples = []
            for _ in range(reps):
                t0 = time.perf_counter()
                fn()
                samples.append(time.perf_counter() - t0)
            times[name] = float(np.mean(samples))
            tracemalloc.start()
            fn()
            _, peak = tracemalloc.get_traced_memory()
            tracemalloc.stop()
            mems[name] = peak / 2**20

        rows.append(BenchRow(
            sketch_frac=frac, sketch_size=l,
            time_gpu_s=times["gpu"], time_stable_s=times["stable"],
            speedup=times["stable"] / times["gpu"],
            mem_gpu_mib=mems["gpu"], mem_stable_mib=mems["stable"],
            projector_distance=proj_dist,
        ))
    return rows


def write_bench_table(rows: list[BenchRow], out_dir: str | Path) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "bench_nystrom.csv"
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f.name for f in BenchRow.__dataclass_fields__.values()])
        for row in rows:
            writer.writerow([getattr(row, f) for f in BenchRow.__dataclass_fields__])
    return path
