"""Ensemble simulation and the validation experiments.

The engine runs many chains in lockstep as one (n_chains, d) array update per
step.  Chain i draws its stream from ``chain_rng(master_seed, i)`` in fixed
blocks, so results are bit-identical for a given config no matter how chains
are chunked across workers, and chain 0 reproduces :func:`oja.run_chain` with
the same master seed.

Experiments map diffusion-limit predictions onto ensemble statistics:

* ``ode_convergence_experiment``: mean overlap vs the closed-form flow on a
  diffusion-time grid; the sup discrepancy shrinks with beta.
* ``sde_covariance_experiment``: rescaled off-axis moments around e_k vs the
  closed-form OU mean/variance (Gaussian stream only).
* ``finite_sample_experiment``: terminal sin^2 at the horizon-tuned stepsize
  vs the predicted rate level, over several horizons.
* ``phase_portrait_experiment``: per-chain three-phase crossings plus median
  sin^2 curves from a saddle start.

Each experiment returns named tables (CSV-ready) plus a summary dict; the CLI
adds a JSON manifest with a config echo, wall time and content hashes.
"""

from __future__ import annotations

import csv
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .ode import logistic_solution
from .oja import OjaConfig, Trajectory, SAMPLE_BLOCK, resolve_init, record_steps as _record_steps
from .phases import (
    PhaseThresholds,
    crossing_report,
    predict_crossings,
    rate_bound_sin2,
    stepsize_rule,
)
from .sde import OuSpec, ou_mean_cov, stationary_sin2
from .spectrum import (
    EigenSpectrum,
    GAUSSIAN_SAMPLER_NOTE,
    chain_rng,
    derive_seed,
    get_sampler,
)

__all__ = [
    "EnsembleConfig",
    "EnsembleSummary",
    "Table",
    "ExperimentResult",
    "run_ensemble_states",
    "ensemble_summary",
    "ode_convergence_experiment",
    "sde_covariance_experiment",
    "finite_sample_experiment",
    "phase_portrait_experiment",
]


def grid_to_steps(t_grid, beta: float, n_steps: int) -> np.ndarray:
    """Map diffusion times to step indices floor(t / beta).

    A relative nudge counters float junk in t / beta (e.g. 0.5 / 1e-3 landing
    at 499.9999...), so grid points that are exact multiples of beta hit their
    step exactly.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    ratio = t_grid / beta
    steps = np.floor(ratio + 1e-9 * np.maximum(1.0, np.abs(ratio))).astype(int)
    if np.any(steps < 0):
        raise ValueError("grid times must be nonnegative")
    if np.any(steps > n_steps):
        bad = float(t_grid[np.argmax(steps)])
        raise ValueError(
            f"grid time {bad} maps to step {steps.max()} beyond n_steps={n_steps}"
        )
    return steps


@dataclass(frozen=True, eq=False)
class EnsembleConfig:
    """A chain config fanned out to n_chains, observed on a diffusion-time grid.

    ``base.seed`` acts as the master seed; chain i uses stream
    ``chain_rng(seed, i)``.  Every grid time must satisfy
    floor(t / beta) <= n_steps.
    """

    base: OjaConfig
    n_chains: int
    t_grid: tuple

    def __post_init__(self):
        if int(self.n_chains) != self.n_chains or self.n_chains < 1:
            raise ValueError(f"n_chains must be a positive integer, got {self.n_chains}")
        grid = tuple(float(t) for t in self.t_grid)
        if len(grid) == 0:
            raise ValueError("t_grid must not be empty")
        if any(b < a for a, b in zip(grid, grid[1:])):
            raise ValueError("t_grid must be nondecreasing")
        object.__setattr__(self, "t_grid", grid)
        grid_to_steps(grid, self.base.beta, self.base.n_steps)  # validates range

    def grid_steps(self) -> np.ndarray:
        return grid_to_steps(self.t_grid, self.base.beta, self.base.n_steps)


def _run_chunk(base: OjaConfig, chain_lo: int, chain_hi: int, rec_steps: np.ndarray) -> np.ndarray:
    """Run chains [chain_lo, chain_hi) in lockstep; returns (n_rec, n_chunk, d)."""
    spec = base.spec
    d = spec.d
    beta = base.beta
    n = int(base.n_steps)
    draw = get_sampler(base.sampler)
    rngs = [chain_rng(base.seed, i) for i in range(chain_lo, chain_hi)]
    v = np.stack([resolve_init(spec, base.init, rng) for rng in rngs])
    out = np.empty((len(rec_steps), len(rngs), d))
    pos = 0
    if rec_steps[0] == 0:
        out[0] = v
        pos = 1
    step = 0
    while step < n:
        blk = min(SAMPLE_BLOCK, n - step)
        ys = np.stack([draw(spec, rng, blk) for rng in rngs])  # (chunk, blk, d)
        for j in range(blk):
            y = ys[:, j, :]
            s = np.einsum("cd,cd->c", v, y)
            v = v + beta * s[:, None] * y
            nrm = np.sqrt(np.einsum("cd,cd->c", v, v))
            v /= nrm[:, None]
            step += 1
            if pos < len(rec_steps) and rec_steps[pos] == step:
                assert np.all(np.abs(np.einsum("cd,cd->c", v, v) - 1.0) <= 1e-11)
                out[pos] = v
                pos += 1
    return out


def run_ensemble_states(
    base: OjaConfig, n_chains: int, rec_steps: np.ndarray, workers: int = 1
) -> np.ndarray:
    """States of every chain at the requested steps: shape (n_rec, n_chains, d).

    ``rec_steps`` must be strictly increasing and within [0, n_steps].  The
    worker count only chunks the chain axis; outputs are concatenated in
    chain order, so it never affects values.
    """
    rec_steps = np.asarray(rec_steps, dtype=int)
    if rec_steps.size == 0 or np.any(np.diff(rec_steps) <= 0):
        raise ValueError("record steps must be nonempty and strictly increasing")
    if rec_steps[0] < 0 or rec_steps[-1] > base.n_steps:
        raise ValueError("record steps must lie within [0, n_steps]")
    workers = max(1, int(workers))
    if workers == 1 or n_chains < 2 * workers:
        return _run_chunk(base, 0, n_chains, rec_steps)
    bounds = np.linspace(0, n_chains, workers + 1).astype(int)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [
            pool.submit(_run_chunk, base, int(lo), int(hi), rec_steps)
            for lo, hi in zip(bounds[:-1], bounds[1:])
            if hi > lo
        ]
        chunks = [f.result() for f in futures]
    return np.concatenate(chunks, axis=1)


@dataclass(frozen=True, eq=False)
class EnsembleSummary:
    """Cross-chain moments on the grid (se_* are standard errors of means)."""

    times: np.ndarray
    steps: np.ndarray
    n_chains: int
    mean_v: np.ndarray  # (n_t, d)
    var_v: np.ndarray  # (n_t, d), ddof=1
    mean_v1sq: np.ndarray  # (n_t,)
    se_v1sq: np.ndarray
    mean_sin2: np.ndarray
    se_sin2: np.ndarray

    def table(self) -> "Table":
        d = self.mean_v.shape[1]
        cols = (
            ["t", "step", "mean_v1sq", "se_v1sq", "mean_sin2", "se_sin2"]
            + [f"mean_v{i + 1}" for i in range(d)]
            + [f"var_v{i + 1}" for i in range(d)]
        )
        rows = []
        for j in range(len(self.times)):
            rows.append(
                (float(self.times[j]), int(self.steps[j]), float(self.mean_v1sq[j]),
                 float(self.se_v1sq[j]), float(self.mean_sin2[j]), float(self.se_sin2[j]))
                + tuple(float(x) for x in self.mean_v[j])
                + tuple(float(x) for x in self.var_v[j])
            )
        return Table(columns=tuple(cols), rows=rows)


def ensemble_summary(cfg: EnsembleConfig, workers: int = 1) -> EnsembleSummary:
    """Run the ensemble and reduce to grid moments (deterministic in config)."""
    steps_for_grid = cfg.grid_steps()
    rec_steps = np.unique(steps_for_grid)
    states = run_ensemble_states(cfg.base, cfg.n_chains, rec_steps, workers=workers)
    sel = np.searchsorted(rec_steps, steps_for_grid)
    states = states[sel]  # (n_t, n_chains, d), duplicates allowed
    n = cfg.n_chains
    v1sq = states[:, :, 0] ** 2
    sin2 = 1.0 - v1sq
    ddof = 1 if n > 1 else 0
    se = lambda x: x.std(axis=1, ddof=ddof) / np.sqrt(n)
    return EnsembleSummary(
        times=np.asarray(cfg.t_grid),
        steps=steps_for_grid,
        n_chains=n,
        mean_v=states.mean(axis=1),
        var_v=states.var(axis=1, ddof=ddof),
        mean_v1sq=v1sq.mean(axis=1),
        se_v1sq=se(v1sq),
        mean_sin2=sin2.mean(axis=1),
        se_sin2=se(sin2),
    )


@dataclass(frozen=True, eq=False)
class Table:
    """A small named-column table that round-trips through CSV."""

    columns: tuple
    rows: list

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(self.columns)
            for row in self.rows:
                writer.writerow(["" if x is None else (repr(x) if isinstance(x, float) else x) for x in row])


@dataclass(frozen=True, eq=False)
class ExperimentResult:
    """Named tables plus a JSON-ready summary and config echo."""

    name: str
    tables: dict
    summary: dict
    config_echo: dict

    def write_tables(self, out_dir) -> dict:
        """Write each table as <name>_<table>.csv under out_dir; returns paths."""
        paths = {}
        for key, table in self.tables.items():
            path = os.path.join(out_dir, f"{self.name}_{key}.csv")
            table.to_csv(path)
            paths[key] = path
        return paths


def _config_echo(base: OjaConfig, n_chains: int, t_grid=None, **extra) -> dict:
    echo = {
        "spec": [float(x) for x in base.spec.lambdas],
        "beta": base.beta,
        "n_steps": int(base.n_steps),
        "init": base.init if isinstance(base.init, str) else [float(x) for x in np.asarray(base.init)],
        "seed": int(base.seed),
        "sampler": base.sampler,
        "n_chains": int(n_chains),
    }
    if base.sampler == "gaussian":
        echo["sampler_note"] = GAUSSIAN_SAMPLER_NOTE
    if t_grid is not None:
        echo["t_grid"] = [float(t) for t in t_grid]
    echo.update(extra)
    return echo


def _deterministic_init_vector(base: OjaConfig) -> np.ndarray:
    """Resolve the init when it does not depend on the chain stream."""
    if isinstance(base.init, str):
        kind = base.init.split(":")[0]
        if kind in ("uniform", "near_saddle"):
            raise ValueError(
                f"experiment needs a deterministic init shared by all chains, "
                f"got random preset {base.init!r}"
            )
    return resolve_init(base.spec, base.init, chain_rng(base.seed, 0))


def ode_convergence_experiment(cfg: EnsembleConfig, workers: int = 1) -> ExperimentResult:
    """Mean overlap of the ensemble vs the closed-form flow on the grid.

    Requires a deterministic init with nonzero overlap (off the equator);
    the summary's ``sup_abs_diff`` is the weak-convergence discrepancy that
    shrinks as beta does.
    """
    v0 = _deterministic_init_vector(cfg.base)
    if v0[0] == 0.0:
        raise ValueError("init lies on the equator (v_1 = 0); the flow never leaves it")
    summ = ensemble_summary(cfg, workers=workers)
    rows = []
    sup = 0.0
    for j, t in enumerate(cfg.t_grid):
        ode_v1sq = float(logistic_solution(cfg.base.spec, v0, float(t))[0] ** 2)
        diff = abs(float(summ.mean_v1sq[j]) - ode_v1sq)
        sup = max(sup, diff)
        rows.append(
            (float(t), int(summ.steps[j]), float(summ.mean_v1sq[j]), ode_v1sq,
             diff, float(summ.se_v1sq[j]))
        )
    table = Table(
        columns=("t", "step", "mean_v1sq", "ode_v1sq", "abs_diff", "se_v1sq"),
        rows=rows,
    )
    summary = {
        "sup_abs_diff": sup,
        "beta": cfg.base.beta,
        "n_chains": cfg.n_chains,
        "sampler": cfg.base.sampler,
    }
    return ExperimentResult(
        name="ode_convergence",
        tables={"table": table},
        summary=summary,
        config_echo=_config_echo(cfg.base, cfg.n_chains, cfg.t_grid),
    )


def sde_covariance_experiment(cfg: EnsembleConfig, k: int, workers: int = 1) -> ExperimentResult:
    """Rescaled off-axis moments around e_k vs the closed-form OU values.

    Requires the Gaussian stream (the bounded stream's fourth moments differ
    from the diffusion coefficient, so its local fluctuations are not the OU
    limit) and the exact init e_k.  Cells whose predicted variance sits below
    beta are reported but excluded from the deviation summary (noise floor).
    """
    base = cfg.base
    if base.sampler != "gaussian":
        raise ValueError(
            f"sde_covariance_experiment requires sampler='gaussian': the "
            f"'{base.sampler}' stream has E[Y_k^2 Y_i^2] != lambda_k lambda_i, "
            f"so its local fluctuations follow a different diffusion"
        )
    v0 = _deterministic_init_vector(base)
    ek = np.zeros(base.spec.d)
    ek[k - 1] = 1.0
    if not np.array_equal(v0, ek):
        raise ValueError(f"init must be exactly e_{k} (preset 'saddle:{k}')")
    ou = OuSpec(spec=base.spec, k=k)
    steps_for_grid = cfg.grid_steps()
    rec_steps = np.unique(steps_for_grid)
    states = run_ensemble_states(base, cfg.n_chains, rec_steps, workers=workers)
    sel = np.searchsorted(rec_steps, steps_for_grid)
    other = [i for i in range(base.spec.d) if i != k - 1]
    root_beta = np.sqrt(base.beta)
    rows = []
    max_rel = 0.0
    n_included = 0
    for j, t in enumerate(cfg.t_grid):
        u = states[sel[j]][:, other] / root_beta  # (n_chains, d-1)
        emp_mean = u.mean(axis=0)
        emp_var = u.var(axis=0, ddof=1)
        mean_c, var_c = ou_mean_cov(ou, 0.0, float(t))
        for m, coord in enumerate(other):
            included = bool(var_c[m] >= base.beta)
            rel = abs(emp_var[m] - var_c[m]) / var_c[m] if included else None
            if included:
                max_rel = max(max_rel, rel)
                n_included += 1
            rows.append(
                (float(t), coord + 1, float(emp_mean[m]), float(emp_var[m]),
                 float(mean_c[m]), float(var_c[m]), rel, included)
            )
    table = Table(
        columns=("t", "coord", "emp_mean", "emp_var", "closed_mean", "closed_var",
                 "rel_dev_var", "included"),
        rows=rows,
    )
    summary = {
        "max_rel_dev_var": max_rel,
        "n_cells_included": n_included,
        "beta": base.beta,
        "k": int(k),
        "n_chains": cfg.n_chains,
        "sampler_note": GAUSSIAN_SAMPLER_NOTE,
    }
    return ExperimentResult(
        name="sde_covariance",
        tables={"table": table},
        summary=summary,
        config_echo=_config_echo(base, cfg.n_chains, cfg.t_grid, k=int(k)),
    )


def finite_sample_experiment(
    spec: EigenSpectrum,
    t_list,
    n_chains: int,
    seed: int,
    sampler: str = "gaussian",
    workers: int = 1,
) -> ExperimentResult:
    """Terminal sin^2 at the tuned stepsize vs the predicted level, per horizon.

    Each horizon T runs n_chains fresh uniform-start chains for T steps at
    beta(T) = log T / (gap T) (independent master seed per horizon) and
    reports the ratio of the empirical mean to the formula level.

    Defaults to the Gaussian stream: the predicted level is the stationary
    variance of the local diffusion, which is calibrated to fourth moments
    E[Y_1^2 Y_i^2] = lambda_1 lambda_i.  The axis-atomic bounded stream has
    E[Y_1^2 Y_i^2] = 0, injects no noise at e_1, and its sin^2 decays
    geometrically instead of levelling off, so ratios to the formula are not
    meaningful for it.
    """
    t_list = [int(t) for t in t_list]
    if any(t < 100 for t in t_list):
        raise ValueError(f"horizons must be at least 100 samples, got {t_list}")
    rows = []
    ratios = []
    for j, t in enumerate(t_list):
        beta = stepsize_rule(spec, t)
        base = OjaConfig(
            spec=spec, beta=beta, n_steps=t, init="uniform",
            seed=derive_seed(seed, j), sampler=sampler,
        )
        states = run_ensemble_states(base, n_chains, np.array([t]), workers=workers)
        sin2 = 1.0 - states[0][:, 0] ** 2
        mean = float(sin2.mean())
        se = float(sin2.std(ddof=1) / np.sqrt(n_chains))
        bound = rate_bound_sin2(spec, t)
        ratio = mean / bound
        ratios.append(ratio)
        rows.append((t, beta, mean, se, bound, ratio))
    table = Table(
        columns=("t_samples", "beta", "mean_sin2", "se_sin2", "bound_sin2", "ratio"),
        rows=rows,
    )
    summary = {
        "ratios": ratios,
        "min_ratio": min(ratios),
        "max_ratio": max(ratios),
        "spread": max(ratios) / min(ratios),
        "n_chains": int(n_chains),
        "sampler": sampler,
    }
    echo = {
        "spec": [float(x) for x in spec.lambdas],
        "t_list": t_list,
        "n_chains": int(n_chains),
        "seed": int(seed),
        "sampler": sampler,
    }
    if sampler == "gaussian":
        echo["sampler_note"] = GAUSSIAN_SAMPLER_NOTE
    return ExperimentResult(
        name="finite_sample", tables={"table": table}, summary=summary, config_echo=echo
    )


def phase_portrait_experiment(
    cfg: EnsembleConfig, delta: float, k: Optional[int] = None, workers: int = 1
) -> ExperimentResult:
    """Saddle-start ensemble: per-chain crossing reports and median sin^2 curve.

    The grid for recording is every ``record_stride``-th step of the base
    config (plus endpoints); detection granularity equals that stride.  The
    summary holds median empirical crossings next to the predictions and the
    median terminal plateau (per-chain trailing-window mean at the horizon).
    """
    base = cfg.base
    if k is None:
        if isinstance(base.init, str) and base.init.split(":")[0] in ("saddle", "near_saddle"):
            k = int(base.init.split(":")[1])
        else:
            raise ValueError("saddle index k is required when the init preset does not name one")
    thresholds = PhaseThresholds(delta=delta)
    rec_steps = _record_steps(base.n_steps, base.resolved_stride())
    states = run_ensemble_states(base, cfg.n_chains, rec_steps, workers=workers)
    sin2 = 1.0 - states[:, :, 0] ** 2  # (n_rec, n_chains)

    reports = []
    for c in range(cfg.n_chains):
        traj = Trajectory(
            config=base, times=rec_steps, states=states[:, c, :], sin2_angle=sin2[:, c]
        )
        emp = crossing_report(traj, thresholds, k=k).empirical
        reports.append(emp)

    curve_rows = [
        (int(rec_steps[j]), float(np.median(sin2[j])), float(np.quantile(sin2[j], 0.25)),
         float(np.quantile(sin2[j], 0.75)))
        for j in range(len(rec_steps))
    ]
    crossing_rows = [
        (c, r.n1, r.n2, r.n3) for c, r in enumerate(reports)
    ]

    predicted = predict_crossings(base.spec, base.beta, delta, k)
    stride = float(np.median(np.diff(rec_steps))) if len(rec_steps) > 1 else 1.0
    # Plateau window: at least the detection window, but no shorter than 10%
    # of the horizon, so the per-chain means average over several correlation
    # times and their median is not skew-biased.
    window = max(1, int(round(1.0 / (base.beta * base.spec.gap) / stride)),
                 len(rec_steps) // 10)
    tail_mean = sin2[-window:].mean(axis=0)  # per-chain plateau estimate

    def med(values):
        present = [v for v in values if v is not None]
        return float(np.median(present)) if present else None

    summary = {
        "n1_median_empirical": med([r.n1 for r in reports]),
        "n2_median_empirical": med([r.n2 for r in reports]),
        "n3_median_empirical": med([r.n3 for r in reports]),
        "n_detected_n1": sum(r.n1 is not None for r in reports),
        "n_detected_n2": sum(r.n2 is not None for r in reports),
        "n_detected_n3": sum(r.n3 is not None for r in reports),
        "predicted": {
            "N1_median": predicted.n1_median,
            "N1_q10": predicted.n1_q10,
            "N1_q90": predicted.n1_q90,
            "N2_low": predicted.n2_low,
            "N2_high": predicted.n2_high,
            "N3": predicted.n3,
        },
        "plateau_median": float(np.median(tail_mean)),
        "stationary_sin2": stationary_sin2(base.spec, base.beta),
        "delta": float(delta),
        "k": int(k),
    }
    tables = {
        "curve": Table(columns=("step", "median_sin2", "q25_sin2", "q75_sin2"), rows=curve_rows),
        "crossings": Table(columns=("chain", "n1", "n2", "n3"), rows=crossing_rows),
    }
    return ExperimentResult(
        name="phase_portrait",
        tables=tables,
        summary=summary,
        config_echo=_config_echo(base, cfg.n_chains, delta=float(delta), k=int(k)),
    )
