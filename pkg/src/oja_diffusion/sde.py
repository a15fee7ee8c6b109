"""Local Gaussian fluctuation limits around the flow's stationary points.

Near the basis point e_k, rescale the off-axis coordinates by beta^{-1/2} and
run time as t = beta * n.  The rescaled block U = (v_i / sqrt(beta))_{i != k}
converges to the linear SDE

    dU = -(lambda_k I - Lambda_k) U dt + (lambda_k Lambda_k)^{1/2} dB,

where Lambda_k drops the k-th eigenvalue.  Coordinates decouple: coordinate i
is an Ornstein-Uhlenbeck process with drift rate a_i = lambda_k - lambda_i
(negative rates mean exponential instability) and noise scale
sqrt(lambda_k lambda_i), so

    mean_i(t) = u_i(0) e^{-a_i t},
    var_i(t)  = lambda_k lambda_i (1 - e^{-2 a_i t}) / (2 a_i),

with the tie limit lambda_k lambda_i t when a_i = 0.  Around the optimum
(k = 1) all rates are positive and the stationary variances
lambda_1 lambda_i / (2 (lambda_1 - lambda_i)) sum, times beta, to the
stationary sin^2 level of the chain.

On the equator v_1 = 0 the overlap itself obeys the scalar SDE

    dU = (lambda_1 - L(V(t))) U dt + (lambda_1 L(V(t)))^{1/2} dB,
    L(v) = sum_{k>=2} lambda_k v_k^2 / sum_{k>=2} v_k^2  in  [lambda_d, lambda_2],

whose unstable growth out of U(0) = sqrt(beta) chi seeds the Phase I escape
law exposed by :func:`phase1_exit_law`.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Optional, Union

import numpy as np
from scipy.stats import norm as _norm

from .spectrum import EigenSpectrum, chain_rng, _check_seed

__all__ = [
    "OuSpec",
    "OuPath",
    "ou_mean_cov",
    "ou_stationary_var",
    "simulate_ou",
    "ou_ensemble_moments",
    "stationary_sin2",
    "Phase1ExitLaw",
    "phase1_exit_law",
    "equator_drift_coeff",
    "simulate_equator_sde",
    "equator_ensemble_second_moment",
]


@dataclass(frozen=True, eq=False)
class OuSpec:
    """Fluctuation block anchored at basis point e_k (k is 1-based)."""

    spec: EigenSpectrum
    k: int

    def __post_init__(self):
        if int(self.k) != self.k or not 1 <= self.k <= self.spec.d:
            raise ValueError(f"anchor k must be an integer in 1..{self.spec.d}, got {self.k}")

    @cached_property
    def other_lambdas(self) -> np.ndarray:
        """Eigenvalues of the d-1 off-anchor coordinates, in original order."""
        lam = np.asarray(self.spec.lambdas)
        out = np.delete(lam, self.k - 1)
        out.setflags(write=False)
        return out

    @cached_property
    def drift_rates(self) -> np.ndarray:
        """Per-coordinate rates a_i = lambda_k - lambda_i (sign = stability)."""
        lam_k = float(self.spec.lambdas[self.k - 1])
        out = lam_k - self.other_lambdas
        out.setflags(write=False)
        return out

    @cached_property
    def noise_scales(self) -> np.ndarray:
        """Per-coordinate diffusion coefficients sqrt(lambda_k lambda_i)."""
        lam_k = float(self.spec.lambdas[self.k - 1])
        out = np.sqrt(lam_k * self.other_lambdas)
        out.setflags(write=False)
        return out


def _as_u0(ou: OuSpec, u0) -> np.ndarray:
    arr = np.asarray(u0, dtype=float)
    if arr.ndim == 0:
        arr = np.full(ou.spec.d - 1, float(arr))
    if arr.shape != (ou.spec.d - 1,):
        raise ValueError(f"u0 must be scalar or shape ({ou.spec.d - 1},), got {arr.shape}")
    return arr


def ou_mean_cov(ou: OuSpec, u0, t: float):
    """Closed-form mean and per-coordinate variance at time t >= 0.

    mean_i = u_i(0) e^{-a_i t}; var_i = lambda_k lambda_i (1 - e^{-2 a_i t}) / (2 a_i),
    valid for stable, unstable and tied rates (the tie limit is
    lambda_k lambda_i t).  Coordinates are independent, so the variance vector
    is the full covariance.
    """
    if t < 0.0:
        raise ValueError(f"t must be nonnegative, got {t}")
    u0 = _as_u0(ou, u0)
    a = ou.drift_rates
    lam_prod = ou.noise_scales**2
    mean = u0 * np.exp(-a * t)
    with np.errstate(divide="ignore", invalid="ignore"):
        var = lam_prod * (-np.expm1(-2.0 * a * t)) / (2.0 * a)
    var = np.where(a == 0.0, lam_prod * t, var)
    return mean, var


def ou_stationary_var(ou: OuSpec) -> np.ndarray:
    """Stationary variances lambda_k lambda_i / (2 (lambda_k - lambda_i)).

    Only defined when every rate is positive, i.e. the anchor is the top
    eigendirection.
    """
    a = ou.drift_rates
    if np.any(a <= 0.0):
        raise ValueError(
            "stationary variances require a strictly stable block "
            "(anchor at the top eigendirection)"
        )
    return ou.noise_scales**2 / (2.0 * a)


@dataclass(frozen=True, eq=False)
class OuPath:
    """One sampled path on a uniform time grid."""

    times: np.ndarray  # (n_times,)
    states: np.ndarray  # (n_times, m)
    seed: Optional[int]

    def to_csv(self, path) -> None:
        m = self.states.shape[1]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t"] + [f"u{i + 1}" for i in range(m)])
            for t, row in zip(self.times, self.states):
                writer.writerow([repr(float(t))] + [repr(float(x)) for x in row])


def _check_dt(spec: EigenSpectrum, dt: float) -> None:
    cap = 1e-2 / max(float(spec.lambdas[0]), float(spec.lambdas[0] - spec.lambdas[-1]))
    if dt <= 0.0 or dt > cap:
        raise ValueError(f"dt must lie in (0, {cap:.6g}], got {dt}")


def _rng_from(seed) -> tuple[np.random.Generator, Optional[int]]:
    if isinstance(seed, np.random.Generator):
        return seed, None
    _check_seed(seed)
    return chain_rng(seed), int(seed)


def simulate_ou(
    ou: OuSpec, u0, t_end: float, dt: float, seed, diffusion_scale: float = 1.0
) -> OuPath:
    """Euler-Maruyama discretization of the anchored block.

    ``seed`` is an integer master seed (recorded on the path) or an existing
    generator.  ``diffusion_scale=0`` switches the noise off, leaving the
    exact exponential mean flow for step-level verification.
    """
    _check_dt(ou.spec, dt)
    if t_end < 0.0:
        raise ValueError(f"t_end must be nonnegative, got {t_end}")
    rng, seed_out = _rng_from(seed)
    u = _as_u0(ou, u0).copy()
    n = int(round(t_end / dt))
    times = np.arange(n + 1) * dt
    states = np.empty((n + 1, u.shape[0]))
    states[0] = u
    a = ou.drift_rates
    sig = ou.noise_scales * float(diffusion_scale)
    root_dt = math.sqrt(dt)
    for j in range(1, n + 1):
        xi = rng.standard_normal(u.shape[0])
        u = u - a * u * dt + sig * root_dt * xi
        states[j] = u
    return OuPath(times=times, states=states, seed=seed_out)


def ou_ensemble_moments(ou: OuSpec, u0, t_grid, dt: float, n_paths: int, seed):
    """Empirical mean and variance over n_paths lockstep Euler paths.

    Returns (times, mean, var) with rows aligned to ``t_grid`` snapped to the
    step grid.  One generator drives all paths in lockstep, so the result is
    deterministic for a given seed but individual paths are not addressable.
    """
    _check_dt(ou.spec, dt)
    if n_paths < 2:
        raise ValueError(f"need at least two paths for a variance, got {n_paths}")
    rng, _ = _rng_from(seed)
    t_grid = np.asarray(t_grid, dtype=float)
    grid_steps = np.round(t_grid / dt).astype(int)
    if np.any(grid_steps < 0):
        raise ValueError("t_grid times must be nonnegative")
    m = ou.spec.d - 1
    u = np.tile(_as_u0(ou, u0), (n_paths, 1))
    a = ou.drift_rates
    sig = ou.noise_scales
    root_dt = math.sqrt(dt)
    order = np.argsort(grid_steps)
    means = np.empty((len(grid_steps), m))
    varis = np.empty((len(grid_steps), m))
    pos = 0
    for step in range(int(grid_steps.max()) + 1):
        while pos < len(order) and grid_steps[order[pos]] == step:
            means[order[pos]] = u.mean(axis=0)
            varis[order[pos]] = u.var(axis=0, ddof=1)
            pos += 1
        u = u - a * u * dt + sig * root_dt * rng.standard_normal((n_paths, m))
    while pos < len(order):  # duplicates of the max step
        means[order[pos]] = u.mean(axis=0)
        varis[order[pos]] = u.var(axis=0, ddof=1)
        pos += 1
    return grid_steps * dt, means, varis


def stationary_sin2(spec: EigenSpectrum, beta: float) -> float:
    """Stationary fluctuation level of sin^2 at stepsize beta.

    Equals beta * sum_{k>=2} lambda_1 lambda_k / (2 (lambda_1 - lambda_k)),
    the total stationary variance of the rescaled off-axis block around e_1,
    scaled back by beta.
    """
    if beta <= 0.0:
        raise ValueError(f"beta must be positive, got {beta}")
    lam1 = float(spec.lambdas[0])
    tail = spec.tail()
    return beta * float(np.sum(lam1 * tail / (2.0 * (lam1 - tail))))


@dataclass(frozen=True)
class Phase1ExitLaw:
    """Escape-time law from a saddle e_k under noise-seeded instability.

    The unstable overlap grows like sqrt(beta) |chi| sigma_W
    e^{(lambda_1 - lambda_k) beta n} with chi standard normal and
    sigma_W^2 = lambda_1 lambda_k / (2 (lambda_1 - lambda_k)).  Solving for
    the first n with v_1^2 = delta gives, per realization of chi,

        N(chi) = (ln(sqrt(delta) / (|chi| sigma_W)) + ln beta^{-1/2})
                 / ((lambda_1 - lambda_k) beta),

    clamped at zero.  Quantiles come from the |chi| quantiles (N is
    decreasing in |chi|), so the median uses |chi| ~ 0.6745.
    """

    rate: float  # lambda_1 - lambda_k
    sigma_w: float
    beta: float
    delta: float

    def steps_given_chi(self, chi) -> np.ndarray:
        chi = np.abs(np.asarray(chi, dtype=float))
        with np.errstate(divide="ignore"):
            val = (np.log(math.sqrt(self.delta) / (chi * self.sigma_w))
                   + 0.5 * math.log(1.0 / self.beta)) / (self.rate * self.beta)
        return np.maximum(val, 0.0)

    def sample(self, rng: np.random.Generator, size: Optional[int] = None) -> np.ndarray:
        chi = rng.standard_normal(1 if size is None else size)
        out = self.steps_given_chi(chi)
        return out[0] if size is None else out

    def quantile(self, q: float) -> float:
        if not 0.0 < q < 1.0:
            raise ValueError(f"quantile level must lie in (0, 1), got {q}")
        # P(N <= x) = P(|chi| >= chi(x)); the q-quantile of N uses the
        # (1-q)-quantile of |chi|, which is Phi^{-1}(1 - q/2) for the half-normal.
        chi_q = _norm.ppf(1.0 - q / 2.0)
        return float(self.steps_given_chi(chi_q))

    @property
    def median(self) -> float:
        return self.quantile(0.5)


def phase1_exit_law(spec: EigenSpectrum, k: int, beta: float, delta: float) -> Phase1ExitLaw:
    """Exit law from saddle e_k to overlap level v_1^2 = delta."""
    if int(k) != k or not 2 <= k <= spec.d:
        raise ValueError(f"saddle index k must be an integer in 2..{spec.d}, got {k}")
    if beta <= 0.0:
        raise ValueError(f"beta must be positive, got {beta}")
    if not 0.0 < delta < 0.5:
        raise ValueError(f"delta must lie in (0, 1/2), got {delta}")
    lam1 = float(spec.lambdas[0])
    lam_k = float(spec.lambdas[k - 1])
    rate = lam1 - lam_k
    sigma_w = math.sqrt(lam1 * lam_k / (2.0 * rate))
    return Phase1ExitLaw(rate=rate, sigma_w=sigma_w, beta=beta, delta=delta)


def equator_drift_coeff(spec: EigenSpectrum, v: np.ndarray) -> float:
    """Tail Rayleigh quotient L(v) = sum_{k>=2} lambda_k v_k^2 / sum_{k>=2} v_k^2.

    A convex combination of the tail eigenvalues, so always inside
    [lambda_d, lambda_2]; undefined at v = +/- e_1.
    """
    v = np.asarray(v, dtype=float)
    tail = v[1:]
    denom = float(tail @ tail)
    if denom == 0.0:
        raise ValueError("L(v) is undefined at v = +/- e_1 (no equator component)")
    lam_tail = np.asarray(spec.tail())
    return float((lam_tail * tail * tail).sum() / denom)


PathLike = Union[np.ndarray, Callable[[float], np.ndarray]]


def _path_callable(v_path: PathLike) -> Callable[[float], np.ndarray]:
    if callable(v_path):
        return v_path
    arr = np.asarray(v_path, dtype=float)
    return lambda t: arr


def simulate_equator_sde(
    spec: EigenSpectrum,
    v_path: PathLike,
    u0: float,
    t_end: float,
    dt: float,
    seed,
    diffusion_scale: float = 1.0,
) -> OuPath:
    """Euler-Maruyama for the scalar overlap SDE along a frozen equator path.

    ``v_path`` is a callable t -> unit vector (e.g. the closed-form flow) or a
    constant vector.  With a constant path V == e_k this is exactly the
    unstable OU with rate lambda_1 - lambda_k and noise sqrt(lambda_1 lambda_k).
    """
    _check_dt(spec, dt)
    if t_end < 0.0:
        raise ValueError(f"t_end must be nonnegative, got {t_end}")
    rng, seed_out = _rng_from(seed)
    path = _path_callable(v_path)
    lam1 = float(spec.lambdas[0])
    n = int(round(t_end / dt))
    times = np.arange(n + 1) * dt
    states = np.empty((n + 1, 1))
    u = float(u0)
    states[0, 0] = u
    root_dt = math.sqrt(dt)
    scale = float(diffusion_scale)
    for j in range(1, n + 1):
        ell = equator_drift_coeff(spec, path(times[j - 1]))
        u = u + (lam1 - ell) * u * dt + scale * math.sqrt(lam1 * ell) * root_dt * float(
            rng.standard_normal()
        )
        states[j, 0] = u
    return OuPath(times=times, states=states, seed=seed_out)


def equator_ensemble_second_moment(
    spec: EigenSpectrum, v_path: PathLike, u0: float, t_grid, dt: float, n_paths: int, seed
):
    """E[U^2(t)] over n_paths lockstep paths of the equator SDE."""
    _check_dt(spec, dt)
    if n_paths < 2:
        raise ValueError(f"need at least two paths, got {n_paths}")
    rng, _ = _rng_from(seed)
    path = _path_callable(v_path)
    lam1 = float(spec.lambdas[0])
    t_grid = np.asarray(t_grid, dtype=float)
    grid_steps = np.round(t_grid / dt).astype(int)
    u = np.full(n_paths, float(u0))
    root_dt = math.sqrt(dt)
    out = np.empty(len(grid_steps))
    order = np.argsort(grid_steps)
    pos = 0
    for step in range(int(grid_steps.max()) + 1):
        while pos < len(order) and grid_steps[order[pos]] == step:
            out[order[pos]] = float(np.mean(u * u))
            pos += 1
        ell = equator_drift_coeff(spec, path(step * dt))
        u = u + (lam1 - ell) * u * dt + math.sqrt(lam1 * ell) * root_dt * rng.standard_normal(
            n_paths
        )
    while pos < len(order):
        out[order[pos]] = float(np.mean(u * u))
        pos += 1
    return grid_steps * dt, out
