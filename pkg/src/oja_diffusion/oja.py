"""Oja's streaming iteration in rescaled coordinates.

One step with stepsize beta and sample Y is

    v  <-  (v + beta (v . Y) Y) / || v + beta (v . Y) Y ||,

i.e. a rank-one stochastic power update followed by projection back to the
unit sphere.  Because the samples live in the eigenbasis, the quality of the
iterate is read off the first coordinate: sin^2 of the angle to the top
eigendirection is 1 - v_1^2.

``increment_parts`` splits a single update into the main chain term

    main_k = beta ((v.Y) Y_k - v_k (v.Y)^2)

and the remainder of the projection, which is O(B^2 beta^2) whenever
||Y||^2 <= B and beta <= 1/(3B).  ``empirical_drift`` averages raw increments
over a fresh stream to expose the drift beta v_k (lambda_k - v' Lambda v) that
the deterministic limit integrates.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence, Union

import numpy as np

from .spectrum import EigenSpectrum, chain_rng, get_sampler, _check_seed

__all__ = [
    "OjaConfig",
    "Trajectory",
    "IncrementParts",
    "oja_step",
    "sin2_angle",
    "increment_parts",
    "empirical_drift",
    "resolve_init",
    "run_chain",
    "trajectory_from_csv",
]

# Sample streams are drawn in blocks of this size; a chain consuming its
# stream stepwise or blockwise sees the exact same values.
SAMPLE_BLOCK = 1024

# Default number of recorded states per trajectory (plus endpoints).
_TARGET_RECORDS = 10_000

InitSpec = Union[str, Sequence[float], np.ndarray]


def oja_step(v: np.ndarray, y: np.ndarray, beta) -> np.ndarray:
    """One projected update.  Accepts batched inputs on leading axes."""
    v = np.asarray(v, dtype=float)
    y = np.asarray(y, dtype=float)
    s = np.sum(v * y, axis=-1, keepdims=True)
    w = v + np.asarray(beta) * s * y
    nrm = np.sqrt(np.sum(w * w, axis=-1, keepdims=True))
    if np.any(nrm <= 1e-300) or not np.all(np.isfinite(nrm)):
        raise ValueError("update collapsed the iterate to (near) zero norm")
    out = w / nrm
    if out.ndim == 1:
        assert abs(float(out @ out) - 1.0) <= 1e-12
    return out


def sin2_angle(v: np.ndarray, w: np.ndarray) -> float:
    """sin^2 of the angle between two unit vectors: 1 - (v.w)^2."""
    c = float(np.dot(v, w))
    return 1.0 - c * c


class IncrementParts(NamedTuple):
    main: np.ndarray
    remainder: np.ndarray


def increment_parts(v: np.ndarray, y: np.ndarray, beta) -> IncrementParts:
    """Split one update increment into main term and projection remainder.

    ``v + main + remainder`` reconstructs ``oja_step(v, y, beta)`` exactly up
    to float associativity.  For ||y||^2 <= B and beta <= 1/(3B) the remainder
    is uniformly O(B^2 beta^2) per coordinate.
    """
    v = np.asarray(v, dtype=float)
    y = np.asarray(y, dtype=float)
    s = np.sum(v * y, axis=-1, keepdims=True)
    main = np.asarray(beta) * (s * y - v * s * s)
    remainder = oja_step(v, y, beta) - v - main
    return IncrementParts(main=main, remainder=remainder)


def empirical_drift(
    spec: EigenSpectrum,
    v: np.ndarray,
    beta: float,
    m: int,
    rng: np.random.Generator,
    sampler: str = "bounded",
) -> np.ndarray:
    """Average of m one-step increments from state v over a fresh stream.

    Estimates E[Delta v | v] = beta v_k (lambda_k - v' Lambda v) + O(beta^2);
    the standard error of each coordinate shrinks as m^{-1/2}.
    """
    if m < 1:
        raise ValueError(f"need at least one sample, got m={m}")
    v = np.asarray(v, dtype=float)
    draw = get_sampler(sampler)
    total = np.zeros(spec.d)
    done = 0
    while done < m:
        chunk = min(200_000, m - done)
        ys = draw(spec, rng, chunk)
        total += np.sum(oja_step(v, ys, beta) - v, axis=0)
        done += chunk
    return total / m


@dataclass(frozen=True, eq=False)
class OjaConfig:
    """Everything needed to reproduce one chain (or one ensemble member).

    ``init`` is either an explicit vector (normalized on use) or a preset
    string: "uniform", "saddle:k", "near_saddle:k:eps", "warm:delta".  The
    warm start puts v_1^2 = 1 - delta with the remaining mass spread evenly.
    ``seed`` is the master seed; the chain stream is ``chain_rng(seed, 0)``
    so that a lone chain coincides with chain 0 of an ensemble.
    """

    spec: EigenSpectrum
    beta: float
    n_steps: int
    init: InitSpec = "uniform"
    seed: int = 0
    sampler: str = "bounded"
    record_stride: Optional[int] = None

    def __post_init__(self):
        if not (self.beta > 0.0 and np.isfinite(self.beta)):
            raise ValueError(f"stepsize beta must be positive and finite, got {self.beta}")
        if int(self.n_steps) != self.n_steps or self.n_steps < 0:
            raise ValueError(f"n_steps must be a nonnegative integer, got {self.n_steps}")
        get_sampler(self.sampler)
        if self.sampler == "bounded":
            cap = 1.0 / (3.0 * self.spec.sample_bound)
            if self.beta > cap:
                raise ValueError(
                    f"beta={self.beta} exceeds 1/(3B)={cap:.6g} for the bounded "
                    f"sampler (B=trace={self.spec.sample_bound:.6g})"
                )
        _check_seed(self.seed)
        if self.record_stride is not None and (
            int(self.record_stride) != self.record_stride or self.record_stride < 1
        ):
            raise ValueError(f"record_stride must be a positive integer, got {self.record_stride}")
        # Validate preset strings eagerly so config errors surface before any run.
        if isinstance(self.init, str):
            _parse_preset(self.spec, self.init)

    def resolved_stride(self) -> int:
        if self.record_stride is not None:
            return int(self.record_stride)
        return max(1, int(self.n_steps) // _TARGET_RECORDS)


def _parse_preset(spec: EigenSpectrum, text: str):
    """Parse an init preset string; returns (kind, params)."""
    parts = text.split(":")
    kind = parts[0]
    if kind == "uniform":
        if len(parts) != 1:
            raise ValueError(f"preset 'uniform' takes no parameters, got {text!r}")
        return ("uniform",)
    if kind == "saddle":
        if len(parts) != 2:
            raise ValueError(f"preset 'saddle' needs an axis, e.g. 'saddle:2', got {text!r}")
        k = int(parts[1])
        if not 1 <= k <= spec.d:
            raise ValueError(f"saddle axis must be in 1..{spec.d}, got {k}")
        return ("saddle", k)
    if kind == "near_saddle":
        if len(parts) != 3:
            raise ValueError(
                f"preset 'near_saddle' needs axis and radius, e.g. 'near_saddle:2:1e-4', got {text!r}"
            )
        k = int(parts[1])
        eps = float(parts[2])
        if not 1 <= k <= spec.d:
            raise ValueError(f"near_saddle axis must be in 1..{spec.d}, got {k}")
        if not 0.0 < eps < 1.0:
            raise ValueError(f"near_saddle radius must lie in (0, 1), got {eps}")
        return ("near_saddle", k, eps)
    if kind == "warm":
        if len(parts) != 2:
            raise ValueError(f"preset 'warm' needs a delta, e.g. 'warm:0.25', got {text!r}")
        delta = float(parts[1])
        if not 0.0 < delta < 1.0:
            raise ValueError(f"warm delta must lie in (0, 1), got {delta}")
        return ("warm", delta)
    raise ValueError(
        f"unknown init preset {text!r}; expected 'uniform', 'saddle:k', "
        f"'near_saddle:k:eps' or 'warm:delta'"
    )


def resolve_init(spec: EigenSpectrum, init: InitSpec, rng: np.random.Generator) -> np.ndarray:
    """Materialize an init spec into a unit vector.

    Random presets consume the chain generator before the sample stream, in a
    fixed order, so trajectories stay reproducible.
    """
    if isinstance(init, str):
        parsed = _parse_preset(spec, init)
        kind = parsed[0]
        if kind == "uniform":
            g = rng.standard_normal(spec.d)
            return g / np.linalg.norm(g)
        if kind == "saddle":
            v = np.zeros(spec.d)
            v[parsed[1] - 1] = 1.0
            return v
        if kind == "near_saddle":
            _, k, eps = parsed
            g = rng.standard_normal(spec.d)
            g[k - 1] = 0.0
            u = g / np.linalg.norm(g)
            v = eps * u
            v[k - 1] = 1.0
            return v / np.linalg.norm(v)
        if kind == "warm":
            delta = parsed[1]
            v = np.full(spec.d, np.sqrt(delta / (spec.d - 1)))
            v[0] = np.sqrt(1.0 - delta)
            return v
    arr = np.asarray(init, dtype=float)
    if arr.shape != (spec.d,):
        raise ValueError(f"init vector must have shape ({spec.d},), got {arr.shape}")
    nrm = np.linalg.norm(arr)
    if not np.isfinite(nrm) or nrm <= 1e-12:
        raise ValueError("init vector must be finite and have nonzero norm")
    return arr / nrm


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Recorded states of one chain at a fixed stride (endpoints always kept)."""

    config: OjaConfig
    times: np.ndarray  # integer step counts, shape (n_records,)
    states: np.ndarray  # shape (n_records, d)
    sin2_angle: np.ndarray  # 1 - states[:, 0]**2

    def to_csv(self, path, include_states: bool = True) -> None:
        d = self.states.shape[1]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            if include_states:
                writer.writerow(["step"] + [f"v{i + 1}" for i in range(d)] + ["sin2_angle"])
                for t, row, s2 in zip(self.times, self.states, self.sin2_angle):
                    writer.writerow([int(t)] + [repr(float(x)) for x in row] + [repr(float(s2))])
            else:
                writer.writerow(["step", "sin2_angle"])
                for t, s2 in zip(self.times, self.sin2_angle):
                    writer.writerow([int(t), repr(float(s2))])


def trajectory_from_csv(path, config: OjaConfig) -> Trajectory:
    """Rebuild a trajectory from a CSV written by :meth:`Trajectory.to_csv`."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[0] != "step" or "sin2_angle" not in header:
            raise ValueError(f"not a trajectory CSV: unexpected header {header}")
        if len(header) < 3:
            raise ValueError("trajectory CSV must include the state columns")
        rows = [row for row in reader]
    times = np.array([int(r[0]) for r in rows])
    states = np.array([[float(x) for x in r[1:-1]] for r in rows])
    sin2 = np.array([float(r[-1]) for r in rows])
    return Trajectory(config=config, times=times, states=states, sin2_angle=sin2)


def record_steps(n_steps: int, stride: int) -> np.ndarray:
    """Steps to record: every stride-th step plus the final one."""
    steps = np.arange(0, n_steps + 1, stride)
    if steps[-1] != n_steps:
        steps = np.append(steps, n_steps)
    return steps


def run_chain(config: OjaConfig) -> Trajectory:
    """Run one chain and record every ``record_stride``-th state.

    Deterministic given the config: the stream is ``chain_rng(seed, 0)``, the
    init (when random) is drawn from it first, and samples are consumed in
    blocks of :data:`SAMPLE_BLOCK`.
    """
    spec = config.spec
    rng = chain_rng(config.seed, 0)
    v = resolve_init(spec, config.init, rng)
    steps = record_steps(config.n_steps, config.resolved_stride())
    states = np.empty((len(steps), spec.d))
    pos = 0
    if steps[0] == 0:
        states[0] = v
        pos = 1
    draw = get_sampler(config.sampler)
    beta = config.beta
    step = 0
    n = int(config.n_steps)
    while step < n:
        blk = min(SAMPLE_BLOCK, n - step)
        ys = draw(spec, rng, blk)
        for j in range(blk):
            # Inlined oja_step with the same operation order (hot loop).
            y = ys[j]
            s = np.sum(v * y)
            w = v + (beta * s) * y
            nrm = np.sqrt(np.sum(w * w))
            if not nrm > 1e-300:
                raise ValueError("update collapsed the iterate to (near) zero norm")
            v = w / nrm
            step += 1
            if pos < len(steps) and steps[pos] == step:
                assert abs(float(v @ v) - 1.0) <= 1e-11
                states[pos] = v
                pos += 1
    sin2 = 1.0 - states[:, 0] ** 2
    return Trajectory(config=config, times=steps, states=states, sin2_angle=sin2)
