"""Covariance models in the eigenbasis, sample-stream generators, and RNG plumbing.

Everything downstream works in rescaled coordinates where the covariance matrix
is diagonal, Lambda = diag(lambda_1, ..., lambda_d), ordered so that

    lambda_1 > lambda_2 >= ... >= lambda_d > 0.

The strict top gap lambda_1 - lambda_2 is what makes the top eigenvector
identifiable, so it is validated here once and assumed everywhere else.

Two zero-mean sample distributions with E[Y Y^T] = Lambda exactly are provided:

* ``sample_bounded``: atomic, supported on the 2d points +/- sqrt(tr) e_i with
  axis probabilities lambda_i / tr.  Every draw has the same squared norm
  tr(Lambda), so the almost-sure bound B = tr(Lambda) holds with equality.
* ``sample_gaussian``: independent N(0, lambda_i) coordinates.  Unbounded (no
  almost-sure norm bound), but with the product fourth moments
  E[Y_k^2 Y_i^2] = lambda_k lambda_i (i != k) that the local diffusion limits
  are calibrated to.

Randomness contract: all chain streams come from the counter-based Philox
generator, seeded through ``SeedSequence(master_seed, spawn_key=(index,...))``.
Chain i of any ensemble uses ``chain_rng(master_seed, i)``, which makes every
run reproducible and independent of worker scheduling.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

__all__ = [
    "EigenSpectrum",
    "make_spectrum",
    "sample_bounded",
    "sample_gaussian",
    "random_rotation",
    "chain_rng",
    "derive_seed",
]

ArrayLike = Union[Sequence[float], np.ndarray]

# Largest admissible master seed: SeedSequence entropy is used as an unsigned
# 64-bit word so configs stay portable across serialization formats.
MAX_SEED = 2**64 - 1


@dataclass(frozen=True, eq=False)
class EigenSpectrum:
    """Diagonal covariance spectrum with a strict top eigengap.

    Construct through :func:`make_spectrum`, which validates the ordering
    constraints; the constructor itself does not re-check.
    """

    lambdas: np.ndarray = field(repr=True)

    @property
    def d(self) -> int:
        return self.lambdas.shape[0]

    @property
    def gap(self) -> float:
        """Top eigengap lambda_1 - lambda_2 (strictly positive)."""
        return float(self.lambdas[0] - self.lambdas[1])

    @property
    def trace(self) -> float:
        """tr(Lambda), also the exact norm bound B of the bounded sampler."""
        return float(np.sum(self.lambdas))

    @property
    def sample_bound(self) -> float:
        """Almost-sure bound B on ||Y||^2 for the bounded sampler."""
        return self.trace

    def tail(self) -> np.ndarray:
        """Eigenvalues below the top one, i.e. (lambda_2, ..., lambda_d)."""
        return self.lambdas[1:]


def make_spectrum(lambdas: ArrayLike) -> EigenSpectrum:
    """Validate and freeze an eigenvalue sequence.

    Requirements: dimension >= 2, every entry strictly positive, strict top
    gap lambda_1 > lambda_2, and a nonincreasing tail
    lambda_2 >= lambda_3 >= ... >= lambda_d.
    """
    arr = np.asarray(lambdas, dtype=float)
    if arr.ndim != 1:
        raise ValueError(f"eigenvalues must form a 1-d sequence, got shape {arr.shape}")
    if arr.shape[0] < 2:
        raise ValueError(f"need dimension d >= 2, got d={arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("eigenvalues must be finite")
    if np.any(arr <= 0.0):
        raise ValueError(f"eigenvalues must be strictly positive, got {arr.tolist()}")
    if not arr[0] > arr[1]:
        raise ValueError(
            f"top eigengap must be strictly positive (lambda_1 > lambda_2), "
            f"got lambda_1={arr[0]} and lambda_2={arr[1]}"
        )
    if np.any(np.diff(arr[1:]) > 0.0):
        raise ValueError(
            f"tail eigenvalues must be nonincreasing, got {arr[1:].tolist()}"
        )
    arr = arr.copy()
    arr.setflags(write=False)
    return EigenSpectrum(lambdas=arr)


def _normalize_size(size: Optional[int]) -> int:
    if size is None:
        return 1
    if int(size) != size or size < 1:
        raise ValueError(f"size must be a positive integer, got {size!r}")
    return int(size)


def sample_bounded(
    spec: EigenSpectrum, rng: np.random.Generator, size: Optional[int] = None
) -> np.ndarray:
    """Draw from the atomic distribution +/- sqrt(tr) e_i, P(axis i) = lambda_i/tr.

    By construction E[Y] = 0, E[Y Y^T] = Lambda, and ||Y||^2 = tr(Lambda) on
    every draw, so the bounded-stream assumption holds with B = tr(Lambda).
    Returns shape (d,) when ``size`` is None, else (size, d).  A single draw
    equals the first row of a block draw from the same generator state.
    """
    n = _normalize_size(size)
    p = np.asarray(spec.lambdas) / spec.trace
    idx = rng.choice(spec.d, size=n, p=p)
    signs = rng.integers(0, 2, size=n) * 2 - 1
    y = np.zeros((n, spec.d))
    y[np.arange(n), idx] = signs * np.sqrt(spec.trace)
    return y[0] if size is None else y


def sample_gaussian(
    spec: EigenSpectrum, rng: np.random.Generator, size: Optional[int] = None
) -> np.ndarray:
    """Draw independent N(0, lambda_i) coordinates.

    Matches Lambda in second moments and has E[Y_k^2 Y_i^2] = lambda_k lambda_i
    for i != k and E[Y_k^4] = 3 lambda_k^2.  Unbounded: there is no almost-sure
    norm bound, which outputs that use this sampler must flag.
    """
    n = _normalize_size(size)
    y = rng.standard_normal((n, spec.d)) * np.sqrt(np.asarray(spec.lambdas))
    return y[0] if size is None else y


SAMPLERS = {"bounded": sample_bounded, "gaussian": sample_gaussian}

# Human-readable caveat attached to any report produced with the Gaussian stream.
GAUSSIAN_SAMPLER_NOTE = (
    "gaussian samples are unbounded: the almost-sure norm bound ||Y||^2 <= B "
    "does not hold for this stream"
)


def get_sampler(name: str):
    try:
        return SAMPLERS[name]
    except KeyError:
        raise ValueError(
            f"unknown sampler {name!r}, expected one of {sorted(SAMPLERS)}"
        ) from None


def random_rotation(d: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed rotation via QR of a Gaussian matrix with sign correction."""
    if d < 1:
        raise ValueError(f"dimension must be >= 1, got {d}")
    a = rng.standard_normal((d, d))
    q, r = np.linalg.qr(a)
    # Fix the sign ambiguity of QR so the distribution is exactly Haar.
    q = q * np.where(np.diag(r) < 0.0, -1.0, 1.0)
    # Haar on the orthogonal group lands in either component; flip one column
    # to stay in the rotation subgroup the name promises.
    if np.linalg.det(q) < 0.0:
        q[:, -1] = -q[:, -1]
    return q


def chain_rng(master_seed: int, *index: int) -> np.random.Generator:
    """Philox generator for one chain of an ensemble.

    ``chain_rng(seed, i)`` is the stream of chain i; distinct indices give
    statistically independent streams and the derivation is pure, so results
    never depend on how chains are scheduled across workers.
    """
    _check_seed(master_seed)
    ss = np.random.SeedSequence(master_seed, spawn_key=tuple(int(k) for k in index))
    return np.random.Generator(np.random.Philox(ss))


def derive_seed(master_seed: int, *index: int) -> int:
    """Derive a child 64-bit seed from a master seed and an index path."""
    _check_seed(master_seed)
    ss = np.random.SeedSequence(master_seed, spawn_key=tuple(int(k) for k in index))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _check_seed(seed: int) -> None:
    if int(seed) != seed or not (0 <= seed <= MAX_SEED):
        raise ValueError(f"seed must be an integer in [0, 2**64), got {seed!r}")
