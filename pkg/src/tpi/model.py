"""Random problem instances: Gaussian component matrices and sphere starts.

A problem instance is a pair (A, x0).  The k rows of A are the hidden
components a_1, ..., a_k, drawn i.i.d. from N(0, I_d / d) so that
E ||a_i||^2 = 1.  The start x0 is uniform on the sphere of radius sqrt(d),
drawn from a stream independent of A.

All sampling goes through the counter-based Philox generator keyed by a
64-bit seed, so any instance can be regenerated bit-for-bit from
(k, d, seed) alone.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "ComponentMatrix",
    "InitialVector",
    "InvalidDimensionError",
    "DegenerateSampleError",
    "derive_seed",
    "sample_components",
    "sample_sphere_init",
]


class InvalidDimensionError(ValueError):
    """A requested dimension (k, d, or m) is out of range."""


class DegenerateSampleError(RuntimeError):
    """The Gaussian sampler returned the zero vector repeatedly."""


#: Resample budget for the (measure-zero) all-zeros Gaussian draw.
_MAX_RESAMPLES = 8


def derive_seed(*keys: int) -> int:
    """Hash a tuple of non-negative integer keys into a 64-bit seed.

    Deterministic across processes and platforms.  Used to give every
    (experiment, cell, trial, stream) combination its own independent
    generator stream.
    """
    ss = np.random.SeedSequence(list(keys))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


# Domain tags keep the two samplers on disjoint streams even when handed the
# same raw seed; without them x0 would reproduce row 0 of A bit-for-bit.
_COMPONENT_DOMAIN = 0
_INIT_DOMAIN = 1


def _generator(seed: int, domain: int) -> np.random.Generator:
    # Philox is counter-based: cheap to construct per trial, and streams
    # for distinct (seed, domain) pairs are independent by design.
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, domain])))


@dataclass(frozen=True)
class ComponentMatrix:
    """Hidden components of one instance, stacked as rows.

    Attributes
    ----------
    entries : ndarray, shape (k, d)
        Row i is the component a_i with entries N(0, 1/d).
    k, d : int
        Number of components and ambient dimension.
    m : int
        Half the tensor order: the induced tensor is sum_i a_i^{(x) 2m}.
    seed : int
        Seed the matrix was drawn from; regeneration is bit-identical.
    """

    entries: np.ndarray
    k: int
    d: int
    m: int
    seed: int


@dataclass(frozen=True)
class InitialVector:
    """Start iterate on the sphere of radius sqrt(d), independent of A."""

    values: np.ndarray
    seed: int

    @property
    def d(self) -> int:
        return self.values.shape[0]


def sample_components(k: int, d: int, m: int = 2, seed: int = 0) -> ComponentMatrix:
    """Draw a k x d component matrix with i.i.d. N(0, 1/d) entries.

    Parameters
    ----------
    k : int
        Number of components (rows), k >= 1.
    d : int
        Ambient dimension (columns), d >= 1.
    m : int
        Half the tensor order, m >= 2 (m = 2 means a 4th-order tensor).
    seed : int
        64-bit stream seed.
    """
    if k < 1:
        raise InvalidDimensionError(f"k must be >= 1, got {k}")
    if d < 1:
        raise InvalidDimensionError(f"d must be >= 1, got {d}")
    if m < 2:
        raise InvalidDimensionError(f"m must be >= 2, got {m}")
    entries = _generator(seed, _COMPONENT_DOMAIN).standard_normal((k, d)) / np.sqrt(d)
    return ComponentMatrix(entries=entries, k=k, d=d, m=m, seed=seed)


def _sphere_point(rng: np.random.Generator, d: int) -> np.ndarray:
    """One uniform point on the radius-sqrt(d) sphere; resamples zero draws."""
    for _ in range(_MAX_RESAMPLES):
        g = rng.standard_normal(d)
        nrm = float(np.linalg.norm(g))
        if nrm > 0.0:
            return np.sqrt(d) * g / nrm
    raise DegenerateSampleError(
        f"got {_MAX_RESAMPLES} all-zero Gaussian draws in a row; "
        "the generator is broken"
    )


def sample_sphere_init(d: int, seed: int = 0) -> InitialVector:
    """Draw the start iterate uniformly from the sphere ||x|| = sqrt(d)."""
    if d < 1:
        raise InvalidDimensionError(f"d must be >= 1, got {d}")
    values = _sphere_point(_generator(seed, _INIT_DOMAIN), d)
    return InitialVector(values=values, seed=seed)
