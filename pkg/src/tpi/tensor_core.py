"""Contractions of the order-2m tensor T = sum_i a_i^{(x) 2m}.

Everything routes through the k x d component matrix A.  The implicit
contraction A^T (A x)^{o(2m-1)} costs O(kd) and never forms a tensor; the
explicit route materializes T at O(d^{2m}) cost and exists purely as an
independent desk-scale oracle for the implicit one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import ComponentMatrix, InvalidDimensionError

__all__ = [
    "DimensionMismatchError",
    "ExplicitTensor",
    "contract_explicit",
    "contract_implicit",
    "gradient",
    "materialize_tensor",
    "objective",
]

#: Refuse to materialize tensors beyond this entry count.
_EXPLICIT_ENTRY_CAP = 1_000_000


class DimensionMismatchError(ValueError):
    """Vector length does not match the instance dimension."""


def _check_vector(x: np.ndarray, d: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (d,):
        raise DimensionMismatchError(f"expected vector of shape ({d},), got {x.shape}")
    return x


def _odd_power(y: np.ndarray, m: int) -> np.ndarray:
    """Elementwise y^(2m-1) by repeated multiplication.

    Repeated multiply keeps this exact-by-construction and bit-stable
    across platforms, unlike libm pow.
    """
    out = y
    yy = y * y
    for _ in range(m - 1):
        out = out * yy
    return out


def _even_power(y: np.ndarray, m: int) -> np.ndarray:
    """Elementwise y^(2m) by repeated multiplication."""
    yy = y * y
    out = yy
    for _ in range(m - 1):
        out = out * yy
    return out


def contract_implicit(A: ComponentMatrix, x: np.ndarray) -> np.ndarray:
    """T applied (2m-1) times to x, through A: returns A^T (A x)^(2m-1).

    Parameters
    ----------
    A : ComponentMatrix
    x : ndarray, shape (d,)

    Returns
    -------
    ndarray, shape (d,)
        sum_i <a_i, x>^(2m-1) a_i, computed in O(kd).
    """
    x = _check_vector(x, A.d)
    y = A.entries @ x
    return A.entries.T @ _odd_power(y, A.m)


def objective(A: ComponentMatrix, x: np.ndarray) -> float:
    """S(x) = sum_i <a_i, x>^(2m) = ||A x||_{2m}^{2m}.

    The k-term accumulation uses numpy's pairwise summation, which keeps
    the error growth logarithmic in k.
    """
    x = _check_vector(x, A.d)
    y = A.entries @ x
    return float(np.sum(_even_power(y, A.m)))


def gradient(A: ComponentMatrix, x: np.ndarray) -> np.ndarray:
    """Gradient of the objective: 2m * A^T (A x)^(2m-1)."""
    return (2 * A.m) * contract_implicit(A, x)


@dataclass(frozen=True)
class ExplicitTensor:
    """Materialized symmetric tensor, for small-instance verification only."""

    entries: np.ndarray
    order: int
    d: int


def materialize_tensor(A: ComponentMatrix) -> ExplicitTensor:
    """Form T = sum_i a_i^{(x) 2m} as a dense (d, ..., d) array.

    Symmetry falls out of the construction and is verified in tests, not
    exploited: the oracle stays as literal as possible.  Refuses d^{2m}
    beyond one million entries.
    """
    order = 2 * A.m
    if A.d**order > _EXPLICIT_ENTRY_CAP:
        raise InvalidDimensionError(
            f"explicit tensor would have d^(2m) = {A.d**order} entries; "
            f"cap is {_EXPLICIT_ENTRY_CAP} (use the implicit route)"
        )
    entries = np.zeros((A.d,) * order)
    for a in A.entries:
        term = a
        for _ in range(order - 1):
            term = np.multiply.outer(term, a)
        entries += term
    return ExplicitTensor(entries=entries, order=order, d=A.d)


def contract_explicit(T: ExplicitTensor, x: np.ndarray) -> np.ndarray:
    """Direct (2m-1)-fold contraction of the materialized tensor with x.

    Independent of the component matrix: works purely on T.entries, so it
    serves as the equivalence oracle for contract_implicit.
    """
    x = _check_vector(x, T.d)
    out = T.entries
    for _ in range(T.order - 1):
        out = out @ x
    return out
