"""Dense complex linear-algebra primitives.

Nothing in here knows about excitons or histories: Hermitian
eigendecomposition, a scaling-and-squaring matrix exponential, and
trapezoidal quadrature.
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

from .errors import ExpmOverflow, NoConvergence, NotHermitian, TooFewSamples

HERMITIAN_RTOL = 1e-10

# Pade(13) coefficients and the 1-norm bound below which it is accurate to
# unit roundoff without further scaling (Higham, SIAM J. Matrix Anal. 2005).
_PADE13 = (
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
)
_THETA13 = 5.371920351148152
_MAX_SQUARINGS = 64


class HermitianEigen(NamedTuple):
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


def _as_square(m) -> np.ndarray:
    m = np.asarray(m)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix has non-finite entries")
    return m


def is_hermitian(m, rtol: float = HERMITIAN_RTOL) -> bool:
    m = np.asarray(m)
    scale = max(np.linalg.norm(m), 1.0)
    return bool(np.linalg.norm(m - m.conj().T) <= rtol * scale)


def hermitize(m, rtol: float = HERMITIAN_RTOL) -> np.ndarray:
    """Return ``(m + m^H)/2`` after checking ``m`` is Hermitian up to ``rtol``."""
    m = _as_square(m)
    if not is_hermitian(m, rtol):
        asym = np.abs(m - m.conj().T)
        i, j = np.unravel_index(np.argmax(asym), asym.shape)
        raise NotHermitian(
            f"matrix is not Hermitian: |m[{i},{j}] - conj(m[{j},{i}])| = {asym[i, j]:.3g}"
        )
    return 0.5 * (m + m.conj().T)


def eig_hermitian(m) -> HermitianEigen:
    """Eigendecomposition of a Hermitian matrix.

    Eigenvalues are returned in ascending order; eigenvectors are the
    columns of a unitary matrix.  Each eigenvector is rotated so that its
    largest-magnitude component is real and positive, which makes the
    output independent of LAPACK's phase choices.
    """
    h = hermitize(m)
    try:
        w, v = np.linalg.eigh(h)
    except np.linalg.LinAlgError as exc:
        raise NoConvergence(str(exc)) from exc
    idx = np.argmax(np.abs(v), axis=0)
    pivots = v[idx, np.arange(v.shape[1])]
    v = v * (np.abs(pivots) / pivots)[None, :]
    return HermitianEigen(w, v)


def expm(m) -> np.ndarray:
    """Matrix exponential by scaling and squaring with a [13/13] Pade approximant."""
    a = _as_square(m)
    dtype = np.result_type(a.dtype, np.float64)
    a = a.astype(dtype, copy=True)
    n = a.shape[0]
    ident = np.eye(n, dtype=dtype)
    if n == 0:
        return a
    norm1 = np.linalg.norm(a, 1)
    if norm1 == 0.0:
        return ident

    s = max(0, math.ceil(math.log2(norm1 / _THETA13)))
    if s > _MAX_SQUARINGS:
        raise ExpmOverflow(f"1-norm {norm1:.3g} needs {s} squarings (budget {_MAX_SQUARINGS})")
    if s:
        a /= 2.0**s

    b = _PADE13
    a2 = a @ a
    a4 = a2 @ a2
    a6 = a2 @ a4
    u = a @ (a6 @ (b[13] * a6 + b[11] * a4 + b[9] * a2) + b[7] * a6 + b[5] * a4 + b[3] * a2 + b[1] * ident)
    v = a6 @ (b[12] * a6 + b[10] * a4 + b[8] * a2) + b[6] * a6 + b[4] * a4 + b[2] * a2 + b[0] * ident
    r = np.linalg.solve(v - u, v + u)
    for _ in range(s):
        r = r @ r
    if not np.all(np.isfinite(r)):
        raise ExpmOverflow("matrix exponential overflowed")
    return r


def _check_grid(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y)
    if x.ndim != 1 or x.shape[0] != y.shape[0]:
        raise ValueError("abscissas and values must have matching leading length")
    if x.shape[0] < 2:
        raise TooFewSamples(f"need at least 2 samples, got {x.shape[0]}")
    if np.any(np.diff(x) <= 0):
        raise ValueError("abscissas must be strictly increasing")
    return x, y


def trapezoid(x, y):
    """Composite trapezoidal integral of samples ``y`` at abscissas ``x``."""
    x, y = _check_grid(x, y)
    dx = np.diff(x).reshape((-1,) + (1,) * (y.ndim - 1))
    return np.sum(dx * (y[1:] + y[:-1]), axis=0) / 2.0


def cumulative_trapezoid(x, y) -> np.ndarray:
    """Running trapezoidal integral, starting at 0 for the first sample."""
    x, y = _check_grid(x, y)
    dx = np.diff(x).reshape((-1,) + (1,) * (y.ndim - 1))
    steps = dx * (y[1:] + y[:-1]) / 2.0
    out = np.zeros_like(y, dtype=np.result_type(y.dtype, np.float64))
    out[1:] = np.cumsum(steps, axis=0)
    return out
