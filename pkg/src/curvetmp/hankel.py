"""Univariate sequences, their Hankel matrices, and recursive-generation tests.

Numerical decisions are made on a balanced copy of the Hankel matrix: the
sequence is first rescaled by ``t -> c**-t`` (which corresponds to the change of
variable ``x -> x / c``) and the matrix is then given a unit diagonal.  Both steps
are congruences, so rank, definiteness and column dependencies are unchanged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

from .core import EvenLength, InvalidInput


@dataclass(frozen=True)
class UnivariateMomentSequence:
    k1: int
    values: tuple[float, ...]

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        if not vals:
            raise InvalidInput("empty sequence")
        object.__setattr__(self, "k1", int(self.k1))
        object.__setattr__(self, "values", vals)

    @property
    def k2(self) -> int:
        return self.k1 + len(self.values) - 1

    def __len__(self) -> int:
        return len(self.values)

    def __getitem__(self, t: int) -> float:
        if not self.k1 <= t <= self.k2:
            raise IndexError(t)
        return self.values[t - self.k1]

    def array(self) -> np.ndarray:
        return np.array(self.values)

    def window(self, a: int, b: int) -> "UnivariateMomentSequence":
        return UnivariateMomentSequence(a, self.values[a - self.k1 : b - self.k1 + 1])

    def indices(self) -> range:
        return range(self.k1, self.k2 + 1)


def sequence(values: Iterable[float], k1: int = 0) -> UnivariateMomentSequence:
    return UnivariateMomentSequence(k1, tuple(values))


@dataclass(frozen=True)
class PartialUnivariateSequence:
    k1: int
    k2: int
    known: Mapping[int, float]
    unknown: frozenset[int]

    def __post_init__(self):
        known = {int(t): float(v) for t, v in dict(self.known).items()}
        unknown = frozenset(int(t) for t in self.unknown)
        full = set(range(int(self.k1), int(self.k2) + 1))
        if set(known) & unknown:
            raise InvalidInput("an index is both known and unknown")
        if set(known) | unknown != full:
            raise InvalidInput("known and unknown indices must cover the range exactly")
        object.__setattr__(self, "known", known)
        object.__setattr__(self, "unknown", unknown)

    @property
    def holes(self) -> list[int]:
        return sorted(self.unknown)

    def __len__(self) -> int:
        return self.k2 - self.k1 + 1

    def fill(self, values: Mapping[int, float] | Iterable[float]) -> UnivariateMomentSequence:
        if not isinstance(values, Mapping):
            values = dict(zip(self.holes, values))
        merged = {**self.known, **{int(t): float(v) for t, v in values.items()}}
        return UnivariateMomentSequence(self.k1, tuple(merged[t] for t in range(self.k1, self.k2 + 1)))

    def restrict(self, a: int, b: int) -> "PartialUnivariateSequence":
        return PartialUnivariateSequence(
            a, b, {t: v for t, v in self.known.items() if a <= t <= b}, frozenset(t for t in self.unknown if a <= t <= b)
        )


def hankel_matrix(values) -> np.ndarray:
    v = np.asarray(values, dtype=float)
    if v.size % 2 == 0:
        raise EvenLength(f"Hankel matrices need an odd number of entries, got {v.size}")
    m = v.size // 2
    idx = np.arange(m + 1)
    return v[idx[:, None] + idx[None, :]]


@dataclass(frozen=True)
class HankelView:
    source: UnivariateMomentSequence

    @property
    def m(self) -> int:
        return (len(self.source) - 1) // 2

    @property
    def matrix(self) -> np.ndarray:
        return hankel_matrix(self.source.values)

    @property
    def column_labels(self) -> tuple[int, ...] | None:
        """Exponents of the monomials indexing the columns, when the start index is even."""
        if self.source.k1 % 2:
            return None
        base = self.source.k1 // 2
        return tuple(range(base, base + self.m + 1))

    def upper_left(self, mp: int) -> np.ndarray:
        return self.matrix[: mp + 1, : mp + 1]

    def lower_right(self, mp: int) -> np.ndarray:
        n = self.m + 1
        return self.matrix[n - mp - 1 :, n - mp - 1 :]

    def reversed(self) -> "HankelView":
        return HankelView(UnivariateMomentSequence(self.source.k1, self.source.values[::-1]))


def hankel_from(v: UnivariateMomentSequence) -> HankelView:
    if len(v) % 2 == 0:
        raise EvenLength(f"Hankel matrices need an odd number of entries, got {len(v)}")
    return HankelView(v)


# ---------------------------------------------------------------------------
# balancing


def radius_estimate(values) -> float:
    """A scale ``c`` such that ``values[t] / c**t`` stays of the size of ``values[0]``."""
    v = np.abs(np.asarray(values, dtype=float))
    base = v[0] if v[0] > 0 else (v.max() if v.size else 0.0)
    if base == 0.0:
        return 1.0
    c = 0.0
    for t in range(1, v.size):
        if v[t] > 0:
            c = max(c, (v[t] / base) ** (1.0 / t))
    return c if c > 0 else 1.0


def scaled(values, c: float, start: int = 0) -> np.ndarray:
    v = np.asarray(values, dtype=float)
    powers = np.arange(start, start + v.size, dtype=float)
    return v / np.power(c, powers)


def jacobi(A: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Unit-diagonal congruence of a symmetric matrix; zero diagonals are left alone."""
    diag = np.diag(A).copy()
    dscale = np.where(diag > 0, 1.0 / np.sqrt(np.where(diag > 0, diag, 1.0)), 1.0)
    return A * dscale[:, None] * dscale[None, :], dscale


def noise_tolerance(noise, c: float, dscale: np.ndarray) -> float:
    """Spectral norm of the Hankel matrix of error bounds ``noise`` after the same scaling as the data."""
    if noise is None:
        return 0.0
    ns = scaled(np.abs(np.asarray(noise, dtype=float)), c)
    m = dscale.size
    N = hankel_matrix(ns[: 2 * m - 1]) * dscale[:, None] * dscale[None, :]
    return float(np.linalg.norm(N, 2))


def balanced_hankel(values) -> tuple[np.ndarray, float]:
    c = radius_estimate(values)
    H = hankel_matrix(scaled(values, c))
    return jacobi(H)[0], c


def is_positive_definite(A: np.ndarray, tol: float) -> bool:
    if A.shape[0] == 0:
        return True
    if np.any(np.diag(A) <= 0):
        return False
    B, _ = jacobi(A)
    return bool(np.linalg.eigvalsh((B + B.T) / 2)[0] > tol)


def min_eigenvalue_ratio(A: np.ndarray) -> float:
    """Smallest eigenvalue divided by the largest magnitude eigenvalue."""
    if A.shape[0] == 0:
        return 1.0
    w = np.linalg.eigvalsh((A + A.T) / 2)
    top = np.max(np.abs(w))
    return float(w[0] / top) if top > 0 else 0.0


# ---------------------------------------------------------------------------
# rank and recursive generation


def _in_span(cols: np.ndarray, target: np.ndarray, tol: float, scale: float) -> bool:
    norm = np.linalg.norm(target)
    if norm <= tol * scale:
        return True
    if cols.shape[1] == 0:
        return False
    coef, *_ = np.linalg.lstsq(cols, target, rcond=None)
    return bool(np.linalg.norm(cols @ coef - target) <= tol * norm)


def sequence_rank(v: UnivariateMomentSequence, tol: float = 1e-9) -> int:
    hankel_from(v)
    B, _ = balanced_hankel(v.values)
    scale = np.max(np.abs(B)) if B.size else 0.0
    if scale == 0.0:
        return 0
    for i in range(B.shape[0]):
        if _in_span(B[:, :i], B[:, i], tol, scale):
            return i
    return B.shape[0]


@dataclass(frozen=True)
class RecursionCheck:
    ok: bool
    rank: int
    coefficients: tuple[float, ...] | None


def check_prg(v: UnivariateMomentSequence, tol: float = 1e-9) -> RecursionCheck:
    """Positive recursive generation: leading corner of size rank is PD and the recursion holds."""
    hankel_from(v)
    vals = np.array(v.values)
    m = (vals.size - 1) // 2
    r = sequence_rank(v, tol)
    c = radius_estimate(vals)
    s = scaled(vals, c)
    H = hankel_matrix(s)
    if r == m + 1:
        return RecursionCheck(is_positive_definite(H, tol), r, None)
    if r > 0 and not is_positive_definite(H[:r, :r], tol):
        return RecursionCheck(False, r, None)
    phi = np.linalg.solve(H[:r, :r], s[r : 2 * r]) if r else np.zeros(0)
    rec_tol = math.sqrt(tol)
    ok = True
    for j in range(r, 2 * m + 1):
        window = s[j - r : j]
        pred = float(phi @ window) if r else 0.0
        size = max(abs(s[j]), float(np.abs(phi) @ np.abs(window)) if r else 0.0, np.max(np.abs(s)) * tol)
        if abs(s[j] - pred) > rec_tol * size:
            ok = False
            break
    coeffs = tuple(float(phi[i] * c ** (r - i)) for i in range(r))
    return RecursionCheck(ok, r, coeffs)


def check_nrg(v: UnivariateMomentSequence, tol: float = 1e-9) -> RecursionCheck:
    """Negative recursive generation, the mirror image of :func:`check_prg`."""
    rev = UnivariateMomentSequence(v.k1, v.values[::-1])
    res = check_prg(rev, tol)
    psi = None if res.coefficients is None else tuple(reversed(res.coefficients))
    return RecursionCheck(res.ok, res.rank, psi)
