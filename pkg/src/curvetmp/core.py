"""Bivariate moment data and the operations that do not depend on a curve reduction.

Moments are indexed by pairs ``(i, j)`` standing for ``x**i * y**j``.  Bivariate
polynomials are plain ``{(i, j): coefficient}`` mappings.  Moment matrices use
the degree-lexicographic order ``1, X, Y, X^2, XY, Y^2, ...``; for odd degree
the block pairing two top-degree monomials is not determined by the data and is
masked instead of filled.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Union

import numpy as np

Monomial = tuple[int, int]
Poly2 = Mapping[Monomial, float]


class CurveTMPError(Exception):
    """Base class for contract violations; ``code`` is the stable machine name."""

    code = "CurveTMPError"

    def __init__(self, message: str = "", **details):
        super().__init__(message or self.code)
        self.details = details

    def to_dict(self) -> dict:
        return {"error": self.code, "message": str(self), **self.details}


def _error(name: str) -> type[CurveTMPError]:
    return type(name, (CurveTMPError,), {"code": name})


DegreeTooHigh = _error("DegreeTooHigh")
DegreeTooLow = _error("DegreeTooLow")
SingularTransform = _error("SingularTransform")
UndefinedEntries = _error("UndefinedEntries")
EvenLength = _error("EvenLength")
IllConditioned = _error("IllConditioned")
InternalInvariantBroken = _error("InternalInvariantBroken")
AtomAtPole = _error("AtomAtPole")
CornerNotPD = _error("CornerNotPD")
NonrealRoots = _error("NonrealRoots")
UnsupportedCurve = _error("UnsupportedCurve")
InvalidInput = _error("InvalidInput")


class RelationsViolated(CurveTMPError):
    code = "RelationsViolated"

    def __init__(self, pairs: Iterable[Monomial], message: str = ""):
        pairs = [tuple(int(v) for v in p) for p in pairs]
        super().__init__(message or f"curve relations fail at {pairs}", pairs=pairs)
        self.pairs = pairs


class Status(str, Enum):
    MEASURE_FOUND = "MeasureFound"
    NO_MEASURE = "NoMeasure"
    UNKNOWN = "Unknown"


# ---------------------------------------------------------------------------
# configuration and curves


@dataclass(frozen=True)
class ToleranceConfig:
    rank_tol: float = 1e-9
    psd_tol: float = 1e-9
    residual_tol: float = 1e-7
    atom_merge_tol: float = 1e-8
    max_iter: int = 5000

    def __post_init__(self):
        for name in ("rank_tol", "psd_tol", "residual_tol", "atom_merge_tol"):
            if not getattr(self, name) > 0:
                raise InvalidInput(f"{name} must be positive")
        if int(self.max_iter) < 1:
            raise InvalidInput("max_iter must be at least 1")

    def as_dict(self) -> dict:
        return {
            "rank_tol": self.rank_tol,
            "psd_tol": self.psd_tol,
            "residual_tol": self.residual_tol,
            "atom_merge_tol": self.atom_merge_tol,
            "max_iter": int(self.max_iter),
        }


DEFAULT_TOLERANCES = ToleranceConfig()


@dataclass(frozen=True)
class GraphCurve:
    """The curve y = q(x) with ``q = (q_0, ..., q_l)`` and ``q_l != 0``."""

    q: tuple[float, ...]

    def __post_init__(self):
        q = tuple(float(c) for c in self.q)
        while len(q) > 1 and q[-1] == 0.0:
            q = q[:-1]
        object.__setattr__(self, "q", q)
        if len(q) - 1 < 2:
            raise UnsupportedCurve(f"graph curves need deg q >= 2, got {len(q) - 1}")

    @property
    def ell(self) -> int:
        return len(self.q) - 1

    @property
    def leading(self) -> float:
        return self.q[-1]

    def evaluate(self, x):
        return np.polynomial.polynomial.polyval(x, self.q)

    def residual(self, x, y):
        return np.asarray(y) - self.evaluate(x)

    def describe(self) -> str:
        return "y=" + "+".join(f"{c!r}*x^{p}" for p, c in enumerate(self.q) if c != 0.0)


@dataclass(frozen=True)
class HyperbolicCurve:
    """The curve y * x**ell = 1."""

    ell: int

    def __post_init__(self):
        if int(self.ell) != self.ell or self.ell < 2:
            raise UnsupportedCurve(f"hyperbolic curves need ell >= 2, got {self.ell}")
        object.__setattr__(self, "ell", int(self.ell))

    def residual(self, x, y):
        return np.asarray(y) * np.asarray(x) ** self.ell - 1.0

    def describe(self) -> str:
        return f"y*x^{self.ell}=1"


CurveSpec = Union[GraphCurve, HyperbolicCurve]


def monomial_curve(ell: int) -> GraphCurve:
    return GraphCurve(tuple([0.0] * ell + [1.0]))


# ---------------------------------------------------------------------------
# moment sequences


def simplex(d: int) -> list[Monomial]:
    """All (i, j) with i + j <= d in degree-lex order."""
    return [(deg - j, j) for deg in range(d + 1) for j in range(deg + 1)]


@dataclass(frozen=True)
class BivariateMomentSequence:
    degree: int
    values: Mapping[Monomial, float]

    def __post_init__(self):
        d = int(self.degree)
        if d < 0:
            raise InvalidInput("degree must be nonnegative")
        vals = {}
        for key, value in dict(self.values).items():
            i, j = (int(key[0]), int(key[1]))
            if i < 0 or j < 0 or i + j > d:
                raise InvalidInput(f"moment index {(i, j)} outside the degree-{d} simplex")
            vals[(i, j)] = float(value)
        missing = [m for m in simplex(d) if m not in vals]
        if missing:
            raise InvalidInput(f"missing moments {missing[:5]}", missing=[list(m) for m in missing])
        object.__setattr__(self, "degree", d)
        object.__setattr__(self, "values", vals)

    def __getitem__(self, index: Monomial) -> float:
        return self.values[index]

    def items(self):
        return ((m, self.values[m]) for m in simplex(self.degree))

    def truncate(self, d: int) -> "BivariateMomentSequence":
        return BivariateMomentSequence(d, {m: self.values[m] for m in simplex(d)})


@dataclass(frozen=True)
class MomentMatrix:
    order: int
    entries: np.ndarray
    column_labels: tuple[Monomial, ...]
    defined_mask: np.ndarray

    @property
    def fully_defined(self) -> bool:
        return bool(self.defined_mask.all())

    def matrix(self) -> np.ndarray:
        if not self.fully_defined:
            raise UndefinedEntries("moment matrix has undefined entries")
        return self.entries.copy()

    def restrict(self, labels: Iterable[Monomial]) -> np.ndarray:
        idx = [self.column_labels.index(tuple(m)) for m in labels]
        sub_mask = self.defined_mask[np.ix_(idx, idx)]
        if not sub_mask.all():
            raise UndefinedEntries("restriction touches undefined entries")
        return self.entries[np.ix_(idx, idx)].copy()


def build_moment_matrix(beta: BivariateMomentSequence) -> MomentMatrix:
    k = (beta.degree + 1) // 2
    labels = tuple(simplex(k))
    n = len(labels)
    entries = np.full((n, n), np.nan)
    mask = np.zeros((n, n), dtype=bool)
    for r, (a, b) in enumerate(labels):
        for c, (e, f) in enumerate(labels):
            if a + b + e + f <= beta.degree:
                entries[r, c] = beta[(a + e, b + f)]
                mask[r, c] = True
    return MomentMatrix(k, entries, labels, mask)


# ---------------------------------------------------------------------------
# polynomials and the Riesz functional


def poly_mul(p: Poly2, r: Poly2) -> dict[Monomial, float]:
    out: dict[Monomial, float] = {}
    for (a, b), u in p.items():
        for (c, d), v in r.items():
            key = (a + c, b + d)
            out[key] = out.get(key, 0.0) + u * v
    return out


def poly_degree(p: Poly2) -> int:
    degs = [i + j for (i, j), c in p.items() if c != 0.0]
    return max(degs) if degs else 0


def riesz_eval(beta: BivariateMomentSequence, p: Poly2) -> float:
    total = 0.0
    for (i, j), c in p.items():
        if c == 0.0:
            continue
        if i + j > beta.degree:
            raise DegreeTooHigh(f"monomial x^{i}y^{j} exceeds degree {beta.degree}")
        total += c * beta[(i, j)]
    return total


@dataclass(frozen=True)
class AffineMap:
    """phi(x, y) = (a + b x + c y, d + e x + f y)."""

    a: float = 0.0
    b: float = 1.0
    c: float = 0.0
    d: float = 0.0
    e: float = 0.0
    f: float = 1.0

    @property
    def det(self) -> float:
        return self.b * self.f - self.c * self.e

    def __call__(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return self.a + self.b * x + self.c * y, self.d + self.e * x + self.f * y

    def inverse(self) -> "AffineMap":
        det = self.det
        if det == 0.0:
            raise SingularTransform("affine map is not invertible")
        b, c, e, f = self.f / det, -self.c / det, -self.e / det, self.b / det
        return AffineMap(-(b * self.a + c * self.d), b, c, -(e * self.a + f * self.d), e, f)

    def as_tuple(self) -> tuple[float, ...]:
        return (self.a, self.b, self.c, self.d, self.e, self.f)


def apply_alt(beta: BivariateMomentSequence, phi: AffineMap) -> BivariateMomentSequence:
    """Moments of the push-forward of any representing measure under ``phi``."""
    if phi.det == 0.0:
        raise SingularTransform("bf - ce = 0")
    d = beta.degree
    first = {(0, 0): phi.a, (1, 0): phi.b, (0, 1): phi.c}
    second = {(0, 0): phi.d, (1, 0): phi.e, (0, 1): phi.f}
    pow1 = [{(0, 0): 1.0}]
    pow2 = [{(0, 0): 1.0}]
    for _ in range(d):
        pow1.append(poly_mul(pow1[-1], first))
        pow2.append(poly_mul(pow2[-1], second))
    out = {(i, j): riesz_eval(beta, poly_mul(pow1[i], pow2[j])) for (i, j) in simplex(d)}
    return BivariateMomentSequence(d, out)


# ---------------------------------------------------------------------------
# measures and synthesis


@dataclass(frozen=True)
class AtomicMeasure2D:
    atoms: tuple[tuple[float, float], ...]
    densities: tuple[float, ...]
    curve: CurveSpec | None = field(default=None, compare=False)

    def __post_init__(self):
        atoms = tuple((float(x), float(y)) for x, y in self.atoms)
        dens = tuple(float(r) for r in self.densities)
        if len(atoms) != len(dens):
            raise InvalidInput("atoms and densities differ in length")
        if any(not r > 0 for r in dens):
            raise InvalidInput("densities must be strictly positive")
        if len(set(atoms)) != len(atoms):
            raise InvalidInput("atoms must be pairwise distinct")
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "densities", dens)
        if self.curve is not None and atoms:
            xs, ys = self.arrays()[0].T
            res = np.abs(self.curve.residual(xs, ys))
            scale = 1.0 + np.abs(ys)
            if isinstance(self.curve, HyperbolicCurve):
                scale = 1.0 + np.abs(ys * xs**self.curve.ell)
            if np.any(res > 1e-8 * scale):
                raise InvalidInput("an atom is not on the tagged curve")

    def __len__(self) -> int:
        return len(self.atoms)

    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        return np.array(self.atoms, dtype=float).reshape(-1, 2), np.array(self.densities, dtype=float)


def synth_moments(mu: AtomicMeasure2D, d: int) -> BivariateMomentSequence:
    pts, rho = mu.arrays()
    xs, ys = pts[:, 0], pts[:, 1]
    vals = {(i, j): float(np.sum(rho * xs**i * ys**j)) for (i, j) in simplex(d)}
    return BivariateMomentSequence(d, vals)


def moment_residual(beta: BivariateMomentSequence, mu: AtomicMeasure2D) -> float:
    """Largest moment mismatch, each scaled by the matching absolute moment of ``mu``."""
    pts, rho = mu.arrays()
    xs, ys = np.abs(pts[:, 0]), np.abs(pts[:, 1])
    fitted = synth_moments(mu, beta.degree)
    floor = max(abs(beta[(0, 0)]), 1e-300)
    worst = 0.0
    for (i, j), value in beta.items():
        scale = float(np.sum(rho * xs**i * ys**j)) if len(rho) else 0.0
        scale = max(scale, abs(value), floor * 1e-300)
        worst = max(worst, abs(value - fitted[(i, j)]) / scale)
    return worst


def moment_scale(beta: BivariateMomentSequence):
    """Rough size of |beta_ij| for data coming from a positive measure.

    Uses radii estimated from the even pure moments; returns a function (i, j) -> scale.
    """
    b00 = abs(beta[(0, 0)]) or 1.0
    rx = ry = 0.0
    for t in range(1, beta.degree + 1):
        for key, setter in (((t, 0), "x"), ((0, t), "y")):
            v = abs(beta[key]) / b00
            if v > 0:
                r = v ** (1.0 / t)
                if setter == "x":
                    rx = max(rx, r)
                else:
                    ry = max(ry, r)
    rx, ry = max(rx, 1e-12), max(ry, 1e-12)

    def scale(i: int, j: int) -> float:
        return b00 * rx**i * ry**j

    return scale


# ---------------------------------------------------------------------------
# relations


def check_column_relation(M: MomentMatrix, p: Poly2, tol: float = 1e-9) -> bool:
    coeffs = np.zeros(len(M.column_labels))
    for mono, c in p.items():
        if c == 0.0:
            continue
        mono = (int(mono[0]), int(mono[1]))
        if sum(mono) > M.order:
            raise DegreeTooHigh(f"column {mono} exceeds the matrix order {M.order}")
        coeffs[M.column_labels.index(mono)] = c
    used = np.flatnonzero(coeffs)
    if not M.defined_mask[:, used].all():
        raise UndefinedEntries("the relation reads masked entries")
    cols = M.entries[:, used]
    combo = cols @ coeffs[used]
    scale = np.max(np.abs(M.entries[M.defined_mask])) if M.defined_mask.any() else 1.0
    return bool(np.max(np.abs(combo), initial=0.0) <= tol * max(scale, 1e-300) * max(1.0, np.abs(coeffs).sum()))


def check_curve_relations(beta: BivariateMomentSequence, curve: CurveSpec, tol: float = 1e-9) -> list[Monomial]:
    """Index pairs at which the recursive relations forced by the curve fail."""
    d = beta.degree
    scale = moment_scale(beta)
    bad: list[Monomial] = []
    if isinstance(curve, GraphCurve):
        ell, q = curve.ell, curve.q
        for i, j in simplex(d - ell + 1):
            if j < 1:
                continue
            terms = [q[p] * beta[(i + p, j - 1)] for p in range(ell + 1)]
            lhs = beta[(i, j)]
            size = max(abs(lhs), sum(abs(t) for t in terms), scale(i, j), max(scale(i + p, j - 1) * abs(q[p]) for p in range(ell + 1)))
            if abs(lhs - sum(terms)) > tol * size:
                bad.append((i, j))
    else:
        ell = curve.ell
        for i, j in simplex(d - ell - 1):
            lhs, rhs = beta[(i + ell, j + 1)], beta[(i, j)]
            size = max(abs(lhs), abs(rhs), scale(i, j), scale(i + ell, j + 1))
            if abs(lhs - rhs) > tol * size:
                bad.append((i, j))
    return bad


def numeric_rank(A: np.ndarray, tol: float) -> int:
    """Rank by eigenvalues of a symmetric matrix, relative to the largest one."""
    if A.size == 0:
        return 0
    w = np.linalg.eigvalsh((A + A.T) / 2)
    top = np.max(np.abs(w))
    if top == 0.0:
        return 0
    return int(np.sum(w > tol * top))


def ceil_half(d: int) -> int:
    return -(-d // 2)
