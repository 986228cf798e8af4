"""Passing between bivariate data on a curve and univariate (partial) sequences.

For the graph ``y = q(x)`` a measure on the curve is the lift of its x-marginal,
so ``beta_ij = int x^i q(x)^j`` and the univariate moments ``gamma_t`` can be
peeled off in increasing ``t``.  For ``y x^l = 1`` the same holds with
``beta_ij = int x^(i - l j)`` and ``gamma`` carries negative indices.
Indices the data does not determine become holes of a partial sequence.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .core import (
    AffineMap,
    AtomAtPole,
    AtomicMeasure2D,
    BivariateMomentSequence,
    CurveSpec,
    GraphCurve,
    HyperbolicCurve,
    InternalInvariantBroken,
    RelationsViolated,
    apply_alt,
    check_curve_relations,
)
from .hamburger import AtomicMeasure1D
from .hankel import PartialUnivariateSequence


# ---------------------------------------------------------------------------
# coefficients of x^i q(x)^j


@lru_cache(maxsize=256)
def _q_power(q: tuple[float, ...], j: int) -> tuple[float, ...]:
    if j == 0:
        return (1.0,)
    return tuple(np.convolve(_q_power(q, j - 1), q))


@dataclass(frozen=True)
class StructureCoefficients:
    """``(i, j, s) -> q_{i,j,s}``, the coefficient of ``x^s`` in ``x^i q(x)^j``."""

    q: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "q", tuple(float(c) for c in self.q))

    @property
    def ell(self) -> int:
        return len(self.q) - 1

    def poly(self, i: int, j: int) -> np.ndarray:
        return np.concatenate([np.zeros(i), _q_power(self.q, j)])

    def __call__(self, i: int, j: int, s: int) -> float:
        p = _q_power(self.q, j)
        if not i <= s < i + len(p):
            return 0.0
        return float(p[s - i])


def structure_coefficient(q, i: int, j: int, s: int) -> float:
    return StructureCoefficients(tuple(q))(i, j, s)


# ---------------------------------------------------------------------------
# normalization of the graph


def normalize_graph_curve(
    beta: BivariateMomentSequence, q
) -> tuple[BivariateMomentSequence, GraphCurve, AffineMap]:
    """Shift ``x`` so that the coefficient of ``x^(l-1)`` in ``q`` vanishes.

    Returns the moments of the shifted measure, the shifted polynomial and the map
    ``(x, y) -> (x + h, y)`` that was applied.
    """
    curve = q if isinstance(q, GraphCurve) else GraphCurve(tuple(q))
    ell, coeffs = curve.ell, np.array(curve.q)
    h = coeffs[ell - 1] / (ell * coeffs[ell])
    phi = AffineMap(h, 1.0, 0.0, 0.0, 0.0, 1.0)
    if h == 0.0:
        return beta, curve, phi
    # q'(u) = q(u - h)
    shifted = np.polynomial.polynomial.Polynomial(coeffs)(np.polynomial.polynomial.Polynomial([-h, 1.0]))
    new = list(shifted.coef[: ell + 1]) + [0.0] * max(0, ell + 1 - shifted.coef.size)
    new[ell - 1] = 0.0
    new[ell] = coeffs[ell]
    return apply_alt(beta, phi), GraphCurve(tuple(new)), phi


# ---------------------------------------------------------------------------
# index sets


def graph_known_indices(d: int, ell: int) -> list[int]:
    return [t for t in range(d * ell + 1) if t % ell + t // ell <= d]


def graph_range(d: int, ell: int) -> tuple[int, int]:
    return (0, d * ell + 2) if (d * ell) % 2 == 0 else (0, d * ell + 1)


def hyperbolic_source(t: int, ell: int) -> tuple[int, int]:
    """The moment ``beta_ij`` that equals ``gamma_t`` on ``y x^l = 1``."""
    if t >= 0:
        return (t, 0)
    j = (-t + ell - 1) // ell
    return (t + ell * j, j)


def hyperbolic_known_indices(d: int, ell: int) -> list[int]:
    out = []
    for t in range(-d * ell, d + 1):
        i, j = hyperbolic_source(t, ell)
        if i + j <= d:
            out.append(t)
    return out


def hyperbolic_range(d: int, ell: int) -> tuple[int, int]:
    if d % 2 == 0:
        return (-d * ell - 2, d + 2)
    if ell % 2 == 0:
        return (-d * ell - 2, d + 1)
    return (-d * ell - 1, d + 1)


def index_sets(d: int, curve: CurveSpec) -> tuple[tuple[int, int], list[int], list[int]]:
    """``((lo, hi), known, holes)`` for degree-``d`` data on ``curve``.

    ``lo..hi`` is the index range of the Hankel LMI; ``known`` are the indices the
    data fix and ``holes`` the free ones.
    """
    if isinstance(curve, GraphCurve):
        lo, hi = graph_range(d, curve.ell)
        known = graph_known_indices(d, curve.ell)
    else:
        lo, hi = hyperbolic_range(d, curve.ell)
        known = hyperbolic_known_indices(d, curve.ell)
    kset = set(known)
    holes = [t for t in range(lo, hi + 1) if t not in kset]
    return (lo, hi), known, holes


# ---------------------------------------------------------------------------
# reduction


@dataclass(frozen=True)
class ReductionResult:
    partial: PartialUnivariateSequence
    curve: CurveSpec
    alt_used: AffineMap | None
    index_map: dict = field(default_factory=dict)
    measure_range: tuple[int, int] = (0, 0)
    original_curve: CurveSpec | None = None
    noise: dict = field(default_factory=dict)

    def noise_array(self, a: int, b: int, filled: float = 0.0) -> np.ndarray:
        """Error bounds for indices ``a..b``; holes get ``filled``."""
        return np.array([self.noise.get(t, filled) for t in range(a, b + 1)])

    @property
    def holes(self) -> list[int]:
        return self.partial.holes


_EPS = float(np.finfo(float).eps)


def _graph_gammas(beta: BivariateMomentSequence, curve: GraphCurve, known: list[int]) -> tuple[dict, dict]:
    ell, lead = curve.ell, curve.leading
    coeff = StructureCoefficients(curve.q)
    kset = set(known)
    gamma: dict[int, float] = {}
    source: dict[int, tuple[int, int]] = {}
    for t in known:
        i, j = t % ell, t // ell
        poly = coeff.poly(i, j)
        acc = beta[(i, j)]
        for s in range(i, t):
            c = poly[s]
            if c == 0.0:
                continue
            if s not in kset:
                raise InternalInvariantBroken(
                    f"gamma_{t} depends on the undetermined gamma_{s} (coefficient {c!r})", t=t, s=s
                )
            acc -= c * gamma[s]
        gamma[t] = acc / lead**j
        source[t] = (i, j)
    return gamma, source


def _graph_noise(beta: BivariateMomentSequence, q: GraphCurve, known: list[int], gamma: dict) -> dict:
    """Rounding sensitivity of ``gamma``: rerun the peeling on data perturbed at machine precision."""
    rng = np.random.default_rng(0)
    spread = {t: 0.0 for t in known}
    for _ in range(2):
        pert = BivariateMomentSequence(
            beta.degree, {m: v * (1.0 + 2 * _EPS * rng.choice((-1.0, 1.0))) for m, v in beta.items()}
        )
        beta_p, curve_p, _ = normalize_graph_curve(pert, q)
        gamma_p, _ = _graph_gammas(beta_p, curve_p, known)
        for t in known:
            spread[t] = max(spread[t], abs(gamma_p[t] - gamma[t]))
    return {t: 8.0 * spread[t] + 4 * _EPS * abs(gamma[t]) for t in known}


def reduce_to_univariate(beta: BivariateMomentSequence, curve: CurveSpec, tol: float = 1e-9) -> ReductionResult:
    bad = check_curve_relations(beta, curve, tol)
    if bad:
        raise RelationsViolated(bad)
    d = beta.degree
    if isinstance(curve, GraphCurve):
        beta_n, curve_n, phi = normalize_graph_curve(beta, curve)
        (lo, hi), known, holes = index_sets(d, curve_n)
        gamma, source = _graph_gammas(beta_n, curve_n, known)
        err = _graph_noise(beta, curve, known, gamma)
        partial = PartialUnivariateSequence(lo, hi, gamma, frozenset(holes))
        alt = None if phi.a == 0.0 else phi
        return ReductionResult(partial, curve_n, alt, source, (0, d * curve.ell), curve, err)
    (lo, hi), known, holes = index_sets(d, curve)
    source = {t: hyperbolic_source(t, curve.ell) for t in known}
    gamma = {t: beta[source[t]] for t in known}
    partial = PartialUnivariateSequence(lo, hi, gamma, frozenset(holes))
    err = {t: 4 * _EPS * abs(v) for t, v in gamma.items()}
    return ReductionResult(partial, curve, None, source, (-d * curve.ell, d), curve, err)


def basis_change_matrix(k: int, q) -> np.ndarray:
    """Rows: coefficients of ``x^i q^j`` over ``1, x, ..., x^(kl+1)``.

    The basis is ``x^i y^j`` (``i < l``, ``j < k``) followed by ``y^k`` and ``x y^k``,
    ordered so that the degrees ``i + j l`` run through ``0 .. kl+1``.
    """
    coeff = StructureCoefficients(tuple(q.q if isinstance(q, GraphCurve) else q))
    ell = coeff.ell
    rows = basis_labels(k, ell)
    n = k * ell + 2
    P = np.zeros((n, n))
    for r, (i, j) in enumerate(rows):
        poly = coeff.poly(i, j)
        P[r, : poly.size] = poly[:n]
    return P


def basis_labels(k: int, ell: int) -> list[tuple[int, int]]:
    return [(i, j) for j in range(k) for i in range(ell)] + [(0, k), (1, k)]


def lift_measure(nu: AtomicMeasure1D, curve: CurveSpec, shift: float = 0.0) -> AtomicMeasure2D:
    """Place univariate atoms on the curve; ``shift`` undoes a prior ``x -> x + shift``."""
    xs = np.array(nu.atoms) - shift
    if isinstance(curve, HyperbolicCurve):
        if np.any(xs == 0.0):
            raise AtomAtPole("an atom at x = 0 cannot be placed on y x^l = 1")
        ys = xs ** (-float(curve.ell))
    else:
        ys = curve.evaluate(xs)
    return AtomicMeasure2D(tuple(zip(xs.tolist(), np.atleast_1d(ys).tolist())), nu.densities, curve)
