"""Truncated Hamburger problems on the line, including the strong variant with negative powers.

The extraction follows the classical route: factor the Hankel matrix with a
pivoted symmetric factorization, decide between the rank-deficient ("flat")
branch and the full-rank branch, read the atoms off the shift operator and get
the densities from a Vandermonde system.

Atoms are computed as eigenvalues of ``L^-1 H1 L^-T`` where ``H0 = L L^T`` is the
leading Hankel block and ``H1`` its shifted neighbour.  This matrix is similar to
the shift matrix read from the column echelon form, but it is symmetric, so the
eigenvalue routine cannot invent complex pairs from rounding noise.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .core import DEFAULT_TOLERANCES, IllConditioned, InvalidInput, Status, ToleranceConfig
from .hankel import (
    UnivariateMomentSequence,
    hankel_matrix,
    is_positive_definite,
    jacobi,
    noise_tolerance,
    radius_estimate,
    scaled,
)

# safety factor between a rounding-error bound and the tolerance derived from it
NOISE_FACTOR = 10.0


@dataclass(frozen=True)
class AtomicMeasure1D:
    atoms: tuple[float, ...]
    densities: tuple[float, ...]

    def __post_init__(self):
        order = np.argsort(np.asarray(self.atoms, dtype=float), kind="stable")
        atoms = tuple(float(self.atoms[i]) for i in order)
        dens = tuple(float(self.densities[i]) for i in order)
        if len(atoms) != len(dens):
            raise InvalidInput("atoms and densities differ in length")
        if any(not r > 0 for r in dens):
            raise InvalidInput("densities must be strictly positive")
        if any(b <= a for a, b in zip(atoms, atoms[1:])):
            raise InvalidInput("atoms must be strictly increasing")
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "densities", dens)

    def __len__(self) -> int:
        return len(self.atoms)

    def moments(self, k1: int, k2: int) -> np.ndarray:
        x = np.array(self.atoms)
        rho = np.array(self.densities)
        return np.array([np.sum(rho * x**t) for t in range(k1, k2 + 1)])


@dataclass(frozen=True)
class UnivariateSolveReport:
    status: Status
    measure: AtomicMeasure1D | None = None
    rank: int = 0
    branch: str = ""
    free_moments: dict = field(default_factory=dict)
    diagnostic: str = ""
    residual: float | None = None

    @property
    def found(self) -> bool:
        return self.status == Status.MEASURE_FOUND


# ---------------------------------------------------------------------------
# building blocks


@dataclass(frozen=True)
class PivotedFactor:
    factor: np.ndarray  # rows in the original order, one column per accepted pivot
    rank: int
    psd: bool
    pivots: tuple[float, ...]


def pivoted_cholesky(A: np.ndarray, rank_tol: float, psd_tol: float) -> PivotedFactor:
    """Symmetric pivoted factorization ``A ~ V V^T`` that reports indefiniteness.

    Pivots below ``rank_tol`` times the largest diagonal end the factorization; the
    untouched Schur complement must then be negligible, otherwise ``A`` is not PSD.
    """
    S = np.array(A, dtype=float)
    n = S.shape[0]
    scale = max(np.max(np.abs(np.diag(S))) if n else 0.0, 1e-300)
    V = np.zeros((n, n))
    remaining = list(range(n))
    pivots: list[float] = []
    psd = True
    for r in range(n):
        diag = np.array([S[i, i] for i in remaining])
        j = int(np.argmax(diag))
        p = diag[j]
        if p < -psd_tol * scale:
            psd = False
            break
        if p <= rank_tol * scale:
            rest = np.ix_(remaining, remaining)
            if np.max(np.abs(S[rest])) > max(psd_tol, rank_tol) * scale * 10:
                psd = False
            break
        piv = remaining.pop(j)
        col = S[:, piv] / math.sqrt(p)
        col[[i for i in range(n) if i != piv and i not in remaining]] = 0.0
        V[:, r] = col
        V[piv, r] = math.sqrt(p)
        S = S - np.outer(col, col)
        pivots.append(float(p))
    rank = len(pivots)
    return PivotedFactor(V[:, :rank], rank, psd, tuple(pivots))


def vandermonde_densities(
    atoms, moments, start_power: int = 0, residual_tol: float = 1e-8
) -> np.ndarray:
    """Solve ``W rho = moments`` with ``W[i, j] = atoms[j] ** (start_power + i)``."""
    x = np.asarray(atoms, dtype=float)
    m = np.asarray(moments, dtype=float)
    if x.size != m.size:
        raise InvalidInput("need as many moments as atoms")
    if x.size == 0:
        return np.zeros(0)
    if start_power < 0 and np.any(x == 0.0):
        raise IllConditioned("an atom at 0 cannot carry negative powers")
    c = float(np.max(np.abs(x))) or 1.0
    powers = start_power + np.arange(x.size)
    W = (x[None, :] / c) ** powers[:, None]
    rhs = m / c ** powers.astype(float)
    try:
        rho = np.linalg.solve(W, rhs)
    except np.linalg.LinAlgError as exc:
        raise IllConditioned("Vandermonde matrix is singular; atoms coincide") from exc
    err = np.linalg.norm(W @ rho - rhs)
    if not np.all(np.isfinite(rho)) or err > residual_tol * max(np.linalg.norm(rhs), 1e-300):
        raise IllConditioned(f"Vandermonde residual {err:.3g} too large")
    return rho


def _merge(atoms: np.ndarray, tol: float) -> np.ndarray:
    atoms = np.sort(atoms)
    groups: list[list[float]] = []
    for a in atoms:
        if groups and abs(a - groups[-1][-1]) <= tol * max(1.0, abs(a)):
            groups[-1].append(a)
        else:
            groups.append([a])
    return np.array([np.mean(g) for g in groups])


def _pencil_atoms(H0: np.ndarray, H1: np.ndarray, mass: float) -> tuple[np.ndarray, np.ndarray | None]:
    """Eigenvalues of the pencil ``(H1, H0)`` and, when available, Christoffel weights.

    With ``H0 = L L^T`` the matrix ``L^-1 H1 L^-T`` is the symmetric (Jacobi) form of
    the multiplication operator; the squared first components of its unit
    eigenvectors times the mass are the weights of the corresponding quadrature.
    """
    B0, dsc = jacobi(H0)
    B1 = H1 * dsc[:, None] * dsc[None, :]
    try:
        L = np.linalg.cholesky(B0)
    except np.linalg.LinAlgError:
        vals = scipy.linalg.eigvals(B1, B0)
        return np.sort(vals.real), None
    T = scipy.linalg.solve_triangular(L, B1, lower=True)
    T = scipy.linalg.solve_triangular(L, T.T, lower=True)
    vals, vecs = np.linalg.eigh((T + T.T) / 2)
    return vals, mass * vecs[0, :] ** 2


def _residual(values: np.ndarray, start: int, measure: AtomicMeasure1D, noise: np.ndarray | None = None) -> float:
    x = np.abs(np.array(measure.atoms))
    slack = np.zeros(values.size) if noise is None else NOISE_FACTOR * np.asarray(noise, dtype=float)
    rho = np.array(measure.densities)
    fitted = measure.moments(start, start + values.size - 1)
    worst = 0.0
    for idx, t in enumerate(range(start, start + values.size)):
        size = max(float(np.sum(rho * x**t)) if rho.size else 0.0, abs(values[idx]), 1e-300)
        worst = max(worst, max(abs(values[idx] - fitted[idx]) - slack[idx], 0.0) / size)
    return worst


def _no(diag: str, rank: int = 0, branch: str = "") -> UnivariateSolveReport:
    return UnivariateSolveReport(Status.NO_MEASURE, None, rank, branch, {}, diag)


def _last_recurrence_entry(s: np.ndarray, k: int, top: float) -> float:
    H0 = hankel_matrix(s[: 2 * k + 1])
    B0, dsc = jacobi(H0)
    H1 = hankel_matrix(np.concatenate([s[1 : 2 * k + 1], [top]]))
    L = np.linalg.cholesky(B0)
    z = scipy.linalg.solve_triangular(L, (H1 * dsc[:, None] * dsc[None, :]).T, lower=True)
    T = scipy.linalg.solve_triangular(L, z.T, lower=True)
    return float(T[-1, -1])


def _choose_top(s: np.ndarray, k: int, free_moment: float | None, c: float, strong: bool, tol: float) -> float:
    """Scaled value of the free moment one past the data in the full-rank branch.

    By default the value is picked so that the last diagonal entry of the symmetric
    multiplication operator vanishes, which keeps every new atom inside the
    spectral range of the data.  An explicit ``free_moment`` overrides this.
    """
    t0 = _last_recurrence_entry(s, k, 0.0)
    slope = _last_recurrence_entry(s, k, 1.0) - t0
    if free_moment is None:
        top = -t0 / slope
    else:
        top = free_moment / c ** (2 * k + 1)
    if strong:
        # the excluded value puts an atom at 0: the multiplication operator becomes singular
        C = hankel_matrix(s[1 : 2 * k])
        v = s[k + 1 : 2 * k + 1]
        try:
            excluded = float(v @ np.linalg.solve(C, v))
        except np.linalg.LinAlgError:
            excluded = math.inf
        if abs(top - excluded) <= tol * max(1.0, abs(excluded)):
            top = excluded + 1.0 / slope
    return top


def _invertible(B: np.ndarray) -> bool:
    """Numerically nonsingular PD test for a unit-diagonal matrix.

    Used on the leading block once the rank is known: there the question is
    invertibility, not rank, and the smallest pivot can legitimately sit below
    the rank tolerance of the whole matrix.
    """
    try:
        L = np.linalg.cholesky(B)
    except np.linalg.LinAlgError:
        return False
    return bool(np.min(np.diag(L)) ** 2 > 1e3 * np.finfo(float).eps * B.shape[0])


def _noise_cfg(cfg: ToleranceConfig, noise, c: float, dscale: np.ndarray) -> ToleranceConfig:
    if noise is None:
        return cfg
    level = NOISE_FACTOR * noise_tolerance(np.asarray(noise, dtype=float), c, dscale)
    return dataclasses.replace(cfg, rank_tol=max(cfg.rank_tol, level), psd_tol=max(cfg.psd_tol, level))


def hankel_psd_rank(values, cfg: ToleranceConfig = DEFAULT_TOLERANCES, noise=None) -> tuple[bool, int]:
    """PSD flag and numerical rank of the Hankel matrix of ``values`` (odd length)."""
    values = np.asarray(values, dtype=float)
    c = radius_estimate(values)
    s = scaled(values, c)
    H = hankel_matrix(s)
    B, dscale = jacobi(H)
    cfg = _noise_cfg(cfg, noise, c, dscale)
    fac = pivoted_cholesky(B, cfg.rank_tol, cfg.psd_tol)
    psd = fac.psd and not np.any(np.diag(H) < -cfg.psd_tol * max(np.max(np.abs(s)), 1e-300))
    return psd, fac.rank


def _hamburger(
    values: np.ndarray,
    start: int,
    cfg: ToleranceConfig,
    free_moment: float | None,
    strong: bool,
    noise=None,
    rank_hint: int | None = None,
) -> UnivariateSolveReport:
    """Shared driver; ``values`` are moments of orders start..start+n with even ``start``.

    ``noise`` holds absolute error bounds of ``values``; rank and sign decisions never
    use a tolerance below the size of that error after scaling.  ``rank_hint`` is a
    rank known by construction (a completion made singular on purpose); it is used
    whenever the leading block of that size is invertible.
    """
    n = values.size - 1
    odd = n % 2 == 1
    k = n // 2
    c = radius_estimate(values)
    s = scaled(values, c)
    H = hankel_matrix(s[: 2 * k + 1])
    B, dscale = jacobi(H)
    if noise is not None:
        noise = np.asarray(noise, dtype=float)
    cfg = _noise_cfg(cfg, noise, c, dscale)
    fac = pivoted_cholesky(B, cfg.rank_tol, cfg.psd_tol)
    hinted = rank_hint is not None and 0 < rank_hint < k + 1 and _invertible(B[:rank_hint, :rank_hint])
    if not hinted and (not fac.psd or np.any(np.diag(H) < -cfg.psd_tol * max(np.max(np.abs(s)), 1e-300))):
        return _no("Hankel matrix is not positive semidefinite", fac.rank)
    r = rank_hint if hinted else fac.rank
    top_tol = math.sqrt(cfg.rank_tol)
    if r == 0:
        if np.all(np.abs(s) <= cfg.psd_tol * max(np.max(np.abs(s)), 1.0)):
            return UnivariateSolveReport(Status.MEASURE_FOUND, AtomicMeasure1D((), ()), 0, "flat", {}, "zero measure", 0.0)
        return _no("zero leading moment but nonzero higher moments", 0, "flat")
    free: dict = {}
    if r < k + 1:
        branch = "flat"
        if not _invertible(B[:r, :r]):
            return _no("the leading columns do not generate the rest: the sequence is not positively recursively generated", r, branch)
        if odd:
            phi = np.linalg.solve(H[:r, :r], s[r : 2 * r])
            window = s[2 * k + 1 - r : 2 * k + 1]
            pred = float(phi @ window)
            size = max(abs(s[-1]), float(np.abs(phi) @ np.abs(window)), cfg.psd_tol)
            if abs(s[-1] - pred) > top_tol * size:
                return _no("odd degree: the system V w = (gamma_{k+1..2k+1}) is not solvable", r, branch)
        if strong:
            inner = H[1 : r + 1, 1 : r + 1]
            if not _invertible(jacobi(inner)[0]):
                return _no("strong problem: column r+1 lies in the span of columns 2..r (atom at 0)", r, branch)
        H0 = H[:r, :r]
        H1 = hankel_matrix(s[1 : 2 * r])
    else:
        branch = "full"
        if odd:
            top = s[2 * k + 1]
        else:
            top = _choose_top(s, k, free_moment, c, strong, top_tol)
            free = {start + 2 * k + 1: float(top * c ** (2 * k + 1))}
        H0 = H
        ext = np.concatenate([s[: 2 * k + 1], [top]])
        H1 = hankel_matrix(ext[1:])
    raw_atoms, weights = _pencil_atoms(H0, H1, s[0])
    atoms_scaled = _merge(raw_atoms, cfg.atom_merge_tol)
    if strong and np.any(np.abs(atoms_scaled) <= cfg.atom_merge_tol):
        return _no("strong problem: an atom sits at 0", r, branch)
    try:
        rho = vandermonde_densities(atoms_scaled, s[: atoms_scaled.size], 0, residual_tol=max(cfg.residual_tol, 1e-6))
        if np.any(rho <= 0):
            raise IllConditioned("nonpositive density")
    except IllConditioned as exc:
        # Christoffel weights are positive by construction; used when the Vandermonde solve breaks down
        if weights is None or atoms_scaled.size != raw_atoms.size or np.any(weights <= 0):
            return _no(f"NegativeDensity while solving for the densities: {exc}", r, branch)
        rho = weights
    atoms = atoms_scaled * c
    dens = rho / np.power(atoms, start) if start else rho
    if np.any(dens <= 0):
        return _no("NegativeDensity after undoing the shift", r, branch)
    measure = AtomicMeasure1D(tuple(atoms), tuple(dens))
    res = _residual(values, start, measure, noise)
    if res > cfg.residual_tol:
        # the near miss is kept as a candidate for refinement by the caller
        return UnivariateSolveReport(
            Status.NO_MEASURE, measure, r, branch, free, f"extracted measure misses the moments (residual {res:.3g})", res
        )
    return UnivariateSolveReport(Status.MEASURE_FOUND, measure, r, branch, free, "", res)


# finer rank thresholds tried when a flat extraction does not reproduce the data
RANK_REFINEMENT = (1.0, 1e-2, 1e-4)


def _refined(values, start, cfg, free_moment, strong, noise, rank_hint) -> UnivariateSolveReport:
    first = None
    for factor in RANK_REFINEMENT:
        trial = dataclasses.replace(cfg, rank_tol=cfg.rank_tol * factor)
        rep = _hamburger(values, start, trial, free_moment, strong, noise, rank_hint)
        first = first or rep
        if rep.found or rep.measure is None or rep.branch != "flat" or rank_hint is not None:
            return rep if rep.found else first
    return first


def solve_thmp(
    gamma: UnivariateMomentSequence,
    cfg: ToleranceConfig = DEFAULT_TOLERANCES,
    free_moment: float | None = None,
    noise=None,
    rank_hint: int | None = None,
    refine: bool = True,
) -> UnivariateSolveReport:
    """Hamburger problem for ``gamma_0..gamma_n`` (even or odd ``n``).

    A flat extraction that misses the data is retried with finer rank tolerances
    unless ``refine`` is false.
    """
    if gamma.k1 != 0:
        raise InvalidInput("solve_thmp expects a sequence starting at index 0")
    if not refine:
        return _hamburger(gamma.array(), 0, cfg, free_moment, False, noise, rank_hint)
    return _refined(gamma.array(), 0, cfg, free_moment, False, noise, rank_hint)


def solve_sthmp(
    gamma: UnivariateMomentSequence,
    cfg: ToleranceConfig = DEFAULT_TOLERANCES,
    free_moment: float | None = None,
    noise=None,
    rank_hint: int | None = None,
    refine: bool = True,
) -> UnivariateSolveReport:
    """Strong Hamburger problem on the punctured line for ``gamma_{k1..k2}``, ``k1 < 0 < k2``.

    The shifted sequence ``gamma_{k1+i}`` is the moment sequence of ``x**k1 * mu``,
    which is a positive measure only for even ``k1``; odd starts are rejected.
    """
    if not gamma.k1 < 0 < gamma.k2:
        raise InvalidInput("solve_sthmp expects k1 < 0 < k2")
    if gamma.k1 % 2:
        raise InvalidInput("solve_sthmp needs an even starting index")
    if not refine:
        return _hamburger(gamma.array(), gamma.k1, cfg, free_moment, True, noise, rank_hint)
    return _refined(gamma.array(), gamma.k1, cfg, free_moment, True, noise, rank_hint)
