"""Hankel completion and the curve solvers built on it.

Feasibility of a partial Hankel matrix is handled by Dykstra's alternating
projections between the PSD cone and the affine set of Hankel matrices with the
prescribed entries.  Inside the solver the holes are filled first by a barrier
method that maximises the smallest eigenvalue, with Dykstra as the fallback.  Infeasibility is only ever declared from a certificate made
of known entries.  The orchestrator :func:`solve_curve` reduces the bivariate
problem, completes the holes that matter for the measure, extracts atoms with the
Hamburger solvers and always re-checks the lifted measure against the input.
"""

from __future__ import annotations

import dataclasses
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.optimize

from .core import (
    DEFAULT_TOLERANCES,
    AffineMap,
    AtomicMeasure2D,
    BivariateMomentSequence,
    CornerNotPD,
    CurveSpec,
    CurveTMPError,
    DegreeTooLow,
    GraphCurve,
    HyperbolicCurve,
    InvalidInput,
    NonrealRoots,
    RelationsViolated,
    Status,
    ToleranceConfig,
    UnsupportedCurve,
    apply_alt,
    build_moment_matrix,
    ceil_half,
    simplex,
    check_curve_relations,
    moment_residual,
    numeric_rank,
)
from .hamburger import (
    RANK_REFINEMENT,
    AtomicMeasure1D,
    UnivariateSolveReport,
    hankel_psd_rank,
    solve_sthmp,
    solve_thmp,
)
from .hankel import (
    PartialUnivariateSequence,
    UnivariateMomentSequence,
    hankel_matrix,
    is_positive_definite,
    radius_estimate,
    scaled,
    sequence_rank,
)
from .reduction import ReductionResult, index_sets, lift_measure, reduce_to_univariate


# ---------------------------------------------------------------------------
# reports


@dataclass(frozen=True)
class FeasibilityOutcome:
    status: str  # "Feasible", "Infeasible" or "Unknown"
    completed: UnivariateMomentSequence | None = None
    certificate: dict | None = None
    gap: float = math.inf
    iterations: int = 0

    @property
    def feasible(self) -> bool:
        return self.status == "Feasible"


@dataclass(frozen=True)
class SolveReport:
    status: Status
    measure: AtomicMeasure2D | None = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def found(self) -> bool:
        return self.status == Status.MEASURE_FOUND


# ---------------------------------------------------------------------------
# single missing entry


def _scaled_positions(values: np.ndarray) -> tuple[np.ndarray, float]:
    nonzero = np.where(np.isfinite(values), values, 0.0)
    c = radius_estimate(nonzero)
    return scaled(nonzero, c), c


def complete_single_entry(partial: PartialUnivariateSequence, tol: float = 1e-9) -> tuple[float, float]:
    """The two values of the single hole that make the Hankel matrix singular and PSD.

    The hole must sit on the penultimate anti-diagonal (or, mirrored, on the second
    one).  With the corner of size ``m`` positive definite, ``det A(z)`` is ``det C``
    times a concave quadratic ``s(z)``; ``s`` is recovered from three evaluations.
    Returns ``(z_plus, z_minus)`` with ``z_plus >= z_minus``.
    """
    if len(partial.holes) != 1:
        raise InvalidInput("exactly one unknown entry is required")
    n = len(partial)
    if n % 2 == 0:
        raise InvalidInput("the sequence length must be odd")
    m = (n - 1) // 2
    pos = partial.holes[0] - partial.k1
    values = np.array([partial.known.get(t, 0.0) for t in range(partial.k1, partial.k2 + 1)])
    if pos == 1 and m >= 1 and pos != 2 * m - 1:
        values = values[::-1]
    elif pos != 2 * m - 1:
        raise InvalidInput("the unknown entry must lie on the penultimate (or second) anti-diagonal")
    s, c = _scaled_positions(values)
    H = hankel_matrix(s)
    C = H[:m, :m]
    if not is_positive_definite(C, tol):
        raise CornerNotPD("the fully known corner is not positive definite")
    L = np.linalg.cholesky(C)

    def schur(z: float) -> float:
        u = H[:m, m].copy()
        u[m - 1] = z
        w = np.linalg.solve(L, u)
        return float(H[m, m] - w @ w)

    f_minus, f_zero, f_plus = schur(-1.0), schur(0.0), schur(1.0)
    a = (f_plus + f_minus) / 2.0 - f_zero
    b = (f_plus - f_minus) / 2.0
    disc = b * b - 4.0 * a * f_zero
    size = b * b + abs(4.0 * a * f_zero)
    if a >= 0.0:
        raise NonrealRoots("the determinant is not concave in the missing entry")
    if disc < 0.0:
        if disc < -math.sqrt(tol) * size:
            raise NonrealRoots(f"negative discriminant {disc:.3g}")
        disc = 0.0
    root = math.sqrt(disc)
    # numerically stable pair of roots
    q = -0.5 * (b + math.copysign(root, b)) if b != 0.0 else 0.5 * root
    if q == 0.0:
        r1 = r2 = 0.0
    else:
        r1, r2 = q / a, f_zero / q
    power = c ** (2 * m - 1)
    z1, z2 = r1 * power, r2 * power
    return max(z1, z2), min(z1, z2)


# ---------------------------------------------------------------------------
# feasibility


def _positions(n: int) -> list[tuple[np.ndarray, np.ndarray]]:
    m = (n - 1) // 2
    out = []
    for p in range(n):
        i = np.arange(max(0, p - m), min(p, m) + 1)
        out.append((i, p - i))
    return out


def known_entry_certificate(partial: PartialUnivariateSequence, psd_tol: float = 1e-9) -> dict | None:
    """A principal submatrix made only of known entries that is not PSD, if one exists."""
    n = len(partial)
    if n % 2 == 0:
        raise InvalidInput("the sequence length must be odd")
    m = (n - 1) // 2
    known_pos = {t - partial.k1 for t in partial.known}
    values = np.array([partial.known.get(t, 0.0) for t in range(partial.k1, partial.k2 + 1)])
    s, c = _scaled_positions(values)
    diag = [abs(s[2 * i]) for i in range(m + 1) if 2 * i in known_pos]
    scale = max(diag + [1e-300])

    def entry(rows) -> dict | None:
        rows = list(rows)
        A = s[np.add.outer(rows, rows)]
        lam = float(np.linalg.eigvalsh(A)[0])
        if lam < -psd_tol * scale:
            return {"rows": [int(r) for r in rows], "indices": [int(2 * r + partial.k1) for r in rows], "eigenvalue": lam * 1.0}
        return None

    for i in range(m + 1):
        if 2 * i in known_pos:
            cert = entry([i])
            if cert:
                return {"kind": "diagonal", **cert}
    for i in range(m + 1):
        for j in range(i + 1, m + 1):
            if {2 * i, i + j, 2 * j} <= known_pos:
                cert = entry([i, j])
                if cert:
                    return {"kind": "2x2 minor", **cert}
    for i in range(m + 1):
        j = i
        while j + 1 <= m and all(p in known_pos for p in range(2 * i, 2 * (j + 1) + 1)):
            j += 1
        if j > i + 1:
            cert = entry(range(i, j + 1))
            if cert:
                return {"kind": "contiguous block", **cert}
    return None


def _initial_fill(s: np.ndarray, hole_pos: list[int]) -> np.ndarray:
    x = s.copy()
    known = [p for p in range(s.size) if p not in set(hole_pos)]
    even_known = [p for p in known if p % 2 == 0]
    for p in hole_pos:
        if p % 2:
            x[p] = 0.0
        else:
            near = sorted(even_known, key=lambda q: abs(q - p))[:2]
            x[p] = max([abs(s[q]) for q in near] + [1.0]) * 2.0
    return x


def complete_feasibility(
    partial: PartialUnivariateSequence,
    cfg: ToleranceConfig = DEFAULT_TOLERANCES,
    margin: float = 0.0,
    initial: dict | None = None,
    warm_start: bool = True,
) -> FeasibilityOutcome:
    """Find values for the holes making the Hankel matrix PSD (or ``>= margin`` relative).

    With ``warm_start`` the projections start from the max-min-eigenvalue
    completion; its Newton steps count against ``cfg.max_iter``.
    """
    n = len(partial)
    if n % 2 == 0:
        raise InvalidInput("the sequence length must be odd")
    cert = known_entry_certificate(partial, cfg.psd_tol)
    if cert is not None:
        return FeasibilityOutcome("Infeasible", None, cert, math.inf, 0)
    holes = partial.holes
    hole_pos = [t - partial.k1 for t in holes]
    values = np.array([partial.known.get(t, 0.0) for t in range(partial.k1, partial.k2 + 1)])
    s, c = _scaled_positions(values)
    seq = _initial_fill(s, hole_pos)
    if initial:
        for t, v in initial.items():
            if t in partial.unknown:
                seq[t - partial.k1] = v / c ** (t - partial.k1)
    used = 0
    if warm_start and holes:
        try:
            start, _, used = _barrier(partial, initial, cfg.max_iter)
            seq = start.array() / np.power(c, np.arange(n, dtype=float))
        except (np.linalg.LinAlgError, FloatingPointError):
            pass
    pos = _positions(n)
    scale = max(np.max(np.abs(seq[::2])), 1e-300)
    eps = margin * scale
    X = hankel_matrix(seq)
    P = np.zeros_like(X)
    gap = math.inf
    target = eps * 0.5 if margin > 0 else -cfg.psd_tol * scale

    def done(X) -> tuple[bool, float]:
        w = np.linalg.eigvalsh(X)
        return bool(w[0] >= target), float(np.sqrt(np.sum(np.minimum(w, 0.0) ** 2)) / scale)

    ok, gap = done(X)
    it = used
    while not ok and it < cfg.max_iter:
        it += 1
        Y = X + P
        w, V = np.linalg.eigh(Y)
        Z = (V * np.maximum(w, eps)) @ V.T
        P = Y - Z
        for p in hole_pos:
            i, j = pos[p]
            seq[p] = float(np.mean(Z[i, j]))
        X = hankel_matrix(seq)
        ok, gap = done(X)
    if not ok:
        return FeasibilityOutcome("Unknown", None, None, gap, it)
    filled = {t: float(seq[t - partial.k1] * c ** (t - partial.k1)) for t in holes}
    return FeasibilityOutcome("Feasible", partial.fill(filled), None, gap, it)


def max_min_eigen_completion(partial: PartialUnivariateSequence, cfg: ToleranceConfig = DEFAULT_TOLERANCES,
                             initial: dict | None = None) -> tuple[UnivariateMomentSequence, float]:
    """Hole values maximizing the smallest eigenvalue of the balanced Hankel matrix.

    The problem ``max t  s.t.  B(x) - t I >= 0`` is concave; it is solved with a
    two-sided log barrier (``B(x) <= R I`` keeps the diagonal holes bounded) and
    damped Newton steps.  Returns the completed sequence and the optimal ``t``
    relative to the largest known diagonal entry: positive means a positive
    definite completion exists.
    """
    seq, lam, _ = _barrier(partial, initial)
    return seq, lam


def _barrier(partial: PartialUnivariateSequence, initial: dict | None = None,
             budget: int | None = None) -> tuple[UnivariateMomentSequence, float, int]:
    n = len(partial)
    if n % 2 == 0:
        raise InvalidInput("the sequence length must be odd")
    m = (n - 1) // 2
    holes = partial.holes
    hole_pos = [t - partial.k1 for t in holes]
    values = np.array([partial.known.get(t, 0.0) for t in range(partial.k1, partial.k2 + 1)])
    s, c = _scaled_positions(values)
    x0 = _initial_fill(s, hole_pos)
    if initial:
        for t, v in initial.items():
            if t in partial.unknown:
                x0[t - partial.k1] = v / c ** (t - partial.k1)
    diag = np.array([x0[2 * i] for i in range(m + 1)])
    D = 1.0 / np.sqrt(np.maximum(diag, 1e-300 + 1e-12 * np.max(np.abs(diag))))
    base = hankel_matrix(np.where(np.isin(np.arange(n), hole_pos), 0.0, s)) * np.outer(D, D)
    basis = []
    for p in hole_pos:
        E = np.zeros(n)
        E[p] = 1.0
        basis.append(hankel_matrix(E) * np.outer(D, D))
    big = 10.0 * (m + 1)
    eye = np.eye(m + 1)

    def matrix(y):
        return base + sum(yi * E for yi, E in zip(y[:-1], basis))

    def barrier(y, mu):
        B = matrix(y)
        lo, hi = B - y[-1] * eye, big * eye - B
        try:
            L1, L2 = np.linalg.cholesky(lo), np.linalg.cholesky(hi)
        except np.linalg.LinAlgError:
            return -math.inf
        return y[-1] + mu * 2 * (np.sum(np.log(np.diag(L1))) + np.sum(np.log(np.diag(L2))))

    y = np.array([x0[p] for p in hole_pos] + [0.0])
    B0 = matrix(y)
    w = np.linalg.eigvalsh(B0)
    if w[-1] >= big:
        scale_down = 0.5 * big / w[-1]
        y[:-1] *= scale_down
        w = np.linalg.eigvalsh(matrix(y))
    y[-1] = w[0] - 1.0
    mats = basis + [-eye]
    mu = 1.0
    steps = 0
    while mu > 1e-13 and (budget is None or steps < budget):
        for _ in range(50):
            if budget is not None and steps >= budget:
                break
            steps += 1
            B = matrix(y)
            S1 = np.linalg.inv(B - y[-1] * eye)
            S2 = np.linalg.inv(big * eye - B)
            k = len(mats)
            g = np.zeros(k)
            Hs = np.zeros((k, k))
            P1 = [S1 @ F for F in mats]
            P2 = [S2 @ F for F in mats]
            for a in range(k):
                g[a] = mu * (np.trace(P1[a]) - (np.trace(P2[a]) if a < k - 1 else 0.0))
                for b in range(a, k):
                    h = np.sum(P1[a] * P1[b].T)
                    if a < k - 1 and b < k - 1:
                        h += np.sum(P2[a] * P2[b].T)
                    Hs[a, b] = Hs[b, a] = -mu * h
            g[-1] += 1.0
            try:
                step = -np.linalg.solve(Hs, g)
            except np.linalg.LinAlgError:
                step = g
            decrement = float(g @ step)
            f0 = barrier(y, mu)
            alpha = 1.0
            while alpha > 1e-12 and not barrier(y + alpha * step, mu) >= f0 + 0.25 * alpha * float(g @ step):
                alpha *= 0.5
            if alpha <= 1e-12:
                break
            y = y + alpha * step
            if decrement < 1e-12:
                break
        mu *= 0.1
    filled = {t: float(y[i] * c ** (t - partial.k1)) for i, t in enumerate(holes)}
    return partial.fill(filled), float(y[-1]), steps


def corner_variants(partial: PartialUnivariateSequence, completed: UnivariateMomentSequence):
    """Alternative values for holes sitting in a diagonal corner of the Hankel matrix.

    Such a hole only bounds one Schur complement from below, so any completion
    can move it freely upwards.  Yields the completion with each corner hole set
    to its smallest PSD value (a rank drop, hence a flat extension), then set to
    that value plus the previous pivot.
    """
    n = len(partial)
    m = (n - 1) // 2
    corners = [p for p in (0, 2 * m) if p + partial.k1 in partial.unknown and m >= 1]
    if not corners:
        return
    values = completed.array()
    s, c = _scaled_positions(values)
    for bump in (False, True):
        x = s.copy()
        ok = True
        for p in corners:
            H = hankel_matrix(x)
            idx = np.arange(m) + (1 if p == 0 else 0)
            C = H[np.ix_(idx, idx)]
            try:
                L = np.linalg.cholesky(C)
            except np.linalg.LinAlgError:
                ok = False
                break
            w = np.linalg.solve(L, H[idx, p // 2])
            pivot = (L[0, 0] if p == 0 else L[-1, -1]) ** 2
            x[p] = float(w @ w) + (pivot if bump else 0.0)
        if ok:
            yield UnivariateMomentSequence(partial.k1, tuple(x * np.power(c, np.arange(n, dtype=float))))


# ---------------------------------------------------------------------------
# SDPA export


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def export_sdpa(partial: PartialUnivariateSequence) -> str:
    """SDPA sparse text: find hole values ``x`` with ``sum_t x_t E_t - F0 >= 0``."""
    n = len(partial)
    if n % 2 == 0:
        raise InvalidInput("the sequence length must be odd")
    size = (n - 1) // 2 + 1
    holes = partial.holes
    lines = [
        f'"Hankel PSD completion: indices {partial.k1}..{partial.k2}, unknowns {holes}"',
        f"{len(holes)} = mDIM",
        "1 = nBLOCK",
        f"{size} = bLOCKsTRUCT",
        " ".join(["0.0"] * len(holes)) if holes else "",
    ]
    entries = []
    for i in range(size):
        for j in range(i, size):
            t = partial.k1 + i + j
            if t in partial.known:
                entries.append((0, i, j, 0.0 - partial.known[t]))
    for var, t in enumerate(holes, start=1):
        for i in range(size):
            j = t - partial.k1 - i
            if i <= j < size:
                entries.append((var, i, j, 1.0))
    entries.sort(key=lambda e: (e[0], e[1], e[2]))
    lines += [f"{v} 1 {i + 1} {j + 1} {_fmt(val)}" for v, i, j, val in entries]
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# helpers shared by the curve solvers


def atom_bound(curve: CurveSpec, d: int) -> int:
    if isinstance(curve, GraphCurve):
        ell = curve.ell
        if ell == 2:
            return d + 1
        k = ceil_half(d)
        return k * ell if d % 2 == 0 else k * ell - ceil_half(ell)
    ell = curve.ell
    k = ceil_half(d)
    return k * (ell + 1) if d % 2 == 0 else k * (ell + 1) - ell // 2 + 1


def moment_matrix_rank(beta: BivariateMomentSequence, tol: float) -> int:
    """Rank of the largest fully defined moment matrix."""
    d = beta.degree
    b = beta if d % 2 == 0 else beta.truncate(d - 1)
    return numeric_rank(build_moment_matrix(b).matrix(), tol)


def _relation_tol(cfg: ToleranceConfig) -> float:
    return max(cfg.residual_tol * 1e-2, cfg.rank_tol)


# extracted measures with a residual below this are refined by least squares before verification
POLISH_LIMIT = 1e-3


def polish_measure(beta: BivariateMomentSequence, mu: AtomicMeasure2D, curve: CurveSpec) -> AtomicMeasure2D:
    """Gauss-Newton refinement of atoms and densities against all moments of ``beta``.

    Atoms stay on ``curve``; densities are kept nonnegative and atoms whose density
    drops to zero are removed.  Each moment is weighted by the absolute moment of
    the starting measure, as in :func:`moment_residual`.
    """
    pts, rho = mu.arrays()
    x0 = pts[:, 0].copy()
    n = x0.size
    monos = simplex(beta.degree)
    I = np.array([m[0] for m in monos], dtype=float)[:, None]
    J = np.array([m[1] for m in monos], dtype=float)[:, None]
    target = np.array([beta[m] for m in monos])
    if isinstance(curve, GraphCurve):
        q = np.array(curve.q)
        dq = np.polynomial.polynomial.polyder(q)

        def ys(x):
            return np.polynomial.polynomial.polyval(x, q), np.polynomial.polynomial.polyval(x, dq)
    else:
        ell = float(curve.ell)

        def ys(x):
            return x ** (-ell), -ell * x ** (-ell - 1.0)

    y0, _ = ys(x0)
    weight = np.abs(x0)[None, :] ** I * np.abs(y0)[None, :] ** J @ rho
    weight = np.maximum(np.maximum(weight, np.abs(target)), 1e-300)

    def powers(x):
        with np.errstate(all="ignore"):
            return _powers(x)

    def _powers(x):
        y, dy = ys(x)
        M = x[None, :] ** I * y[None, :] ** J
        dM = (I * x[None, :] ** np.maximum(I - 1, 0) * y[None, :] ** J
              + J * x[None, :] ** I * y[None, :] ** np.maximum(J - 1, 0) * dy[None, :])
        return M, dM

    def fun(p):
        M, _ = powers(p[:n])
        with np.errstate(all="ignore"):
            return np.nan_to_num((M @ p[n:] - target) / weight, nan=1e300, posinf=1e300, neginf=-1e300)

    def jac(p):
        M, dM = powers(p[:n])
        with np.errstate(all="ignore"):
            return np.nan_to_num(np.hstack([dM * p[n:][None, :], M]) / weight[:, None])

    lower = np.concatenate([np.full(n, -np.inf), np.zeros(n)])
    upper = np.full(2 * n, np.inf)
    start = np.concatenate([x0, rho])
    with warnings.catch_warnings(), np.errstate(all="ignore"):
        warnings.simplefilter("ignore", RuntimeWarning)
        fit = scipy.optimize.least_squares(fun, start, jac=jac, bounds=(lower, upper), method="trf",
                                           x_scale="jac", xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=100)
    x, w = fit.x[:n], fit.x[n:]
    keep = w > 0
    y, _ = ys(x[keep])
    return AtomicMeasure2D(tuple(zip(x[keep].tolist(), y.tolist())), tuple(w[keep].tolist()), curve)


class _Context:
    """Bookkeeping for one solve: verification against the original data."""

    def __init__(self, beta: BivariateMomentSequence, curve: CurveSpec, cfg: ToleranceConfig, shift: float = 0.0,
                 noise: dict | None = None):
        self.beta, self.curve, self.cfg, self.shift = beta, curve, cfg, shift
        self.noise = noise or {}
        self.diag: dict = {
            "curve": curve.describe(),
            "degree": beta.degree,
            "atom_bound": atom_bound(curve, beta.degree),
            "attempts": [],
        }

    def noise_for(self, a: int, b: int) -> np.ndarray | None:
        if not self.noise:
            return None
        return np.array([self.noise.get(t, 0.0) for t in range(a, b + 1)])

    def verify(self, nu: AtomicMeasure1D | None, route: str, extra: dict | None = None) -> SolveReport | None:
        if nu is None or len(nu) == 0:
            return None
        try:
            mu = lift_measure(nu, self.curve, self.shift)
        except CurveTMPError as exc:
            self.diag["attempts"].append({"route": route, "error": str(exc)})
            return None
        res = moment_residual(self.beta, mu)
        polished = False
        if self.cfg.residual_tol <= res < POLISH_LIMIT:
            try:
                refined = polish_measure(self.beta, mu, self.curve)
                res_refined = moment_residual(self.beta, refined)
            except (CurveTMPError, ValueError, np.linalg.LinAlgError):
                res_refined = math.inf
            if res_refined < res:
                mu, res, polished = refined, res_refined, True
        if res < self.cfg.residual_tol and len(mu) > self.diag["atom_bound"]:
            mu, res, polished = self._prune(mu, res, polished)
        self.diag["attempts"].append({"route": route, "atoms": len(mu), "residual": res, "polished": polished})
        if res >= self.cfg.residual_tol:
            return None
        diag = dict(self.diag)
        diag.update(extra or {})
        diag.update(
            route=route,
            residual=res,
            atom_count=len(mu),
            within_bound=len(mu) <= diag["atom_bound"],
            polished=polished,
        )
        return SolveReport(Status.MEASURE_FOUND, mu, diag)

    def _prune(self, mu: AtomicMeasure2D, res: float, polished: bool):
        """Drop the lightest atoms down to the bound if the data still verify."""
        order = np.argsort(mu.densities)[len(mu) - self.diag["atom_bound"]:]
        keep = sorted(order.tolist())
        cut = AtomicMeasure2D(tuple(mu.atoms[i] for i in keep), tuple(mu.densities[i] for i in keep), self.curve)
        r = moment_residual(self.beta, cut)
        if self.cfg.residual_tol <= r < POLISH_LIMIT:
            try:
                cut = polish_measure(self.beta, cut, self.curve)
                r = moment_residual(self.beta, cut)
                polished = True
            except (CurveTMPError, ValueError, np.linalg.LinAlgError):
                r = math.inf
        if r < self.cfg.residual_tol and len(cut) <= self.diag["atom_bound"]:
            return cut, r, polished
        return mu, res, polished

    def fail(self, status: Status, condition: str, **extra) -> SolveReport:
        diag = dict(self.diag)
        diag.update(extra)
        diag["condition"] = condition
        return SolveReport(status, None, diag)


def _seq(partial_or_known, lo: int, hi: int) -> UnivariateMomentSequence:
    known = partial_or_known
    return UnivariateMomentSequence(lo, tuple(known[t] for t in range(lo, hi + 1)))


def _solver(strong: bool):
    return solve_sthmp if strong else solve_thmp


# ---------------------------------------------------------------------------
# parabola

_EPS = float(np.finfo(float).eps)


def _parabola_alt(curve: GraphCurve) -> AffineMap:
    q0, q1, q2 = curve.q
    return AffineMap(0.0, 1.0, 0.0, -q0 / q2, -q1 / q2, 1.0 / q2)


def solve_parabola(beta: BivariateMomentSequence, curve: GraphCurve | tuple = (0.0, 0.0, 1.0),
                   cfg: ToleranceConfig = DEFAULT_TOLERANCES) -> SolveReport:
    """Degree-2 graphs: straighten to ``y = x^2`` and read the Hankel data off the moments."""
    curve = curve if isinstance(curve, GraphCurve) else GraphCurve(tuple(curve))
    if curve.ell != 2:
        raise UnsupportedCurve("solve_parabola needs deg q = 2")
    d = beta.degree
    if d < 2:
        raise DegreeTooLow("the parabola solver needs degree >= 2")
    bad = check_curve_relations(beta, curve, _relation_tol(cfg))
    if bad:
        raise RelationsViolated(bad)
    ctx = _Context(beta, curve, cfg)
    rank_m = moment_matrix_rank(beta, cfg.rank_tol)
    ctx.diag["rank_moment_matrix"] = rank_m
    alt = _parabola_alt(curve)
    b = apply_alt(beta, alt)
    absolute = BivariateMomentSequence(d, {m: abs(v) for m, v in beta.items()})
    bound = apply_alt(absolute, AffineMap(0.0, 1.0, 0.0, abs(alt.d), abs(alt.e), abs(alt.f)))
    gamma = [b[(t % 2, t // 2)] for t in range(2 * d + 1)]
    noise = np.array([4 * _EPS * bound[(t % 2, t // 2)] for t in range(2 * d + 1)])
    if d % 2 == 0:
        k = d // 2
        v = UnivariateMomentSequence(0, tuple(gamma))
        psd, rank_full = hankel_psd_rank(gamma, cfg, noise)
        if not psd:
            return ctx.fail(Status.NO_MEASURE, "moment matrix is not positive semidefinite")
        # rank M_k equals the rank of the full Hankel matrix; both ranks are measured the same way,
        # and a violation must persist at every refinement level to count as a certificate
        first = None
        for factor in RANK_REFINEMENT:
            level = dataclasses.replace(cfg, rank_tol=cfg.rank_tol * factor)
            rank_full = hankel_psd_rank(gamma, level, noise)[1]
            rank_corner = hankel_psd_rank(gamma[: 4 * k - 1], level, noise[: 4 * k - 1])[1]
            first = first or (rank_corner, rank_full)
            pd_corner = rank_corner == 2 * k
            if pd_corner or rank_corner == rank_full:
                break
        else:
            rank_corner, rank_full = first
            ctx.diag.update(rank_corner=rank_corner, rank_hankel=rank_full)
            return ctx.fail(
                Status.NO_MEASURE,
                f"parabola rank equality fails: rank of the restricted corner {rank_corner} != {rank_full} = rank M_k",
                rank_corner=rank_corner,
            )
        ctx.diag.update(rank_corner=rank_corner, rank_hankel=rank_full)
        rep = solve_thmp(v, cfg, noise=noise)
        ctx.diag["branch"] = rep.branch
        out = ctx.verify(rep.measure, "parabola with positive definite corner" if pd_corner else "parabola with rank equality")
        if out:
            return out
        return ctx.fail(Status.UNKNOWN if rep.found else Status.NO_MEASURE, rep.diagnostic or "extracted measure failed verification")
    v = UnivariateMomentSequence(0, tuple(gamma))
    if not hankel_psd_rank(gamma, cfg, noise)[0]:
        return ctx.fail(Status.NO_MEASURE, "odd parabola: Hankel matrix is not positive semidefinite")
    rep = solve_thmp(v, cfg, noise=noise)
    ctx.diag.update(rank_hankel=rep.rank, branch=rep.branch)
    if not rep.found:
        return ctx.fail(Status.NO_MEASURE, "odd parabola: the sequence is not positively recursively generated; " + rep.diagnostic)
    out = ctx.verify(rep.measure, "odd parabola")
    if out:
        return out
    return ctx.fail(Status.UNKNOWN, "extracted measure failed verification")


# ---------------------------------------------------------------------------
# a top hole followed by one known odd moment


def _odd_top_hole(values: np.ndarray, top: float, cfg: ToleranceConfig, noise: np.ndarray | None = None):
    """Measures for ``(g_0, .., g_{2m-1}, z, g_{2m+1})`` with ``z`` free.

    Yields ``(label, measure)`` candidates: first the ``m``-atomic one obtained from
    the flat value of ``z`` (valid only when ``g_{2m+1}`` follows the recursion),
    then ``(m+1)``-atomic ones for values of ``z`` above the flat value.
    """
    two_m = values.size
    m = two_m // 2
    seq = np.concatenate([values, [0.0, top]])
    c = radius_estimate(np.where(np.isfinite(seq), seq, 0.0))
    s = scaled(seq, c)
    C = hankel_matrix(s[: 2 * m - 1])
    if not is_positive_definite(C, cfg.rank_tol):
        # singular corner: the measure is forced by the recursion
        base = UnivariateMomentSequence(0, tuple(values[: 2 * m - 1]))
        rep = solve_thmp(base, cfg, noise=None if noise is None else noise[: 2 * m - 1])
        yield "singular corner: recursion", rep.measure if rep.found else None
        return
    u = s[m : 2 * m]
    z_flat = float(u @ np.linalg.solve(C, u))
    pivot = float(np.min(np.linalg.eigvalsh(C)))
    flat = np.concatenate([values, [z_flat * c ** (2 * m), top]])
    rep = solve_thmp(UnivariateMomentSequence(0, tuple(flat)), cfg, noise=noise)
    yield "positive definite corner: flat value", rep.measure if rep.found else None
    for factor in (1.0, 0.1, 10.0, 0.01, 100.0):
        z = (z_flat + factor * max(pivot, cfg.rank_tol)) * c ** (2 * m)
        seq_z = np.concatenate([values, [z, top]])
        rep = solve_thmp(UnivariateMomentSequence(0, tuple(seq_z)), cfg, noise=noise)
        yield "positive definite corner: one extra atom", rep.measure if rep.found else None


def solve_cubic_odd(beta: BivariateMomentSequence, curve: GraphCurve | None = None,
                    cfg: ToleranceConfig = DEFAULT_TOLERANCES) -> SolveReport:
    """Odd-degree data on a cubic graph (``y = x^3`` by default)."""
    curve = curve or GraphCurve((0.0, 0.0, 0.0, 1.0))
    if curve.ell != 3:
        raise UnsupportedCurve("solve_cubic_odd needs deg q = 3")
    if beta.degree % 2 == 0:
        raise InvalidInput("solve_cubic_odd needs odd degree")
    if beta.degree < 3:
        raise DegreeTooLow("odd cubic solver needs degree >= 3")
    red = reduce_to_univariate(beta, curve, _relation_tol(cfg))
    return _solve_graph(beta, curve, red, cfg)


# ---------------------------------------------------------------------------
# the general reduction route


def _maximal_known_block(known: dict, lo: int, hi: int, anchor: int) -> tuple[int, int] | None:
    """Largest contiguous run of known indices around ``anchor`` trimmed to have ends of ``anchor``'s parity."""
    if anchor not in known:
        return None
    a = anchor
    while a - 1 >= lo and (a - 1) in known:
        a -= 1
    b = anchor
    while b + 1 <= hi and (b + 1) in known:
        b += 1
    if (a - anchor) % 2:
        a += 1
    if (b - anchor) % 2:
        b -= 1
    return (a, b) if b >= a else None


def _extract(ctx: _Context, seq: UnivariateMomentSequence, strong: bool, route: str, extra=None,
             cfg: ToleranceConfig | None = None, rank_hint: int | None = None) -> SolveReport | None:
    if cfg is None:
        for refine in RANK_REFINEMENT:
            cfg = dataclasses.replace(ctx.cfg, rank_tol=ctx.cfg.rank_tol * refine)
            rep = _extract(ctx, seq, strong, route, extra, cfg, rank_hint)
            if rep:
                return rep
        return None
    rep = _solver(strong)(seq, cfg, noise=ctx.noise_for(seq.k1, seq.k2), rank_hint=rank_hint, refine=False)
    if not rep.found:
        ctx.diag["attempts"].append({"route": route, "failed": rep.diagnostic})
        if rep.measure is None or not rep.residual < POLISH_LIMIT:
            return None
    return ctx.verify(rep.measure, route, extra)


def _trusted(ctx: _Context, known: dict, block: tuple[int, int], anchor: int) -> tuple[int, int]:
    """Shrink ``block`` (keeping ``anchor`` and endpoint parity) to entries well above their rounding noise."""
    a, b = block
    limit = 10 * ctx.cfg.rank_tol

    def clean(t: int) -> bool:
        ref = abs(known[t]) if (t - anchor) % 2 == 0 else math.sqrt(abs(known[t - 1] * known[t + 1]))
        return ctx.noise.get(t, 0.0) <= limit * ref

    hi = anchor
    while hi + 2 <= b and clean(hi + 1) and clean(hi + 2):
        hi += 2
    lo = anchor
    while lo - 2 >= a and clean(lo - 1) and clean(lo - 2):
        lo -= 2
    return lo, hi


def _block_shortcut(ctx: _Context, known: dict, block: tuple[int, int], strong: bool):
    """Returns (report or None, block_is_singular, block_not_psd).

    A block that looks singular is retried with finer rank tolerances: nearly
    coincident atoms can push the last nonzero eigenvalue under the default one.
    Only a block that stays singular at the finest tolerance counts as singular.
    """
    a, b = block
    if ctx.noise:
        a, b = _trusted(ctx, known, block, 0 if strong else a)
    seq = _seq(known, a, b)
    noise = ctx.noise_for(a, b)
    psd, rank = hankel_psd_rank(seq.array(), ctx.cfg, noise)
    if not psd:
        return None, False, True
    ctx.diag["rank_known_block"] = rank
    ctx.diag["known_block"] = [a, b]
    size = (len(seq) + 1) // 2
    if rank == size:
        # one more known moment on top makes the problem determined: the unique candidate is cheap to test
        if b + 1 in known:
            rep = _extract(ctx, _seq(known, a, b + 1), strong, "positive definite known block and the next moment")
            if rep:
                return rep, False, False
        return None, False, False
    if strong and not (a < 0 < b):
        return None, True, False
    for refine in RANK_REFINEMENT:
        cfg = dataclasses.replace(ctx.cfg, rank_tol=ctx.cfg.rank_tol * refine)
        rank = hankel_psd_rank(seq.array(), cfg, noise)[1]
        if rank == size:
            return None, False, False
        rep = _extract(ctx, seq, strong, "singular known block: unique measure", {"rank_hankel": rank}, cfg)
        if rep:
            return rep, True, False
    return None, True, False


def _completion_candidates(ctx: _Context, partial: PartialUnivariateSequence, z_hole: int | None):
    """Completions of ``partial`` to try for extraction (the z hole is treated as free).

    The best-conditioned completion comes first; alternating projections are the
    fallback and the only source of an infeasibility certificate.
    """
    cert = known_entry_certificate(partial, ctx.cfg.psd_tol)
    if cert is not None:
        yield "infeasible", FeasibilityOutcome("Infeasible", None, cert, math.inf, 0)
        return
    seq, lam = max_min_eigen_completion(partial, ctx.cfg)
    ctx.diag.setdefault("feasibility", []).append({"method": "max-min-eigenvalue", "min_eigenvalue": lam})
    yield "feasible", FeasibilityOutcome("Feasible" if lam >= -ctx.cfg.psd_tol else "Unknown", seq, None, max(-lam, 0.0), 0)
    out = complete_feasibility(partial, ctx.cfg, warm_start=False)
    ctx.diag["feasibility"].append(
        {"method": "alternating projections", "status": out.status, "iterations": out.iterations, "gap": out.gap}
    )
    if out.feasible:
        yield "feasible", out


def _solve_window(ctx: _Context, partial: PartialUnivariateSequence, window: tuple[int, int], strong: bool,
                  z_hole: int | None, odd_top: int | None, block_singular: bool) -> SolveReport:
    lo, hi = window
    fit = partial.restrict(lo, hi)
    known = dict(partial.known)
    hankel_hi = hi if odd_top is None else hi - 1
    work = partial.restrict(lo, hankel_hi)
    saw_feasible = False
    if not work.unknown:
        cands = [("feasible", FeasibilityOutcome("Feasible", _seq(known, lo, hankel_hi), None, 0.0, 0))]
    else:
        cands = _completion_candidates(ctx, work, z_hole)
    for status, out in cands:
        if status == "infeasible":
            return ctx.fail(Status.NO_MEASURE, "no positive semidefinite completion: known entries certify it",
                            certificate=out.certificate)
        saw_feasible = True
        filled = dict(zip(range(lo, hankel_hi + 1), out.completed.values))
        ctx.diag["completion"] = {str(t): filled[t] for t in sorted(work.unknown)}
        if odd_top is not None:
            vals = np.array([filled[t] for t in range(lo, hankel_hi)])
            noise = ctx.noise_for(lo, hi)
            for label, nu in _odd_top_hole(vals, known[odd_top], ctx.cfg, noise):
                rep = ctx.verify(nu, label)
                if rep:
                    return rep
            continue
        if z_hole is not None:
            single = PartialUnivariateSequence(
                lo, hankel_hi, {t: v for t, v in filled.items() if t != z_hole}, frozenset({z_hole})
            )
            try:
                # only invertibility of the corner matters here; the rank tolerance is for rank decisions
                zs = complete_single_entry(single, ctx.cfg.rank_tol * 1e-4)
            except CurveTMPError as exc:
                ctx.diag["attempts"].append({"route": "single entry", "error": str(exc)})
                zs = ()
            for name, z in zip(("z+", "z-"), zs):
                seq = single.fill({z_hole: z})
                rep = _extract(ctx, seq, strong, f"rank-reducing value {name} for the entry {z_hole}",
                               {"z_values": list(zs)}, rank_hint=(len(seq) - 1) // 2)
                if rep:
                    return rep
        for variant in corner_variants(work, out.completed):
            rep = _extract(ctx, variant, strong, "completed window with corner entries moved")
            if rep:
                return rep
        rep = _extract(ctx, out.completed, strong, "completed window")
        if rep:
            return rep
    if block_singular:
        return ctx.fail(Status.NO_MEASURE, "the known block is singular and its unique measure does not fit the data")
    if saw_feasible:
        return ctx.fail(Status.UNKNOWN, "a completion was found but no measure could be verified numerically")
    return ctx.fail(Status.UNKNOWN, "alternating projections did not converge")


def _solve_graph(beta: BivariateMomentSequence, curve: GraphCurve, red: ReductionResult, cfg: ToleranceConfig) -> SolveReport:
    d, ell = beta.degree, curve.ell
    shift = red.alt_used.a if red.alt_used is not None else 0.0
    ctx = _Context(beta, curve, cfg, shift, red.noise)
    ctx.diag["rank_moment_matrix"] = moment_matrix_rank(beta, cfg.rank_tol)
    ctx.diag["holes"] = red.holes
    known = dict(red.partial.known)
    top = d * ell
    window = (0, top)
    odd_top = top if top % 2 else None
    z_hole = top - 1 if odd_top is None and (top - 1) not in known else None
    block = _maximal_known_block(known, 0, top, 0)
    rep, singular, not_psd = _block_shortcut(ctx, known, block, False)
    if rep:
        return rep
    if not_psd:
        return ctx.fail(Status.NO_MEASURE, "a fully known Hankel block is not positive semidefinite", known_block=list(block))
    return _solve_window(ctx, red.partial, window, False, z_hole, odd_top, singular)


def _solve_hyperbolic(beta: BivariateMomentSequence, curve: HyperbolicCurve, red: ReductionResult, cfg: ToleranceConfig) -> SolveReport:
    d, ell = beta.degree, curve.ell
    ctx = _Context(beta, curve, cfg, 0.0, red.noise)
    ctx.diag["rank_moment_matrix"] = moment_matrix_rank(beta, cfg.rank_tol)
    ctx.diag["holes"] = red.holes
    known = dict(red.partial.known)
    k = ceil_half(d)
    if d % 2 == 0:
        window = (-2 * k * ell, 2 * k)
        z_hole = window[0] + 1 if window[0] + 1 not in known else None
    else:
        window = (-2 * k * ell + 2 * (ell // 2), 2 * k)
        z_hole = None
    block = _maximal_known_block(known, window[0], window[1], 0)
    rep, singular, not_psd = _block_shortcut(ctx, known, block, True)
    if rep:
        return rep
    if not_psd:
        return ctx.fail(Status.NO_MEASURE, "a fully known Hankel block is not positive semidefinite", known_block=list(block))
    return _solve_window(ctx, red.partial, window, True, z_hole, None, singular)


def solve_curve(beta: BivariateMomentSequence, curve: CurveSpec, cfg: ToleranceConfig = DEFAULT_TOLERANCES) -> SolveReport:
    """Decide whether ``beta`` has a representing measure on ``curve`` and build one."""
    if not isinstance(curve, (GraphCurve, HyperbolicCurve)):
        raise UnsupportedCurve(f"unsupported curve {curve!r}")
    d = beta.degree
    if d < 2:
        raise DegreeTooLow("degree must be at least 2")
    bad = check_curve_relations(beta, curve, _relation_tol(cfg))
    if bad:
        ctx = _Context(beta, curve, cfg)
        return ctx.fail(Status.NO_MEASURE, "recursive relations forced by the curve fail",
                        relations_violated=[list(p) for p in bad])
    if isinstance(curve, GraphCurve) and curve.ell == 2:
        return solve_parabola(beta, curve, cfg)
    red = reduce_to_univariate(beta, curve, _relation_tol(cfg))
    if isinstance(curve, GraphCurve):
        return _solve_graph(beta, curve, red, cfg)
    return _solve_hyperbolic(beta, curve, red, cfg)
