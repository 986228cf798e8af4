"""Acceptance suite: one PASS/FAIL line per criterion.

Run ``python tests/test_acceptance.py`` for the summary alone, or through pytest
(``pytest tests/test_acceptance.py -s`` shows the lines).  Tolerances and time
limits are fixed here and are never adapted to the outcome.
"""

import itertools
import math
import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from curvetmp import (  # noqa: E402
    AtomicMeasure2D,
    HyperbolicCurve,
    Status,
    UnivariateMomentSequence,
    atom_bound,
    build_moment_matrix,
    complete_feasibility,
    complete_single_entry,
    export_sdpa,
    monomial_curve,
    moment_residual,
    reduce_to_univariate,
    solve_curve,
    solve_parabola,
    solve_thmp,
    synth_moments,
)
from curvetmp.core import check_column_relation  # noqa: E402
from curvetmp.hankel import PartialUnivariateSequence, hankel_matrix  # noqa: E402
from curvetmp.reduction import index_sets  # noqa: E402

from _gen import FAMILIES, PARABOLA_NO, family_curve, from_gamma, random_measure  # noqa: E402

SEED = 20240611


def _line(n, ok, detail):
    print(f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}", flush=True)
    return ok


def _rel_err(got, want):
    got, want = np.asarray(got, float), np.asarray(want, float)
    return float(np.max(np.abs(got - want)) / max(1.0, float(np.max(np.abs(want)))))


# ---------------------------------------------------------------------------


def criterion_1():
    t0 = time.perf_counter()
    beta = from_gamma(PARABOLA_NO, 4)
    M = build_moment_matrix(beta)
    eig = np.sort(np.linalg.eigvalsh(M.matrix()))
    r = math.sqrt(65)
    want = np.sort([(9 + r) / 2, 4, 1, (9 - r) / 2, 0, 0])
    eig_err = float(np.max(np.abs(eig - want)))
    rel_y = check_column_relation(M, {(0, 1): 1.0, (2, 0): -1.0})
    rel_xy = check_column_relation(M, {(1, 1): 1.0, (1, 0): -1.0})
    rep = solve_curve(beta, monomial_curve(2))
    ranks = (rep.diagnostics.get("rank_corner"), rep.diagnostics.get("rank_moment_matrix"))
    elapsed = time.perf_counter() - t0
    ok = eig_err < 1e-9 and rel_y and rel_xy and rep.status == Status.NO_MEASURE and ranks == (3, 4) and elapsed < 0.1
    return _line(1, ok, f"eigenvalue error {eig_err:.1e}, Y=X^2 {rel_y}, XY=X {rel_xy}, "
                        f"{rep.status.value} with ranks {ranks[0]} vs {ranks[1]}, {elapsed:.3f} s")


def criterion_2():
    t0 = time.perf_counter()
    a, b, c, d = 1.0, 2.0, 5.0, 14.0
    e = (-(c**3) + 2 * b * c * d - a * d**2) / (b**2 - a * c)
    head = [1.0, 0.0, a, 0.0, b, 0.0, c, 0.0, d, 0.0, e, 0.0]
    # top moment of the flat extension: f = v^T A^+ v
    A = hankel_matrix(head[:11])
    v = np.array(head[6:12])
    f_pinv = float(v @ np.linalg.pinv(A) @ v)
    r3 = math.sqrt(3)
    atoms = np.array([0.0, 1.0, -1.0, r3, -r3])
    dens = np.array([1 / 3, 1 / 4, 1 / 4, 1 / 12, 1 / 12])
    f_oracle = float(np.sum(dens * atoms**12))
    oracle_head = [float(np.sum(dens * atoms**t)) for t in range(12)]
    beta = from_gamma(head + [f_oracle], 6)
    rep = solve_curve(beta, monomial_curve(2))
    elapsed = time.perf_counter() - t0
    ok = e == 41.0 and abs(f_pinv - 122) < 1e-8 and abs(f_oracle - 122) < 1e-9 and _rel_err(oracle_head, head) < 1e-12
    detail = f"e={e:g}, f={f_pinv:.10g} (pseudo-inverse) / {f_oracle:.10g} (oracle)"
    if rep.found:
        got = sorted(zip(rep.measure.atoms, rep.measure.densities))
        want = sorted(zip([(x, x * x) for x in atoms], dens))
        atom_err = max(abs(g[0][0] - w[0][0]) for g, w in zip(got, want)) if len(got) == 5 else math.inf
        dens_err = max(abs(g[1] - w[1]) for g, w in zip(got, want)) if len(got) == 5 else math.inf
        res = moment_residual(beta, rep.measure)
        ok = ok and len(got) == 5 and atom_err < 1e-8 and dens_err < 1e-8 and res < 1e-8
        detail += f", {len(got)} atoms, atom error {atom_err:.1e}, density error {dens_err:.1e}, residual {res:.1e}"
    else:
        ok = False
        detail += f", solver returned {rep.status.value}"
    ok = ok and elapsed < 0.5
    return _line(2, ok, detail + f", {elapsed:.3f} s")


def criterion_3():
    t0 = time.perf_counter()
    failures = []
    for k in (3, 4, 5):
        cases = {
            "y=x^3 even": (2 * k, monomial_curve(3), [6 * k - 1, 6 * k + 1, 6 * k + 2]),
            "y=x^3 odd": (2 * k - 1, monomial_curve(3), [6 * k - 4, 6 * k - 2]),
            "y=x^4 even": (2 * k, monomial_curve(4), [8 * k - 5, 8 * k - 2, 8 * k - 1, 8 * k + 1, 8 * k + 2]),
            "y=x^4 odd": (2 * k - 1, monomial_curve(4), [8 * k - 9, 8 * k - 6, 8 * k - 5, 8 * k - 3, 8 * k - 2]),
            "y*x^2=1 even": (2 * k, HyperbolicCurve(2), [-4 * k - 2, -4 * k - 1, -4 * k + 1, 2 * k + 1, 2 * k + 2]),
            "y*x^3=1 even": (2 * k, HyperbolicCurve(3),
                             [-6 * k - 2, -6 * k - 1, -6 * k + 1, -6 * k + 2, -6 * k + 5, 2 * k + 1, 2 * k + 2]),
        }
        for name, (d, curve, want) in cases.items():
            mu = random_measure(curve, 2, np.random.default_rng(k))
            got = reduce_to_univariate(synth_moments(mu, d), curve).holes
            if got != want or index_sets(d, curve)[2] != want:
                failures.append(f"{name} k={k}: {got} != {want}")
    elapsed = time.perf_counter() - t0
    # the timing covers the 18 index sets plus the reductions of the fixtures
    ok = not failures and elapsed < 0.1
    return _line(3, ok, f"18 hole sets, {len(failures)} mismatches{': ' + failures[0] if failures else ''}, "
                        f"{elapsed:.3f} s")


def criterion_4():
    t0 = time.perf_counter()
    rng = np.random.default_rng(SEED)
    per_family = {}
    failures = []
    worst = 0.0
    for name in FAMILIES:
        bad = 0
        for i in range(200):
            d = 5 + i % 4
            curve = family_curve(name, rng)
            bound = atom_bound(curve, d)
            n = int(rng.integers(1, min(bound, 8) + 1))
            beta = synth_moments(random_measure(curve, n, rng), d)
            rep = solve_curve(beta, curve)
            res = moment_residual(beta, rep.measure) if rep.found else math.inf
            if not (rep.found and res < 1e-6 and len(rep.measure) <= bound):
                bad += 1
                if len(failures) < 3:
                    failures.append(f"{name} d={d} n={n}: {rep.status.value}, "
                                    f"{len(rep.measure) if rep.found else '-'} atoms, residual {res:.1e}")
            else:
                worst = max(worst, res)
        per_family[name] = 200 - bad
    elapsed = time.perf_counter() - t0
    ok = all(v == 200 for v in per_family.values()) and elapsed < 60
    counts = ", ".join(f"{k} {v}/200" for k, v in per_family.items())
    return _line(4, ok, f"{counts}; worst residual {worst:.1e}; {elapsed:.1f} s"
                        + (f"; first failures: {'; '.join(failures)}" if failures else ""))


def criterion_5():
    t0 = time.perf_counter()
    rng = np.random.default_rng(SEED + 5)
    grid = np.arange(-3.0, 4.0)
    count, bad, worst = 0, 0, 0.0
    for size in range(1, 5):
        for pts in itertools.combinations(grid, size):
            x = np.array(pts)
            w = rng.uniform(0.2, 1.0, size)
            for length in range(1, 10):
                gamma = np.array([np.sum(w * x**t) for t in range(length)])
                rep = solve_thmp(UnivariateMomentSequence(0, tuple(gamma)))
                count += 1
                if not rep.found:
                    bad += 1
                    continue
                nu = rep.measure
                got = [np.sum(np.array(nu.densities) * np.array(nu.atoms) ** t) for t in range(length)]
                err = _rel_err(got, gamma)
                worst = max(worst, err)
                bad += err >= 1e-9
    rejected, tried = 0, 0
    while tried < 500:
        length = int(rng.choice([3, 5, 7, 9]))
        gamma = rng.normal(0.0, 1.0, length)
        gamma[0] = abs(gamma[0])
        H = hankel_matrix(gamma)
        if np.linalg.eigvalsh(H)[0] >= -1e-6 * np.max(np.abs(H)):
            continue  # the eigenvalue oracle must call it non-PSD
        tried += 1
        rejected += solve_thmp(UnivariateMomentSequence(0, tuple(gamma))).status == Status.NO_MEASURE
    elapsed = time.perf_counter() - t0
    ok = bad == 0 and rejected == 500 and elapsed < 30
    return _line(5, ok, f"{count - bad}/{count} grid sequences recovered (worst relative residual {worst:.1e}), "
                        f"{rejected}/500 non-PSD rejected, {elapsed:.2f} s")


def single_entry_instances(rng, count=100):
    """PD data from randomly scaled, shifted and reweighted 60-point Gauss-Hermite rules."""
    nodes, weights = np.polynomial.hermite_e.hermegauss(60)
    for _ in range(count):
        size = int(rng.integers(3, 16))
        w = weights * rng.uniform(0.5, 1.5, nodes.size)
        x = nodes * rng.uniform(0.5, 2.0) + rng.uniform(-0.5, 0.5)
        yield size, np.array([np.sum(w * x**t) for t in range(2 * size - 1)])


def criterion_6():
    t0 = time.perf_counter()
    rng = np.random.default_rng(SEED + 6)
    bad, worst_eig, worst_det = 0, 0.0, 0.0
    for size, gamma in single_entry_instances(rng):
        n = gamma.size
        hole = n - 2
        partial = PartialUnivariateSequence(0, n - 1, {t: float(gamma[t]) for t in range(n) if t != hole},
                                            frozenset([hole]))
        roots = complete_single_entry(partial)
        if len(roots) != 2 or not all(np.isfinite(roots)):
            bad += 1
            continue
        for z in roots:
            v = gamma.copy()
            v[hole] = z
            H = hankel_matrix(v)
            diag = np.diag(H)
            scale, det_scale = float(np.max(diag)), float(np.prod(diag))
            lam_min = float(np.linalg.eigvalsh(H)[0]) / scale
            D = 1.0 / np.sqrt(diag)
            balanced = np.linalg.eigvalsh(H * np.outer(D, D))
            rank = int(np.sum(balanced > 1e-9 * balanced[-1]))
            det = abs(float(np.linalg.det(H))) / det_scale
            worst_eig, worst_det = min(worst_eig, lam_min), max(worst_det, det)
            bad += not (lam_min >= -1e-8 and rank == size - 1 and det < 1e-6)
    elapsed = time.perf_counter() - t0
    ok = bad == 0 and elapsed < 10
    return _line(6, ok, f"{200 - bad}/200 roots good, min eigenvalue / scale {worst_eig:.1e}, "
                        f"|det| / det-scale {worst_det:.1e}, {elapsed:.2f} s")


def feasibility_instances(rng, count=50):
    """Genuine moment sequences with 1 to 3 holes punched in; atoms from 1 to size + 2."""
    for _ in range(count):
        m = int(rng.integers(2, 7))
        n = 2 * m + 1
        atoms = int(rng.integers(1, m + 4))
        x = rng.uniform(-1.5, 1.5, atoms)
        w = rng.uniform(0.2, 1.0, atoms)
        gamma = np.array([np.sum(w * x**t) for t in range(n)])
        holes = rng.choice(np.arange(1, n), size=int(rng.integers(1, 4)), replace=False)
        yield gamma, sorted(int(h) for h in holes)


def criterion_7():
    t0 = time.perf_counter()
    rng = np.random.default_rng(SEED + 7)
    feasible, worst_gap = 0, 0.0
    for gamma, holes in feasibility_instances(rng):
        partial = PartialUnivariateSequence(0, gamma.size - 1,
                                            {t: float(v) for t, v in enumerate(gamma) if t not in holes},
                                            frozenset(holes))
        out = complete_feasibility(partial)
        worst_gap = max(worst_gap, out.gap)
        feasible += out.status == "Feasible" and out.gap < 1e-7
    certified = 0
    for m in range(1, 6):
        for g2 in (-1.0, -0.5, -3.0):
            n = 2 * m + 1
            known = {0: 1.0, 2: g2}
            partial = PartialUnivariateSequence(0, n - 1, known, frozenset(range(n)) - set(known))
            out = complete_feasibility(partial)
            cert = out.certificate or {}
            certified += out.status == "Infeasible" and cert.get("indices") == [2]
    elapsed = time.perf_counter() - t0
    ok = feasible == 50 and certified == 15 and elapsed < 60
    return _line(7, ok, f"{feasible}/50 Feasible (worst gap {worst_gap:.1e}), {certified}/15 Infeasible "
                        f"with certificate, {elapsed:.2f} s")


def parabola_verdicts(rng):
    """(beta, truth) pairs: positive measures, signed measures, bumped top moments on singular corners."""
    for i in range(60):
        d = (4, 6)[i % 2]
        kind = i % 3
        atoms = int(rng.integers(1, d // 2 + 2)) if kind == 2 else int(rng.integers(1, d + 2))
        x = rng.uniform(-1.5, 1.5, atoms)
        w = rng.uniform(0.2, 1.0, atoms)
        if kind == 1 and atoms > 1:
            w[0] = -w[0]
        gamma = [float(np.sum(w * x**t)) for t in range(2 * d + 1)]
        if kind == 2:
            gamma[2 * d] += rng.uniform(0.5, 2.0)
        truth = None if kind == 1 else kind == 0 or (kind == 1 and atoms == 1)
        yield from_gamma(gamma, d), gamma, truth


def criterion_8():
    t0 = time.perf_counter()
    rng = np.random.default_rng(SEED + 8)
    agree, compared, skipped, oracle_bad = 0, 0, 0, 0
    for beta, gamma, truth in parabola_verdicts(rng):
        by_extension = solve_parabola(beta)
        # the data only involve gamma_0 .. gamma_2d, so the reduced problem is a Hamburger problem
        by_reduction = solve_thmp(UnivariateMomentSequence(0, tuple(gamma)))
        if Status.UNKNOWN in (by_extension.status, by_reduction.status):
            skipped += 1
            continue
        compared += 1
        agree += by_extension.status == by_reduction.status
        if truth is not None:
            oracle_bad += by_extension.found != truth
    dims = []
    for ell in (3, 4, 5):
        for k in (ell, ell + 1):
            curve = monomial_curve(ell)
            mu = random_measure(curve, 3, np.random.default_rng(ell * 10 + k))
            red = reduce_to_univariate(synth_moments(mu, 2 * k), curve)
            lines = export_sdpa(red.partial).splitlines()
            got = (int(lines[1].split()[0]), int(lines[3].split()[0]))
            want = ((ell - 2) * (ell - 1) // 2 + 2, k * ell + 2)
            dims.append((ell, k, got, want))
    dim_bad = [x for x in dims if x[2] != x[3]]
    elapsed = time.perf_counter() - t0
    ok = agree == compared and compared > 0 and oracle_bad == 0 and not dim_bad
    return _line(8, ok, f"reduction and rank-extension verdicts agree on {agree}/{compared} parabola instances "
                        f"({skipped} skipped as Unknown, {oracle_bad} against the oracle); SDPA dimensions "
                        f"{len(dims) - len(dim_bad)}/{len(dims)} match (variables, size) = "
                        f"((l-2)(l-1)/2+2, kl+2){'; mismatch ' + str(dim_bad[0]) if dim_bad else ''}; "
                        f"{elapsed:.2f} s")


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6, criterion_7, criterion_8]


@pytest.mark.parametrize("criterion", CRITERIA, ids=lambda f: f.__name__)
def test_acceptance(criterion):
    assert criterion()


if __name__ == "__main__":
    results = [c() for c in CRITERIA]
    sys.exit(0 if all(results) else 1)
