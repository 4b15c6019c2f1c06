"""Approximate-control-variate estimator engine.

Sample allocations are represented as unions of disjoint sample blocks; the
coupling matrix G and vector g follow from the sample-mean covariance
identity Cov[mean over P, mean over Q] = |P n Q| / (|P||Q|) per unit
covariance.  Supported allocation families:

  acvis  counts (N0, N1, .., N_{M-1}):  z*_m = z0, z_m an exclusive group
  mfmc   nested counts N0 <= .. <= N_{M-1}:  z*_m = C_{m-1}, z_m = C_m for
         cumulative sets C_m of size N_m
  mlmc   per-level set sizes N0 <= .. <= N_{M-1}: z*_m = s_{m-1}, z_m = s_m
         for disjoint level sets s_l

Estimator variance under counts scaled by c is exactly variance/c while the
cost scales by c, so continuous allocation optima at any budget follow from a
single unit-budget solve.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BudgetInfeasibleError,
    DimensionMismatchError,
    SingularCouplingError,
)

FAMILIES = ("acvis", "mfmc", "mlmc")


@dataclass(frozen=True)
class CostModel:
    """Per-sample evaluation cost of each model; index 0 is high fidelity."""

    w: np.ndarray

    def __post_init__(self):
        w = np.atleast_1d(np.asarray(self.w, dtype=float))
        if np.any(w <= 0.0):
            raise ValueError("all model costs must be positive")
        object.__setattr__(self, "w", w)

    @property
    def n_models(self):
        return self.w.size

    @property
    def total(self):
        return float(self.w.sum())


@dataclass(frozen=True)
class SampleAllocation:
    """Family tag plus the family-specific count vector (floats allowed
    for continuous relaxations; estimator execution requires integers)."""

    family: str
    counts: np.ndarray

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown allocation family {self.family!r}")
        counts = np.atleast_1d(np.asarray(self.counts, dtype=float))
        if np.any(counts <= 0.0):
            raise ValueError("all sample counts must be positive")
        if self.family in ("mfmc", "mlmc") and np.any(np.diff(counts) < -1e-9):
            raise ValueError(f"{self.family} counts must be nondecreasing")
        object.__setattr__(self, "counts", counts)

    @property
    def n_models(self):
        return self.counts.size

    @property
    def n0(self):
        return float(self.counts[0])

    def block_structure(self):
        """(block sizes, z0 blocks, z*_m blocks, z_m blocks) with disjoint blocks."""
        n = self.counts
        m = n.size
        if self.family == "acvis":
            sizes = n.copy()
            z0 = [0]
            zstar = [[0] for _ in range(1, m)]
            zl = [[i] for i in range(1, m)]
        elif self.family == "mfmc":
            sizes = np.concatenate(([n[0]], np.diff(n)))
            z0 = [0]
            zstar = [list(range(i)) for i in range(1, m)]
            zl = [list(range(i + 1)) for i in range(1, m)]
        else:  # mlmc
            sizes = n.copy()
            z0 = [0]
            zstar = [[i - 1] for i in range(1, m)]
            zl = [[i] for i in range(1, m)]
        return sizes, z0, zstar, zl

    def model_eval_counts(self):
        """Unique samples evaluated by each model."""
        sizes, z0, zstar, zl = self.block_structure()
        out = np.empty(self.n_models)
        out[0] = sum(sizes[b] for b in z0)
        for m in range(1, self.n_models):
            blocks = set(zstar[m - 1]) | set(zl[m - 1])
            out[m] = sum(sizes[b] for b in blocks)
        return out

    def cost(self, w):
        """Total cost W(w, A)."""
        w = w.w if isinstance(w, CostModel) else np.asarray(w, dtype=float)
        return float(w @ self.model_eval_counts())

    def scaled(self, factor):
        return SampleAllocation(self.family, self.counts * factor)

    def rounded_down(self):
        """Integer counts: floor, clamp to >= 1, restore monotonicity if nested."""
        counts = np.maximum(np.floor(self.counts), 1.0)
        if self.family in ("mfmc", "mlmc"):
            counts = np.maximum.accumulate(counts)
        return SampleAllocation(self.family, counts)

    def is_integral(self):
        return bool(np.all(self.counts == np.floor(self.counts)))


@dataclass(frozen=True)
class CouplingStructure:
    """Coupling of the difference terms: Cov[Delta,Delta] = G (.) Sigma_LL,
    Cov[Delta, Qhat0] = g (.) col0(Sigma), Var[Qhat0] = Sigma_00 / n0."""

    G: np.ndarray
    g: np.ndarray
    n0: float


@dataclass(frozen=True)
class EstimatorConfig:
    """Control-variate weights plus the sample allocation."""

    alpha: np.ndarray
    allocation: SampleAllocation

    def __post_init__(self):
        alpha = np.atleast_1d(np.asarray(self.alpha, dtype=float))
        if alpha.size != self.allocation.n_models - 1:
            raise DimensionMismatchError(
                f"alpha length {alpha.size} does not match allocation with "
                f"{self.allocation.n_models} models"
            )
        object.__setattr__(self, "alpha", alpha)


def coupling_from_sets(sizes, z0, zstar, zl):
    """Coupling structure for explicit block memberships.

    sizes: disjoint block sizes; z0, zstar[m], zl[m]: block-index lists.
    """
    sizes = np.asarray(sizes, dtype=float)
    k = len(zstar)
    set0 = set(z0)
    n0 = sizes[list(set0)].sum()
    nstar = np.array([sizes[list(set(s))].sum() for s in zstar])
    nl = np.array([sizes[list(set(s))].sum() for s in zl])

    def inter(p, q):
        common = list(set(p) & set(q))
        return sizes[common].sum() if common else 0.0

    g_mat = np.zeros((k, k))
    for i in range(k):
        for j in range(i, k):
            val = (
                inter(zstar[i], zstar[j]) / (nstar[i] * nstar[j])
                - inter(zstar[i], zl[j]) / (nstar[i] * nl[j])
                - inter(zl[i], zstar[j]) / (nl[i] * nstar[j])
                + inter(zl[i], zl[j]) / (nl[i] * nl[j])
            )
            g_mat[i, j] = g_mat[j, i] = val
    g_vec = np.array(
        [inter(zstar[i], z0) / (nstar[i] * n0) - inter(zl[i], z0) / (nl[i] * n0) for i in range(k)]
    )
    return CouplingStructure(G=g_mat, g=g_vec, n0=float(n0))


def _coupling_fast(family, counts):
    """Closed-form G and g for the built-in families."""
    n = counts
    m = n.size
    k = m - 1
    if family == "acvis":
        g_mat = np.full((k, k), 1.0 / n[0])
        g_mat[np.diag_indices(k)] += 1.0 / n[1:]
        g_vec = np.full(k, 1.0 / n[0])
    elif family == "mfmc":
        d = 1.0 / n[:-1] - 1.0 / n[1:]
        g_mat = np.diag(d)
        g_vec = d.copy()
    else:  # mlmc
        g_mat = np.zeros((k, k))
        idx = np.arange(k)
        g_mat[idx, idx] = 1.0 / n[:-1] + 1.0 / n[1:]
        if k > 1:
            off = -1.0 / n[1:-1]
            g_mat[idx[:-1], idx[1:]] = off
            g_mat[idx[1:], idx[:-1]] = off
        g_vec = np.zeros(k)
        g_vec[0] = 1.0 / n[0]
    return CouplingStructure(G=g_mat, g=g_vec, n0=float(n[0]))


def coupling(allocation):
    """Coupling structure (G, g, n0) of a sample allocation."""
    return _coupling_fast(allocation.family, allocation.counts)


def _family_cost(family, counts, w):
    n = counts
    if family == "acvis":
        return n[0] * w.sum() + float(w[1:] @ n[1:])
    if family == "mfmc":
        return float(w @ n)
    c = w.copy()
    c[:-1] += w[1:]
    return float(c @ n)


def optimal_weights(s, allocation):
    """Variance-minimizing control-variate weights for covariance s."""
    c = coupling(allocation)
    if c.g.size == 0:
        return np.zeros(0)
    gsl = c.G * s[1:, 1:]
    gs = c.g * s[0, 1:]
    return _solve_coupling(gsl, -gs)


def _solve_coupling(gsl, rhs):
    try:
        return np.linalg.solve(gsl, rhs)
    except np.linalg.LinAlgError:
        pass
    reg = 1e-10 * np.trace(gsl) / gsl.shape[0]
    if reg > 0.0:
        try:
            return np.linalg.solve(gsl + reg * np.eye(gsl.shape[0]), rhs)
        except np.linalg.LinAlgError:
            pass
    # Singular coupling (e.g. a sample group collapsed onto another); take the
    # minimum-norm optimizer, which zeroes weights on redundant directions.
    sol, _, _, _ = np.linalg.lstsq(gsl, rhs, rcond=None)
    if not np.all(np.isfinite(sol)):
        raise SingularCouplingError(
            "coupling system singular even after regularization",
            condition=float(np.linalg.cond(gsl)),
        )
    return sol


def estimator_variance(s, zeta):
    """Variance of the estimator with weights/allocation zeta under covariance s."""
    s = np.asarray(s, dtype=float)
    alloc = zeta.allocation
    c = coupling(alloc)
    base = s[0, 0] / c.n0
    if c.g.size == 0:
        return float(base)
    alpha = zeta.alpha
    gsl = c.G * s[1:, 1:]
    gs = c.g * s[0, 1:]
    return float(base + alpha @ gsl @ alpha + 2.0 * alpha @ gs)


def optimal_variance(s, allocation):
    """Minimum-over-weights estimator variance for covariance s."""
    s = np.asarray(s, dtype=float)
    c = coupling(allocation)
    base = s[0, 0] / c.n0
    if c.g.size == 0:
        return float(base)
    gsl = c.G * s[1:, 1:]
    gs = c.g * s[0, 1:]
    val = base - float(gs @ _solve_coupling(gsl, gs))
    return max(val, 0.0)


def _unit_objective(s, w, family):
    """Objective phi(x) = optimal variance times cost, scale invariant in counts.

    Specializations: the coupling matrix is diagonal for mfmc and tridiagonal
    for mlmc, so the weight solve collapses to O(M) recurrences.  Scalar
    Python arithmetic on purpose: these closures run hundreds of thousands of
    times inside the expected-loss Monte Carlo loop and small-array numpy
    overhead dominates there.
    """
    m = w.size
    s00 = float(s[0, 0])
    sll = [[float(s[i, j]) for j in range(1, m)] for i in range(1, m)]
    s0l = [float(s[0, j]) for j in range(1, m)]
    sdiag = [sll[i][i] for i in range(m - 1)]
    w_list = [float(v) for v in w]
    wsum = sum(w_list)
    inf = math.inf

    if family == "mfmc":
        ratio = [s0l[i] * s0l[i] / sdiag[i] if sdiag[i] > 0.0 else 0.0 for i in range(m - 1)]

        def phi(x):
            try:
                n = []
                acc = 0.0
                for v in x:
                    acc += math.exp(v)
                    n.append(acc)
                if n[0] <= 0.0:
                    return inf
                v_opt = s00 / n[0]
                cost = 0.0
                for i in range(m):
                    cost += w_list[i] * n[i]
                    if i < m - 1:
                        v_opt -= (1.0 / n[i] - 1.0 / n[i + 1]) * ratio[i]
                if v_opt <= 0.0:
                    v_opt = 1e-300
                return v_opt * cost
            except (OverflowError, ZeroDivisionError):
                return inf

        return phi

    if family == "mlmc":
        level_cost = [w_list[i] + (w_list[i + 1] if i < m - 1 else 0.0) for i in range(m)]
        soff = [sll[i][i + 1] for i in range(m - 2)]

        def phi(x):
            try:
                n = []
                acc = 0.0
                for v in x:
                    acc += math.exp(v)
                    n.append(acc)
                if n[0] <= 0.0:
                    return inf
                k = m - 1
                diag = [(1.0 / n[i] + 1.0 / n[i + 1]) * sdiag[i] for i in range(k)]
                rhs0 = s0l[0] / n[0]
                if k == 1:
                    quad = rhs0 * rhs0 / diag[0]
                else:
                    off = [-soff[i] / n[i + 1] for i in range(k - 1)]
                    # Thomas forward sweep, rhs = (rhs0, 0, .., 0)
                    c_prev = off[0] / diag[0]
                    d_prev = rhs0 / diag[0]
                    cs = [c_prev]
                    ds = [d_prev]
                    for i in range(1, k):
                        denom = diag[i] - off[i - 1] * cs[i - 1]
                        if i < k - 1:
                            cs.append(off[i] / denom)
                        ds.append((-off[i - 1] * ds[i - 1]) / denom)
                    x_sol = ds[-1]
                    for i in range(k - 2, -1, -1):
                        x_sol = ds[i] - cs[i] * x_sol
                    quad = rhs0 * x_sol
                v_opt = s00 / n[0] - quad
                if v_opt <= 0.0:
                    v_opt = 1e-300
                cost = 0.0
                for i in range(m):
                    cost += level_cost[i] * n[i]
                return v_opt * cost
            except (OverflowError, ZeroDivisionError):
                return inf

        return phi

    def phi(x):  # acvis: dense (M-1) x (M-1) solve by Gaussian elimination
        try:
            n = [math.exp(v) for v in x]
            if n[0] <= 0.0:
                return inf
            k = m - 1
            a = [[sll[i][j] / n[0] for j in range(k)] for i in range(k)]
            for i in range(k):
                a[i][i] += sdiag[i] / n[i + 1]
            b = [s0l[j] / n[0] for j in range(k)]
            rhs = list(b)
            for col in range(k):
                piv = a[col][col]
                if piv == 0.0:
                    return inf
                for row in range(col + 1, k):
                    fac = a[row][col] / piv
                    if fac != 0.0:
                        for j in range(col, k):
                            a[row][j] -= fac * a[col][j]
                        rhs[row] -= fac * rhs[col]
            sol = [0.0] * k
            for row in range(k - 1, -1, -1):
                acc = rhs[row]
                for j in range(row + 1, k):
                    acc -= a[row][j] * sol[j]
                sol[row] = acc / a[row][row]
            quad = sum(b[i] * sol[i] for i in range(k))
            v_opt = s00 / n[0] - quad
            if v_opt <= 0.0:
                v_opt = 1e-300
            cost = n[0] * wsum
            for i in range(k):
                cost += w_list[i + 1] * n[i + 1]
            return v_opt * cost
        except (OverflowError, ZeroDivisionError):
            return inf

    return phi


def _nelder_mead(f, x0, step=0.4, xatol=1e-8, fatol=1e-10, maxfev=400):
    """Minimal deterministic Nelder-Mead; returns (x_best, f_best).

    List-based rather than array-based: the dimension is tiny (one per model)
    and this loop sits inside the expected-loss Monte Carlo, where numpy call
    overhead would dominate the actual arithmetic.
    """
    x0 = [float(v) for v in x0]
    n = len(x0)
    simplex = [list(x0)]
    for i in range(n):
        p = list(x0)
        p[i] += step
        simplex.append(p)
    fvals = [f(p) for p in simplex]
    nfev = n + 1
    while nfev < maxfev:
        order = sorted(range(n + 1), key=fvals.__getitem__)
        simplex = [simplex[i] for i in order]
        fvals = [fvals[i] for i in order]
        if fvals[-1] - fvals[0] <= fatol * (abs(fvals[0]) + 1e-300):
            best0 = simplex[0]
            spread = max(
                abs(simplex[j][d] - best0[d]) for j in range(1, n + 1) for d in range(n)
            )
            if spread <= xatol:
                break
        worst = simplex[-1]
        centroid = [
            sum(simplex[j][d] for j in range(n)) / n for d in range(n)
        ]
        xr = [2.0 * centroid[d] - worst[d] for d in range(n)]
        fr = f(xr)
        nfev += 1
        if fr < fvals[0]:
            xe = [3.0 * centroid[d] - 2.0 * worst[d] for d in range(n)]
            fe = f(xe)
            nfev += 1
            if fe < fr:
                simplex[-1], fvals[-1] = xe, fe
            else:
                simplex[-1], fvals[-1] = xr, fr
        elif fr < fvals[-2]:
            simplex[-1], fvals[-1] = xr, fr
        else:
            xc = [0.5 * (centroid[d] + worst[d]) for d in range(n)]
            fc = f(xc)
            nfev += 1
            if fc < fvals[-1]:
                simplex[-1], fvals[-1] = xc, fc
            else:
                best0 = simplex[0]
                for j in range(1, n + 1):
                    simplex[j] = [
                        0.5 * (best0[d] + simplex[j][d]) for d in range(n)
                    ]
                    fvals[j] = f(simplex[j])
                nfev += n
    best = min(range(n + 1), key=fvals.__getitem__)
    return simplex[best], fvals[best]


def _heuristic_start(s, w, family):
    """Square-root cost-variance seed in the optimizer's log parameterization."""
    m = w.size
    diag = np.maximum(np.diag(s), 1e-300)
    ratio = np.sqrt(diag / (w * diag[0]))
    counts = np.maximum(ratio / ratio[0], 1.0)
    if family == "acvis":
        return np.log(counts)
    counts = np.maximum.accumulate(counts)
    incr = np.concatenate(([counts[0]], np.maximum(np.diff(counts), 1e-3 * counts[0])))
    return np.log(incr)


def _unit_optimal_counts(
    s, w, family, n_starts=8, warm_starts=(), maxfev=400, xatol=1e-6, fatol=1e-9
):
    """Continuous unit-budget optimum: returns (counts at cost 1, variance at cost 1, x).

    With n_starts == 1, candidate starts (heuristic plus any warm starts) are
    ranked by objective value and a single local search runs from the best, so
    the result is never worse than any supplied start.
    """
    phi = _unit_objective(s, w, family)
    starts = [_heuristic_start(s, w, family)]
    for cand in warm_starts:
        cand = np.asarray(cand, dtype=float)
        if cand.size == w.size and np.all(np.isfinite(cand)):
            starts.append(cand)
    if n_starts <= 1:
        ranked = sorted(starts, key=phi)
        x, fx = _nelder_mead(phi, ranked[0], maxfev=maxfev, xatol=xatol, fatol=fatol)
        best_x, best_f = x, fx
    else:
        gen = np.random.default_rng(20240917)
        while len(starts) < n_starts:
            starts.append(starts[0] + gen.uniform(-1.5, 1.5, size=w.size))
        best_x, best_f = None, np.inf
        for x0 in starts:
            x, fx = _nelder_mead(
                phi, np.asarray(x0, dtype=float), maxfev=maxfev, xatol=xatol, fatol=fatol
            )
            if fx < best_f:
                best_x, best_f = x, fx
    counts = np.exp(best_x)
    if family in ("mfmc", "mlmc"):
        counts = np.cumsum(counts)
    cost = _family_cost(family, counts, w)
    return counts / cost, best_f, best_x


def min_family_budget(w, family):
    """Cost of the smallest admissible allocation (all counts one)."""
    ones = np.ones(w.size)
    return _family_cost(family, ones, w)


def _repair_to_budget(allocation, w, budget):
    """Decrement counts (largest group first) until the budget is met."""
    counts = allocation.counts.copy()
    family = allocation.family
    for _ in range(100000):
        if _family_cost(family, counts, np.asarray(w.w if isinstance(w, CostModel) else w)) <= budget + 1e-9:
            return SampleAllocation(family, counts)
        order = np.argsort(-counts, kind="stable")
        moved = False
        for idx in order:
            trial = counts.copy()
            trial[idx] -= 1.0
            if trial[idx] < 1.0:
                continue
            if family in ("mfmc", "mlmc") and np.any(np.diff(trial) < 0.0):
                continue
            counts = trial
            moved = True
            break
        if not moved:
            return None
    return None


def optimize_allocation(s, budget, w, families=FAMILIES, n_starts=8, warm_starts=None):
    """Best integer allocation within budget across the requested families.

    Returns (allocation, family, predicted_variance) where predicted variance
    uses the optimal weights for s at the rounded allocation.
    """
    s = np.asarray(s, dtype=float)
    cost = w if isinstance(w, CostModel) else CostModel(np.asarray(w, dtype=float))
    wv = cost.w
    m = wv.size
    if m == 1:
        n0 = math.floor(budget / wv[0])
        if n0 < 1:
            raise BudgetInfeasibleError(
                f"budget {budget:g} below one high-fidelity evaluation ({wv[0]:g})",
                min_budget=float(wv[0]),
            )
        alloc = SampleAllocation("acvis", np.array([float(n0)]))
        return alloc, "acvis", float(s[0, 0] / n0)

    best = None
    min_budget = min(min_family_budget(wv, fam) for fam in families)
    for family in families:
        if min_family_budget(wv, family) > budget:
            continue
        warm = (warm_starts or {}).get(family, ())
        unit_counts, _, _ = _unit_optimal_counts(s, wv, family, n_starts=n_starts, warm_starts=warm)
        cont = SampleAllocation(family, unit_counts * budget)
        alloc = cont.rounded_down()
        repaired = _repair_to_budget(alloc, cost, budget)
        if repaired is None:
            continue
        var = optimal_variance(s, repaired)
        if best is None or var < best[2]:
            best = (repaired, family, var)
    if best is None:
        raise BudgetInfeasibleError(
            f"budget {budget:g} cannot fund any allocation; minimum feasible is {min_budget:g}",
            min_budget=float(min_budget),
        )
    return best


def unit_optimal_variance(s, w, family, warm_starts=(), n_starts=1, maxfev=120):
    """Continuous-relaxation optimal variance at unit budget for one family.

    Variance at budget B is this value divided by B (exact scale invariance).
    Intended for the expected-loss inner loop; supply warm starts (previous
    solutions in log-increment coordinates) to cut iterations.  The returned
    objective value never exceeds the value at any warm start.
    """
    wv = w.w if isinstance(w, CostModel) else np.asarray(w, dtype=float)
    counts, fbest, xbest = _unit_optimal_counts(
        s, wv, family, n_starts=n_starts, warm_starts=tuple(warm_starts), maxfev=maxfev,
        xatol=1e-3, fatol=1e-7,
    )
    return counts, float(fbest), xbest


def mlmc_allocation(s, budget, w):
    """MLMC baseline: classic sqrt(cost-variance) level sizes, weights all -1."""
    s = np.asarray(s, dtype=float)
    cost = w if isinstance(w, CostModel) else CostModel(np.asarray(w, dtype=float))
    wv = cost.w
    m = wv.size
    if m == 1:
        alloc, _, _ = optimize_allocation(s, budget, cost)
        return EstimatorConfig(alpha=np.zeros(0), allocation=alloc)
    level_var = np.empty(m)
    for l in range(m - 1):
        level_var[l] = s[l, l] - 2.0 * s[l, l + 1] + s[l + 1, l + 1]
    level_var[m - 1] = s[m - 1, m - 1]
    level_var = np.maximum(level_var, 1e-300)
    level_cost = wv.copy()
    level_cost[:-1] += wv[1:]
    counts = budget * np.sqrt(level_var / level_cost) / np.sum(np.sqrt(level_var * level_cost))
    counts = np.maximum.accumulate(counts)
    alloc = SampleAllocation("mlmc", counts).rounded_down()
    repaired = _repair_to_budget(alloc, cost, budget)
    if repaired is None:
        raise BudgetInfeasibleError(
            f"budget {budget:g} below the minimal MLMC allocation "
            f"({min_family_budget(wv, 'mlmc'):g})",
            min_budget=float(min_family_budget(wv, "mlmc")),
        )
    return EstimatorConfig(alpha=-np.ones(m - 1), allocation=repaired)


def evaluate_acv(ensemble, zeta, rng):
    """Run the estimator: draw grouped inputs, evaluate models, combine.

    Returns (estimate, realized_cost).  The allocation must be integral.
    """
    alloc = zeta.allocation
    if not alloc.is_integral():
        raise ValueError("estimator execution needs integer sample counts")
    sizes, z0, zstar, zl = alloc.block_structure()
    sizes = np.round(sizes).astype(int)
    gen = rng.generator() if hasattr(rng, "generator") else rng

    needed = [set(z0)]
    for m in range(1, alloc.n_models):
        needed.append(set(zstar[m - 1]) | set(zl[m - 1]))
    draws = {}
    for b in range(sizes.size):
        if any(b in req for req in needed):
            draws[b] = ensemble.input_sampler(gen, int(sizes[b]))

    sums = {}
    evals = np.zeros(alloc.n_models)
    for m in range(alloc.n_models):
        for b in sorted(needed[m]):
            y = ensemble.evaluate(m, draws[b])
            sums[(m, b)] = float(np.sum(y))
            evals[m] += sizes[b]

    def group_mean(m, blocks):
        total = sum(sums[(m, b)] for b in blocks)
        count = sum(sizes[b] for b in blocks)
        return total / count

    estimate = group_mean(0, sorted(set(z0)))
    for m in range(1, alloc.n_models):
        delta = group_mean(m, sorted(set(zstar[m - 1]))) - group_mean(m, sorted(set(zl[m - 1])))
        estimate += zeta.alpha[m - 1] * delta
    realized_cost = float(ensemble.cost_model.w @ evals)
    return float(estimate), realized_cost
