"""Exact discrete optimal transport and duality verification.

Small linear programs over transport plans, solved exactly by a revised
simplex written here (no external solver):

  * wasserstein_p      balanced transport between two discrete distributions
  * worst_case_risk    max E_Q[loss] over grid-supported Q with W2(P, Q) <= rho
  * dual_value         the penalized dual  inf_lam { lam rho^2 + E_P[sup ...] }

Because the primal maximization and the dual minimization are computed by
different routes (simplex vertices vs a lambda grid), comparing them is a
genuine strong-duality check; the excess-risk sandwich and the neighborhood
bounds build on the same machinery.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DEFAULT_SUPPORT_CAP = 12
_TOL = 1e-9


@dataclass
class DiscreteDistribution:
    support: np.ndarray          # (n, d) points
    weights: np.ndarray          # (n,) probabilities
    max_support: int = DEFAULT_SUPPORT_CAP

    def __post_init__(self):
        self.support = np.atleast_2d(np.asarray(self.support, dtype=float))
        self.weights = np.asarray(self.weights, dtype=float)
        if len(self.support) != len(self.weights):
            raise ValueError("support and weights must have equal length")
        if len(self.support) > self.max_support:
            raise ValueError(f"support size {len(self.support)} exceeds cap {self.max_support}")
        if not np.all(np.isfinite(self.support)):
            raise ValueError("support contains non-finite points")
        if np.any(self.weights < -1e-12):
            raise ValueError("negative weight")
        if abs(self.weights.sum() - 1.0) > 1e-9:
            raise ValueError(f"weights sum to {self.weights.sum()}, expected 1")

    @property
    def dim(self) -> int:
        return self.support.shape[1]


def dirac(point) -> DiscreteDistribution:
    return DiscreteDistribution(np.atleast_2d(np.asarray(point, dtype=float)), np.array([1.0]))


def _pairwise_distances(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    diff = a[:, None, :] - b[None, :, :]
    return np.sqrt(np.sum(diff * diff, axis=2))


# -------------------------------------------------------------- the simplex
def _revised_simplex(c, A, b, basis, max_iter=50000):
    """Minimize c@x subject to Ax = b, x >= 0, from a starting feasible basis.

    Dantzig pricing with a permanent switch to Bland's rule after a stall, so
    degenerate instances cannot cycle.  Basis systems are re-solved densely;
    row counts here are tiny (<= support cap + grid marginals).
    """
    m, n = A.shape
    basis = list(basis)
    bland = False
    stall = 0
    for _ in range(max_iter):
        B = A[:, basis]
        xb = np.linalg.solve(B, b)
        y = np.linalg.solve(B.T, c[basis])
        reduced = c - y @ A
        reduced[basis] = 0.0
        if bland:
            eligible = np.flatnonzero(reduced < -_TOL)
            if eligible.size == 0:
                break
            enter = int(eligible[0])
        else:
            enter = int(np.argmin(reduced))
            if reduced[enter] >= -_TOL:
                break
        d = np.linalg.solve(B, A[:, enter])
        movable = d > _TOL
        if not movable.any():
            raise RuntimeError("transport LP is unbounded; malformed constraints")
        ratios = np.full(m, np.inf)
        ratios[movable] = xb[movable] / d[movable]
        t = ratios.min()
        ties = np.flatnonzero(ratios <= t + 1e-12)
        leave = int(min(ties, key=lambda r: basis[r]))
        basis[leave] = enter
        if t <= _TOL:
            stall += 1
            if stall > 2 * (m + 10):
                bland = True
        else:
            stall = 0
    else:
        raise RuntimeError("simplex iteration limit reached")
    x = np.zeros(n)
    x[basis] = np.linalg.solve(A[:, basis], b)
    return x, float(c @ x)


def _northwest_corner(p: np.ndarray, q: np.ndarray):
    """Initial spanning-tree basis for the balanced transport polytope."""
    m, n = len(p), len(q)
    cells = []
    pi, qj = p.copy(), q.copy()
    i = j = 0
    while True:
        cells.append((i, j))
        t = min(pi[i], qj[j])
        pi[i] -= t
        qj[j] -= t
        if i == m - 1 and j == n - 1:
            break
        if pi[i] <= _TOL and i < m - 1:
            i += 1
        elif j < n - 1:
            j += 1
        else:
            i += 1
    return cells


def solve_transport(cost: np.ndarray, p: np.ndarray, q: np.ndarray):
    """Exact minimum-cost coupling with marginals (p, q); returns (plan, value)."""
    m, n = cost.shape
    if abs(p.sum() - q.sum()) > 1e-9:
        raise ValueError("unbalanced marginals")
    # one marginal constraint is redundant; drop the last column's row
    rows = m + n - 1
    A = np.zeros((rows, m * n))
    for i in range(m):
        A[i, i * n:(i + 1) * n] = 1.0
    for j in range(n - 1):
        A[m + j, j::n] = 1.0
    b = np.concatenate([p, q[:-1]])
    basis = [i * n + j for i, j in _northwest_corner(p, q)]
    x, value = _revised_simplex(cost.reshape(-1).copy(), A, b, basis)
    return x.reshape(m, n), value


def wasserstein_p(P: DiscreteDistribution, Q: DiscreteDistribution, p: int = 2) -> float:
    """Order-p Wasserstein distance with Euclidean ground metric, p in {1, 2}."""
    if p not in (1, 2):
        raise ValueError(f"order must be 1 or 2, got {p}")
    if P.dim != Q.dim:
        raise ValueError(f"dimension mismatch: {P.dim} vs {Q.dim}")
    cost = _pairwise_distances(P.support, Q.support) ** p
    _, value = solve_transport(cost, P.weights, Q.weights)
    return float(max(value, 0.0) ** (1.0 / p))


# ------------------------------------------------- worst case over the ball
def _grid_costs(P: DiscreteDistribution, grid: np.ndarray) -> np.ndarray:
    grid = np.atleast_2d(np.asarray(grid, dtype=float))
    if grid.shape[1] != P.dim:
        raise ValueError(f"grid dimension {grid.shape[1]} does not match support dimension {P.dim}")
    return _pairwise_distances(P.support, grid) ** 2


def _loss_on_grid(loss_fn, grid: np.ndarray) -> np.ndarray:
    vals = np.asarray([float(loss_fn(g)) for g in np.atleast_2d(grid)], dtype=float)
    if not np.all(np.isfinite(vals)):
        raise ValueError("loss is non-finite on the grid")
    return vals


def worst_case_risk(P: DiscreteDistribution, loss_fn, radius: float, grid: np.ndarray):
    """Exact max of E_Q[loss] over Q on the grid with W2(P, Q) <= radius.

    Solved as an LP over transport plans: rows are P's atoms, columns grid
    points, with the quadratic-cost budget radius^2 as one extra constraint.
    Returns (value, plan).
    """
    if radius < 0:
        raise ValueError("radius must be nonnegative")
    grid = np.atleast_2d(np.asarray(grid, dtype=float))
    C = _grid_costs(P, grid)
    lvals = _loss_on_grid(loss_fn, grid)
    m, g = C.shape
    budget = radius**2
    nearest = C.argmin(axis=1)
    base_cost = float(P.weights @ C[np.arange(m), nearest])
    if base_cost > budget + 1e-12:
        raise ValueError(
            f"grid cannot represent any distribution inside the ball: minimal "
            f"transport cost {base_cost:.6g} exceeds budget {budget:.6g}")
    n_vars = m * g + 1  # plus the budget slack
    A = np.zeros((m + 1, n_vars))
    for i in range(m):
        A[i, i * g:(i + 1) * g] = 1.0
    A[m, :-1] = C.reshape(-1)
    A[m, -1] = 1.0
    b = np.concatenate([P.weights, [budget]])
    c = np.concatenate([-np.tile(lvals, m), [0.0]])
    basis = [i * g + int(nearest[i]) for i in range(m)] + [n_vars - 1]
    x, value = _revised_simplex(c, A, b, basis)
    return -value, x[:-1].reshape(m, g)


def default_lambda_grid() -> np.ndarray:
    return np.logspace(-3.0, 3.0, 64)


def dual_value(P: DiscreteDistribution, loss_fn, radius: float, grid: np.ndarray,
               lambda_grid: np.ndarray | None = None, refine: bool = True):
    """Penalized dual  min_lam { lam rho^2 + E_P[max_grid(loss - lam cost)] }.

    The candidate multipliers are a log grid, refined once around the coarse
    argmin.  Returns (value, lam_star).
    """
    C = _grid_costs(P, np.atleast_2d(np.asarray(grid, dtype=float)))
    lvals = _loss_on_grid(loss_fn, grid)
    lams = default_lambda_grid() if lambda_grid is None else np.asarray(lambda_grid, dtype=float)

    def evaluate(lam_set):
        vals = np.empty(len(lam_set))
        for k, lam in enumerate(lam_set):
            vals[k] = lam * radius**2 + P.weights @ np.max(lvals[None, :] - lam * C, axis=1)
        return vals

    vals = evaluate(lams)
    k = int(np.argmin(vals))
    best_val, best_lam = float(vals[k]), float(lams[k])
    if refine and len(lams) > 2:
        lo = lams[max(k - 1, 0)]
        hi = lams[min(k + 1, len(lams) - 1)]
        fine = np.geomspace(max(lo, 1e-12), hi, 64)
        fvals = evaluate(fine)
        kf = int(np.argmin(fvals))
        if fvals[kf] < best_val:
            best_val, best_lam = float(fvals[kf]), float(fine[kf])
    return best_val, best_lam


def sample_plans_in_ball(P: DiscreteDistribution, grid: np.ndarray, radius: float,
                         count: int, rng: np.random.Generator):
    """Random feasible transport plans (cost <= radius^2) from P onto the grid."""
    grid = np.atleast_2d(np.asarray(grid, dtype=float))
    C = _grid_costs(P, grid)
    m, g = C.shape
    nearest = C.argmin(axis=1)
    base_cost = float(P.weights @ C[np.arange(m), nearest])
    budget = radius**2
    if base_cost > budget + 1e-12:
        raise ValueError("ball too small for this grid")
    plans = []
    for _ in range(count):
        plan = np.zeros((m, g))
        plan[np.arange(m), nearest] = P.weights
        left = budget - base_cost
        for _move in range(4 * m + 8):
            i = int(rng.integers(m))
            j = int(rng.integers(g))
            sources = np.flatnonzero(plan[i] > 1e-12)
            src = int(rng.choice(sources))
            if src == j:
                continue
            extra = C[i, j] - C[i, src]
            cap = plan[i, src] if extra <= _TOL else min(plan[i, src], left / extra)
            amount = cap * rng.uniform()
            if amount <= 0:
                continue
            plan[i, src] -= amount
            plan[i, j] += amount
            left -= extra * amount
        plans.append(plan)
    return plans


# ------------------------------------------------------------ theory checks
@dataclass
class TheoryCheckReport:
    instance: str
    primal: float
    dual: float
    lam_star: float
    gap: float
    rel_gap: float
    lipschitz_term: float = 0.0      # 2 L rho
    dual_mismatch_term: float = 0.0  # |lam - lam*| rho^2
    sandwich_margin: float = 0.0     # slack left under the bound, as a fraction
    assertions: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.assertions.values())

    def row(self) -> str:
        flags = ";".join(f"{k}={'ok' if v else 'FAIL'}" for k, v in self.assertions.items())
        return (f"{self.instance},{self.primal:.6f},{self.dual:.6f},{self.gap:.2e},"
                f"{self.rel_gap:.2e},{flags}")


def estimate_grid_lipschitz(loss_fn, grid: np.ndarray, rng=None, n_pairs=20000) -> float:
    grid = np.atleast_2d(np.asarray(grid, dtype=float))
    vals = _loss_on_grid(loss_fn, grid)
    n = len(grid)
    rng = rng or np.random.default_rng(0)
    ii = rng.integers(0, n, size=n_pairs)
    jj = rng.integers(0, n, size=n_pairs)
    keep = ii != jj
    dist = np.linalg.norm(grid[ii[keep]] - grid[jj[keep]], axis=1)
    good = dist > 1e-12
    return float(np.max(np.abs(vals[ii[keep]][good] - vals[jj[keep]][good]) / dist[good]))


def check_lemma1(P: DiscreteDistribution, family, member: int, rho: float, lam: float,
                 grid: np.ndarray, lipschitz: float | None = None, n_plans: int = 25,
                 rng: np.random.Generator | None = None) -> TheoryCheckReport:
    """Excess-risk sandwich: surrogate and true excess risks differ by at most
    2 L rho + |lam - lam*| rho^2 for every distribution inside the ball.

    `family` is a list of loss callables; `member` indexes the one under test.
    Requires lam >= L / rho (the regime where the surrogate tracks the truth).
    """
    rng = rng or np.random.default_rng(0)
    grid = np.atleast_2d(np.asarray(grid, dtype=float))
    C = _grid_costs(P, grid)
    V = np.stack([_loss_on_grid(fn, grid) for fn in family])
    L = lipschitz if lipschitz is not None else estimate_grid_lipschitz(family[member], grid, rng)
    if rho <= 0:
        raise ValueError("rho must be positive for the sandwich check")
    if lam < L / rho - 1e-12:
        raise ValueError(f"hypothesis violated: lam={lam} is below L/rho={L / rho:.6g}")

    def surrogate(k):
        return lam * rho**2 + float(P.weights @ np.max(V[k][None, :] - lam * C, axis=1))

    surr = np.array([surrogate(k) for k in range(len(family))])
    surr_excess = surr[member] - surr.min()

    dual, lam_star = dual_value(P, family[member], rho, grid)
    primal, worst_plan = worst_case_risk(P, family[member], rho, grid)
    bound = 2 * L * rho + abs(lam - lam_star) * rho**2

    plans = sample_plans_in_ball(P, grid, rho, n_plans, rng)
    plans.append(worst_plan)
    identity = np.zeros_like(worst_plan)
    identity[np.arange(len(P.weights)), C.argmin(axis=1)] = P.weights
    plans.append(identity)

    fact1a_ok = True
    sandwich_ok = True
    worst_gap = 0.0
    for plan in plans:
        q = plan.sum(axis=0)
        true_risks = V @ q
        if np.any(surr < true_risks - 1e-9):
            fact1a_ok = False
        true_excess = true_risks[member] - true_risks.min()
        gap = abs(true_excess - surr_excess)
        worst_gap = max(worst_gap, gap)
        if gap > bound + 1e-12:
            sandwich_ok = False
    margin = (bound - worst_gap) / bound if bound > 0 else 0.0

    kr_ok = all(primal <= float(V[member] @ plan.sum(axis=0)) + 2 * L * rho + 1e-9
                for plan in plans)

    return TheoryCheckReport(
        instance=f"lemma-sandwich(member={member},rho={rho},lam={lam})",
        primal=primal, dual=dual, lam_star=lam_star,
        gap=abs(primal - dual), rel_gap=abs(primal - dual) / max(abs(primal), 1e-12),
        lipschitz_term=2 * L * rho, dual_mismatch_term=abs(lam - lam_star) * rho**2,
        sandwich_margin=margin,
        assertions={"hypothesis": True, "fact1a": fact1a_ok, "sandwich": sandwich_ok,
                    "neighborhood": kr_ok},
    )


# -------------------------------------------------------- bundled instances
@dataclass
class TheoryInstance:
    name: str
    P: DiscreteDistribution
    loss_fn: object
    radius: float
    grid: np.ndarray


def grid_1d(lo: float, hi: float, n: int) -> np.ndarray:
    return np.linspace(lo, hi, n)[:, None]


def grid_2d(lo: float, hi: float, n: int) -> np.ndarray:
    axis = np.linspace(lo, hi, n)
    xx, yy = np.meshgrid(axis, axis)
    return np.stack([xx.ravel(), yy.ravel()], axis=1)


def bundled_instances() -> list[TheoryInstance]:
    """The duality test bed: 1-D and 2-D discrete sources with assorted losses."""
    two = DiscreteDistribution(np.array([[-0.5], [0.5]]), np.array([0.5, 0.5]))
    skew = DiscreteDistribution(np.array([[-1.0], [1.0]]), np.array([0.25, 0.75]))
    tri = DiscreteDistribution(np.array([[-0.8], [0.0], [0.6]]), np.array([0.3, 0.4, 0.3]))
    d2_point = dirac([0.0, 0.0])
    d2_pair = DiscreteDistribution(np.array([[-0.5, 0.0], [0.5, 0.0]]), np.array([0.5, 0.5]))
    d2_tri = DiscreteDistribution(np.array([[-0.5, -0.3], [0.4, 0.1], [0.0, 0.5]]),
                                  np.array([0.4, 0.3, 0.3]))
    g1 = grid_1d(-1.0, 1.0, 401)
    g1w = grid_1d(-1.5, 1.5, 601)
    g2 = grid_2d(-1.0, 1.0, 41)
    return [
        TheoryInstance("dirac-linear", dirac([0.0]), lambda x: float(x[0]), 0.5, g1),
        TheoryInstance("pair-linear", two, lambda x: float(x[0]), 0.3, g1w),
        TheoryInstance("pair-steep", two, lambda x: 2.0 * float(x[0]), 0.3, g1w),
        TheoryInstance("pair-neg", two, lambda x: -float(x[0]), 0.3, g1w),
        TheoryInstance("skew-abs", skew, lambda x: abs(float(x[0])), 0.4, g1w),
        TheoryInstance("tri-quadratic", tri, lambda x: float(x[0]) ** 2, 0.25, g1w),
        TheoryInstance("pair-sine", two, lambda x: float(np.sin(2.0 * x[0])), 0.3, g1w),
        # zero radius: the grid must contain the support exactly
        TheoryInstance("tri-zero-radius", tri, lambda x: float(np.tanh(x[0])), 0.0,
                       np.array([[-0.8], [0.0], [0.6]])),
        TheoryInstance("pair-constant", two, lambda x: 1.25, 0.3, g1w),
        TheoryInstance("2d-dirac-sum", d2_point, lambda x: float(x[0] + x[1]), 0.5, g2),
        TheoryInstance("2d-pair-norm", d2_pair, lambda x: float(np.linalg.norm(x)), 0.3, g2),
        TheoryInstance("2d-tri-smooth", d2_tri, lambda x: float(np.tanh(x[0]) - 0.5 * x[1]), 0.2, g2),
    ]


def run_theory_suite(n_ball_samples: int = 100, seed: int = 0,
                     rel_tol: float = 0.02) -> list[TheoryCheckReport]:
    """Strong duality + dominance checks over every bundled instance."""
    rng = np.random.default_rng(seed)
    reports = []
    for inst in bundled_instances():
        primal, _ = worst_case_risk(inst.P, inst.loss_fn, inst.radius, inst.grid)
        dual, lam_star = dual_value(inst.P, inst.loss_fn, inst.radius, inst.grid)
        gap = abs(primal - dual)
        rel = gap / max(abs(primal), 1e-9)
        dominance_ok = True
        if inst.radius > 0:
            lvals = _loss_on_grid(inst.loss_fn, inst.grid)
            for plan in sample_plans_in_ball(inst.P, inst.grid, inst.radius, n_ball_samples, rng):
                if lvals @ plan.sum(axis=0) > dual + 1e-9:
                    dominance_ok = False
        reports.append(TheoryCheckReport(
            instance=inst.name, primal=primal, dual=dual, lam_star=lam_star,
            gap=gap, rel_gap=rel,
            assertions={"duality_gap": rel <= rel_tol or gap <= 1e-9,
                        "dual_dominates_ball": dominance_ok,
                        "dual_above_primal": dual >= primal - 1e-9},
        ))
    return reports
