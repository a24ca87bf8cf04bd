"""Maximal functions, cones and boundary-limit experiments.

Balls live in the effective resistance metric.  The maximal function at a
vertex is the exact supremum over all resolvable ball averages, obtained by
sweeping the sorted distinct radii from that vertex.  Approach regions
("cones") over a point x are the sets R(x,y)^(d+1) < alpha t^2, optionally
truncated in time; they drive the nontangential-limit and barrier
experiments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import ResistanceMetric, VertexGraph
from .kernels import KernelEvaluator


def _ball_average_max(order_r, cum_mass, cum_num):
    """Max prefix ratio over prefixes that end at a strict radius increase."""
    n = order_r.size
    ends = np.flatnonzero(np.diff(order_r) > 0.0)
    ends = np.append(ends, n - 1)
    return float(np.max(cum_num[ends] / cum_mass[ends]))


def maximal_function(metric: ResistanceMetric, f: np.ndarray) -> np.ndarray:
    """Hardy-Littlewood maximal function of f over resistance balls.

    Mf(x) = sup over radii of the ball average of |f| d(mu); the supremum is
    attained on the finite family of balls realizable at this level, all of
    which are scanned.
    """
    graph = metric.graph
    f = np.asarray(f, dtype=float)
    mass = graph.vertex_mass
    weighted = mass * np.abs(f)
    R = metric.matrix()
    out = np.empty(graph.n_vertices)
    for x in range(graph.n_vertices):
        order = np.argsort(R[x], kind="stable")
        rs = R[x][order]
        out[x] = _ball_average_max(rs, np.cumsum(mass[order]), np.cumsum(weighted[order]))
    return out


def maximal_measure(metric: ResistanceMetric, atoms) -> np.ndarray:
    """Maximal function of a finite atomic measure (vertex, weight) list."""
    graph = metric.graph
    mass = graph.vertex_mass
    atom_vec = np.zeros(graph.n_vertices)
    for vertex, weight in atoms:
        atom_vec[int(vertex)] += abs(float(weight))
    R = metric.matrix()
    out = np.empty(graph.n_vertices)
    for x in range(graph.n_vertices):
        order = np.argsort(R[x], kind="stable")
        rs = R[x][order]
        out[x] = _ball_average_max(rs, np.cumsum(mass[order]), np.cumsum(atom_vec[order]))
    return out


@dataclass
class WeakTypeReport:
    constant: float
    per_alpha: list[tuple[float, float]]
    l2_ratio: float


def weak11_check(metric: ResistanceMetric, f: np.ndarray, alpha_grid) -> WeakTypeReport:
    """Empirical weak-(1,1) constant alpha * mu{Mf > alpha} / ||f||_1.

    Also records the L^2 operator ratio ||Mf||_2 / ||f||_2 as a boundedness
    spot check.
    """
    graph = metric.graph
    f = np.asarray(f, dtype=float)
    mass = graph.vertex_mass
    norm1 = float(np.sum(mass * np.abs(f)))
    if norm1 <= 0.0:
        raise ValueError("f must not vanish identically")
    mf = maximal_function(metric, f)
    rows = []
    best = 0.0
    for alpha in alpha_grid:
        meas = float(mass[mf > alpha].sum())
        ratio = alpha * meas / norm1
        rows.append((float(alpha), ratio))
        best = max(best, ratio)
    norm2 = math.sqrt(float(np.sum(mass * f * f)))
    mf2 = math.sqrt(float(np.sum(mass * mf * mf)))
    return WeakTypeReport(constant=best, per_alpha=rows, l2_ratio=mf2 / norm2)


@dataclass(frozen=True)
class Cone:
    """Approach region over a vertex: R(x,y)^(d+1) < aperture * t^2, 0 < t < height."""

    apex: int
    aperture: float
    height: float = math.inf

    def members(self, r_row: np.ndarray, d: float, t: float) -> np.ndarray:
        if not 0.0 < t < self.height:
            return np.empty(0, dtype=int)
        return np.flatnonzero(r_row ** (d + 1.0) < self.aperture * t * t)

    def contains(self, r_from_apex: float, d: float, t: float) -> bool:
        return 0.0 < t < self.height and r_from_apex ** (d + 1.0) < self.aperture * t * t


@dataclass
class ConeSupReport:
    sup: float
    n_members: int
    ratio: float | None


def cone_sup(field, cone: Cone, metric: ResistanceMetric, mf_at_apex: float | None = None) -> ConeSupReport:
    """Sup of |u| over the sampled cone, optionally relative to Mf(apex)."""
    d = metric.graph.structure.dim
    r_row = metric.from_vertex(cone.apex)
    sup = -math.inf
    count = 0
    for ti, t in enumerate(field.t_grid):
        ids = cone.members(r_row, d, float(t))
        if ids.size:
            sup = max(sup, float(np.abs(field.values[ti, ids]).max()))
            count += ids.size
    if count == 0:
        raise ValueError("cone contains no sampled points at this level")
    ratio = None if mf_at_apex is None else sup / mf_at_apex
    return ConeSupReport(sup=sup, n_members=count, ratio=ratio)


def nontangential_error(
    ev: KernelEvaluator,
    f,
    x: int,
    cone: Cone,
    t_ladder,
    metric: ResistanceMetric,
) -> tuple[np.ndarray, np.ndarray]:
    """e(t) = sup over cone members at times s <= t of |u(s,y) - f(x)|.

    Returns (ascending times, errors).  The apex must avoid the boundary set
    under the Dirichlet condition, where the limit f(x) is unattainable.
    """
    graph = ev.graph
    if ev.bc == "dirichlet" and int(x) in set(int(b) for b in graph.boundary_ids):
        raise ValueError("Dirichlet nontangential limits exclude boundary points")
    f = np.asarray(f, dtype=float)
    target = float(f[x])
    d = graph.structure.dim
    r_row = metric.from_vertex(cone.apex)
    ts = np.sort(np.asarray(list(t_ladder), dtype=float))
    errs = np.empty(ts.size)
    running = 0.0
    any_member = False
    for i, t in enumerate(ts):
        ids = cone.members(r_row, d, float(t))
        if ids.size:
            any_member = True
            u = ev.poisson_integral(f, float(t))
            running = max(running, float(np.abs(u[ids] - target).max()))
        errs[i] = running
    if not any_member:
        raise ValueError("cone contains no sampled points on the ladder")
    return ts, errs


def shifted_kernel_constant(
    ev: KernelEvaluator, metric: ResistanceMetric, x: int, cone: Cone, t_grid
) -> float:
    """Empirical C with P(t,y,z) <= C min{t^(-2d/(d+1)), t/R(x,z)^((3d+1)/2)}
    over sampled cone members (t, y) and targets z."""
    d = ev.d
    r_row = metric.from_vertex(cone.apex)
    R = metric.matrix()
    best = 0.0
    for t in t_grid:
        members = cone.members(r_row, d, float(t))
        if members.size == 0:
            continue
        branch1 = float(t) ** (-2.0 * d / (d + 1.0))
        P = ev.poisson_matrix(float(t))
        for y in members:
            for z in range(ev.graph.n_vertices):
                rxz = R[x, z]
                if rxz <= 0.0:
                    bound = branch1
                else:
                    bound = min(branch1, float(t) / rxz ** ((3.0 * d + 1.0) / 2.0))
                if P[y, z] > 0.0:
                    best = max(best, P[y, z] / bound)
    return best


def ball_mass_lower(
    ev: KernelEvaluator,
    metric: ResistanceMetric,
    x: int,
    alpha: float,
    t_ladder,
) -> np.ndarray:
    """Integral of P^N(t,x,.) over the ball of radius (alpha t^2)^(1/(d+1)).

    Raises if some requested ball collapses to the apex alone, meaning the
    radius fell below the level resolution.
    """
    graph = ev.graph
    d = graph.structure.dim
    r_row = metric.from_vertex(x)
    ts = np.asarray(list(t_ladder), dtype=float)
    out = np.empty(ts.size)
    for i, t in enumerate(ts):
        radius = (alpha * t * t) ** (1.0 / (d + 1.0))
        ids = np.flatnonzero(r_row < radius)
        if ids.size <= 1:
            raise ValueError(f"ball of radius {radius:.3e} is below the level resolution")
        row = ev.poisson_row(float(t), x)
        out[i] = float(np.sum(graph.vertex_mass[ids] * row[ids]))
    return out


def alpha_scaling_fit(alphas, minima) -> tuple[float, np.ndarray]:
    """Fit minima ~ c * sqrt(alpha); returns c and the per-alpha ratios."""
    alphas = np.asarray(list(alphas), dtype=float)
    minima = np.asarray(list(minima), dtype=float)
    ratios = minima / np.sqrt(alphas)
    c = float(np.exp(np.mean(np.log(ratios))))
    return c, minima / (c * np.sqrt(alphas))


@dataclass
class BoundarySet:
    """A union of level-k cells with its vertex indicator at graph level."""

    graph: VertexGraph
    words: list[tuple[int, ...]]
    cell_ids: np.ndarray = field(init=False)
    vertex_indicator: np.ndarray = field(init=False)
    measure: float = field(init=False)

    def __post_init__(self):
        graph = self.graph
        prefixes = {tuple(w) for w in self.words}
        lengths = {len(w) for w in prefixes}
        member = np.zeros(graph.n_cells, dtype=bool)
        for c, w in enumerate(graph.words):
            if any(w[:k] in prefixes for k in lengths):
                member[c] = True
        self.cell_ids = np.flatnonzero(member)
        ind = np.zeros(graph.n_vertices, dtype=bool)
        ind[graph.cells[self.cell_ids].ravel()] = True
        self.vertex_indicator = ind
        self.measure = float(graph.cell_measures[self.cell_ids].sum())

    def complement_weights(self) -> np.ndarray:
        """Lumped weights of the measure restricted to the complement cells."""
        graph = self.graph
        weights = np.zeros(graph.n_vertices)
        outside = np.setdiff1d(np.arange(graph.n_cells), self.cell_ids)
        nB = graph.structure.n_boundary
        np.add.at(weights, graph.cells[outside].ravel(), np.repeat(graph.cell_measures[outside] / nB, nB))
        return weights


@dataclass
class BarrierResult:
    t_grid: np.ndarray
    values: np.ndarray
    boundary_min: float
    n_boundary_samples: int
    decay: dict[int, np.ndarray]
    proxies: list[int]


def barrier(
    ev: KernelEvaluator,
    E: BoundarySet,
    alpha: float,
    t_grid,
    metric: ResistanceMetric,
    eta: float = 0.05,
    n_proxies: int = 3,
) -> BarrierResult:
    """Neumann barrier w(t,x) = P_t[chi_complement](x) + t with diagnostics.

    The lateral boundary of Omega = union of unit-truncated cones over E is
    sampled as the shell where min-over-E distance satisfies
    R^(d+1)/t^2 in [alpha(1-eta), alpha(1+eta)], plus the t = 1 cap; the
    report carries the minimum of w over those samples.  Interior proxies
    (deepest vertices of E) get a nontangential decay ladder of w.
    """
    if ev.bc != "neumann":
        raise ValueError("barrier construction uses the Neumann kernel")
    if E.measure >= 1.0:
        raise ValueError("E must have measure strictly below 1")
    graph = ev.graph
    d = graph.structure.dim
    ts = np.sort(np.asarray(list(t_grid), dtype=float))

    comp = E.complement_weights()
    atoms = [(v, comp[v]) for v in np.flatnonzero(comp > 0.0)]
    coeffs = ev.coefficients(atoms)
    values = np.empty((ts.size, graph.n_vertices))
    for i, t in enumerate(ts):
        values[i] = ev.vectors @ (np.exp(-ev.sqrt_lam * t) * coeffs) + t

    if E.measure == 0.0:
        # Degenerate barrier: the smoothing of the full measure is the
        # Neumann mass, so w = 1 + t with no lateral boundary to sample.
        return BarrierResult(
            t_grid=ts,
            values=values,
            boundary_min=math.inf,
            n_boundary_samples=0,
            decay={},
            proxies=[],
        )

    R = metric.matrix()
    e_verts = np.flatnonzero(E.vertex_indicator)
    dist_e = R[:, e_verts].min(axis=1)

    boundary_vals = []
    for i, t in enumerate(ts):
        ratio = dist_e ** (d + 1.0) / (t * t)
        shell = np.flatnonzero((ratio >= alpha * (1.0 - eta)) & (ratio <= alpha * (1.0 + eta)))
        boundary_vals.extend(values[i, shell])
    # t = 1 cap over the open region
    cap_members = np.flatnonzero(dist_e ** (d + 1.0) < alpha)
    if 1.0 >= ts[0]:
        cap_vals = ev.vectors @ (np.exp(-ev.sqrt_lam * 1.0) * coeffs) + 1.0
        boundary_vals.extend(cap_vals[cap_members])
    if not boundary_vals:
        raise ValueError("no lateral boundary samples at this resolution")

    outside_verts = np.flatnonzero(~E.vertex_indicator)
    dist_comp = R[:, outside_verts].min(axis=1)
    interior = np.flatnonzero(E.vertex_indicator & (dist_comp > 0.0))
    if interior.size == 0:
        raise ValueError("E has no interior vertices at this level")
    order = interior[np.argsort(-dist_comp[interior])]
    proxies = [int(v) for v in order[:n_proxies]]
    decay = {}
    for v in proxies:
        cone = Cone(apex=v, aperture=alpha, height=1.0)
        running = 0.0
        errs = np.empty(ts.size)
        for i, t in enumerate(ts):
            ids = cone.members(R[v], d, float(t))
            if ids.size:
                running = max(running, float(np.abs(values[i, ids]).max()))
            errs[i] = running
        decay[v] = errs

    return BarrierResult(
        t_grid=ts,
        values=values,
        boundary_min=float(min(boundary_vals)),
        n_boundary_samples=len(boundary_vals),
        decay=decay,
        proxies=proxies,
    )


@dataclass
class CoverReport:
    delta: float
    height: float
    n_checked: int
    n_violations: int
    covered: bool


def cone_cover_check(
    metric: ResistanceMetric,
    E: BoundarySet,
    x: int,
    alpha: float,
    k: int,
    t_grid=None,
    height_override: float | None = None,
) -> CoverReport:
    """Finite check that the truncated cone over a density point of E is
    covered by unit cones of aperture 1/k over points of E.

    delta is the largest radius with B_delta(x) inside E's vertex set, capped
    at k^(-1/(d+1)); the truncation height follows the recipe
    h = (delta / (2 alpha^(1/(d+1))))^((d+1)/2).  Passing ``height_override``
    bypasses the recipe; with an oversized height the covering can genuinely
    fail, which is reported through the violation count rather than raised.
    """
    graph = metric.graph
    d = graph.structure.dim
    if not E.vertex_indicator[x]:
        raise ValueError("x is not inside E; no density-point proxy available")
    R = metric.matrix()
    outside = np.flatnonzero(~E.vertex_indicator)
    if outside.size == 0:
        delta = metric.diameter()
    else:
        delta = float(R[x, outside].min())
    if delta <= 0.0:
        raise ValueError("x touches the complement; no density-point proxy available")
    delta = min(delta, k ** (-1.0 / (d + 1.0)))
    h = (delta / (2.0 * alpha ** (1.0 / (d + 1.0)))) ** ((d + 1.0) / 2.0)
    if height_override is not None:
        h = float(height_override)

    e_verts = np.flatnonzero(E.vertex_indicator)
    dist_e = R[:, e_verts].min(axis=1)

    if t_grid is None:
        t_grid = np.geomspace(h / 64.0, h * 0.999, 12)
    checked = violations = 0
    for t in t_grid:
        if not 0.0 < t < min(h, 1.0):
            continue
        members = np.flatnonzero(R[x] ** (d + 1.0) < alpha * t * t)
        for y in members:
            checked += 1
            if not dist_e[y] ** (d + 1.0) < t * t / k:
                violations += 1
    return CoverReport(
        delta=delta,
        height=float(h),
        n_checked=checked,
        n_violations=violations,
        covered=checked > 0 and violations == 0,
    )


def export_maximal_csv(path, mf: np.ndarray) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x_id", "Mf"])
        for x, v in enumerate(mf):
            writer.writerow([x, repr(float(v))])


def export_cone_csv(path, field, cone: Cone, metric: ResistanceMetric) -> None:
    """Table of (t, y_id, in_cone, u) over the field's grid and vertex set."""
    import csv

    d = metric.graph.structure.dim
    row = metric.from_vertex(cone.apex)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "y_id", "in_cone", "u"])
        for ti, t in enumerate(field.t_grid):
            members = set(cone.members(row, d, float(t)).tolist())
            for y in range(row.size):
                writer.writerow(
                    [repr(float(t)), y, int(y in members), repr(float(field.values[ti, y]))]
                )


def barrier_report(result: BarrierResult) -> dict:
    """JSON-ready barrier diagnostics."""
    return {
        "min_boundary_value": result.boundary_min,
        "n_boundary_samples": result.n_boundary_samples,
        "decay_ladder": {
            str(v): [float(e) for e in errs] for v, errs in result.decay.items()
        },
        "t_grid": [float(t) for t in result.t_grid],
        "proxies": result.proxies,
    }
