"""Level-m energy forms and Dirichlet/Neumann eigenbases.

The quadratic form is assembled cell by cell: each word w contributes the
boundary form -D scaled by 1/r_w onto its corner vertex ids.  Eigenpairs of
E phi = lambda M phi (M the diagonal lumped mass) are obtained by
symmetrizing with M^(-1/2) and running a dense symmetric solver; for the
Dirichlet condition the boundary rows and columns are removed first and the
eigenvectors are re-embedded with zeros on the boundary.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import VertexGraph

RESIDUAL_TOL = 1e-8


@dataclass
class EnergyForm:
    """Positive-semidefinite form f^T E f with kernel spanned by constants."""

    graph: VertexGraph
    matrix: np.ndarray

    @property
    def level(self) -> int:
        return self.graph.level

    def energy(self, f: np.ndarray) -> float:
        return float(f @ self.matrix @ f)


def energy_matrix(graph: VertexGraph) -> EnergyForm:
    """Assemble E = sum_w (1/r_w) * (-D) lifted onto cell w's vertices."""
    S = graph.structure
    nB = S.n_boundary
    block = -np.asarray(S.harmonic.D, dtype=float)
    E = np.zeros((graph.n_vertices, graph.n_vertices))
    r = S.harmonic.r
    inv_rw = 1.0 / np.array([S.word_resistance(w) for w in graph.words])
    for c in range(graph.n_cells):
        ids = graph.cells[c]
        E[np.ix_(ids, ids)] += inv_rw[c] * block
    E = 0.5 * (E + E.T)
    return EnergyForm(graph=graph, matrix=E)


def harmonic_extension(form: EnergyForm, boundary_values: np.ndarray) -> np.ndarray:
    """Energy-minimizing extension of the given boundary values to V_m."""
    graph = form.graph
    bid = graph.boundary_ids
    interior = np.flatnonzero(graph.interior_mask())
    h = np.zeros(graph.n_vertices)
    h[bid] = boundary_values
    if interior.size:
        E = form.matrix
        rhs = -E[np.ix_(interior, bid)] @ np.asarray(boundary_values, dtype=float)
        h[interior] = np.linalg.solve(E[np.ix_(interior, interior)], rhs)
    return h


@dataclass
class EigenBasis:
    """Sorted eigenpairs of one boundary condition, mass-orthonormalized.

    ``vectors`` has one column per mode on the full vertex set; Dirichlet
    columns vanish on the boundary ids.  Normalization is
    sum_p M(p) phi_n(p) phi_k(p) = delta_nk.
    """

    bc: str
    graph: VertexGraph
    eigenvalues: np.ndarray
    vectors: np.ndarray
    mass: np.ndarray

    @property
    def n_modes(self) -> int:
        return self.eigenvalues.size

    @property
    def dim(self) -> float:
        return self.graph.structure.dim

    def window_indices(self, window: tuple[float, float] = (0.05, 0.25)) -> np.ndarray:
        """Mode indices in the stated fraction of the spectrum, skipping lambda = 0."""
        lo = max(int(np.floor(window[0] * self.n_modes)), 0)
        hi = max(int(np.ceil(window[1] * self.n_modes)), lo + 1)
        idx = np.arange(lo, min(hi, self.n_modes))
        return idx[self.eigenvalues[idx] > 0.0]

    def residuals(self, energy: np.ndarray) -> np.ndarray:
        """Rowwise max of |E phi - lambda M phi| over the solved rows.

        Dirichlet pairs solve the pencil on interior rows only; boundary rows
        carry the (generally nonzero) normal derivative and are excluded.
        """
        R = energy @ self.vectors - (self.mass[:, None] * self.vectors) * self.eigenvalues[None, :]
        if self.bc == "dirichlet":
            R = R[self.graph.interior_mask()]
        return np.abs(R).max(axis=0)

    def gram_deviation(self) -> float:
        G = self.vectors.T @ (self.mass[:, None] * self.vectors)
        return float(np.abs(G - np.eye(self.n_modes)).max())


def eigensystem(form: EnergyForm, bc: str) -> EigenBasis:
    """Solve E phi = lambda M phi for the requested boundary condition.

    Eigenvalues are ascending; each vector's sign is fixed so its largest
    magnitude component is positive; eigenvalues within roundoff of zero are
    clamped to exactly zero so downstream sqrt weights stay real.
    """
    if bc not in ("dirichlet", "neumann"):
        raise ValueError("bc must be 'dirichlet' or 'neumann'")
    graph = form.graph
    mass = graph.vertex_mass
    if np.any(mass <= 0.0):
        raise ValueError("vertex masses must be positive")
    if bc == "dirichlet":
        keep = np.flatnonzero(graph.interior_mask())
    else:
        keep = np.arange(graph.n_vertices)
    E = form.matrix[np.ix_(keep, keep)]
    m_half = np.sqrt(mass[keep])
    A = E / m_half[:, None] / m_half[None, :]
    A = 0.5 * (A + A.T)
    vals, vecs = np.linalg.eigh(A)
    order = np.argsort(vals)
    vals = vals[order]
    vecs = vecs[:, order]
    # Solver noise scales with the top of the spectrum; true kernel modes sit
    # many orders below any genuine eigenvalue.
    vals[np.abs(vals) <= 1e-11 * max(1.0, abs(vals[-1]))] = 0.0
    if vals[0] < 0.0:
        raise RuntimeError(f"negative eigenvalue {vals[0]!r} from a PSD pencil")

    phi = vecs / m_half[:, None]
    # sign convention: largest-magnitude component positive
    anchor = np.abs(phi).argmax(axis=0)
    signs = np.sign(phi[anchor, np.arange(phi.shape[1])])
    signs[signs == 0.0] = 1.0
    phi = phi * signs[None, :]

    full = np.zeros((graph.n_vertices, vals.size))
    full[keep] = phi
    basis = EigenBasis(bc=bc, graph=graph, eigenvalues=vals, vectors=full, mass=mass)

    resid = basis.residuals(form.matrix)
    bound = RESIDUAL_TOL * (1.0 + vals)
    if np.any(resid > bound):
        worst = int(np.argmax(resid - bound))
        raise RuntimeError(
            f"eigen residual {resid[worst]:.3e} at mode {worst} exceeds tolerance"
        )
    if bc == "dirichlet" and vals[0] <= 0.0:
        raise RuntimeError("Dirichlet spectrum must be strictly positive")
    return basis


def counting_function(basis: EigenBasis, x: float) -> int:
    """Number of eigenvalues <= x, multiplicity counted."""
    if x < 0.0:
        raise ValueError("threshold must be nonnegative")
    return int(np.searchsorted(basis.eigenvalues, x, side="right"))


@dataclass
class WeylFit:
    slope: float
    intercept: float
    max_residual: float
    n_points: int
    window: tuple[float, float]


def weyl_exponent(basis: EigenBasis, window: tuple[float, float] = (0.05, 0.25)) -> WeylFit:
    """Least-squares slope of log rho(lambda_n) against log lambda_n.

    Only the lower part of the discrete spectrum tracks the continuum, so the
    fit is restricted to the given index window.
    """
    idx = basis.window_indices(window)
    if idx.size < 10:
        raise ValueError("window selects fewer than 10 eigenvalues")
    lam = basis.eigenvalues[idx]
    rho = np.searchsorted(basis.eigenvalues, lam, side="right")
    X = np.log(lam)
    Y = np.log(rho.astype(float))
    A = np.vstack([X, np.ones_like(X)]).T
    coef, *_ = np.linalg.lstsq(A, Y, rcond=None)
    resid = np.abs(A @ coef - Y).max()
    return WeylFit(
        slope=float(coef[0]),
        intercept=float(coef[1]),
        max_residual=float(resid),
        n_points=int(idx.size),
        window=window,
    )


def eigen_growth_constants(
    basis: EigenBasis, window: tuple[float, float] = (0.05, 0.25)
) -> tuple[float, float]:
    """Window extremes of lambda_n / n**((d+1)/d)."""
    idx = basis.window_indices(window)
    if idx.size == 0:
        raise ValueError("empty window")
    d = basis.dim
    n = idx + 1  # 1-based mode index
    ratio = basis.eigenvalues[idx] / n ** ((d + 1.0) / d)
    return float(ratio.min()), float(ratio.max())


def supnorm_ratio(
    basis: EigenBasis, window: tuple[float, float] | None = None
) -> float:
    """Empirical C with sup|phi_n| <= C * lambda_n**(d/(2(d+1))).

    By default all modes with lambda > 0 enter (the lambda = 0 Neumann mode
    is excluded); pass a window to restrict to a spectral band.
    """
    if window is None:
        idx = np.flatnonzero(basis.eigenvalues > 0.0)
    else:
        idx = basis.window_indices(window)
    if idx.size == 0:
        raise ValueError("no modes with positive eigenvalue")
    d = basis.dim
    sup = np.abs(basis.vectors[:, idx]).max(axis=0)
    ratio = sup / basis.eigenvalues[idx] ** (d / (2.0 * (d + 1.0)))
    return float(ratio.max())


def export_spectrum_csv(path, bases: list[EigenBasis]) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["n", "lambda", "bc"])
        for basis in bases:
            for n, lam in enumerate(basis.eigenvalues, start=1):
                writer.writerow([n, repr(float(lam)), basis.bc])
