"""Vector-field discretization and the two 5-component decompositions.

A sampled vector field becomes a discrete 1-form on either edge support:
the normal form integrates the field along the inside part of each edge
(endpoint average times inside length), the tangential form averages the
field at the inside incident cell centers and rescales by the spacing.

`decompose_direct` mirrors the smooth formulas componentwise and is only
L2-orthogonal in the continuous limit; `decompose_orthogonal` projects
within the tangential representation so the five parts are orthogonal in
the discrete S_t[1] inner product up to solver precision.  Components are
reported in the fixed order

    normal_gradient, tangential_curl, normal_harmonic,
    tangential_harmonic, curly_gradient

as tangential-support 1-forms.
"""

from dataclasses import dataclass, field as dataclass_field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .linalg import (
    SolveError,
    SolverOptions,
    gram_schmidt_S,
    pin_kernel,
    smallest_eigs,
    solve_saddle,
    solve_spsd,
)
from .domain import fractional_volume
from .operators import whitney_axis_weights

COMPONENT_ORDER = (
    "normal_gradient",
    "tangential_curl",
    "normal_harmonic",
    "tangential_harmonic",
    "curly_gradient",
)


class TopologyError(RuntimeError):
    """Laplacian kernel dimension disagrees with the Betti oracle."""


@dataclass
class VectorFieldSamples:
    """Vector samples at primal grid points and at m-cell centers.

    Grid points outside M carry (implicit) zeros; the discretization
    rules only ever read samples at inside points.
    """

    complex: object
    primal: np.ndarray
    dual: np.ndarray

    def __post_init__(self):
        m = self.complex.dimension
        self.primal = np.asarray(self.primal, dtype=float)
        self.dual = np.asarray(self.dual, dtype=float)
        if self.primal.shape != (self.complex.cell_count(0), m):
            raise ValueError("primal samples have wrong shape")
        if self.dual.shape != (self.complex.cell_count(m), m):
            raise ValueError("dual samples have wrong shape")
        if not (np.isfinite(self.primal).all()
                and np.isfinite(self.dual).all()):
            raise ValueError("vector samples must be finite")

    @classmethod
    def from_callable(cls, complex, fn):
        m = complex.dimension
        return cls(complex, fn(complex.cell_centers(0)),
                   fn(complex.cell_centers(m)))

    @classmethod
    def from_primal(cls, complex, primal):
        """Dual samples by multilinear interpolation of the primal ones."""
        primal = np.asarray(primal, dtype=float)
        corners = complex.cell_vertex_ids(complex.dimension)
        return cls(complex, primal, primal[corners].mean(axis=1))


@dataclass
class DiscreteForm:
    """Degree-k cochain restricted to a named support."""

    degree: int
    support: object
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.support.count,):
            raise ValueError("value count does not match support")


@dataclass
class Decomposition:
    """Five tangential-support 1-form components with diagnostics."""

    mode: str
    components: dict
    potentials: dict
    gram: np.ndarray
    reconstruction_residual: float
    betti: tuple
    pins: dict
    solver_reports: dict = dataclass_field(default_factory=dict)

    def component_matrix(self):
        return np.column_stack([self.components[k] for k in COMPONENT_ORDER])


def _edge_axes(complex):
    axes = np.empty(complex.cell_count(1), dtype=np.int64)
    for subset, block, _ in complex.decode_cells(1):
        axes[block] = subset[0]
    return axes


def discretize_normal(samples, field, normal_edge_support):
    """De Rham map of a vector field onto the normal edge support.

    Per edge: the mean of the edge-direction component over the inside
    endpoints, times the inside length of the edge.
    """
    cx = field.complex
    if samples.complex is not cx and samples.complex != cx:
        raise ValueError("samples live on a different complex")
    if normal_edge_support.kind != "normal" or normal_edge_support.degree != 1:
        raise ValueError("support must be the normal edge support")
    edges = normal_edge_support.cells
    endpoints = cx.cell_vertex_ids(1)[edges]
    axes = _edge_axes(cx)[edges]
    comp = samples.primal[endpoints, axes[:, None]]
    inside = field.primal_values[endpoints] < 0
    counts = inside.sum(axis=1)
    mean = (comp * inside).sum(axis=1) / np.maximum(counts, 1)
    length = fractional_volume(field, 1, "primal").values[edges]
    return DiscreteForm(1, normal_edge_support,
                        np.where(counts > 0, mean * length, 0.0))


def discretize_tangential(samples, field, tangential_edge_support,
                          average="inside"):
    """Tangential 1-form: spacing times the mean of the edge-direction
    component over incident m-cell centers.

    average='inside' (the default) uses only centers inside M, which is
    the right rule when samples exist only inside (outside points carry
    zeros).  average='available' uses every in-grid incident center; for
    fields defined in a neighborhood of M this keeps the boundary-edge
    quadrature centered and roughly halves the boundary error order.
    """
    cx = field.complex
    if samples.complex is not cx and samples.complex != cx:
        raise ValueError("samples live on a different complex")
    if (tangential_edge_support.kind != "tangential"
            or tangential_edge_support.degree != 1):
        raise ValueError("support must be the tangential edge support")
    edges = tangential_edge_support.cells
    incident = cx.cell_incident_mcells(1)[edges]
    if average == "inside":
        use = (incident >= 0) & (
            field.dual_values[np.clip(incident, 0, None)] < 0)
    elif average == "available":
        use = incident >= 0
    else:
        raise ValueError(f"unknown averaging rule {average!r}")
    axes = _edge_axes(cx)[edges]
    comp = samples.dual[np.clip(incident, 0, None), axes[:, None]]
    counts = use.sum(axis=1)
    if (counts == 0).any():
        raise RuntimeError("tangential edge with no usable incident center")
    mean = (comp * use).sum(axis=1) / counts
    return DiscreteForm(1, tangential_edge_support, cx.spacing * mean)


def whitney_reconstruct(form, points):
    """Pointwise field from a discrete 1-form.

    Per axis, the edge averages (values over the spacing) of the
    containing cell are interpolated multilinearly in the transverse
    coordinates; edges missing from the support contribute zero.
    """
    if form.degree != 1:
        raise ValueError("Whitney reconstruction needs a 1-form")
    complex = form.support.complex
    points = np.atleast_2d(np.asarray(points, dtype=float))
    full = np.zeros(complex.cell_count(1))
    full[form.support.cells] = form.values
    out = np.empty((len(points), complex.dimension))
    for a in range(complex.dimension):
        W = whitney_axis_weights(complex, points, a)
        out[:, a] = W @ full
    return out


def _betti_for(field):
    from .homology import betti_numbers
    return betti_numbers(field)


def _tangential_pins(ops):
    """Lowest local-index tangential vertex per connected component."""
    ncomp, labels = connected_components(abs(ops.L_t[0]), directed=False)
    _, first = np.unique(labels, return_index=True)
    return np.sort(first), ncomp


def _extended_pins(ops):
    """One pin per connected component of the union-edge graph.

    Prefers the lowest tangential-support vertex of the component and
    falls back to its lowest extended-support vertex, so constants are
    removed even on components without tangential cells.
    """
    cx = ops.field.complex
    ext = ops.extended0
    union = (ops.tangential_supports[1].included
             | ops.normal_supports[1].included)
    endpoints = cx.cell_vertex_ids(1)[union]
    lu = ext.local_of_global[endpoints[:, 0]]
    lv = ext.local_of_global[endpoints[:, 1]]
    adj = sp.coo_matrix((np.ones(len(lu)), (lu, lv)),
                        shape=(ext.count, ext.count))
    ncomp, labels = connected_components(adj, directed=False)
    tangential = ops.tangential_supports[0].included[ext.cells]
    pins = []
    for c in range(ncomp):
        members = np.flatnonzero(labels == c)
        tmembers = members[tangential[members]]
        pins.append(tmembers[0] if len(tmembers) else members[0])
    return np.sort(np.asarray(pins, dtype=np.int64))


def _solve_scalar_potential(ops, rhs, pins, opts, reports, tag):
    """Pinned L_t[0] solve with the right-hand side gauge-fixed at pins."""
    L = pin_kernel(ops.L_t[0], pins)
    b = rhs.copy()
    b[pins] = 0.0
    method = "direct" if L.shape[0] <= opts.direct_limit else "cg"
    x, rep = solve_spsd(L, b, tol=opts.tol, method=method, options=opts)
    reports[tag] = rep
    return x

def _solve_curl_potential(ops, W_t, betti, opts, reports):
    """Augmented L_t[2] solve for the curl potential; returns delta B."""
    m = ops.dimension
    beta2 = betti[2] if m == 3 else 0
    L = ops.L_t[2]
    rhs = ops.S_t[2] @ (ops.D_t[1] @ W_t)
    if beta2 > 0:
        eig = smallest_eigs(L, ops.S_t[2], count=beta2 + 1,
                            kernel_threshold=opts.kernel_threshold,
                            seed=opts.seed)
        if eig.kernel_dimension != beta2:
            raise TopologyError(
                f"dim ker L_t[2] = {eig.kernel_dimension}, "
                f"Betti oracle says {beta2}")
        picked = []
        for i in range(beta2):
            order = np.argsort(-np.abs(eig.vectors[:, i]))
            picked.append(next(int(j) for j in order if j not in picked))
        L = pin_kernel(L, picked, mode="augment", alpha=opts.augment_alpha,
                       kernel_dimension=beta2)
        reports["B_t_augmented_indices"] = picked
    n = L.shape[0]
    method = ("direct" if (m == 2 and n <= opts.direct_limit)
              or (m == 3 and n <= 140000) else "cg")
    B_t, rep = solve_spsd(L, rhs, tol=opts.tol, method=method, options=opts)
    reports["B_t"] = rep
    return B_t, ops.delta_t(2) @ B_t


def _normal_harmonic_basis(ops, betti, opts, reports):
    """S_n[1]-orthonormal kernel basis of L_n[1] (count beta_{m-1})."""
    m = ops.dimension
    beta = betti[m - 1]
    if beta == 0:
        return np.zeros((ops.tangential_supports[1].count, 0)), None
    eig = smallest_eigs(ops.L_n[1], ops.S_n[1], count=beta + 1,
                        kernel_threshold=opts.kernel_threshold,
                        seed=opts.seed)
    if eig.kernel_dimension != beta:
        raise TopologyError(
            f"dim ker L_n[1] = {eig.kernel_dimension}, "
            f"Betti oracle says beta_(m-1) = {beta}")
    reports["normal_harmonic_eigs"] = eig.values
    return eig.vectors[:, :beta], eig


def gram_matrix(components, S_t1):
    """Pairwise S_t[1] inner products of the five components."""
    if isinstance(components, dict):
        M = np.column_stack([components[k] for k in COMPONENT_ORDER])
    else:
        M = np.asarray(components)
    return M.T @ (S_t1 @ M)


def _package(mode, ops, W_t, comps, potentials, betti, pins, reports):
    M = np.column_stack([comps[k] for k in COMPONENT_ORDER])
    total = M.sum(axis=1)
    wnorm = ops.norm_t(1, W_t)
    residual = (ops.norm_t(1, W_t - total) / wnorm) if wnorm > 0 else 0.0
    gram = gram_matrix(comps, ops.S_t[1])
    return Decomposition(mode, comps, potentials, gram, residual,
                         tuple(betti), pins, reports)


def decompose_direct(W_n, W_t, operators, betti=None, options=None):
    """Componentwise decomposition following the smooth-case formulas.

    Solves the normal scalar potential and tangential curl potential,
    projects onto both harmonic kernels, converts normal-support parts to
    the tangential support, and leaves the curly gradient as the final
    subtraction.  The parts are only orthogonal in the continuous limit.
    """
    ops = operators
    opts = options or SolverOptions()
    if betti is None:
        betti = _betti_for(ops.field)
    m = ops.dimension
    wn = W_n.values if isinstance(W_n, DiscreteForm) else np.asarray(W_n)
    wt = W_t.values if isinstance(W_t, DiscreteForm) else np.asarray(W_t)
    reports, potentials, pins = {}, {}, {}

    rhs = ops.D_n[0].T @ (ops.S_n[1] @ wn)
    n = ops.L_n[0].shape[0]
    method = "direct" if n <= opts.direct_limit else "cg"
    A_n, rep = solve_spsd(ops.L_n[0], rhs, tol=opts.tol, method=method,
                          options=opts)
    reports["A_n"] = rep
    potentials["A_n"] = A_n

    B_t, curl = _solve_curl_potential(ops, wt, betti, opts, reports)
    potentials["B_t"] = B_t

    H_n, _ = _normal_harmonic_basis(ops, betti, opts, reports)
    N_n = H_n @ (H_n.T @ (ops.S_n[1] @ wn)) if H_n.shape[1] else \
        np.zeros(ops.normal_supports[1].count)

    beta1 = betti[1]
    if beta1 > 0:
        eig = smallest_eigs(ops.L_t[1], ops.S_t[1], count=beta1 + 1,
                            kernel_threshold=opts.kernel_threshold,
                            seed=opts.seed)
        if eig.kernel_dimension != beta1:
            raise TopologyError(
                f"dim ker L_t[1] = {eig.kernel_dimension}, "
                f"Betti oracle says beta_1 = {beta1}")
        H_t = eig.vectors[:, :beta1]
        T = H_t @ (H_t.T @ (ops.S_t[1] @ wt))
        potentials["tangential_harmonic_basis"] = H_t
    else:
        T = np.zeros(ops.tangential_supports[1].count)

    G = ops.conversion @ (ops.D_n[0] @ A_n)
    N = ops.conversion @ N_n
    comps = {
        "normal_gradient": G,
        "tangential_curl": curl,
        "normal_harmonic": N,
        "tangential_harmonic": T,
        "curly_gradient": wt - G - curl - N - T,
    }
    potentials["normal_harmonic_basis"] = H_n
    return _package("direct", ops, wt, comps, potentials, betti, pins,
                    reports)


def decompose_orthogonal(W_t, W_n=None, operators=None, betti=None,
                         options=None):
    """Discretely orthogonal decomposition on the tangential support.

    Steps: (1) pinned L_t[0] and augmented L_t[2] solves split off the
    gradient part, the curl part, and the tangential harmonic remainder;
    (2) the gradient part is projected onto the exact-harmonic subspace
    {D_t[0] P A : L_0E A = 0} through the constrained minimization;
    (3) an orthonormal basis built from the converted normal-harmonic
    kernel splits that projection into the normal-harmonic component and
    the curly gradient.  Off-diagonal inner products vanish to solver
    precision.
    """
    ops = operators
    if ops is None:
        raise ValueError("operators are required")
    opts = options or SolverOptions()
    if betti is None:
        betti = _betti_for(ops.field)
    m = ops.dimension
    wt = W_t.values if isinstance(W_t, DiscreteForm) else np.asarray(W_t)
    reports, potentials, pins = {}, {}, {}

    # step 1: tangential 3-term split
    tpins, _ = _tangential_pins(ops)
    pins["tangential_potential"] = tpins
    rhs = ops.D_t[0].T @ (ops.S_t[1] @ wt)
    A_t = _solve_scalar_potential(ops, rhs, tpins, opts, reports, "A_t")
    potentials["A_t"] = A_t
    grad = ops.D_t[0] @ A_t

    B_t, curl = _solve_curl_potential(ops, wt, betti, opts, reports)
    potentials["B_t"] = B_t

    # step 2: harmonic remainder
    T = wt - grad - curl
    if betti[1] == 0:
        T = np.zeros_like(T)

    # step 3/4: exact-harmonic projection of the gradient part
    ext = ops.extended0
    P_ET = (ops.tangential_supports[0].projection()
            @ ext.projection().T).tocsr()
    G_ext = (ops.D_t[0] @ P_ET).tocsr()
    Q = (G_ext.T @ ops.S_t[1] @ G_ext).tocsr()
    epins = _extended_pins(ops)
    pins["extended_potential"] = epins

    beta_h = betti[m - 1]
    H_normal, _ = _normal_harmonic_basis(ops, betti, opts, reports)
    targets = [grad]
    if beta_h > 0:
        for i in range(beta_h):
            conv = ops.conversion @ H_normal[:, i]
            rhs_i = ops.D_t[0].T @ (ops.S_t[1] @ conv)
            Abar = _solve_scalar_potential(ops, rhs_i, tpins, opts, reports,
                                           f"Abar_{i}")
            targets.append(ops.D_t[0] @ Abar)
    rhs_block = np.column_stack(
        [G_ext.T @ (ops.S_t[1] @ t) for t in targets])
    A_block, _, rep = solve_saddle(Q, ops.L0_E, rhs_block, pins=epins,
                                   tol=1e-9)
    reports["harmonic_projection"] = rep
    A_ext = A_block[:, 0]
    potentials["A_extended"] = A_ext
    h_grad = G_ext @ A_ext

    if beta_h > 0:
        projected = G_ext @ A_block[:, 1:]
        H_tilde, dropped = gram_schmidt_S(projected, ops.S_t[1])
        if H_tilde.shape[1] != beta_h:
            raise TopologyError(
                "exact-harmonic projections of the normal-harmonic basis "
                f"lost rank ({H_tilde.shape[1]} of {beta_h}); dropped "
                f"{dropped}")
        N = H_tilde @ (H_tilde.T @ (ops.S_t[1] @ h_grad))
        potentials["exact_harmonic_basis"] = H_tilde
    else:
        N = np.zeros_like(h_grad)
        potentials["exact_harmonic_basis"] = np.zeros((len(h_grad), 0))

    comps = {
        "normal_gradient": grad - h_grad,
        "tangential_curl": curl,
        "normal_harmonic": N,
        "tangential_harmonic": T,
        "curly_gradient": h_grad - N,
    }
    potentials["normal_harmonic_basis"] = H_normal
    return _package("orthogonal", ops, wt, comps, potentials, betti, pins,
                    reports)
