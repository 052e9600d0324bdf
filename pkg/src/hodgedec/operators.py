"""Discrete operators on level-set domains: D, S, Laplacians, conversion.

All operators act on support-local vectors (dense reindexing per
`SupportSet.local_of_global`).  Differentials are plain restrictions of
the grid incidence matrices, so nilpotency is exact; Hodge stars are
diagonal with fractional-volume entries; Laplacians are assembled in the
manifestly symmetric product form

    L_k = D_k^T S_{k+1} D_k  +  S_k D_{k-1} S_{k-1}^{-1} D_{k-1}^T S_k

with a term dropped when its degree leaves [0, m].
"""

from dataclasses import dataclass, field as dataclass_field

import numpy as np
import scipy.sparse as sp

from .domain import EPSILON_REL, build_support, fractional_volume


def project_differential(incidence_matrix, support_k, support_k1):
    """Restrict the degree-k incidence matrix to same-kind supports."""
    if support_k.kind != support_k1.kind:
        raise ValueError("supports must share a kind")
    if support_k1.degree != support_k.degree + 1:
        raise ValueError("supports must have consecutive degrees")
    sub = incidence_matrix.tocsr()[support_k1.cells][:, support_k.cells]
    return sub.astype(np.float64).tocsr()


def hodge_star(fractions, support, kind, k, spacing, m):
    """Diagonal Hodge star with fractional-volume modification.

    normal:     entry = l^(m-k) / |sigma ∩ M|   (primal-side fractions)
    tangential: entry = |*sigma ∩ M| / l^k      (dual-side fractions)
    """
    expected_side = "primal" if kind == "normal" else "dual"
    if fractions.side != expected_side:
        raise ValueError(
            f"{kind} star needs {expected_side}-side fractions, "
            f"got {fractions.side}")
    if fractions.degree != k or support.degree != k:
        raise ValueError("degree mismatch between fractions and support")
    vols = fractions.clamped(spacing)[support.cells]
    if not (np.isfinite(vols).all() and (vols > 0).all()):
        raise RuntimeError("nonpositive fractional volume after clamping")
    if kind == "normal":
        diag = spacing ** (m - k) / vols
    elif kind == "tangential":
        diag = vols / spacing ** k
    else:
        raise ValueError(f"unknown star kind {kind!r}")
    return sp.diags(diag, format="csr")


def _inv_diag(S):
    return sp.diags(1.0 / S.diagonal(), format="csr")


def laplacian(D_km1, D_k, S_km1, S_k, S_kp1):
    """Hodge Laplacian at one degree; pass None for out-of-range terms."""
    n = S_k.shape[0]
    L = sp.csr_matrix((n, n))
    if D_k is not None and S_kp1 is not None:
        if D_k.shape != (S_kp1.shape[0], n):
            raise ValueError("dimension mismatch in the d-term")
        L = L + D_k.T @ S_kp1 @ D_k
    if D_km1 is not None and S_km1 is not None:
        if D_km1.shape != (n, S_km1.shape[0]):
            raise ValueError("dimension mismatch in the delta-term")
        L = L + S_k @ (D_km1 @ (_inv_diag(S_km1) @ (D_km1.T @ S_k)))
    return L.tocsr()


def graph_laplacian_extended(complex, extended0, tangential_edges,
                             normal_edges, normal0):
    """Unweighted graph Laplacian over the union of the 1-form supports.

    Columns run over the extended 0-support; rows are restricted to
    vertices of the normal 0-support (the interior grid points).
    """
    union = tangential_edges.included | normal_edges.included
    endpoints = complex.cell_vertex_ids(1)[union]
    rows, cols, vals = [], [], []
    for u, v in ((endpoints[:, 0], endpoints[:, 1]),
                 (endpoints[:, 1], endpoints[:, 0])):
        r = normal0.local_of_global[u]
        keep = r >= 0
        cu = extended0.local_of_global[u[keep]]
        cv = extended0.local_of_global[v[keep]]
        if (cu < 0).any() or (cv < 0).any():
            raise RuntimeError("support edge endpoint missing from extended0")
        r = r[keep]
        rows.extend([r, r])
        cols.extend([cu, cv])
        vals.extend([np.ones(len(r)), -np.ones(len(r))])
    return sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(normal0.count, extended0.count)).tocsr()


def whitney_axis_weights(complex, points, axis):
    """Sparse map from integrated edge values to one field component.

    Row p of the result reconstructs the `axis` component of the field at
    points[p] from a discrete 1-form on the full edge set: the 2^(m-1)
    edges of the containing cell along `axis`, divided by l to form
    averages, multilinearly interpolated in the transverse coordinates.
    """
    m = complex.dimension
    l = complex.spacing
    points = np.atleast_2d(np.asarray(points, dtype=float))
    origin = np.asarray(complex.origin)
    extent = (np.asarray(complex.vertex_counts) - 1) * l
    if ((points < origin - 1e-12 * l)
            | (points > origin + extent + 1e-12 * l)).any():
        raise ValueError("point outside the grid box")
    rel = (points - origin) / l
    cell = np.clip(np.floor(rel).astype(np.int64), 0,
                   np.asarray(complex.vertex_counts) - 2)
    frac = rel - cell
    trans = [a for a in range(m) if a != axis]
    rows, cols, vals = [], [], []
    npts = len(points)
    for corner in range(2 ** (m - 1)):
        idx = [cell[:, a] for a in range(m)]
        w = np.full(npts, 1.0 / l)
        for pos, a in enumerate(trans):
            if corner >> pos & 1:
                idx[a] = cell[:, a] + 1
                w = w * frac[:, a]
            else:
                w = w * (1.0 - frac[:, a])
        ids = complex.cell_ids(1, (axis,), idx)
        rows.append(np.arange(npts))
        cols.append(ids)
        vals.append(w)
    return sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(npts, complex.cell_count(1))).tocsr()


def build_conversion(normal_edges, tangential_edges, S_n1, field, spacing):
    """Linear map taking normal-support 1-forms to tangential-support ones.

    Edges present in both supports pass through rescaled by
    l^(2-m) * S_n1 (exactly 1 for fully interior edges).  Tangential-only
    edges reconstruct the field at their inside incident cell centers via
    the Whitney map and then apply the tangential discretization rule.
    """
    cx = field.complex
    m = cx.dimension
    l = spacing
    n_t, n_n = tangential_edges.count, normal_edges.count
    s_diag = S_n1.diagonal()

    t_cells = tangential_edges.cells
    in_normal = normal_edges.local_of_global[t_cells]
    both = in_normal >= 0
    blocks = [sp.coo_matrix(
        (l ** (2 - m) * s_diag[in_normal[both]],
         (np.flatnonzero(both), in_normal[both])),
        shape=(n_t, n_n))]

    only = np.flatnonzero(~both)
    if len(only):
        full_to_normal = sp.csr_matrix(
            (np.ones(n_n), (normal_edges.cells, np.arange(n_n))),
            shape=(cx.cell_count(1), n_n))
        incident = cx.cell_incident_mcells(1)[t_cells[only]]
        inside = (incident >= 0) & (
            field.dual_values[np.clip(incident, 0, None)] < 0)
        centers = cx.cell_centers(m)
        axis_of = np.empty(cx.cell_count(1), dtype=np.int64)
        for subset, block, _ in cx.decode_cells(1):
            axis_of[block] = subset[0]
        axes = axis_of[t_cells[only]]
        for a in range(m):
            sel = np.flatnonzero(axes == a)
            if not len(sel):
                continue
            edges_rows, pts = [], []
            for r in sel:
                ids = incident[r][inside[r]]
                edges_rows.append(np.full(len(ids), r))
                pts.append(ids)
            edges_rows = np.concatenate(edges_rows)
            pts = np.concatenate(pts)
            counts = np.bincount(edges_rows, minlength=len(only))
            avg = sp.coo_matrix(
                (1.0 / counts[edges_rows], (only[edges_rows],
                                            np.arange(len(pts)))),
                shape=(n_t, len(pts)))
            W = whitney_axis_weights(cx, centers[pts], a)
            blocks.append(l * (avg @ W @ full_to_normal))
    out = blocks[0]
    for b in blocks[1:]:
        out = out + b
    return out.tocsr()


@dataclass
class OperatorSet:
    """Assembled sparse operators for one level-set field."""

    field: object
    normal_supports: list
    tangential_supports: list
    extended0: object
    D_n: list
    D_t: list
    S_n: list
    S_t: list
    L_n: list
    L_t: list
    L0_E: sp.csr_matrix
    conversion: sp.csr_matrix
    _delta_t_cache: dict = dataclass_field(default_factory=dict, repr=False)

    @property
    def dimension(self):
        return self.field.complex.dimension

    @property
    def spacing(self):
        return self.field.complex.spacing

    def delta_t(self, k):
        """Tangential codifferential S_{k-1}^{-1} D_{k-1}^T S_k."""
        if k not in self._delta_t_cache:
            if not 1 <= k <= self.dimension:
                raise ValueError(f"codifferential degree {k} out of range")
            self._delta_t_cache[k] = (
                _inv_diag(self.S_t[k - 1]) @ self.D_t[k - 1].T @ self.S_t[k]
            ).tocsr()
        return self._delta_t_cache[k]

    def norm_t(self, k, values):
        """Hodge L2 norm of a tangential k-form."""
        return float(np.sqrt(values @ (self.S_t[k] @ values)))


def build_operator_set(field):
    """Derive supports, fractions, and every operator for one field."""
    cx = field.complex
    m = cx.dimension
    l = cx.spacing
    normal = [build_support(field, "normal", k) for k in range(m + 1)]
    tangential = [build_support(field, "tangential", k) for k in range(m + 1)]
    extended0 = build_support(field, "extended0", 0)

    from .grid import incidence
    incs = [incidence(cx, k) for k in range(m)]
    D_n = [project_differential(incs[k], normal[k], normal[k + 1])
           for k in range(m)]
    D_t = [project_differential(incs[k], tangential[k], tangential[k + 1])
           for k in range(m)]

    S_n, S_t = [], []
    for k in range(m + 1):
        S_n.append(hodge_star(fractional_volume(field, k, "primal"),
                              normal[k], "normal", k, l, m))
        S_t.append(hodge_star(fractional_volume(field, k, "dual"),
                              tangential[k], "tangential", k, l, m))

    def build_laplacians(D, S):
        L = []
        for k in range(m + 1):
            L.append(laplacian(
                D[k - 1] if k >= 1 else None,
                D[k] if k < m else None,
                S[k - 1] if k >= 1 else None,
                S[k],
                S[k + 1] if k < m else None))
        return L

    L_n = build_laplacians(D_n, S_n)
    L_t = build_laplacians(D_t, S_t)
    L0_E = graph_laplacian_extended(cx, extended0, tangential[1], normal[1],
                                    normal[0])
    conversion = build_conversion(normal[1], tangential[1], S_n[1], field, l)
    return OperatorSet(field, normal, tangential, extended0, D_n, D_t,
                       S_n, S_t, L_n, L_t, L0_E, conversion)


def dump_operator(matrix, path, comment=""):
    """Write any assembled operator in Matrix Market coordinate format."""
    from scipy.io import mmwrite
    mmwrite(str(path), sp.coo_matrix(matrix), comment=comment)
