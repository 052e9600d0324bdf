"""Level-set domains on Cartesian grids: supports and fractional volumes.

A compact domain M = {x : rho(x) <= 0} is represented by samples of rho
at primal vertices and at dual vertices (primal m-cell centers).  Samples
are perturbed away from zero so that "inside" is unambiguously rho < 0.

Two cell supports are derived per degree k:

* normal support: k-cells with at least one primal vertex inside M,
* tangential support: k-cells with at least one incident m-cell center
  (a dual vertex of the cell's dual cell) inside M,

plus the extended 0-support: vertices incident to any edge of either
1-form support.  The tangential support is closed under taking faces;
the normal support is closed under taking cofaces.

Fractional volumes |cell ∩ M| feed the modified Hodge stars: exact for
vertices and edges (linear interpolation), polygon clipping with linear
edge roots for squares (saddles split by the center-interpolated sign),
and midpoint subsampling of the trilinear interpolant for cubes.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .grid import CartesianComplex

#: relative perturbation floor for level-set samples and volume fractions
EPSILON_REL = 1e-5

#: subsamples per axis for cube volume fractions
CUBE_SUBSAMPLES = 8


@dataclass
class LevelSetField:
    """Perturbed level-set samples on the primal and dual grids."""

    complex: CartesianComplex
    primal_values: np.ndarray
    dual_values: np.ndarray
    epsilon: float

    @property
    def spacing(self):
        return self.complex.spacing


@dataclass
class SupportSet:
    """Cells retained for one boundary condition at one degree."""

    kind: str
    degree: int
    included: np.ndarray
    cells: np.ndarray
    local_of_global: np.ndarray
    complex: CartesianComplex = None

    @property
    def count(self):
        return len(self.cells)

    def projection(self):
        """0-1 matrix mapping full-complex k-chains to support chains."""
        n = len(self.included)
        return sp.csr_matrix(
            (np.ones(self.count), (np.arange(self.count), self.cells)),
            shape=(self.count, n))


@dataclass
class FractionalVolumes:
    """k-volumes of cell intersections with M, in units of length^power.

    side='primal': values[i] = |sigma_i ∩ M| for primal k-cells (power k).
    side='dual':   values[i] = |*sigma_i ∩ M| for the dual cells of primal
    k-cells (power m-k); 0 where the dual cell leaves the staggered grid.
    """

    side: str
    degree: int
    power: int
    values: np.ndarray

    def clamped(self, spacing):
        """Values with the positivity floor applied (support-cell use)."""
        floor = EPSILON_REL * spacing ** self.power
        return np.maximum(self.values, floor)


def _perturb(values, eps):
    values = np.asarray(values, dtype=float).copy()
    if not np.isfinite(values).all():
        raise ValueError("level-set samples must be finite")
    small = np.abs(values) < eps
    values[small] = np.where(values[small] >= 0, eps, -eps)
    return values


def _interp_cell_centers(complex, vertex_values):
    """Multilinear interpolation at m-cell centers = mean of corner values."""
    corners = complex.cell_vertex_ids(complex.dimension)
    return vertex_values[corners].mean(axis=1)


def sample_levelset(complex, source, dual_source=None, epsilon=None):
    """Sample a level-set function on the primal and dual grids.

    `source` is either a callback mapping an (N, m) point array to N
    values, or an array of values at the primal vertices.  Callbacks are
    evaluated exactly at dual points too (unless `dual_source` overrides);
    array input gets dual values by multilinear interpolation.
    """
    eps = EPSILON_REL * complex.spacing if epsilon is None else float(epsilon)
    if callable(source):
        primal_raw = np.asarray(source(complex.cell_centers(0)), dtype=float)
        if primal_raw.shape != (complex.cell_count(0),):
            raise ValueError("level-set callback returned wrong shape")
    else:
        primal_raw = np.asarray(source, dtype=float)
        if primal_raw.shape != (complex.cell_count(0),):
            raise ValueError(
                f"expected {complex.cell_count(0)} primal samples, "
                f"got {primal_raw.shape}")
    dual_points = complex.cell_centers(complex.dimension)
    if dual_source is not None:
        dual_raw = np.asarray(dual_source(dual_points), dtype=float)
    elif callable(source):
        dual_raw = np.asarray(source(dual_points), dtype=float)
    else:
        dual_raw = _interp_cell_centers(complex, primal_raw)
    if dual_raw.shape != (complex.cell_count(complex.dimension),):
        raise ValueError("dual samples have wrong shape")
    return LevelSetField(complex, _perturb(primal_raw, eps),
                         _perturb(dual_raw, eps), eps)


def _support_from_mask(kind, degree, included, complex=None):
    cells = np.flatnonzero(included)
    local = np.full(len(included), -1, dtype=np.int64)
    local[cells] = np.arange(len(cells))
    return SupportSet(kind, degree, included, cells, local, complex)


def build_support(field, kind, k):
    """Derive the support set of degree k for one boundary condition."""
    cx = field.complex
    if kind == "normal":
        verts = cx.cell_vertex_ids(k)
        included = (field.primal_values[verts] < 0).any(axis=1)
    elif kind == "tangential":
        mcells = cx.cell_incident_mcells(k)
        valid = mcells >= 0
        vals = field.dual_values[np.clip(mcells, 0, None)]
        included = (valid & (vals < 0)).any(axis=1)
    elif kind == "extended0":
        if k != 0:
            raise ValueError("extended0 support exists only for degree 0")
        edge_union = (build_support(field, "normal", 1).included
                      | build_support(field, "tangential", 1).included)
        endpoints = cx.cell_vertex_ids(1)[edge_union]
        included = np.zeros(cx.cell_count(0), dtype=bool)
        included[endpoints.ravel()] = True
    else:
        raise ValueError(f"unknown support kind {kind!r}")
    return _support_from_mask(kind, k, included, cx)


# -- fractional volume kernels (unit cells, then scaled by l^k) ----------

def _edge_fractions(v):
    """Inside length fraction of unit segments with endpoint values v[:, 2]."""
    va, vb = v[:, 0], v[:, 1]
    out = np.zeros(len(v))
    both_in = (va < 0) & (vb < 0)
    out[both_in] = 1.0
    mixed = (va < 0) != (vb < 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = va / (va - vb)
    out[mixed & (va < 0)] = t[mixed & (va < 0)]
    out[mixed & (va >= 0)] = 1.0 - t[mixed & (va >= 0)]
    return out


def _square_fractions(v):
    """Inside area fraction of unit squares.

    v holds corner values in cyclic order (0,0), (1,0), (1,1), (0,1).
    The boundary is linear along each edge; inside corners are joined by
    straight chords.  The two ambiguous diagonal patterns are split by
    the sign of the center-interpolated value (corner mean).
    """
    v = np.asarray(v, dtype=float)
    inside = v < 0
    n_in = inside.sum(axis=1)
    out = np.zeros(len(v))
    out[n_in == 4] = 1.0

    nxt = [1, 2, 3, 0]
    prv = [3, 0, 1, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        leg_next = np.abs(v) / np.abs(v - v[:, nxt])
        leg_prev = np.abs(v) / np.abs(v - v[:, prv])
    corner_tri = 0.5 * leg_next * leg_prev

    for i in range(4):
        only = inside[:, i] & (n_in == 1)
        out[only] = corner_tri[only, i]
        allbut = ~inside[:, i] & (n_in == 3)
        out[allbut] = 1.0 - corner_tri[allbut, i]
        pair = inside[:, i] & inside[:, nxt[i]] & (n_in == 2)
        out[pair] = 0.5 * (leg_prev[pair, i] + leg_next[pair, nxt[i]])

    for i, j in ((0, 2), (1, 3)):
        saddle = inside[:, i] & inside[:, j] & (n_in == 2)
        if not saddle.any():
            continue
        center_in = v[saddle].mean(axis=1) < 0
        o1, o2 = nxt[i], nxt[j]
        hexagon = 1.0 - corner_tri[saddle, o1] - corner_tri[saddle, o2]
        twotri = corner_tri[saddle, i] + corner_tri[saddle, j]
        out[saddle] = np.where(center_in, hexagon, twotri)
    return out


def _trilinear_basis(n):
    t = (np.arange(n) + 0.5) / n
    pts = np.stack(np.meshgrid(t, t, t, indexing="ij"), axis=-1).reshape(-1, 3)
    basis = np.empty((8, len(pts)))
    for c in range(8):
        w = np.ones(len(pts))
        for axis in range(3):
            w *= pts[:, axis] if (c >> axis) & 1 else 1.0 - pts[:, axis]
        basis[c] = w
    return basis


def _cube_fractions(v, n=CUBE_SUBSAMPLES):
    """Inside volume fraction of unit cubes by midpoint subsampling.

    Corner order follows bit encoding (b0, b1, b2) -> offsets along the
    three spanned axes, matching `CartesianComplex.cell_vertex_ids`.
    """
    v = np.asarray(v, dtype=float)
    inside = v < 0
    n_in = inside.sum(axis=1)
    out = np.zeros(len(v))
    out[n_in == 8] = 1.0
    mixed = np.flatnonzero((n_in > 0) & (n_in < 8))
    if len(mixed) == 0:
        return out
    basis = _trilinear_basis(n)
    total = basis.shape[1]
    for start in range(0, len(mixed), 4096):
        idx = mixed[start:start + 4096]
        values = v[idx] @ basis
        out[idx] = (values < 0).sum(axis=1) / total
    return out


def _complex_fractions(complex, vertex_values, k):
    """Raw |cell ∩ M| in length^k units for every k-cell of `complex`."""
    l = complex.spacing
    if k == 0:
        return (vertex_values < 0).astype(float)
    corners = complex.cell_vertex_ids(k)
    v = vertex_values[corners]
    if k == 1:
        return _edge_fractions(v) * l
    if k == 2:
        # reorder corners (00, 10, 01, 11) -> cyclic (00, 10, 11, 01)
        return _square_fractions(v[:, [0, 1, 3, 2]]) * l ** 2
    if k == 3:
        return _cube_fractions(v) * l ** 3
    raise ValueError(f"unsupported degree {k}")


def fractional_volume(field, k, side):
    """Fractional volumes of primal k-cells ('primal') or their dual cells.

    For side='dual' the returned values are the (m-k)-volumes of the dual
    cells, indexed by primal k-cell, computed on the staggered grid from
    the dual samples.  Dual cells that extend past the staggered grid get
    volume 0 (they can only occur within half a spacing of the grid box
    boundary, which a well-posed domain never reaches).
    """
    cx = field.complex
    m = cx.dimension
    if not 0 <= k <= m:
        raise ValueError(f"degree {k} outside [0, {m}]")
    if side == "primal":
        values = _complex_fractions(cx, field.primal_values, k)
        return FractionalVolumes(side, k, k, values)
    if side == "dual":
        dual = cx.dual_complex()
        dual_vals = _complex_fractions(dual, field.dual_values, m - k)
        mapping = cx.dual_cell_ids(k)
        values = np.zeros(cx.cell_count(k))
        ok = mapping >= 0
        values[ok] = dual_vals[mapping[ok]]
        return FractionalVolumes(side, k, m - k, values)
    raise ValueError(f"unknown side {side!r}")


# -- analytic signed-distance presets -------------------------------------

def _norm(points, axes=None):
    pts = points if axes is None else points[:, axes]
    return np.sqrt((pts ** 2).sum(axis=1))


def _box_sdf(points, lo, hi):
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    center = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    q = np.abs(points - center) - half
    outside = np.sqrt((np.maximum(q, 0.0) ** 2).sum(axis=1))
    inside = np.minimum(q.max(axis=1), 0.0)
    return outside + inside


def sdf_disk(radius=1.0, center=(0.0, 0.0)):
    c = np.asarray(center, dtype=float)
    return lambda p: _norm(p - c) - radius


def sdf_annulus(r_in=1.0, r_out=4.0, center=(0.0, 0.0)):
    c = np.asarray(center, dtype=float)

    def f(p):
        r = _norm(p - c)
        return np.maximum(r - r_out, r_in - r)
    return f


def sdf_rect_difference():
    """Square (0,3)^2 minus the rectangle [2/3,2] x [3/4,2]; exact SDF."""
    def f(p):
        outer = _box_sdf(p, (0.0, 0.0), (3.0, 3.0))
        inner = _box_sdf(p, (2.0 / 3.0, 3.0 / 4.0), (2.0, 2.0))
        return np.maximum(outer, -inner)
    return f


def sdf_figure8_2d(r_in=0.5, r_out=1.0, offset=0.9):
    a = sdf_annulus(r_in, r_out, (-offset, 0.0))
    b = sdf_annulus(r_in, r_out, (offset, 0.0))
    return lambda p: np.minimum(a(p), b(p))


def sdf_ball(radius=1.0, center=(0.0, 0.0, 0.0)):
    c = np.asarray(center, dtype=float)
    return lambda p: _norm(p - c) - radius


def sdf_shell(r_out=1.0, r_in=0.5, center=(0.0, 0.0, 0.0)):
    c = np.asarray(center, dtype=float)

    def f(p):
        r = _norm(p - c)
        return np.maximum(r - r_out, r_in - r)
    return f


def sdf_torus(major=1.0, minor=0.5, center=(0.0, 0.0, 0.0)):
    c = np.asarray(center, dtype=float)

    def f(p):
        q = p - c
        ring = np.sqrt(q[:, 0] ** 2 + q[:, 1] ** 2) - major
        return np.sqrt(ring ** 2 + q[:, 2] ** 2) - minor
    return f


def sdf_figure8_3d(major=1.0, minor=0.4, offset=1.2):
    a = sdf_torus(major, minor, (-offset, 0.0, 0.0))
    b = sdf_torus(major, minor, (offset, 0.0, 0.0))
    return lambda p: np.minimum(a(p), b(p))


#: name -> (dimension, factory, default grid box per axis)
SDF_PRESETS = {
    "disk": (2, sdf_disk, (-1.1, 1.1)),
    "annulus": (2, sdf_annulus, (-4.1, 4.1)),
    "rect_difference": (2, sdf_rect_difference, (-0.1, 3.1)),
    "arnold": (2, sdf_rect_difference, (-0.1, 3.1)),
    "figure8_2d": (2, sdf_figure8_2d, (-2.1, 2.1)),
    "ball": (3, sdf_ball, (-1.1, 1.1)),
    "shell": (3, sdf_shell, (-1.1, 1.1)),
    "torus": (3, sdf_torus, (-1.65, 1.65)),
    "figure8_3d": (3, sdf_figure8_3d, (-2.9, 2.9)),
}


def sdf_preset(name, **params):
    """Look up a registered shape; returns (dimension, sdf, default_box)."""
    if name not in SDF_PRESETS:
        raise KeyError(f"unknown shape preset {name!r}; "
                       f"known: {sorted(SDF_PRESETS)}")
    dim, factory, box = SDF_PRESETS[name]
    return dim, factory(**params), box


def preset_field(name, grid_size, params=None, box=None):
    """Build the complex and sampled level set for a preset shape.

    `grid_size` is the vertex count per axis; the spacing follows from
    the grid box, which defaults to the preset's registered box.
    """
    from .grid import build_complex
    dim, fn, default_box = sdf_preset(name, **(params or {}))
    lo, hi = box if box is not None else default_box
    n = int(grid_size)
    spacing = (hi - lo) / (n - 1)
    cx = build_complex(dim, (n,) * dim, spacing, (lo,) * dim)
    return cx, sample_levelset(cx, fn)
