"""Regular Cartesian cell complexes in 2D/3D with signed incidence matrices.

A k-cell of an m-dimensional grid is an axis-aligned k-cube.  It is
identified by the subset of axes it spans (its "axis subset") and a
multi-index: along a spanned axis the index ranges over cell intervals
(n_i - 1 values), along an unspanned axis over vertices (n_i values).

Enumeration is lexicographic by axis subset, then row-major multi-index
with the last axis fastest, so cell ids are reproducible bit for bit.

Orientation convention (fixed here, used by every sign-sensitive test):
a k-cell is oriented by the increasing-coordinate order of its spanned
axes.  The k-face of a (k+1)-cell obtained by dropping the axis at
position j of the spanned-axis list carries sign (-1)^j, times +1 for
the upper face and -1 for the lower face.  In 2D this gives the usual
counterclockwise circulation: a face's boundary is
+bottom +right -top -left.

The dual grid (vertices at m-cell centers, offset by l/2 per axis) is
never materialized as a stored object; `dual_complex` builds the shifted
complex on demand for dual-cell geometry queries.  Under this convention
the dual-grid incidence of degree m-k-1 is the transpose of the primal
incidence of degree k up to the sign (-1)^(a+1), where a is the axis
separating the spanned-axis sets of the incident cell pair.
"""

from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations

import numpy as np
import scipy.sparse as sp


@dataclass(frozen=True)
class CartesianComplex:
    """Primal cell complex of a rectangular Cartesian grid.

    Attributes:
        dimension: spatial dimension m, 2 or 3
        vertex_counts: vertices per axis (n_1, ..., n_m), each >= 2
        spacing: uniform grid spacing l > 0
        origin: coordinates of vertex (0, ..., 0)
    """

    dimension: int
    vertex_counts: tuple
    spacing: float
    origin: tuple

    def __post_init__(self):
        if self.dimension not in (2, 3):
            raise ValueError(f"dimension must be 2 or 3, got {self.dimension}")
        if len(self.vertex_counts) != self.dimension:
            raise ValueError("vertex_counts length must equal dimension")
        if any(int(n) < 2 for n in self.vertex_counts):
            raise ValueError("every vertex count must be >= 2")
        if not (self.spacing > 0):
            raise ValueError("spacing must be positive")
        if len(self.origin) != self.dimension:
            raise ValueError("origin length must equal dimension")
        object.__setattr__(self, "vertex_counts",
                           tuple(int(n) for n in self.vertex_counts))
        object.__setattr__(self, "spacing", float(self.spacing))
        object.__setattr__(self, "origin",
                           tuple(float(x) for x in self.origin))

    # -- cell enumeration ------------------------------------------------

    def axis_subsets(self, k):
        """Lexicographically ordered k-subsets of axes spanning k-cells."""
        if not 0 <= k <= self.dimension:
            raise ValueError(f"degree {k} outside [0, {self.dimension}]")
        return list(combinations(range(self.dimension), k))

    def subset_shape(self, subset):
        """Multi-index shape of the cell block spanning `subset`."""
        return tuple(n - 1 if a in subset else n
                     for a, n in enumerate(self.vertex_counts))

    @lru_cache(maxsize=None)
    def _subset_offsets(self, k):
        sizes = [int(np.prod(self.subset_shape(s))) for s in self.axis_subsets(k)]
        offsets = np.concatenate([[0], np.cumsum(sizes)])
        return offsets

    def cell_count(self, k):
        return int(self._subset_offsets(k)[-1])

    def subset_offset(self, k, subset):
        subsets = self.axis_subsets(k)
        return int(self._subset_offsets(k)[subsets.index(tuple(subset))])

    def cell_ids(self, k, subset, multi_index):
        """Global ids of k-cells spanning `subset` at `multi_index` (arrays ok)."""
        shape = self.subset_shape(subset)
        return self.subset_offset(k, subset) + np.ravel_multi_index(
            multi_index, shape)

    def decode_cells(self, k, ids=None):
        """Inverse of `cell_ids`.

        Returns a list of (subset, ids_in_block, multi_index_arrays) per
        axis subset; with `ids=None` every cell of degree k is decoded.
        """
        offsets = self._subset_offsets(k)
        out = []
        for si, subset in enumerate(self.axis_subsets(k)):
            shape = self.subset_shape(subset)
            if ids is None:
                block = np.arange(offsets[si], offsets[si + 1])
            else:
                ids = np.asarray(ids)
                block = ids[(ids >= offsets[si]) & (ids < offsets[si + 1])]
            multi = np.unravel_index(block - offsets[si], shape)
            out.append((subset, block, multi))
        return out

    def cell_centers(self, k):
        """(N_k, m) array of cell center coordinates, in global id order."""
        m = self.dimension
        centers = np.empty((self.cell_count(k), m))
        for subset, block, multi in self.decode_cells(k):
            for a in range(m):
                off = 0.5 if a in subset else 0.0
                centers[block, a] = self.origin[a] + self.spacing * (multi[a] + off)
        return centers

    def cell_vertex_ids(self, k):
        """(N_k, 2^k) array: the corner vertex ids of every k-cell."""
        m = self.dimension
        vshape = self.vertex_counts
        out = np.empty((self.cell_count(k), 2 ** k), dtype=np.int64)
        for subset, block, multi in self.decode_cells(k):
            for corner in range(2 ** k):
                idx = list(multi)
                for pos, a in enumerate(subset):
                    if corner >> pos & 1:
                        idx[a] = multi[a] + 1
                out[block, corner] = np.ravel_multi_index(idx, vshape)
        return out

    def cell_incident_mcells(self, k):
        """(N_k, 2^(m-k)) array of incident m-cell ids, -1 where out of range.

        The incident m-cells of a k-cell are exactly the primal m-cells
        whose centers are the dual vertices of its dual (m-k)-cell.
        """
        m = self.dimension
        mshape = tuple(n - 1 for n in self.vertex_counts)
        trans = {k_: [a for a in range(m) if a not in s]
                 for k_, s in enumerate(self.axis_subsets(k))}
        out = np.full((self.cell_count(k), 2 ** (m - k)), -1, dtype=np.int64)
        for si, (subset, block, multi) in enumerate(self.decode_cells(k)):
            others = trans[si]
            for corner in range(2 ** (m - k)):
                idx = [np.asarray(mi) for mi in multi]
                ok = np.ones(len(block), dtype=bool)
                for pos, a in enumerate(others):
                    if corner >> pos & 1:
                        idx[a] = multi[a] - 1
                    ok &= (idx[a] >= 0) & (idx[a] < mshape[a])
                flat = np.ravel_multi_index(
                    [np.clip(ix, 0, sh - 1) for ix, sh in zip(idx, mshape)],
                    mshape)
                out[block[ok], corner] = flat[ok]
        return out

    def dual_complex(self):
        """Staggered complex with vertices at primal m-cell centers."""
        return CartesianComplex(
            self.dimension,
            tuple(n - 1 for n in self.vertex_counts),
            self.spacing,
            tuple(o + 0.5 * self.spacing for o in self.origin),
        )

    def dual_cell_ids(self, k):
        """Map primal k-cells to cells of `dual_complex`.

        The dual of a primal k-cell is the (m-k)-cell of the staggered
        complex spanning the complementary axes.  Returns int array of
        length N_k with the dual-complex (m-k)-cell id, or -1 where the
        dual cell extends past the staggered grid (primal cells within
        half a spacing of the grid box boundary).
        """
        m = self.dimension
        dual = self.dual_complex()
        out = np.full(self.cell_count(k), -1, dtype=np.int64)
        for subset, block, multi in self.decode_cells(k):
            co = tuple(a for a in range(m) if a not in subset)
            dshape = dual.subset_shape(co)
            idx = []
            ok = np.ones(len(block), dtype=bool)
            for a in range(m):
                ia = np.asarray(multi[a])
                if a in co:
                    ia = ia - 1
                ok &= (ia >= 0) & (ia < dshape[a])
                idx.append(np.clip(ia, 0, dshape[a] - 1))
            ids = dual.cell_ids(m - k, co, idx)
            out[block[ok]] = ids[ok]
        return out


def build_complex(dimension, vertex_counts, spacing, origin=None):
    """Construct a CartesianComplex, validating all parameters."""
    if origin is None:
        origin = (0.0,) * dimension
    return CartesianComplex(dimension, tuple(vertex_counts), spacing,
                            tuple(origin))


def incidence(complex: CartesianComplex, k):
    """Signed incidence matrix from k-cells to (k+1)-cells.

    Row r, column c holds the orientation sign of k-cell c as a face of
    (k+1)-cell r (see module docstring for the sign convention).  Entries
    are integers; the matrix is the transpose of the boundary operator on
    (k+1)-cells.  Each row has exactly 2(k+1) nonzeros.
    """
    m = complex.dimension
    if not 0 <= k <= m - 1:
        raise ValueError(f"incidence degree {k} outside [0, {m - 1}]")
    rows, cols, vals = [], [], []
    k_subsets = complex.axis_subsets(k)
    for subset, block, multi in complex.decode_cells(k + 1):
        for j, a in enumerate(subset):
            face_subset = tuple(x for x in subset if x != a)
            fsi = k_subsets.index(face_subset)
            shape = complex.subset_shape(face_subset)
            offset = complex._subset_offsets(k)[fsi]
            sign = (-1) ** j
            lower = list(multi)
            low_ids = offset + np.ravel_multi_index(lower, shape)
            upper = list(multi)
            upper[a] = multi[a] + 1
            up_ids = offset + np.ravel_multi_index(upper, shape)
            rows.append(block)
            cols.append(low_ids)
            vals.append(np.full(len(block), -sign, dtype=np.int64))
            rows.append(block)
            cols.append(up_ids)
            vals.append(np.full(len(block), sign, dtype=np.int64))
    mat = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(complex.cell_count(k + 1), complex.cell_count(k)),
        dtype=np.int64)
    return mat.tocsr()
