import numpy as np
import pytest
import scipy.sparse as sp

from hodgedec.grid import build_complex, incidence
from hodgedec.domain import (
    build_support,
    fractional_volume,
    preset_field,
    sample_levelset,
)
from hodgedec.operators import (
    build_conversion,
    build_operator_set,
    graph_laplacian_extended,
    hodge_star,
    laplacian,
    project_differential,
    whitney_axis_weights,
)


def all_inside_field(cx):
    return sample_levelset(cx, lambda p: np.full(len(p), -1.0))


class TestProjectDifferential:
    def test_full_supports_reproduce_incidence(self):
        cx = build_complex(2, (5, 4), 1.0)
        field = all_inside_field(cx)
        for k in range(2):
            sk = build_support(field, "normal", k)
            sk1 = build_support(field, "normal", k + 1)
            assert sk.count == cx.cell_count(k)
            got = project_differential(incidence(cx, k), sk, sk1)
            assert (got != incidence(cx, k).astype(float)).nnz == 0

    @pytest.mark.parametrize("kind", ["normal", "tangential"])
    def test_nilpotent_on_annulus(self, kind):
        cx, field = preset_field("annulus", 64)
        s = [build_support(field, kind, k) for k in range(3)]
        d0 = project_differential(incidence(cx, 0), s[0], s[1])
        d1 = project_differential(incidence(cx, 1), s[1], s[2])
        prod = d1 @ d0
        prod.eliminate_zeros()
        assert prod.nnz == 0

    @pytest.mark.parametrize("kind", ["normal", "tangential"])
    def test_nilpotent_on_shell_3d(self, kind):
        cx, field = preset_field("shell", 18)
        s = [build_support(field, kind, k) for k in range(4)]
        for k in range(2):
            dk = project_differential(incidence(cx, k), s[k], s[k + 1])
            dk1 = project_differential(incidence(cx, k + 1), s[k + 1], s[k + 2])
            prod = dk1 @ dk
            prod.eliminate_zeros()
            assert prod.nnz == 0

    def test_outside_edges_absent(self):
        cx, field = preset_field("disk", 24)
        s1 = build_support(field, "normal", 1)
        endpoints = cx.cell_vertex_ids(1)
        outside = (field.primal_values[endpoints] >= 0).all(axis=1)
        assert not s1.included[outside].any()

    def test_kind_mismatch_rejected(self):
        cx, field = preset_field("disk", 10)
        sn = build_support(field, "normal", 0)
        st = build_support(field, "tangential", 1)
        with pytest.raises(ValueError):
            project_differential(incidence(cx, 0), sn, st)

    @pytest.mark.parametrize("name,size", [("disk", 32), ("shell", 16)])
    def test_projection_relations(self, name, size):
        # P_{k+1,n}^T P_{k+1,n} D P_{k,n}^T == D P_{k,n}^T  and
        # P_{k+1,t} D P_{k,t}^T P_{k,t} == P_{k+1,t} D, entrywise.
        cx, field = preset_field(name, size)
        for k in range(cx.dimension):
            D = incidence(cx, k).astype(float)
            sn = [build_support(field, "normal", d) for d in (k, k + 1)]
            Pn, Pn1 = sn[0].projection(), sn[1].projection()
            lhs = Pn1.T @ Pn1 @ D @ Pn.T
            rhs = D @ Pn.T
            assert abs(lhs - rhs).sum() == 0
            st = [build_support(field, "tangential", d) for d in (k, k + 1)]
            Pt, Pt1 = st[0].projection(), st[1].projection()
            lhs = Pt1 @ D @ Pt.T @ Pt
            rhs = Pt1 @ D
            assert abs(lhs - rhs).sum() == 0


class TestHodgeStar:
    def test_interior_edge_normal_3d(self):
        cx = build_complex(3, (3, 3, 3), 0.5, (-0.5, -0.5, -0.5))
        field = all_inside_field(cx)
        s1 = build_support(field, "normal", 1)
        S = hodge_star(fractional_volume(field, 1, "primal"), s1,
                       "normal", 1, 0.5, 3)
        np.testing.assert_allclose(S.diagonal(), 0.5)

    def test_interior_vertex_tangential_2d(self):
        cx = build_complex(2, (5, 5), 0.3, (0.0, 0.0))
        field = all_inside_field(cx)
        s0 = build_support(field, "tangential", 0)
        S = hodge_star(fractional_volume(field, 0, "dual"), s0,
                       "tangential", 0, 0.3, 2)
        # interior vertices have a full dual square of area l^2
        centers = cx.cell_centers(0)[s0.cells]
        interior = ((centers > 0.25) & (centers < 0.95)).all(axis=1)
        np.testing.assert_allclose(S.diagonal()[interior], 0.09)

    def test_half_dual_face_edge_2d(self):
        # rho = y: x-edges on the line y=0 have exactly half their dual
        # face inside, so S_t[1] = (l^2/2)/l = l/2.
        cx = build_complex(2, (5, 5), 1.0, (0.0, -2.0))
        field = sample_levelset(cx, lambda p: p[:, 1])
        s1 = build_support(field, "tangential", 1)
        S = hodge_star(fractional_volume(field, 1, "dual"), s1,
                       "tangential", 1, 1.0, 2)
        centers = cx.cell_centers(1)[s1.cells]
        on_axis = (centers[:, 1] == 0.0) & (centers[:, 0] % 1.0 == 0.5)
        assert on_axis.sum() == 4
        np.testing.assert_allclose(S.diagonal()[on_axis], 0.5)

    def test_side_mismatch_rejected(self):
        cx, field = preset_field("disk", 10)
        s1 = build_support(field, "normal", 1)
        with pytest.raises(ValueError):
            hodge_star(fractional_volume(field, 1, "dual"), s1,
                       "normal", 1, field.spacing, 2)


class TestLaplacian:
    def test_degree_zero_normal_has_only_d_term(self):
        cx, field = preset_field("disk", 20)
        ops = build_operator_set(field)
        want = ops.D_n[0].T @ ops.S_n[1] @ ops.D_n[0]
        assert abs(ops.L_n[0] - want).max() == 0

    @pytest.mark.parametrize("name,size", [("annulus", 40), ("shell", 14)])
    def test_symmetry_and_psd(self, name, size):
        _, field = preset_field(name, size)
        ops = build_operator_set(field)
        m = ops.dimension
        for L in list(ops.L_n) + list(ops.L_t):
            scale = abs(L).max()
            asym = abs(L - L.T).max()
            assert asym <= 1e-13 * scale
            dense = L.toarray()
            w = np.linalg.eigvalsh(0.5 * (dense + dense.T))
            assert w.min() >= -1e-10 * w.max()

    def test_adjointness_discrete(self):
        # (D_t A)^T S_t[k] W == A^T S_t[k-1] (delta_t W) to 1e-12 relative
        _, field = preset_field("annulus", 48)
        ops = build_operator_set(field)
        rng = np.random.default_rng(11)
        for k in (1, 2):
            A = rng.normal(size=ops.D_t[k - 1].shape[1])
            W = rng.normal(size=ops.D_t[k - 1].shape[0])
            lhs = (ops.D_t[k - 1] @ A) @ (ops.S_t[k] @ W)
            rhs = A @ (ops.S_t[k - 1] @ (ops.delta_t(k) @ W))
            assert abs(lhs - rhs) <= 1e-12 * max(abs(lhs), abs(rhs))


class TestGraphLaplacianExtended:
    def test_interior_rows_are_stencil(self):
        cx, field = preset_field("disk", 32)
        ops = build_operator_set(field)
        L = ops.L0_E
        n0, ext = ops.normal_supports[0], ops.extended0
        # vertices whose whole neighborhood is deep inside
        deep = np.flatnonzero(field.primal_values < -4 * field.spacing)
        rows = n0.local_of_global[deep]
        rows = rows[rows >= 0][:10]
        for r in rows:
            row = L.getrow(r)
            assert row.sum() == 0
            assert row.max() == 2 * cx.dimension
            assert (np.sort(row.data)[:-1] == -1).all()

    def test_row_sums_vanish(self):
        _, field = preset_field("annulus", 40)
        ops = build_operator_set(field)
        sums = np.asarray(ops.L0_E.sum(axis=1)).ravel()
        np.testing.assert_allclose(sums, 0.0, atol=1e-12)

    def test_constant_in_null_space(self):
        _, field = preset_field("disk", 32)
        ops = build_operator_set(field)
        ones = np.ones(ops.extended0.count)
        np.testing.assert_allclose(ops.L0_E @ ones, 0.0, atol=1e-12)


class TestConversion:
    def test_zero_input_zero_output(self):
        _, field = preset_field("disk", 24)
        ops = build_operator_set(field)
        out = ops.conversion @ np.zeros(ops.normal_supports[1].count)
        np.testing.assert_array_equal(out, 0.0)

    def test_interior_edges_pass_through(self):
        cx, field = preset_field("disk", 24)
        ops = build_operator_set(field)
        t1, n1 = ops.tangential_supports[1], ops.normal_supports[1]
        C = ops.conversion
        centers = cx.cell_centers(1)
        deep = np.abs(np.linalg.norm(centers, axis=1) - 0.5) < 0.2
        for g in np.flatnonzero(deep & t1.included & n1.included)[:20]:
            row = C.getrow(t1.local_of_global[g])
            assert row.nnz == 1
            assert row.indices[0] == n1.local_of_global[g]
            assert row.data[0] == pytest.approx(1.0)

    def test_whitney_weights_reconstruct_constant(self):
        cx = build_complex(3, (4, 4, 4), 0.5, (0.0, 0.0, 0.0))
        rng = np.random.default_rng(2)
        pts = rng.uniform(0.05, 1.45, size=(20, 3))
        # 1-form of the constant field e_a integrates to l on a-edges
        values = np.zeros(cx.cell_count(1))
        for subset, block, _ in cx.decode_cells(1):
            if subset[0] == 1:
                values[block] = 0.5
        for a in range(3):
            W = whitney_axis_weights(cx, pts, a)
            expect = 1.0 if a == 1 else 0.0
            np.testing.assert_allclose(W @ values, expect, atol=1e-14)

    def test_point_outside_grid_rejected(self):
        cx = build_complex(2, (3, 3), 1.0, (0.0, 0.0))
        with pytest.raises(ValueError):
            whitney_axis_weights(cx, np.array([[2.5, 0.5]]), 0)
