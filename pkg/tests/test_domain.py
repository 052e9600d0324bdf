import numpy as np
import pytest

from hodgedec.grid import build_complex
from hodgedec.domain import (
    EPSILON_REL,
    build_support,
    fractional_volume,
    preset_field,
    sample_levelset,
    sdf_annulus,
    sdf_disk,
    sdf_preset,
    _square_fractions,
)


def clip_square_by_halfplane(a, b, c):
    """Area of {(x,y) in [0,1]^2 : a x + b y + c < 0} (Sutherland-Hodgman)."""
    poly = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]
    out = []
    for i in range(len(poly)):
        p, q = poly[i], poly[(i + 1) % len(poly)]
        fp = a * p[0] + b * p[1] + c
        fq = a * q[0] + b * q[1] + c
        if fp < 0:
            out.append(p)
        if (fp < 0) != (fq < 0):
            t = fp / (fp - fq)
            out.append((p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])))
    area = 0.0
    for i in range(len(out)):
        x0, y0 = out[i]
        x1, y1 = out[(i + 1) % len(out)]
        area += x0 * y1 - x1 * y0
    return 0.5 * abs(area)


class TestSampleLevelset:
    def test_disk_center_vertex(self):
        cx = build_complex(2, (23, 23), 2.2 / 22, (-1.1, -1.1))
        field = sample_levelset(cx, sdf_disk())
        center_id = np.ravel_multi_index((11, 11), (23, 23))
        assert field.primal_values[center_id] == -1.0

    def test_zero_sample_pushed_to_plus_epsilon(self):
        cx = build_complex(2, (3, 3), 0.5, (0.0, 0.0))
        values = np.full(9, -1.0)
        values[4] = 0.0
        field = sample_levelset(cx, values)
        assert field.primal_values[4] == EPSILON_REL * 0.5

    def test_small_samples_keep_sign(self):
        cx = build_complex(2, (2, 2), 1.0, (0.0, 0.0))
        field = sample_levelset(cx, np.array([1e-9, -1e-9, 0.3, -0.3]))
        eps = EPSILON_REL
        np.testing.assert_allclose(field.primal_values, [eps, -eps, 0.3, -0.3])

    def test_wrong_length_rejected(self):
        cx = build_complex(2, (3, 3), 1.0, (0.0, 0.0))
        with pytest.raises(ValueError):
            sample_levelset(cx, np.zeros(8))

    def test_nonfinite_rejected(self):
        cx = build_complex(2, (2, 2), 1.0, (0.0, 0.0))
        with pytest.raises(ValueError):
            sample_levelset(cx, np.array([0.1, np.nan, -1.0, 2.0]))

    def test_array_input_interpolates_dual_values(self):
        cx = build_complex(2, (3, 3), 1.0, (0.0, 0.0))
        rng = np.random.default_rng(0)
        values = rng.normal(size=9)
        field = sample_levelset(cx, values)
        corners = cx.cell_vertex_ids(2)
        np.testing.assert_allclose(field.dual_values,
                                   values[corners].mean(axis=1))

    def test_callback_evaluated_exactly_at_dual_points(self):
        cx = build_complex(2, (5, 5), 0.55, (-1.1, -1.1))
        field = sample_levelset(cx, sdf_disk())
        sdf = sdf_disk()
        np.testing.assert_array_equal(field.dual_values,
                                      sdf(cx.cell_centers(2)))


class TestSupports:
    def test_edge_with_one_inside_endpoint_is_normal(self):
        cx, field = preset_field("disk", 24)
        normal1 = build_support(field, "normal", 1)
        endpoints = cx.cell_vertex_ids(1)
        inside = field.primal_values < 0
        one_in = inside[endpoints].sum(axis=1) == 1
        assert one_in.any()
        assert normal1.included[one_in].all()

    def test_fully_interior_cell_in_both_supports(self):
        cx, field = preset_field("disk", 24)
        corners = cx.cell_vertex_ids(2)
        all_in = (field.primal_values[corners] < 0).all(axis=1)
        centers_in = field.dual_values < 0
        deep = all_in & centers_in
        assert deep.any()
        assert build_support(field, "normal", 2).included[deep].all()
        assert build_support(field, "tangential", 2).included[deep].all()

    @pytest.mark.parametrize("name,size", [("disk", 20), ("annulus", 32),
                                           ("ball", 12), ("torus", 14)])
    def test_tangential_face_closed(self, name, size):
        cx, field = preset_field(name, size)
        supports = [build_support(field, "tangential", k)
                    for k in range(cx.dimension + 1)]
        for k in range(1, cx.dimension + 1):
            from hodgedec.grid import incidence
            inc = incidence(cx, k - 1).tocsr()
            for cell in supports[k].cells:
                faces = inc.indices[inc.indptr[cell]:inc.indptr[cell + 1]]
                assert supports[k - 1].included[faces].all()

    def test_normal_coface_consistent(self):
        cx, field = preset_field("disk", 20)
        from hodgedec.grid import incidence
        for k in range(cx.dimension):
            sk = build_support(field, "normal", k)
            sk1 = build_support(field, "normal", k + 1)
            inc = incidence(cx, k).tocsc()
            for cell in sk.cells:
                cofaces = inc.indices[inc.indptr[cell]:inc.indptr[cell + 1]]
                assert sk1.included[cofaces].all()

    @pytest.mark.parametrize("name,size", [("disk", 20), ("annulus", 24),
                                           ("ball", 10)])
    def test_extended0_superset(self, name, size):
        _, field = preset_field(name, size)
        ext = build_support(field, "extended0", 0)
        n0 = build_support(field, "normal", 0)
        t0 = build_support(field, "tangential", 0)
        assert ext.included[n0.included].all()
        assert ext.included[t0.included].all()

    def test_extended0_requires_degree_zero(self):
        _, field = preset_field("disk", 10)
        with pytest.raises(ValueError):
            build_support(field, "extended0", 1)

    def test_local_index_bijection(self):
        _, field = preset_field("annulus", 24)
        s = build_support(field, "tangential", 1)
        assert np.array_equal(s.local_of_global[s.cells], np.arange(s.count))
        assert (s.local_of_global[~s.included] == -1).all()


class TestFractions:
    def test_edge_half_inside(self):
        cx = build_complex(2, (2, 2), 1.0, (0.0, 0.0))
        field = sample_levelset(cx, np.array([-1.0, 1.0, 1.0, 1.0]))
        frac = fractional_volume(field, 1, "primal")
        # edge 0 runs along y (subset (0,) enumerated first is x... find it)
        endpoints = cx.cell_vertex_ids(1)
        for e in range(4):
            vals = field.primal_values[endpoints[e]]
            if set(np.sign(vals)) == {-1.0, 1.0}:
                assert frac.values[e] == pytest.approx(0.5)

    def test_edge_fully_inside(self):
        cx = build_complex(2, (2, 2), 1.0, (0.0, 0.0))
        field = sample_levelset(cx, np.array([-2.0, -1.0, -1.0, -3.0]))
        frac = fractional_volume(field, 1, "primal")
        np.testing.assert_allclose(frac.values, 1.0)

    def test_corner_triangle_area(self):
        cx = build_complex(2, (2, 2), 1.0, (0.0, 0.0))
        field = sample_levelset(cx, np.array([-1.0, 1.0, 1.0, 1.0]))
        frac = fractional_volume(field, 2, "primal")
        assert frac.values[0] == pytest.approx(0.125)

    def test_square_fraction_matches_halfplane_clip(self):
        # For linear rho the polygon model is exact: compare against an
        # independent Sutherland-Hodgman clip.
        rng = np.random.default_rng(7)
        for _ in range(200):
            a, b = rng.normal(size=2)
            c = rng.uniform(-1.5, 1.5)
            corners = np.array([c, a + c, a + b + c, b + c])[None, :]
            got = _square_fractions(corners)[0]
            want = clip_square_by_halfplane(a, b, c)
            assert got == pytest.approx(want, abs=1e-12)

    def test_saddle_split_by_center_sign(self):
        # Diagonal corners inside; center mean decides connectivity.
        connected = _square_fractions(np.array([[-1.0, 0.5, -1.0, 0.5]]))[0]
        split = _square_fractions(np.array([[-1.0, 4.0, -1.0, 4.0]]))[0]
        assert connected > 0.5          # hexagon
        assert split == pytest.approx(2 * 0.5 * (1 / 5) ** 2)  # two triangles
        assert split < connected

    def test_monotone_under_domain_shrink(self):
        rng = np.random.default_rng(3)
        v = rng.normal(size=(500, 4))
        bump = rng.uniform(0.0, 0.5, size=(500, 4))
        a0 = _square_fractions(v)
        a1 = _square_fractions(v + bump)
        assert (a1 <= a0 + 1e-12).all()

    def test_cube_fraction_halfspace(self):
        cx = build_complex(3, (2, 2, 2), 1.0, (0.0, 0.0, 0.0))
        # rho = x - 0.5: half the cube inside; trilinear subsampling exact
        field = sample_levelset(cx, lambda p: p[:, 0] - 0.5)
        frac = fractional_volume(field, 3, "primal")
        assert frac.values[0] == pytest.approx(0.5)

    def test_cube_fraction_bounds_monotone(self):
        rng = np.random.default_rng(5)
        cx = build_complex(3, (2, 2, 2), 1.0, (0.0, 0.0, 0.0))
        v = rng.normal(size=8)
        f0 = sample_levelset(cx, v)
        f1 = sample_levelset(cx, v + 0.3)
        a0 = fractional_volume(f0, 3, "primal").values[0]
        a1 = fractional_volume(f1, 3, "primal").values[0]
        assert 0.0 <= a1 <= a0 <= 1.0

    def test_vertex_fraction_is_indicator(self):
        _, field = preset_field("disk", 16)
        frac = fractional_volume(field, 0, "primal")
        np.testing.assert_array_equal(frac.values,
                                      (field.primal_values < 0).astype(float))

    def test_degree_out_of_range(self):
        _, field = preset_field("disk", 8)
        with pytest.raises(ValueError):
            fractional_volume(field, 3, "primal")

    def test_dual_fraction_interior_is_full(self):
        cx, field = preset_field("disk", 40)
        m = cx.dimension
        l = cx.spacing
        for k in range(m + 1):
            frac = fractional_volume(field, k, "dual")
            # cells whose incident m-cell centers are all well inside
            mc = cx.cell_incident_mcells(k)
            ok = (mc >= 0).all(axis=1)
            deep = ok & (field.dual_values[np.clip(mc, 0, None)]
                         < -2 * l).all(axis=1)
            assert deep.any()
            np.testing.assert_allclose(frac.values[deep], l ** (m - k))

    def test_clamped_floor(self):
        _, field = preset_field("disk", 24)
        frac = fractional_volume(field, 1, "primal")
        support = build_support(field, "normal", 1)
        clamped = frac.clamped(field.spacing)[support.cells]
        l = field.spacing
        assert (clamped >= EPSILON_REL * l - 1e-18).all()
        assert (clamped <= l + 1e-15).all()

    def test_refinement_shrinks_symmetric_difference(self):
        # union of tangential m-cells converges to the disk in measure
        sdf = sdf_disk()

        def symdiff(n):
            cx, field = preset_field("disk", n)
            supp = build_support(field, "tangential", 2)
            t = np.linspace(-1.1, 1.1, 301)
            xs, ys = np.meshgrid(t, t, indexing="ij")
            pts = np.column_stack([xs.ravel(), ys.ravel()])
            in_disk = sdf(pts) < 0
            cell = np.floor((pts - np.array(cx.origin)) / cx.spacing)
            cell = np.clip(cell, 0, np.array(cx.vertex_counts) - 2).astype(int)
            ids = cx.cell_ids(2, (0, 1), (cell[:, 0], cell[:, 1]))
            in_support = supp.included[ids]
            return (in_disk != in_support).mean()

        d1, d2 = symdiff(32), symdiff(64)
        assert d2 < d1
        assert d2 / d1 == pytest.approx(0.5, abs=0.5 / 1.5)


class TestPresets:
    def test_unknown_preset(self):
        with pytest.raises(KeyError):
            sdf_preset("klein_bottle")

    def test_annulus_signs(self):
        f = sdf_annulus(1.0, 4.0)
        pts = np.array([[0.0, 0.0], [2.5, 0.0], [5.0, 0.0], [0.0, 1.0]])
        vals = f(pts)
        assert vals[0] > 0 and vals[1] < 0 and vals[2] > 0
        assert vals[3] == pytest.approx(0.0)

    def test_arnold_exact_distances(self):
        f = sdf_preset("rect_difference")[1]
        pts = np.array([
            [1.5, 2.5],     # inside, 0.5 below top edge y=3
            [0.33, 0.375],  # inside, nearest boundary x=0 at 0.33
            [1.0, 1.0],     # inside the notch rectangle -> outside M
            [-1.0, 1.5],    # left of the square
        ])
        vals = f(pts)
        assert vals[0] == pytest.approx(-0.5)
        assert vals[1] == pytest.approx(-0.33)
        assert vals[2] == pytest.approx(min(1.0 - 2 / 3, 1.0 - 3 / 4))
        assert vals[3] == pytest.approx(1.0)

    def test_torus_sdf(self):
        f = sdf_preset("torus")[1]
        pts = np.array([[1.0, 0.0, 0.0], [0.0, 0.0, 0.0], [1.0, 0.0, 0.5]])
        np.testing.assert_allclose(f(pts), [-0.5, 0.5, 0.0], atol=1e-15)
