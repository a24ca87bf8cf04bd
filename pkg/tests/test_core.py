import math

import numpy as np
import pytest

from pcftube.core import (
    BudgetError,
    StructureError,
    build_level,
    load_structure,
    scaling_constants,
    similarity_dimension,
)

from oracles import bisect_dimension


# -- structure loading -------------------------------------------------------------


def test_interval_preset_fields():
    S = load_structure("interval")
    assert S.n_symbols == 2 and S.n_boundary == 2
    assert np.allclose(S.harmonic.r, [0.5, 0.5])
    assert np.allclose(S.harmonic.D, [[-1.0, 1.0], [1.0, -1.0]])
    assert abs(S.dim - 1.0) < 1e-12
    assert np.allclose(S.measure_weights, [0.5, 0.5])


def test_sierpinski_preset_dimension_and_measure():
    S = load_structure("sierpinski")
    assert abs(S.dim - bisect_dimension([0.6, 0.6, 0.6])) < 1e-10
    assert S.dim == pytest.approx(math.log(3.0) / math.log(5.0 / 3.0), abs=1e-12)
    assert abs(S.dim - 2.150663) < 1e-5  # commonly quoted rounding
    assert np.allclose(S.measure_weights, [1.0 / 3.0] * 3, atol=1e-14)


def test_vicsek_preset_dimension():
    S = load_structure("vicsek")
    assert abs(S.dim - math.log(5.0) / math.log(3.0)) < 1e-10
    assert np.allclose(S.measure_weights, [0.2] * 5, atol=1e-14)


def test_load_rejects_nonconservative_D():
    base = {
        "maps": [{"scale": 0.5, "translation": [0.0]}, {"scale": 0.5, "translation": [0.5]}],
        "boundary": [[0.0], [1.0]],
        "identifications": [[0, 1, 1, 0]],
        "D": [[1.0, 0.0], [0.0, 1.0]],
        "r": [0.5, 0.5],
    }
    with pytest.raises(StructureError):
        load_structure(base)


def test_load_rejects_broken_identification():
    base = {
        "maps": [{"scale": 0.5, "translation": [0.0]}, {"scale": 0.4, "translation": [0.6]}],
        "boundary": [[0.0], [1.0]],
        "identifications": [[0, 1, 1, 0]],
        "D": [[-1.0, 1.0], [1.0, -1.0]],
        "r": [0.5, 0.5],
    }
    with pytest.raises(StructureError, match="identification"):
        load_structure(base)


def test_load_rejects_irregular_weights():
    with pytest.raises(StructureError):
        load_structure({"preset": "interval", "r": [0.5, 1.0]})


def test_load_rejects_unknown_preset():
    with pytest.raises(StructureError):
        load_structure("menger")


def test_measure_override_is_accepted():
    S = load_structure({"preset": "interval", "mu": [0.3, 0.7]})
    assert np.allclose(S.measure_weights, [0.3, 0.7])
    G = build_level(S, 2)
    assert abs(G.cell_measures.sum() - 1.0) < 1e-12


# -- similarity dimension -------------------------------------------------------------


@pytest.mark.parametrize(
    "weights, expected",
    [
        ([0.5, 0.5], 1.0),
        ([0.6, 0.6, 0.6], math.log(3.0) / math.log(5.0 / 3.0)),
        ([0.25, 0.25, 0.25, 0.25], 1.0),
    ],
)
def test_similarity_dimension_values(weights, expected):
    d = similarity_dimension(weights)
    assert abs(d - expected) < 1e-11
    assert abs(d - bisect_dimension(weights)) < 1e-11
    assert abs(sum(w**d for w in weights) - 1.0) <= 1e-12


def test_similarity_dimension_root_is_isolated():
    r = np.array([0.6, 0.6, 0.6])
    d = similarity_dimension(r)
    g = lambda x: float(np.sum(r**x) - 1.0)
    assert g(d - 1e-6) > 0.0 > g(d + 1e-6)


# -- graph construction --------------------------------------------------------------


def test_interval_level3_layout(stacks):
    G = build_level(load_structure("interval"), 3)
    assert G.n_vertices == 9
    assert np.allclose(np.sort(G.coords[:, 0]), np.arange(9) / 8.0)
    assert np.allclose(G.cell_measures, 1.0 / 8.0)


def test_level_zero_is_boundary_only():
    for preset in ("interval", "sierpinski", "vicsek"):
        S = load_structure(preset)
        G = build_level(S, 0)
        assert G.n_cells == 1 and G.words == [()]
        assert G.n_vertices == S.n_boundary
        assert abs(G.cell_measures[0] - 1.0) < 1e-15
        assert abs(S.word_resistance(()) - 1.0) == 0.0


def test_sierpinski_level1():
    G = build_level(load_structure("sierpinski"), 1)
    assert G.n_vertices == 6 and G.n_cells == 3
    assert np.allclose(G.cell_measures, 1.0 / 3.0, atol=1e-15)


@pytest.mark.parametrize("m", range(8))
def test_sierpinski_vertex_count_formula(m):
    G = build_level(load_structure("sierpinski"), m)
    assert G.n_vertices == (3 ** (m + 1) + 3) // 2


@pytest.mark.parametrize(
    "preset, max_level",
    [("interval", 7), ("sierpinski", 7), ("vicsek", 6)],
)
def test_gluing_matches_coordinate_dedup(preset, max_level):
    S = load_structure(preset)
    for m in range(max_level + 1):
        G = build_level(S, m)
        uniq = np.unique(np.round(G.coords, 10), axis=0)
        assert uniq.shape[0] == G.n_vertices, f"{preset} level {m}"


def test_mass_and_measure_sums(stacks):
    for preset, m in (("interval", 6), ("sierpinski", 4), ("vicsek", 3)):
        G = stacks(preset, m).graph
        assert abs(G.cell_measures.sum() - 1.0) < 1e-12
        assert abs(G.vertex_mass.sum() - 1.0) < 1e-12


def test_budget_guard():
    with pytest.raises(BudgetError):
        build_level(load_structure("sierpinski"), 12)


def test_negative_level_rejected():
    with pytest.raises(StructureError):
        build_level(load_structure("interval"), -1)


def test_vertex_id_addresses(stacks):
    G = stacks("interval", 6).graph
    assert np.isclose(G.coords[G.vertex_id((0,), 1), 0], 0.5)
    assert np.isclose(G.coords[G.vertex_id((0, 0), 1), 0], 0.25)
    assert G.vertex_id((), 0) == G.boundary_ids[0]


# -- resistance metric ------------------------------------------------------------------


def test_interval_resistances(stacks):
    st = stacks("interval", 3)
    met = st.metric
    a, b = st.graph.boundary_ids
    mid = st.graph.vertex_id((0,), 1)
    assert abs(met.resistance(a, b) - 1.0) < 1e-10
    assert abs(met.resistance(a, mid) - 0.5) < 1e-10
    assert met.resistance(a, a) == 0.0
    assert met.matrix()[a, b] == pytest.approx(met.resistance(a, b), abs=1e-12)


def test_interval_metric_is_euclidean(stacks):
    st = stacks("interval", 6)
    R = st.metric.matrix()
    xs = st.graph.coords[:, 0]
    assert np.abs(R - np.abs(xs[:, None] - xs[None, :])).max() < 1e-9


def test_resistance_symmetry_and_triangle(stacks):
    st = stacks("sierpinski", 3)
    R = st.metric.matrix()
    assert np.abs(R - R.T).max() < 1e-12
    n = R.shape[0]
    idx = np.arange(0, n, 3)
    sub = R[np.ix_(idx, idx)]
    k = sub.shape[0]
    for i in range(k):
        for j in range(k):
            assert np.all(sub[i, j] <= sub[i, :] + sub[:, j] + 1e-9)


def test_resistance_contraction_per_cell(stacks):
    for preset, m in (("interval", 5), ("sierpinski", 4), ("vicsek", 3)):
        st = stacks(preset, m)
        R = st.metric.matrix()
        bid = st.graph.boundary_ids
        base = R[np.ix_(bid, bid)].max()
        for c in range(0, st.graph.n_cells, max(1, st.graph.n_cells // 16)):
            ids = st.graph.cells[c]
            rw = st.structure.word_resistance(st.graph.words[c])
            assert R[np.ix_(ids, ids)].max() <= rw * base + 1e-9


def test_boundary_resistance_matches_level_zero(stacks):
    for preset, m in (("interval", 5), ("sierpinski", 4), ("vicsek", 3)):
        st = stacks(preset, m)
        R0 = np.linalg.pinv(-np.asarray(st.structure.harmonic.D, float), hermitian=True)
        bid = st.graph.boundary_ids
        for a in range(st.structure.n_boundary):
            for b in range(a + 1, st.structure.n_boundary):
                expect = R0[a, a] + R0[b, b] - 2.0 * R0[a, b]
                assert st.metric.matrix()[bid[a], bid[b]] == pytest.approx(expect, abs=1e-9)


# -- balls and scaling ---------------------------------------------------------------------


def test_ball_trivial_cases(stacks):
    st = stacks("interval", 5)
    met = st.metric
    x = st.graph.vertex_id((0,), 1)
    ids, mass = met.ball(x, met.diameter() * 1.01)
    assert ids.size == st.graph.n_vertices and abs(mass - 1.0) < 1e-12
    row = met.from_vertex(x)
    ids, mass = met.ball(x, 0.5 * row[row > 0].min())
    assert ids.tolist() == [x]
    with pytest.raises(ValueError):
        met.ball(x, 0.0)


def test_interval_quarter_ball_mass(stacks):
    st = stacks("interval", 4)
    x = st.graph.vertex_id((0,), 1)
    ids, mass = st.metric.ball(x, 0.25)
    xs = st.graph.coords[ids, 0]
    assert xs.min() > 0.25 and xs.max() < 0.75
    assert mass == pytest.approx(7.0 / 16.0, abs=1e-12)


def test_interval_scaling_constants(stacks):
    st = stacks("interval", 6)
    h = 2.0**-6
    grid = [(j + 0.5) * h for j in (1, 2, 4, 8, 16)]
    rep = scaling_constants(st.metric, grid)
    assert rep.A1 >= 0.5 - 1e-12
    assert rep.A2 <= 2.0 + 1e-12
    assert not rep.degenerate


def test_scaling_degenerate_flag(stacks):
    st = stacks("interval", 4)
    rep = scaling_constants(st.metric, [st.metric.diameter() * 1.5])
    assert rep.degenerate
    assert rep.A1 == pytest.approx(rep.A2)


def test_sierpinski_scaling_bounded(stacks):
    st = stacks("sierpinski", 5)
    dia = st.metric.diameter()
    grid = np.geomspace(0.08 * dia, 0.5 * dia, 6)
    rep = scaling_constants(st.metric, grid, sample_vertices=range(0, st.graph.n_vertices, 7))
    assert 0.0 < rep.A1 <= rep.A2 < math.inf
    assert rep.A2 / rep.A1 < 40.0
    assert not rep.degenerate


def test_scaling_empty_grid_rejected(stacks):
    with pytest.raises(ValueError):
        scaling_constants(stacks("interval", 4).metric, [])


# -- measure self-similarity ------------------------------------------------------------


def test_cell_average_identity(stacks, rng):
    st = stacks("sierpinski", 4)
    G = st.graph
    f = rng.standard_normal(G.n_vertices)
    cellwise = float(np.sum(G.cell_measures * f[G.cells].mean(axis=1)))
    direct = float(np.sum(G.vertex_mass * f))
    assert cellwise == pytest.approx(direct, abs=1e-12)


def test_graph_export_csv(tmp_path, stacks):
    st = stacks("interval", 3)
    st.graph.export_csv(tmp_path)
    rows = (tmp_path / "vertices.csv").read_text().strip().splitlines()
    assert rows[0] == "vertex_id,x0,mass"
    assert len(rows) == 1 + st.graph.n_vertices
    cells = (tmp_path / "cells.csv").read_text().strip().splitlines()
    assert len(cells) == 1 + st.graph.n_cells
