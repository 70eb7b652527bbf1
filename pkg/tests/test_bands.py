import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracle
from diracgraph.bands import (
    CSV_COLUMNS,
    GNUPLOT_TEMPLATE,
    BandSet,
    alpha_grid,
    compute_bands,
    detect_crossings,
    export_bands,
    load_bands,
    summarize,
)
from diracgraph.errors import DomainError
from diracgraph.secular import SecularSystem


@pytest.fixture(scope="module")
def comb_bands():
    return compute_bands(SecularSystem.from_beta("comb", 1.3), 21, 10.0)


@given(st.integers(2, 400))
def test_alpha_grid_is_antisymmetric(steps):
    g = alpha_grid(steps)
    assert len(g) == steps
    assert (g == -g[::-1]).all()
    assert g[0] == -math.pi and g[-1] == math.pi


def test_alpha_grid_precondition():
    with pytest.raises(DomainError):
        alpha_grid(1)


def test_bands_are_symmetric_in_flux(comb_bands):
    for ks, mirror in zip(comb_bands.ks, comb_bands.ks[::-1]):
        assert len(ks) == len(mirror)
        assert np.allclose(ks, mirror, atol=1e-6)


def test_bands_match_oracle_columns(comb_bands):
    for a, ks in zip(comb_bands.alpha_grid, comb_bands.ks):
        want = oracle.dispersive_roots("comb", a, 1.3, 1.0, 10.0, k_min=1e-6)
        assert np.max(np.abs(ks - want), initial=0.0) < 1e-8


def test_energies_leave_the_mass_gap_empty(comb_bands):
    E = comb_bands.energies()
    finite = np.isfinite(E)
    K = comb_bands.band_matrix()
    assert np.allclose(E[finite], np.sqrt(K[finite] ** 2 + 1.0))
    assert (E[finite] > 1.0).all()
    assert (comb_bands.energies("negative")[finite] == -E[finite]).all()


def test_two_step_grid_has_two_columns():
    b = compute_bands(SecularSystem("comb"), 2, 6.0)
    assert list(b.alpha_grid) == [-math.pi, math.pi]
    assert np.allclose(b.ks[0], b.ks[1])
    with pytest.raises(DomainError):
        detect_crossings(b)


def test_compute_bands_preconditions():
    with pytest.raises(DomainError):
        compute_bands(SecularSystem("comb"), 1, 5.0)
    with pytest.raises(DomainError):
        compute_bands(SecularSystem("comb"), 5, 0.0)


def test_thread_count_does_not_change_bands():
    sys = SecularSystem.from_beta("ladder", 0.7)
    assert compute_bands(sys, 9, 8.0, threads=1) == compute_bands(sys, 9, 8.0, threads=3)


def test_degenerate_roots_fill_consecutive_band_indices():
    # odd step counts put alpha = 0 on the grid, where the printed ladder has doubled roots
    b = compute_bands(SecularSystem.from_beta("ladder", 2.5), 3, 8.0)
    mid = b.multiplicities[1]
    assert (mid > 1).any()
    points = b.points()
    assert len(points) == sum(len(k) for k in b.ks)
    doubled = [p for p in points if p.alpha == 0.0 and p.multiplicity == 2]
    assert len(doubled) % 2 == 0 and doubled[0].k == doubled[1].k


# -- serialization --------------------------------------------------------------------


def test_csv_round_trip(comb_bands):
    text = export_bands(comb_bands, "csv", header="diracgraph test")
    lines = text.splitlines()
    assert lines[0] == "# diracgraph test"
    assert lines[2] == ",".join(CSV_COLUMNS)
    assert len(lines) == 3 + len(comb_bands.points())
    back = load_bands(text, "csv")
    assert back == comb_bands
    assert back.geometry == comb_bands.geometry and back.k_max == comb_bands.k_max


def test_json_round_trip(comb_bands):
    text = export_bands(comb_bands, "json", header="note")
    back = load_bands(text, "json")
    assert back == comb_bands
    assert np.array_equal(back.alpha_grid, comb_bands.alpha_grid)


def test_csv_values_keep_full_precision(comb_bands):
    back = load_bands(export_bands(comb_bands), "csv")
    for a, b in zip(back.ks, comb_bands.ks):
        assert np.array_equal(a, b)


def test_empty_band_set_exports_header_only():
    empty = BandSet({"topology": "comb"}, alpha_grid(3), [np.array([])] * 3, [np.array([], dtype=int)] * 3)
    text = export_bands(empty)
    assert text.splitlines()[-1] == ",".join(CSV_COLUMNS)
    assert load_bands(text).points() == []


def test_unknown_format():
    b = BandSet({}, alpha_grid(2), [np.array([])] * 2, [np.array([], dtype=int)] * 2)
    with pytest.raises(DomainError):
        export_bands(b, "xml")
    with pytest.raises(DomainError):
        load_bands("", "xml")


def test_gnuplot_template_names_the_data():
    script = GNUPLOT_TEMPLATE.format(data="bands.csv")
    assert "'bands.csv'" in script and "plot" in script


# -- crossings on synthetic bands ----------------------------------------------------


def synthetic(lower, upper, steps=201):
    grid = alpha_grid(steps)
    ks = [np.sort([lower(a), upper(a)]) for a in grid]
    ms = [np.ones(2, dtype=int) for _ in grid]
    return BandSet({"topology": "synthetic"}, grid, ks, ms)


def test_parallel_bands_have_no_events():
    b = synthetic(lambda a: 2.0 + 0.1 * math.cos(a), lambda a: 3.0 + 0.1 * math.cos(a))
    assert detect_crossings(b) == []


def test_touching_bands_are_a_crossing():
    a0 = float(alpha_grid(201)[130])
    b = synthetic(lambda a: 2.0 + 0.2 * (a - a0), lambda a: 2.0 - 0.2 * (a - a0))
    events = detect_crossings(b)
    assert [e.kind for e in events] == ["crossing"]
    assert events[0].alpha == pytest.approx(a0, abs=1e-12)
    assert events[0].band_pair == (0, 1)


@pytest.mark.parametrize("gap, kind", [(5e-5, "avoided"), (5e-7, "crossing"), (5e-3, None)])
def test_hyperbolic_gap_is_classified_by_thresholds(gap, kind):
    a0 = float(alpha_grid(201)[70])

    def half(a):
        return 0.5 * math.hypot(0.4 * (a - a0), gap)

    b = synthetic(lambda a: 2.0 - half(a), lambda a: 2.0 + half(a))
    kinds = [e.kind for e in detect_crossings(b)]
    assert kinds == ([kind] if kind else [])


def test_minimum_on_grid_edge_is_unresolved():
    b = synthetic(lambda a: 2.0 - 0.1 * (math.pi - a), lambda a: 2.0 + 0.1 * (math.pi - a), steps=31)
    assert [e.kind for e in detect_crossings(b)] == ["unresolved"]


def test_threshold_order_is_checked():
    b = synthetic(lambda a: 1.0, lambda a: 2.0, steps=5)
    with pytest.raises(DomainError):
        detect_crossings(b, delta_cross=1e-3, delta_avoid=1e-4)


# -- crossings on real lattices ------------------------------------------------------


def crossing_points(events):
    return sorted((round(e.alpha, 6), round(e.k, 6)) for e in events if e.kind == "crossing")


def test_loop_levels_cross_at_ring_states():
    events = detect_crossings(compute_bands(SecularSystem.from_beta("loop", 0.2), 40, 7.0))
    pts = crossing_points(events)
    assert pts
    for a, k in pts:
        # dispersive bands meet the flux-independent ring states k = n pi
        assert min(abs(k - n * math.pi) for n in (1, 2)) < 1e-6
        assert min(abs(abs(a) - f * math.pi) for f in (0.4, 0.8)) < 1e-6
    assert all(e.min_gap < 1e-6 for e in events if e.kind == "crossing")


def test_loop_crossings_are_stable_under_grid_refinement():
    sys = SecularSystem.from_beta("loop", 0.2)
    coarse = crossing_points(detect_crossings(compute_bands(sys, 40, 7.0)))
    fine = crossing_points(detect_crossings(compute_bands(sys, 80, 7.0)))
    assert coarse == fine


def test_comb_crossing_for_long_spine():
    events = detect_crossings(compute_bands(SecularSystem.from_beta("comb", 2.5), 41, 13.0))
    pts = crossing_points(events)
    assert (0.0, round(4 * math.pi, 6)) in pts


def test_summary_counts_kinds():
    a0 = float(alpha_grid(201)[130])
    b = synthetic(lambda a: 2.0 + 0.2 * (a - a0), lambda a: 2.0 - 0.2 * (a - a0))
    assert summarize(detect_crossings(b)) == {"crossing": 1, "avoided": 0, "unresolved": 0}
