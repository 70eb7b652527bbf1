import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from diracgraph.cells import CellSpec, comb_cell, ladder_cell, loop_cell, star_cell, two_rail_ladder_cell
from diracgraph.core import (
    BondAmplitude,
    DispersionModel,
    assemble_cell_system,
    boundary_condition_residual,
    boundary_traces,
    chi_row_mask,
    energy,
    gamma,
    nullspace_amplitudes,
    plane_wave,
    skew_form_residual,
)
from diracgraph.errors import AssemblyError, DomainError, NotAnEigenvalueError, ShapeError
from diracgraph.secular import find_roots_k
from diracgraph.validate import AssembledSystem

wavenumbers = st.floats(min_value=1e-8, max_value=1e6, allow_nan=False)


@given(wavenumbers)
def test_gamma_matches_both_forms(k):
    E = energy(k)
    g = gamma(k)
    assert 0 < g < 1
    assert math.isclose(g, k / (E + 1), rel_tol=1e-15)
    if k > 1e-3:
        # (E - 1)/k cancels badly for small k, so only compare away from zero
        assert math.isclose(g, (E - 1) / k, rel_tol=1e-9)
        assert math.isclose(g * g, (E - 1) / (E + 1), rel_tol=1e-9)


@given(wavenumbers)
def test_energy_branches_mirror(k):
    assert energy(k, "negative") == -energy(k, "positive")
    assert energy(k) >= 1.0


def test_gamma_rejects_nonpositive_k():
    for bad in (0.0, -1.0, float("nan")):
        with pytest.raises(DomainError):
            gamma(bad)


def test_unknown_branch():
    with pytest.raises(DomainError):
        energy(1.0, "up")
    with pytest.raises(DomainError):
        DispersionModel(1.0, "sideways")


def test_dispersion_model_delegates():
    m = DispersionModel(0.75, "negative")
    assert m.energy == -1.25
    assert m.gamma == pytest.approx(0.75 / 2.25)


@settings(max_examples=60)
@given(
    k=st.floats(0.05, 30.0),
    x_frac=st.floats(0.05, 0.95),
    mu=st.complex_numbers(max_magnitude=3.0),
    mu_hat=st.complex_numbers(max_magnitude=3.0),
)
def test_plane_wave_solves_free_equation(k, x_frac, mu, mu_hat):
    """Central differences of the spinor satisfy -chi' + phi = E phi and phi' - chi = E chi."""
    L = 1.3
    amp = BondAmplitude(mu, mu_hat, "b", L)
    x = x_frac * L
    h = 1e-5
    lo, mid, hi = (plane_wave(amp, k, t) for t in (x - h, x, x + h))
    E = energy(k)
    scale = (abs(mu) + abs(mu_hat) + 1e-12) * k * k
    assert abs(-(hi.chi - lo.chi) / (2 * h) + mid.phi - E * mid.phi) <= 1e-6 * scale
    assert abs((hi.phi - lo.phi) / (2 * h) - mid.chi - E * mid.chi) <= 1e-6 * scale


def test_plane_wave_domain():
    amp = BondAmplitude(1, 0, "b", 1.0)
    with pytest.raises(DomainError):
        plane_wave(amp, 1.0, 1.5)


def test_skew_form_is_antisymmetric_under_swap():
    rng = np.random.default_rng(3)
    cell = comb_cell(0.7, 1.0)
    a = boundary_traces(cell, 2.0, rng.normal(size=6) + 1j * rng.normal(size=6))
    b = boundary_traces(cell, 2.0, rng.normal(size=6) + 1j * rng.normal(size=6))
    assert skew_form_residual(a, b) == pytest.approx(-np.conj(skew_form_residual(b, a)), abs=1e-12)


def test_skew_form_length_mismatch():
    cell = comb_cell(0.7, 1.0)
    t = boundary_traces(cell, 2.0, np.ones(6))
    with pytest.raises(ShapeError):
        skew_form_residual(t, t[:2])


@pytest.mark.parametrize("cell", [comb_cell(0.7, 1.0), ladder_cell(1.3, 1.0), loop_cell(0.4, 1.0), two_rail_ladder_cell(0.9, 1.0)],
                         ids=lambda c: c.name)
def test_eigenstates_satisfy_their_conditions_and_the_form_vanishes(cell):
    system = AssembledSystem(cell)
    alpha = 0.83
    states = []
    for r in find_roots_k(system, alpha, (1e-3, 10.0)):
        ns = nullspace_amplitudes(system.matrix(r.k, alpha), tol=1e-6)
        for c in ns.basis:
            traces = boundary_traces(cell, r.k, c / np.linalg.norm(c))
            assert boundary_condition_residual(cell, traces, alpha) < 1e-9
            states.append(traces)
    assert len(states) >= 5
    for a in states:
        for b in states:
            assert abs(skew_form_residual(a, b)) < 1e-10


def test_flipped_current_row_breaks_the_form():
    system = AssembledSystem(comb_cell(0.7, 1.0), flux_current_sign=-1.0)
    alpha = 0.83
    states = []
    for r in find_roots_k(system, alpha, (1e-3, 10.0)):
        c = nullspace_amplitudes(system.matrix(r.k, alpha), tol=1e-6).vector
        states.append(boundary_traces(system.cell, r.k, c / np.linalg.norm(c)))
    worst = max(abs(skew_form_residual(a, b)) for a in states for b in states)
    assert worst > 1e-3


def test_assembled_shapes_and_masks():
    cell = loop_cell(0.5, 1.0)
    M = assemble_cell_system(cell, np.array([1.0, 2.0, 3.0]), 0.2)
    assert M.shape == (3, 8, 8)
    mask = chi_row_mask(cell)
    assert mask.sum() == 3  # two kirchhoff vertices and one flux pair
    assert assemble_cell_system(star_cell([1.0, 2.0]), 1.0, 0.0).shape == (4, 4)


def test_assembler_rejects_nonpositive_k():
    with pytest.raises(DomainError):
        assemble_cell_system(comb_cell(1, 1), 0.0, 0.0)


def test_nullspace_reports_multiplicity():
    M = np.diag([1.0, 0.0, 0.0])
    ns = nullspace_amplitudes(M)
    assert ns.multiplicity == 2 and ns.degenerate
    with pytest.raises(NotAnEigenvalueError):
        nullspace_amplitudes(np.eye(3))
    with pytest.raises(ShapeError):
        nullspace_amplitudes(np.ones((2, 3)))


# -- cells ----------------------------------------------------------------------------


def test_cell_json_round_trip(tmp_path):
    cell = loop_cell(0.4, 1.0, 1.2)
    path = tmp_path / "loop.json"
    path.write_text(cell.dumps())
    back = CellSpec.load(path)
    assert back == cell
    C = back.adjacency()
    assert (C == C.T).all()
    # the two ring arcs are parallel bonds and share one adjacency entry
    assert C.sum() == 2 * (cell.n_bonds - 1)


def test_cell_vertices_may_be_addressed_by_position():
    doc = json.loads(comb_cell(1.0, 1.0).dumps())
    for v in doc["vertices"]:
        v.pop("id")
    doc["flux_pairs"] = [[2, 3]]
    assert CellSpec.from_dict(doc).flux_pairs == ((2, 3),)


@pytest.mark.parametrize(
    "mutate, message",
    [
        (lambda d: d["bonds"].append({"id": "b", "length": 1.0}), "duplicate"),
        (lambda d: d["bonds"][0].update(length=-1.0), "positive"),
        (lambda d: d["vertices"][0].update(role="magic"), "role"),
        (lambda d: d["vertices"][1]["attached"].append(["b-", "0"]), "dead end"),
        (lambda d: d["vertices"][0]["attached"].pop(), "unattached"),
        (lambda d: d.update(flux_pairs=[]), "flux pair"),
        (lambda d: d.update(flux_pairs=[["left", "nowhere"]]), "unknown vertex"),
    ],
)
def test_malformed_cells_are_rejected(mutate, message):
    doc = json.loads(comb_cell(1.0, 1.0).dumps())
    mutate(doc)
    with pytest.raises(AssemblyError, match=message):
        CellSpec.from_dict(doc)


def test_load_rejects_bad_json(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    with pytest.raises(AssemblyError):
        CellSpec.load(path)
