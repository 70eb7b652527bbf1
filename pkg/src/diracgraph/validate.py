"""Self-checks run by ``diracgraph validate``.

Each check returns a :class:`Check` with status ``pass``, ``fail``,
``best-effort`` (a comparison that is reported but never fails) or
``skipped``.  The suite stops at nothing: every check runs and the caller
decides what a failure means.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .cells import CellSpec, comb_cell, ladder_cell, loop_cell
from .core import (
    BondAmplitude,
    assemble_cell_system,
    boundary_condition_residual,
    boundary_traces,
    energy,
    gamma,
    nullspace_amplitudes,
    plane_wave,
    skew_form_residual,
)
from .errors import UnsupportedReductionError
from .secular import (
    TWO_PI,
    SecularSystem,
    StarSecularSystem,
    alpha_polynomial,
    find_roots_k,
    secular_value,
)
from .torus import TorusPoint, alpha_scan_membership, membership, phi, probability

ORACLE_TOL = 1e-8
SYMMETRY_TOL = 1e-6
SKEW_TOL = 1e-10
AUDIT_ALPHAS = (0.0, math.pi / 3, math.pi)


@dataclass(frozen=True)
class Check:
    name: str
    status: str
    value: float
    limit: float
    detail: str = ""

    @property
    def ok(self) -> bool:
        return self.status != "fail"


def _status(value: float, limit: float) -> str:
    return "pass" if value < limit else "fail"


class AssembledSystem:
    """Boundary-condition system of a cell, usable wherever a secular system is."""

    def __init__(self, cell: CellSpec, flux_current_sign: float = 1.0):
        self.cell = cell
        self.flux_current_sign = flux_current_sign

    @property
    def total_length(self) -> float:
        return float(self.cell.lengths.sum())

    def matrix(self, k, alpha):
        return assemble_cell_system(self.cell, k, alpha, self.flux_current_sign)


def oracle_cell(sys: SecularSystem) -> CellSpec | None:
    """Cell whose assembled boundary system should reproduce a printed matrix."""
    if sys.topology == "comb":
        return comb_cell(sys.l1, sys.l2)
    if sys.topology == "ladder":
        return ladder_cell(sys.l1, sys.l2)
    if sys.topology == "loop":
        return loop_cell(sys.l1, sys.l2, sys.l3_eff)
    return sys.cell


def expanded_roots(system, alpha: float, k_max: float, k_min: float = 1e-6) -> np.ndarray:
    """Roots repeated by multiplicity."""
    ks = []
    for r in find_roots_k(system, alpha, (k_min, k_max)):
        if not r.flat:
            ks += [r.k] * max(1, r.multiplicity)
    return np.array(ks)


def root_set_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Largest root-for-root difference; infinite when the counts differ."""
    if len(a) != len(b):
        return math.inf
    if len(a) == 0:
        return 0.0
    return float(np.abs(np.sort(a) - np.sort(b)).max())


# -- individual checks ------------------------------------------------------------


def check_gamma(rng: np.random.Generator) -> Check:
    k = np.concatenate([rng.uniform(1e-6, 1.0, 200), rng.uniform(1.0, 1e4, 200)])
    E = energy(k)
    g = gamma(k)
    worst = max(
        float(np.abs(g * k - (E - 1.0)).max() / E.max()),
        float(np.abs(g * g - (E - 1.0) / (E + 1.0)).max()),
        float(np.abs(E * E - k * k - 1.0).max() / (E * E).max()),
        float(np.abs(energy(k, "negative") + E).max()),
    )
    bounded = bool(np.all((g > 0) & (g < 1)))
    return Check("gamma identities", "pass" if bounded and worst < 1e-12 else "fail", worst, 1e-12)


def check_plane_wave(rng: np.random.Generator, cases: int = 50) -> Check:
    """Bond spinors solve the free Dirac equation (central differences)."""
    worst = 0.0
    h = 1e-5
    for _ in range(cases):
        k = float(rng.uniform(0.05, 20.0))
        L = float(rng.uniform(0.5, 2.0))
        mu, mu_hat = rng.normal(size=2) + 1j * rng.normal(size=2)
        amp = BondAmplitude(complex(mu), complex(mu_hat), "b", L)
        x = float(rng.uniform(h, L - h))
        lo, mid, hi = (plane_wave(amp, k, t) for t in (x - h, x, x + h))
        dphi = (hi.phi - lo.phi) / (2 * h)
        dchi = (hi.chi - lo.chi) / (2 * h)
        E = energy(k)
        r1 = -dchi + mid.phi - E * mid.phi
        r2 = dphi - mid.chi - E * mid.chi
        size = abs(mu) + abs(mu_hat)
        worst = max(worst, abs(r1) / (size * k * k), abs(r2) / (size * k * k))
    return Check("plane-wave residual", _status(worst, 1e-6), worst, 1e-6)


def eigenstates(system: AssembledSystem, alpha: float, k_max: float = 12.0):
    """``(k, traces)`` for every root of the assembled cell at ``alpha``."""
    cell = system.cell
    out = []
    for r in find_roots_k(system, alpha, (1e-3, k_max)):
        if r.flat:
            continue
        ns = nullspace_amplitudes(system.matrix(r.k, alpha), tol=1e-6)
        for c in ns.basis:
            out.append((r.k, boundary_traces(cell, r.k, c / np.linalg.norm(c))))
    return out


def check_skew_form(
    sys: SecularSystem,
    rng: np.random.Generator,
    pairs: int = 100,
    flux_current_sign: float = 1.0,
) -> Check:
    """Boundary form vanishes on pairs of eigenstates sharing a flux."""
    cell = oracle_cell(sys)
    system = AssembledSystem(cell, flux_current_sign)
    worst_form = worst_bc = 0.0
    done = 0
    while done < pairs:
        alpha = float(rng.uniform(-math.pi, math.pi))
        states = eigenstates(system, alpha)
        if not states:
            continue
        for _ in range(min(10, pairs - done)):
            (k1, t1), (k2, t2) = (states[j] for j in rng.integers(len(states), size=2))
            worst_form = max(worst_form, abs(skew_form_residual(t1, t2)))
            done += 1
        if flux_current_sign == 1.0:
            worst_bc = max(worst_bc, max(boundary_condition_residual(cell, t, alpha) for _, t in states))
    detail = f"{done} pairs on the {cell.name} cell"
    if worst_bc > 1e-8:
        return Check("skew-form residual", "fail", worst_bc, 1e-8, detail + "; eigenstates violate their conditions")
    return Check("skew-form residual", _status(worst_form, SKEW_TOL), worst_form, SKEW_TOL, detail)


def check_oracle(sys: SecularSystem, k_max: float = 20.0, k_min: float = 1e-3) -> Check:
    """Printed matrix against the assembled boundary system, root for root.

    Distinct roots are compared; multiplicities that disagree are counted
    in the detail column.  The scan starts just above zero because the
    assembled system scales its chi rows by ``gamma(k) -> 0``, which makes
    the ``k = 0`` state at zero flux look like a cluster of tiny roots.
    """
    if sys.topology == "custom":
        return Check("oracle equivalence", "skipped", 0.0, ORACLE_TOL, "custom cells are their own oracle")
    oracle = AssembledSystem(oracle_cell(sys))
    worst = 0.0
    mult = 0
    for a in AUDIT_ALPHAS:
        mine = find_roots_k(sys, a, (k_min, k_max))
        theirs = find_roots_k(oracle, a, (k_min, k_max))
        worst = max(worst, root_set_distance(np.array([r.k for r in mine]), np.array([r.k for r in theirs])))
        if len(mine) == len(theirs):
            mult += sum(r.multiplicity != q.multiplicity for r, q in zip(mine, theirs))
    status = _status(worst, ORACLE_TOL)
    if sys.topology == "loop":
        status = "best-effort"
    detail = f"k in ({k_min:g}, {k_max:g}], alpha in {{0, pi/3, pi}}"
    if mult:
        detail += f"; {mult} roots differ in multiplicity"
    return Check("oracle equivalence", status, worst, ORACLE_TOL, detail)


def check_alpha_symmetry(sys: SecularSystem, rng: np.random.Generator, k_max: float = 20.0) -> Check:
    worst = 0.0
    for a in (math.pi / 5, math.pi / 3, 2 * math.pi / 3, 0.9 * math.pi):
        worst = max(worst, root_set_distance(expanded_roots(sys, a, k_max), expanded_roots(sys, -a, k_max)))
    k = rng.uniform(0.1, 50.0, 200)
    al = rng.uniform(-math.pi, math.pi, 200)
    F = secular_value(sys, k, al)
    period = float(np.abs(secular_value(sys, k, al + TWO_PI) - F).max() / max(1.0, np.abs(F).max()))
    value = max(worst, period)
    return Check("flux symmetries", _status(value, SYMMETRY_TOL), value, SYMMETRY_TOL, "alpha -> -alpha and 2pi period")


def check_star(levels: int = 10) -> Check:
    roots = find_roots_k(StarSecularSystem((1.0,)), 0.0, (1e-6, (levels + 0.25) * math.pi))
    ks = np.array([r.k for r in roots])
    expect = (np.arange(levels) + 0.5) * math.pi
    if len(ks) != levels:
        return Check("star N=1 roots", "fail", math.inf, 1e-10, f"found {len(ks)} roots, expected {levels}")
    err = float(np.abs(ks - expect).max())
    return Check("star N=1 roots", _status(err, 1e-10), err, 1e-10)


def check_polynomial(sys: SecularSystem, rng: np.random.Generator, cases: int = 20) -> Check:
    """Polynomial in z reproduces F, and its Laurent form reproduces the polynomial."""
    worst = 0.0
    for _ in range(cases):
        k = float(rng.uniform(0.1, 30.0))
        p = alpha_polynomial(sys, k=k)
        al = rng.uniform(-math.pi, math.pi, 8)
        F = secular_value(sys, np.full(8, k), al)
        scale = max(1.0, float(np.abs(F).max()))
        worst = max(worst, float(np.abs(p(al) - F).max()) / scale)
        z = np.exp(1j * al)
        laurent = sum(c * z**d for d, c in p.laurent().items())
        worst = max(worst, float(np.abs(laurent - p(al)).max()) / scale)
    return Check("alpha polynomial round trip", _status(worst, 1e-10), worst, 1e-10)


def check_torus_reduction(sys: SecularSystem, rng: np.random.Generator, cases: int = 1000) -> Check:
    try:
        sys.check_torus()
    except UnsupportedReductionError as exc:
        return Check("torus reduction", "skipped", 0.0, 1e-12, str(exc))
    k = rng.uniform(0.01, 100.0, cases)
    al = rng.uniform(-math.pi, math.pi, cases)
    worst = 0.0
    for kk, a in zip(k, al):
        F = secular_value(sys, kk, a)
        P = phi(sys, TorusPoint.from_k(sys, kk), a)
        worst = max(worst, abs(P - F) / max(1.0, abs(F)))
    return Check("torus reduction", _status(worst, 1e-12), worst, 1e-12, f"{cases} random (k, alpha)")


def check_membership_audit(sys: SecularSystem, rng: np.random.Generator, points: int = 40) -> Check:
    """Polynomial membership against a dense flux scan at random torus points."""
    try:
        sys.check_torus()
    except UnsupportedReductionError as exc:
        return Check("membership audit", "skipped", 0.0, 1.0, str(exc))
    mismatched = 0
    for k1, k2 in rng.uniform(0.0, TWO_PI, (points, 2)):
        pt = TorusPoint(k1, k2)
        if membership(sys, pt).in_spectrum != alpha_scan_membership(sys, pt):
            mismatched += 1
    return Check("membership audit", "pass" if mismatched == 0 else "fail", mismatched, 1, f"{points} torus points")


def check_probability_stability(sys: SecularSystem, coarse: int = 128) -> Check:
    try:
        sys.check_torus()
    except UnsupportedReductionError as exc:
        return Check("probability refinement", "skipped", 0.0, 0.01, str(exc))
    p1 = probability(sys, coarse).p_sigma
    p2 = probability(sys, 2 * coarse).p_sigma
    diff = abs(p1 - p2)
    return Check("probability refinement", _status(diff, 0.01), diff, 0.01, f"grid {coarse} vs {2 * coarse}")


# -- the suite --------------------------------------------------------------------


def run_checks(sys: SecularSystem, seed: int = 0, flux_current_sign: float = 1.0) -> list[Check]:
    """Every check in a fixed order.

    ``flux_current_sign = -1`` corrupts the quasiperiodic current row of the
    assembled cell so that the skew-form check has something to catch.
    """
    rng = np.random.default_rng(seed)
    steps: list[Callable[[], Check]] = [
        lambda: check_gamma(rng),
        lambda: check_plane_wave(rng),
        lambda: check_skew_form(sys, rng, flux_current_sign=flux_current_sign),
        lambda: check_oracle(sys),
        lambda: check_alpha_symmetry(sys, rng),
        lambda: check_star(),
        lambda: check_polynomial(sys, rng),
        lambda: check_torus_reduction(sys, rng),
        lambda: check_membership_audit(sys, rng),
        lambda: check_probability_stability(sys),
    ]
    return [step() for step in steps]


def format_table(checks: list[Check]) -> str:
    width = max(len(c.name) for c in checks)
    lines = [f"{'check':<{width}}  {'status':<11}  {'value':>10}  {'limit':>8}  detail"]
    for c in checks:
        lines.append(f"{c.name:<{width}}  {c.status:<11}  {c.value:>10.3g}  {c.limit:>8.1g}  {c.detail}")
    return "\n".join(lines)
