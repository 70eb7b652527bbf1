"""Dirac kinematics, plane-wave spinors and the boundary-condition assembler.

Units are hbar = m = c = 1.  On every bond the spinor ``(phi, chi)`` solves

    -chi' + phi = E phi,     phi' - chi = E chi,

whose positive-energy solutions are superpositions of ``(1, +i*gamma) e^{ikx}``
and ``(1, -i*gamma) e^{-ikx}`` with ``E = sqrt(k^2 + 1)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .cells import CellSpec
from .errors import AssemblyError, DomainError, NotAnEigenvalueError, ShapeError


@dataclass(frozen=True)
class DispersionModel:
    k: float
    energy_branch: str = "positive"

    def __post_init__(self):
        if self.energy_branch not in ("positive", "negative"):
            raise DomainError(f"energy_branch must be 'positive' or 'negative', got {self.energy_branch!r}")

    @property
    def energy(self) -> float:
        return energy(self.k, self.energy_branch)

    @property
    def gamma(self) -> float:
        return gamma(self.k)


class SpinorValue(NamedTuple):
    phi: complex
    chi: complex


@dataclass(frozen=True)
class BondAmplitude:
    mu: complex
    mu_hat: complex
    bond_id: str
    length: float


def _k_of(k_or_model):
    return k_or_model.k if isinstance(k_or_model, DispersionModel) else k_or_model


def gamma(k):
    """Spinor ratio ``(E - 1)/k``, evaluated as ``k/(E + 1)`` to avoid cancellation."""
    k = np.asarray(_k_of(k), dtype=float)
    if np.any(~(k > 0)):
        raise DomainError("gamma(k) requires k > 0")
    g = k / (np.sqrt(k * k + 1.0) + 1.0)
    return float(g) if g.ndim == 0 else g


def energy(k, branch: str = "positive"):
    """``+sqrt(k^2 + 1)``, or its mirror image on the negative branch."""
    if isinstance(k, DispersionModel):
        branch = k.energy_branch
    k = np.asarray(_k_of(k), dtype=float)
    E = np.sqrt(k * k + 1.0)
    if branch == "negative":
        E = -E
    elif branch != "positive":
        raise DomainError(f"unknown energy branch {branch!r}")
    return float(E) if E.ndim == 0 else E


def plane_wave(amp: BondAmplitude, k, x: float) -> SpinorValue:
    """Evaluate the bond spinor at coordinate ``x`` in ``[0, amp.length]``."""
    if not (-1e-12 <= x <= amp.length * (1 + 1e-12) + 1e-12):
        raise DomainError(f"x={x} outside bond {amp.bond_id!r} of length {amp.length}")
    k = _k_of(k)
    g = gamma(k)
    ep = np.exp(1j * k * x)
    em = np.exp(-1j * k * x)
    return SpinorValue(amp.mu * ep + amp.mu_hat * em, 1j * g * (amp.mu * ep - amp.mu_hat * em))


# -- boundary traces and the skew-Hermitian form -----------------------------

Trace = tuple[SpinorValue, SpinorValue]  # values at x = 0 and x = L


def amplitudes_from_vector(cell: CellSpec, c: np.ndarray) -> list[BondAmplitude]:
    c = np.asarray(c)
    if c.shape != (2 * cell.n_bonds,):
        raise ShapeError(f"expected {2 * cell.n_bonds} amplitudes, got shape {c.shape}")
    return [BondAmplitude(complex(c[2 * i]), complex(c[2 * i + 1]), b.id, b.length) for i, b in enumerate(cell.bonds)]


def boundary_traces(cell: CellSpec, k, c: np.ndarray) -> list[Trace]:
    """Spinor values at both ends of every bond for amplitude vector ``c``."""
    return [(plane_wave(a, k, 0.0), plane_wave(a, k, a.length)) for a in amplitudes_from_vector(cell, c)]


def skew_form_residual(left_state: Sequence[Trace], right_state: Sequence[Trace]) -> complex:
    """Boundary form ``<D psi, phi> - <psi, D phi>`` reduced to bond-end traces.

    Both arguments hold one ``(value at 0, value at L)`` pair per bond.
    """
    if len(left_state) != len(right_state):
        raise ShapeError(f"trace lists differ in length: {len(left_state)} vs {len(right_state)}")
    total = 0j
    for (a0, aL), (b0, bL) in zip(left_state, right_state):
        phi0, chi0 = a0
        phiL, chiL = aL
        u0, v0 = b0
        uL, vL = bL
        total += (
            phi0 * np.conj(v0)
            - phiL * np.conj(vL)
            - chi0 * np.conj(u0)
            + chiL * np.conj(uL)
        )
    return complex(total)


def boundary_condition_residual(cell: CellSpec, traces: Sequence[Trace], alpha: float) -> float:
    """Largest violation of the cell's vertex and quasiperiodic conditions.

    Works on spinor traces directly, independently of the assembled matrix.
    """
    if len(traces) != cell.n_bonds:
        raise ShapeError("one trace per bond required")
    z = np.exp(1j * alpha)

    def end(bid, e):
        i = cell.bond_index(bid)
        val = traces[i][0 if e == "0" else 1]
        return val, (1.0 if e == "0" else -1.0)

    worst = 0.0
    paired = {v for pair in cell.flux_pairs for v in pair}
    for vi, v in enumerate(cell.vertices):
        if vi in paired:
            continue
        vals = [end(bid, e) for bid, e in v.attached]
        if v.role == "kirchhoff":
            phis = [s.phi for s, _ in vals]
            worst = max(worst, max(abs(p - phis[0]) for p in phis))
            worst = max(worst, abs(sum(o * s.chi for s, o in vals)))
        elif v.role == "dead_end_chi":
            worst = max(worst, abs(vals[0][0].chi))
        elif v.role == "dead_end_phi":
            worst = max(worst, abs(vals[0][0].phi))
    for left, right in cell.flux_pairs:
        lv = [end(bid, e) for bid, e in cell.vertices[left].attached]
        rv = [end(bid, e) for bid, e in cell.vertices[right].attached]
        phis = [s.phi for s, _ in rv] + [z * s.phi for s, _ in lv]
        worst = max(worst, max(abs(p - phis[0]) for p in phis))
        current = sum(o * s.chi for s, o in rv) + z * sum(o * s.chi for s, o in lv)
        worst = max(worst, abs(current))
    return float(worst)


# -- assembly -----------------------------------------------------------------


def assemble_from_phases(
    cell: CellSpec,
    bond_phases,
    z,
    gamma_value: float = 1.0,
    flux_current_sign: float = 1.0,
) -> np.ndarray:
    """Boundary system with bond-end phases ``exp(i k L_b)`` supplied directly.

    ``bond_phases`` may carry leading batch dimensions (shape ``(..., n_bonds)``),
    in which case ``z`` must broadcast against them and the result has shape
    ``(..., 2n, 2n)``.  ``flux_current_sign = -1`` flips the sign of the
    quasiperiodic current row; it exists for mutation testing only.
    """
    w = np.asarray(bond_phases, dtype=complex)
    if w.shape[-1] != cell.n_bonds:
        raise ShapeError(f"expected {cell.n_bonds} bond phases, got {w.shape[-1]}")
    z = np.asarray(z, dtype=complex)
    batch = np.broadcast_shapes(w.shape[:-1], z.shape)
    w = np.broadcast_to(w, batch + (cell.n_bonds,))
    z = np.broadcast_to(z, batch)
    n = 2 * cell.n_bonds
    one = np.ones(batch, dtype=complex)
    ig = 1j * gamma_value

    def phi_row(bid, e, factor=one):
        i = cell.bond_index(bid)
        r = np.zeros(batch + (n,), dtype=complex)
        if e == "0":
            r[..., 2 * i] = factor
            r[..., 2 * i + 1] = factor
        else:
            r[..., 2 * i] = factor * w[..., i]
            r[..., 2 * i + 1] = factor / w[..., i]
        return r

    def chi_row(bid, e, factor=one):
        # outward orientation: +chi at x = 0, -chi at x = L
        i = cell.bond_index(bid)
        r = np.zeros(batch + (n,), dtype=complex)
        if e == "0":
            r[..., 2 * i] = ig * factor
            r[..., 2 * i + 1] = -ig * factor
        else:
            r[..., 2 * i] = -ig * factor * w[..., i]
            r[..., 2 * i + 1] = ig * factor / w[..., i]
        return r

    rows = []
    paired = {v for pair in cell.flux_pairs for v in pair}
    for vi, v in enumerate(cell.vertices):
        if vi in paired:
            continue
        if v.role == "kirchhoff":
            ends = v.attached
            for a, b in zip(ends[:-1], ends[1:]):
                rows.append(phi_row(*a) - phi_row(*b))
            rows.append(sum(chi_row(*e) for e in ends))
        elif v.role == "dead_end_chi":
            rows.append(chi_row(*v.attached[0]))
        elif v.role == "dead_end_phi":
            rows.append(phi_row(*v.attached[0]))
    for left, right in cell.flux_pairs:
        ends = [(e, one) for e in cell.vertices[right].attached]
        ends += [(e, z) for e in cell.vertices[left].attached]
        for (a, fa), (b, fb) in zip(ends[:-1], ends[1:]):
            rows.append(phi_row(*a, fa) - phi_row(*b, fb))
        rows.append(
            sum(chi_row(*e) for e in cell.vertices[right].attached)
            + flux_current_sign * sum(chi_row(*e, z) for e in cell.vertices[left].attached)
        )
    if len(rows) != n:
        raise AssemblyError(f"cell {cell.name!r} yields {len(rows)} equations for {n} amplitudes")
    return np.stack(rows, axis=-2)


def assemble_cell_system(cell: CellSpec, k, alpha, flux_current_sign: float = 1.0) -> np.ndarray:
    """Homogeneous system ``M(k; alpha) c = 0`` in the amplitudes ``(mu_b, mu_hat_b)``.

    Amplitudes follow the cell's bond declaration order with ``mu`` and
    ``mu_hat`` adjacent.  Rows: vertices in declaration order (kirchhoff:
    phi continuity chain then the chi sum; dead ends: one row), then one
    continuity chain and one current row per flux pair.
    """
    k = np.asarray(k, dtype=float)
    if np.any(~(k > 0)):
        raise DomainError("assemble_cell_system requires k > 0")
    phases = np.exp(1j * k[..., None] * cell.lengths)
    z = np.exp(1j * np.asarray(alpha, dtype=float))
    M = assemble_from_phases(cell, phases, z, 1.0, flux_current_sign)
    g = np.asarray(gamma(k))
    scale = np.where(chi_row_mask(cell), g[..., None], 1.0)
    return M * scale[..., :, None]


def chi_row_mask(cell: CellSpec) -> np.ndarray:
    """True for rows of the assembled system that constrain chi."""
    mask = []
    paired = {v for pair in cell.flux_pairs for v in pair}
    for vi, v in enumerate(cell.vertices):
        if vi in paired:
            continue
        if v.role == "kirchhoff":
            mask += [False] * (len(v.attached) - 1) + [True]
        else:
            mask.append(v.role == "dead_end_chi")
    for left, right in cell.flux_pairs:
        m = len(cell.vertices[left].attached) + len(cell.vertices[right].attached)
        mask += [False] * (m - 1) + [True]
    return np.array(mask, dtype=bool)


class NullSpace(NamedTuple):
    vector: np.ndarray
    multiplicity: int
    basis: np.ndarray
    singular_values: np.ndarray

    @property
    def degenerate(self) -> bool:
        return self.multiplicity > 1


def nullspace_amplitudes(M: np.ndarray, tol: float = 1e-8) -> NullSpace:
    """Unit null vector of a rank-deficient ``M`` (tolerance relative to sigma_max)."""
    M = np.asarray(M, dtype=complex)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ShapeError(f"square matrix required, got shape {M.shape}")
    _, s, vh = np.linalg.svd(M)
    scale = s[0] if s[0] > 0 else 1.0
    small = s <= tol * scale
    if not small[-1]:
        raise NotAnEigenvalueError(f"smallest singular value {s[-1]:.3e} exceeds {tol:.1e} x {scale:.3e}")
    basis = vh[small].conj()
    return NullSpace(basis[-1], int(small.sum()), basis, s)
