"""Scattering matrices of periodic Dirac graphs and their secular function.

The secular function is ``F(k; alpha) = det(I - S)``, where ``S`` is a
matrix of Laurent monomials in the phases ``w_j = exp(i k l_j)`` and
``z = exp(i alpha)``.  Spectrum points at fixed ``alpha`` are the real
``k > 0`` where ``I - S`` is singular; they are located through the
smallest singular value, which is real, continuous and vanishes exactly
there.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .cells import CellSpec
from .core import assemble_from_phases
from .errors import DomainError, NonConvergenceError, UnsupportedReductionError

TWO_PI = 2.0 * math.pi
TOPOLOGIES = ("comb", "ladder", "loop", "custom")


def unit(angle):
    """``exp(i*angle)`` with the angle reduced to ``[0, 2*pi)`` first."""
    return np.exp(1j * np.remainder(angle, TWO_PI))


# -- printed scattering matrices ------------------------------------------------
#
# Entries are transcribed with e^{ikl_j} -> w_j and e^{i alpha} -> z.  Inputs are
# unimodular, so inverses are taken as complex conjugates.


def _fill(n, entries, *args):
    """``n x n`` matrix batch from ``{(row, col): value}``; unset entries are zero."""
    shape = np.broadcast_shapes(*(np.shape(a) for a in args))
    out = np.zeros(shape + (n, n), dtype=complex)
    for (i, j), v in entries.items():
        out[..., i, j] = v
    return out


def _phases(*args):
    return [np.asarray(a, dtype=complex) for a in args]


def comb_s(w1, w2, w3, z):
    w1, w2, z = _phases(w1, w2, z)
    zb = np.conj(z)
    return _fill(4, {
        (0, 0): zb * w1, (0, 2): zb - w1,
        (1, 0): zb * w1 - 1, (1, 2): w1 - zb, (1, 3): w2,
        (2, 0): -w1, (2, 1): z, (2, 3): z * w2,
        (3, 1): w2,
    }, w1, w2, z)


def ladder_s(w1, w2, w3, z):
    w1, w2, z = _phases(w1, w2, z)
    zb = np.conj(z)
    return _fill(6, {
        (0, 0): zb * w1, (0, 3): zb - w1,
        (1, 1): zb * w1, (1, 4): zb - w1,
        (2, 0): 1.0, (2, 3): w1, (2, 5): -w2,
        (3, 0): w1 - z, (3, 2): z, (3, 3): z * w1, (3, 5): z * w2,
        (4, 1): w1 - z, (4, 2): z * w2, (4, 4): z * w1, (4, 5): -z,
        (5, 1): 1.0, (5, 2): -w2, (5, 4): w1,
    }, w1, w2, z)


def loop_s(w1, w2, w3, z):
    w1, w2, w3, z = _phases(w1, w2, w3, z)
    zb = np.conj(z)
    b2 = np.conj(w2)
    b3 = np.conj(w3)
    return _fill(6, {
        (0, 1): 1.0, (0, 3): -w1, (0, 4): w2,
        (1, 2): zb * w3, (1, 4): -w2, (1, 5): zb,
        (2, 0): w1, (2, 3): 1.0, (2, 5): -w3,
        (3, 0): -w1, (3, 1): w2, (3, 4): 1.0,
        (4, 0): b2, (4, 1): b2, (4, 2): -zb * w3 * b2, (4, 3): -w1 * b2, (4, 5): zb * b2,
        (5, 0): -w1 * b3, (5, 1): -w2 * b3, (5, 2): b3, (5, 3): b3, (5, 4): b3,
    }, w1, w2, w3, z)


PRINTED = {"comb": comb_s, "ladder": ladder_s, "loop": loop_s}


@dataclass(frozen=True)
class SecularSystem:
    """A topology plus its metric data.

    Geometry follows one convention for all three printed cells: ``l1`` is
    the bond joining neighbouring cells and carries the Bloch phase; ``l2``
    is the decoration (comb tooth, ladder rung stub, loop arc) and ``l3``
    the second loop arc, defaulting to ``l2``.  For the loop this means the
    printed matrix slots are fed ``(w1, w2, w3) = (e^{ikl2}, e^{ikl3},
    e^{ikl1})``, because the printed loop matrix attaches the flux to its
    third phase.

    ``topology="custom"`` evaluates the assembled boundary system of
    ``cell`` (with the spinor ratio divided out of the chi rows) in place of
    ``I - S``.
    """

    topology: str
    l1: float = 1.0
    l2: float = 1.0
    l3: float | None = None
    cell: CellSpec | None = None
    _torus: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.topology not in TOPOLOGIES:
            raise DomainError(f"unknown topology {self.topology!r}")
        if self.topology == "custom":
            if self.cell is None:
                raise DomainError("custom topology needs a CellSpec")
        else:
            for name, v in (("l1", self.l1), ("l2", self.l2), ("l3", self.l3_eff)):
                if not (v > 0 and math.isfinite(v)):
                    raise DomainError(f"{name} must be positive, got {v}")
        object.__setattr__(self, "_torus", self._torus_classes())

    @classmethod
    def from_beta(cls, topology: str, beta: float, l2: float = 1.0, l3: float | None = None, **kw):
        return cls(topology, l1=beta * l2, l2=l2, l3=l3, **kw)

    @property
    def l3_eff(self) -> float:
        return self.l2 if self.l3 is None else self.l3

    @property
    def surrogate(self) -> bool:
        """True when the matrix comes from the assembler instead of a printed S."""
        return self.topology == "custom"

    @property
    def dim(self) -> int:
        if self.topology == "custom":
            return 2 * self.cell.n_bonds
        return 4 if self.topology == "comb" else 6

    @property
    def total_length(self) -> float:
        if self.topology == "custom":
            return float(self.cell.lengths.sum())
        return self.l1 + self.l2 + self.l3_eff

    def describe(self) -> dict:
        if self.topology == "custom":
            return {"topology": "custom", "cell": self.cell.to_dict()}
        return {"topology": self.topology, "l1": self.l1, "l2": self.l2, "l3": self.l3_eff}

    # -- phases -------------------------------------------------------------

    def slot_phases(self, k):
        """Printed-matrix slot phases ``(w1, w2, w3)`` at wavenumber ``k``."""
        k = np.asarray(k, dtype=float)
        e1, e2, e3 = (np.exp(1j * k * L) for L in (self.l1, self.l2, self.l3_eff))
        if self.topology == "loop":
            return e2, e3, e1
        return e1, e2, e3

    def _torus_classes(self):
        if self.topology != "custom":
            return (self.l1, self.l2)
        # distinct bond lengths become independent torus directions
        classes: list[float] = []
        for L in self.cell.lengths:
            if L not in classes:
                classes.append(float(L))
        return tuple(classes)

    @property
    def torus_lengths(self) -> tuple:
        """Lengths whose phases ``k*L mod 2pi`` are the torus coordinates."""
        return self._torus

    def check_torus(self) -> None:
        if self.topology == "loop" and self.l3_eff != self.l2:
            raise UnsupportedReductionError(
                f"loop with l3={self.l3_eff} != l2={self.l2} needs a third torus phase"
            )
        if self.topology == "custom" and len(self._torus) != 2:
            raise UnsupportedReductionError(
                f"custom cell has {len(self._torus)} distinct bond lengths; the torus reduction needs exactly 2"
            )

    def torus_slot_phases(self, kappa1, kappa2):
        self.check_torus()
        e1, e2 = unit(kappa1), unit(kappa2)
        if self.topology == "loop":
            return e2, e2, e1
        if self.topology == "custom":
            return (e1, e2)
        return e1, e2, e2

    # -- matrices -----------------------------------------------------------

    def matrix_from_slots(self, slots, z) -> np.ndarray:
        """``I - S`` at the given slot phases.

        For a custom cell the slots are the phases of its distinct bond
        lengths, in order of first appearance.
        """
        if self.topology == "custom":
            if len(slots) < len(self._torus):
                raise UnsupportedReductionError(
                    f"custom cell has {len(self._torus)} distinct bond lengths but {len(slots)} phases were given"
                )
            w = np.stack(np.broadcast_arrays(*slots[: len(self._torus)]), axis=-1)
            idx = [self._torus.index(float(L)) for L in self.cell.lengths]
            return assemble_from_phases(self.cell, w[..., idx], z)
        M = PRINTED[self.topology](*slots, z)
        M *= -1.0
        idx = np.arange(self.dim)
        M[..., idx, idx] += 1.0
        return M

    def matrix(self, k, alpha) -> np.ndarray:
        if self.topology == "custom":
            k = np.asarray(k, dtype=float)
            w = np.exp(1j * k[..., None] * self.cell.lengths)
            return assemble_from_phases(self.cell, w, unit(alpha))
        return self.matrix_from_slots(self.slot_phases(k), unit(alpha))

    def torus_matrix(self, kappa1, kappa2, alpha) -> np.ndarray:
        return self.matrix_from_slots(self.torus_slot_phases(kappa1, kappa2), unit(alpha))


def s_matrix(sys: SecularSystem, w1, w2, w3, z) -> np.ndarray:
    """Printed scattering matrix at unimodular phases.

    For a custom topology the assembled boundary system ``M`` stands in for
    ``I - S``, so ``I - M`` is returned, with ``w1, w2, w3`` taken as the
    phases of the cell's distinct bond lengths.
    """
    for name, v in (("w1", w1), ("w2", w2), ("w3", w3), ("z", z)):
        if np.any(np.abs(np.abs(np.asarray(v)) - 1.0) > 1e-12):
            raise DomainError(f"{name} must be unimodular")
    if sys.topology == "custom":
        return np.eye(sys.dim) - sys.matrix_from_slots((w1, w2, w3), z)
    return PRINTED[sys.topology](w1, w2, w3, z)


def secular_value(sys: SecularSystem, k, alpha):
    """``F(k; alpha) = det(I - S)``."""
    if np.any(~(np.asarray(k) > 0)):
        raise DomainError("secular_value requires k > 0")
    d = np.linalg.det(sys.matrix(k, alpha))
    return complex(d) if np.ndim(d) == 0 else d


def smallest_singular(M: np.ndarray):
    s = np.linalg.svd(M, compute_uv=False)
    return s[..., -1]


def secular_surrogate(sys: SecularSystem, k, alpha):
    """Smallest singular value of ``I - S``; zero exactly on the spectrum."""
    if np.any(~(np.asarray(k) > 0)):
        raise DomainError("secular_surrogate requires k > 0")
    s = smallest_singular(sys.matrix(k, alpha))
    return float(s) if np.ndim(s) == 0 else s


# -- reduction to a polynomial in z ------------------------------------------------


def laurent_degrees(samples: int) -> np.ndarray:
    """Laurent degree carried by each FFT bin."""
    j = np.arange(samples)
    return np.where(j < (samples + 1) // 2, j, j - samples)


def laurent_coefficients(F_samples: np.ndarray) -> np.ndarray:
    """Coefficients ``a_d`` of ``F = sum_d a_d z^d`` from samples at ``alpha_j = 2 pi j / M``.

    Works along the last axis; bin ``j`` holds degree ``laurent_degrees(M)[j]``.
    """
    M = F_samples.shape[-1]
    return np.fft.fft(F_samples, axis=-1) / M


def alpha_grid_samples(samples: int) -> np.ndarray:
    return TWO_PI * np.arange(samples) / samples


@dataclass
class AlphaPolynomial:
    """``p(z) = z^shift F(z)``, stored with ascending powers."""

    coefficients: np.ndarray
    shift: int
    truncation_threshold: float
    degenerate: bool = False

    @property
    def degree(self) -> int:
        return len(self.coefficients) - 1

    def laurent(self) -> dict[int, complex]:
        return {i - self.shift: complex(c) for i, c in enumerate(self.coefficients)}

    def __call__(self, alpha):
        z = unit(alpha)
        return np.polynomial.polynomial.polyval(z, self.coefficients) * z ** (-self.shift)

    def roots(self) -> np.ndarray:
        if self.degenerate or self.degree < 1:
            return np.empty(0, dtype=complex)
        return np.roots(self.coefficients[::-1])

    def unit_roots(self, tol_z: float) -> np.ndarray:
        r = self.roots()
        return r[np.abs(np.abs(r) - 1.0) <= tol_z]


def _trim(a: np.ndarray, degrees: np.ndarray, rel: float):
    scale = np.abs(a).max()
    if scale == 0.0 or not np.isfinite(scale):
        return None
    keep = np.abs(a) > rel * scale
    lo, hi = degrees[keep].min(), degrees[keep].max()
    coeffs = np.zeros(hi - lo + 1, dtype=complex)
    for d, c in zip(degrees, a):
        if lo <= d <= hi and abs(c) > rel * scale:
            coeffs[d - lo] = c
    return coeffs, -int(lo), rel * scale


def alpha_polynomial(
    sys: SecularSystem,
    k: float | None = None,
    kappa: Sequence[float] | None = None,
    samples: int = 16,
    rel_threshold: float = 1e-12,
    zero_threshold: float = 1e-13,
) -> AlphaPolynomial:
    """Reduce ``alpha -> F`` at fixed phases to a polynomial in ``z = e^{i alpha}``.

    Exactly one of ``k`` (wavenumber) or ``kappa`` (torus point) is given.
    A secular function that vanishes for every ``alpha`` (all coefficients
    below ``zero_threshold``) is returned as ``degenerate``.
    """
    if (k is None) == (kappa is None):
        raise ValueError("give exactly one of k or kappa")
    al = alpha_grid_samples(samples)
    if k is not None:
        mats = sys.matrix(np.full(samples, float(k)), al)
    else:
        mats = sys.torus_matrix(kappa[0], kappa[1], al)
    a = laurent_coefficients(np.linalg.det(mats))
    deg = laurent_degrees(samples)
    if np.abs(a).max() <= zero_threshold:
        return AlphaPolynomial(np.zeros(1, dtype=complex), 0, zero_threshold, degenerate=True)
    coeffs, shift, thr = _trim(a, deg, rel_threshold)
    return AlphaPolynomial(coeffs, shift, thr)


# -- root finding in k -----------------------------------------------------------

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


def golden_minimize(f: Callable[[float], float], a: float, b: float, tol: float, max_iter: int = 200):
    """Golden-section search for a minimum of ``f`` on ``[a, b]``; returns ``(x, f(x))``."""
    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if b - a < tol:
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + INV_PHI * (b - a)
            fd = f(d)
        if not (c < d) and b - a >= tol:
            # interval no longer representable at this tolerance
            raise NonConvergenceError(f"golden section stalled at width {b - a:.3e} > tol {tol:.1e}")
    else:
        raise NonConvergenceError(f"golden section did not reach width {tol:.1e} in {max_iter} steps")
    x = c if fc <= fd else d
    return x, min(fc, fd)


class Root(NamedTuple):
    k: float
    multiplicity: int = 1
    interval: tuple[float, float] | None = None

    @property
    def flat(self) -> bool:
        return self.interval is not None


def default_samples(sys: SecularSystem, k_min: float, k_max: float, density: float = 80.0) -> int:
    return max(512, int(math.ceil(density * (k_max - k_min) * sys.total_length / TWO_PI)))


def find_roots_k(
    sys: SecularSystem,
    alpha: float,
    k_range: tuple[float, float],
    samples: int | None = None,
    tol: float = 1e-12,
    accept: float = 1e-8,
) -> list[Root]:
    """Spectrum points in ``[k_min, k_max]`` at flux ``alpha``.

    Scans the smallest singular value on a uniform grid, brackets local
    minima and refines each by golden section to width ``tol``.  A minimum
    is a root when the refined value is below ``accept`` times the largest
    singular value.  Multiplicity is the numerical nullity at the root.
    Grid runs where the surrogate stays below the threshold are returned as
    flat-band intervals.
    """
    k_min, k_max = map(float, k_range)
    if not (0 < k_min < k_max):
        raise DomainError(f"need 0 < k_min < k_max, got {k_range}")
    n = samples or default_samples(sys, k_min, k_max)
    if n < 3:
        raise DomainError("samples must be at least 3")
    ks = np.linspace(k_min, k_max, n)
    sv = np.linalg.svd(sys.matrix(ks, alpha), compute_uv=False)
    s = sv[:, -1]
    scale = max(1.0, float(sv[:, 0].max()))
    thr = accept * scale

    def f(k):
        return float(smallest_singular(sys.matrix(k, alpha)))

    roots: list[Root] = []
    flat = s < thr
    in_run = np.zeros(n, dtype=bool)
    i = 0
    while i < n:
        j = i
        while flat[i] and j + 1 < n and flat[j + 1]:
            j += 1
        if j > i:
            roots.append(Root(float(0.5 * (ks[i] + ks[j])), 0, (float(ks[i]), float(ks[j]))))
            in_run[i : j + 1] = True
        i = j + 1

    padded = np.concatenate([[np.inf], s, [np.inf]])
    left, right = padded[:-2], padded[2:]
    is_min = ((s < left) & (s <= right)) | ((s <= left) & (s < right))
    candidates = np.nonzero(is_min & ~in_run)[0]

    def nullity(x):
        return int((np.linalg.svd(sys.matrix(x, alpha), compute_uv=False) < thr).sum())

    known = []
    for i in candidates:
        a, b = ks[max(i - 1, 0)], ks[min(i + 1, n - 1)]
        x, fx = golden_minimize(f, a, b, tol)
        if fx < thr:
            known.append(x)

    # Two roots closer than the scan spacing can show up as a single
    # minimum, and a shallow non-root dip can pull the search away from a
    # root next to it.  The determinant is analytic in k, so dividing out
    # the roots already known near a minimum leaves a smooth function that
    # still vanishes at any root that was missed.
    for i in candidates:
        a, b = ks[max(i - 4, 0)], ks[min(i + 4, n - 1)]
        fine = np.linspace(a, b, 257)
        h = fine[1] - fine[0]
        det = np.abs(np.linalg.det(sys.matrix(fine, alpha)))
        for _ in range(3):
            near = [r for r in known if a - h <= r <= b + h]

            def deflated(k, near=near):
                k = np.asarray(k, dtype=float)
                out = np.abs(np.linalg.det(sys.matrix(k, alpha)))
                for r in near:
                    out = out / np.maximum(np.abs(k - r), tol)
                return out

            d = det.copy()
            for r in near:
                d /= np.maximum(np.abs(fine - r), tol)
            m = int(d.argmin())
            y, dy = golden_minimize(
                lambda k: float(deflated(k)), max(a, fine[m] - h), min(b, fine[m] + h), tol
            )
            if not (dy < accept * d.max() and f(y) < thr):
                break
            if near and min(abs(y - r) for r in near) <= 10 * tol:
                break
            known.append(y)

    roots += [Root(float(x), nullity(x)) for x in known]

    roots.sort(key=lambda r: r.k)
    merged: list[Root] = []
    for r in roots:
        if merged and not r.flat and not merged[-1].flat and r.k - merged[-1].k < max(10 * tol, 1e-9):
            prev = merged[-1]
            merged[-1] = Root(prev.k, max(prev.multiplicity, r.multiplicity))
        else:
            merged.append(r)
    return merged


# -- star graph --------------------------------------------------------------------


@dataclass(frozen=True)
class StarSecularSystem:
    lengths: tuple[float, ...]

    def __post_init__(self):
        if len(self.lengths) < 1:
            raise DomainError("a star needs at least one bond")

    @property
    def N(self) -> int:
        return len(self.lengths)

    @property
    def total_length(self) -> float:
        return float(sum(self.lengths))

    def matrix(self, k, alpha=0.0) -> np.ndarray:
        """Star boundary system at ``k``; there is no flux, so ``alpha`` is ignored."""
        return star_matrix(self, k)

    def blocks(self) -> tuple[np.ndarray, np.ndarray]:
        N = self.N
        ones = np.ones(N - 1)
        A = np.zeros((N, N))
        B = np.zeros((N, N))
        A[: N - 1, 0] = 1.0
        A[: N - 1, 1:] = -np.eye(N - 1)
        A[N - 1, 0] = 1.0
        A[N - 1, 1:] = ones
        B[: N - 1] = A[: N - 1]
        B[N - 1] = -A[N - 1]
        return A, B


def star_matrix(star: StarSecularSystem, k) -> np.ndarray:
    """``[[A, B], [e^{ikL}, e^{-ikL}]]`` for a star with phi = 0 at the tips."""
    k = np.asarray(k, dtype=float)
    A, B = star.blocks()
    N = star.N
    L = np.asarray(star.lengths, dtype=float)
    top = np.broadcast_to(np.concatenate([A, B], axis=1), k.shape + (N, 2 * N))
    ep = np.exp(1j * k[..., None] * L)
    em = np.exp(-1j * k[..., None] * L)
    eye = np.eye(N)
    bottom = np.concatenate([ep[..., :, None] * eye, em[..., :, None] * eye], axis=-1)
    return np.concatenate([top.astype(complex), bottom], axis=-2)


def star_secular(star: StarSecularSystem, k):
    """Star secular determinant; its zeros in ``k > 0`` are the star spectrum."""
    if np.any(~(np.asarray(k, dtype=float) > 0)):
        raise DomainError("star_secular requires k > 0")
    d = np.linalg.det(star_matrix(star, k))
    return complex(d) if d.ndim == 0 else d
