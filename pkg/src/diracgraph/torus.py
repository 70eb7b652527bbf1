"""Spectrum membership on the phase torus and the probability to be in the spectrum.

With ``kappa_j = k*l_j mod 2pi`` the secular function becomes a function
``Phi(kappa1, kappa2; alpha)`` on the 2-torus.  A torus point belongs to the
spectrum when ``Phi`` vanishes for some flux, i.e. when the polynomial in
``z = e^{i alpha}`` has a root on the unit circle.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .errors import DomainError, UnsupportedReductionError
from .secular import (
    TWO_PI,
    SecularSystem,
    alpha_grid_samples,
    alpha_polynomial,
    laurent_coefficients,
    laurent_degrees,
)

DEFAULT_TOL_Z = 1e-6
CHUNK = 512
MC_CHUNK = 1 << 16
NODE_SHIFT = (math.sqrt(2.0) * 1e-6, math.sqrt(3.0) * 1e-6)


def _wrap(x: float) -> float:
    r = float(np.remainder(x, TWO_PI))
    return 0.0 if r >= TWO_PI else r


@dataclass(frozen=True)
class TorusPoint:
    """A point of the phase torus, stored with representatives in ``[0, 2pi)``."""

    kappa1: float
    kappa2: float

    def __post_init__(self):
        object.__setattr__(self, "kappa1", _wrap(self.kappa1))
        object.__setattr__(self, "kappa2", _wrap(self.kappa2))

    @classmethod
    def from_k(cls, sys: SecularSystem, k: float) -> "TorusPoint":
        l1, l2 = sys.torus_lengths[:2]
        return cls(k * l1, k * l2)


def phi(sys: SecularSystem, point: TorusPoint, alpha):
    """``Phi(kappa1, kappa2; alpha) = det(I - S)`` at torus phases."""
    d = np.linalg.det(sys.torus_matrix(point.kappa1, point.kappa2, alpha))
    return complex(d) if np.ndim(d) == 0 else d


# -- batched polynomial machinery ---------------------------------------------------


@dataclass(frozen=True)
class LaurentSupport:
    """Degrees ``lo..hi`` that can carry nonzero coefficients, and the FFT size used."""

    lo: int
    hi: int
    samples: int

    @property
    def span(self) -> int:
        return self.hi - self.lo


def laurent_support(sys: SecularSystem, probes: int = 8, seed: int = 12345) -> LaurentSupport:
    """Generic Laurent support of ``alpha -> Phi``, probed at a few random torus points."""
    sys.check_torus()
    rng = np.random.default_rng(seed)
    kap = rng.uniform(0.0, TWO_PI, size=(probes, 2))
    al = alpha_grid_samples(16)
    a = laurent_coefficients(np.linalg.det(sys.torus_matrix(kap[:, :1], kap[:, 1:], al[None, :])))
    deg = laurent_degrees(16)
    mag = np.abs(a).max(axis=0)
    keep = mag > 1e-12 * mag.max()
    lo, hi = int(deg[keep].min()), int(deg[keep].max())
    # smallest power of two that holds the support with a little headroom
    samples = 4
    while samples < hi - lo + 3:
        samples *= 2
    return LaurentSupport(lo, hi, samples)


def torus_coefficients(sys: SecularSystem, k1, k2, support: LaurentSupport) -> np.ndarray:
    """Ascending coefficients of ``z^{-lo} Phi`` for each point, shape ``(P, span + 1)``."""
    al = alpha_grid_samples(support.samples)
    k1 = np.asarray(k1, dtype=float).reshape(-1, 1)
    k2 = np.asarray(k2, dtype=float).reshape(-1, 1)
    a = laurent_coefficients(np.linalg.det(sys.torus_matrix(k1, k2, al[None, :])))
    cols = np.remainder(np.arange(support.lo, support.hi + 1), support.samples)
    return a[:, cols]


def batched_roots(coeffs: np.ndarray, rel: float = 1e-12) -> np.ndarray:
    """Roots of many polynomials (ascending coefficients), NaN-padded to a common width.

    Coefficients below ``rel`` times the row maximum are dropped, so rows
    whose leading or trailing terms vanish are solved at their true degree.
    Rows that are identically zero produce all-NaN output.
    """
    P, n = coeffs.shape
    out = np.full((P, n - 1), np.nan + 0j, dtype=complex)
    if n < 2:
        return out
    mag = np.abs(coeffs)
    live = mag > rel * mag.max(axis=1, keepdims=True)
    any_live = live.any(axis=1)
    first = np.where(any_live, live.argmax(axis=1), 0)
    last = np.where(any_live, n - 1 - live[:, ::-1].argmax(axis=1), 0)
    # zero roots from vanishing low-order terms are never on the unit circle,
    # so only the reduced polynomial c[first..last] matters
    for f, l in set(zip(first[any_live].tolist(), last[any_live].tolist())):
        d = l - f
        if d < 1:
            continue
        rows = np.nonzero(any_live & (first == f) & (last == l))[0]
        c = coeffs[rows, f : l + 1]
        comp = np.zeros((len(rows), d, d), dtype=complex)
        comp[:, np.arange(1, d), np.arange(d - 1)] = 1.0
        comp[:, :, -1] = -c[:, :d] / c[:, d : d + 1]
        out[rows, :d] = np.linalg.eigvals(comp)
    return out


class MembershipResult(NamedTuple):
    in_spectrum: bool
    witness: float | None
    degenerate: bool = False


def _membership_chunk(sys, k1, k2, tol_z, support, zero_threshold=1e-13):
    c = torus_coefficients(sys, k1, k2, support)
    degenerate = np.abs(c).max(axis=1) <= zero_threshold
    r = batched_roots(c)
    defect = np.abs(np.abs(r) - 1.0)
    defect = np.where(np.isnan(defect), np.inf, defect)
    best = defect.argmin(axis=1)
    best_def = defect[np.arange(len(best)), best]
    hit = (best_def <= tol_z) | degenerate
    witness = np.angle(r[np.arange(len(best)), best])
    witness = np.where(best_def <= tol_z, witness, np.nan)
    return hit, witness, degenerate


def membership_points(
    sys: SecularSystem,
    k1,
    k2,
    tol_z: float = DEFAULT_TOL_Z,
    threads: int = 1,
    support: LaurentSupport | None = None,
):
    """Vectorized membership: returns ``(in_spectrum, witness_alpha, degenerate)`` arrays.

    Witness is NaN where the point is out of the spectrum or only in it by
    degeneracy.
    """
    if tol_z < 0:
        raise DomainError("tol_z must be nonnegative")
    support = support or laurent_support(sys)
    k1, k2 = np.broadcast_arrays(np.asarray(k1, dtype=float), np.asarray(k2, dtype=float))
    shape = k1.shape
    k1, k2 = k1.ravel(), k2.ravel()
    starts = range(0, k1.size, CHUNK)

    def work(s):
        return _membership_chunk(sys, k1[s : s + CHUNK], k2[s : s + CHUNK], tol_z, support)

    if threads > 1 and k1.size > CHUNK:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(work, starts))
    else:
        parts = [work(s) for s in starts]
    if not parts:
        e = np.zeros(0)
        return e.astype(bool).reshape(shape), e.reshape(shape), e.astype(bool).reshape(shape)
    hit, wit, deg = (np.concatenate(p).reshape(shape) for p in zip(*parts))
    return hit, wit, deg


def membership(sys: SecularSystem, point: TorusPoint, tol_z: float = DEFAULT_TOL_Z) -> MembershipResult:
    """Whether some flux puts ``point`` in the spectrum, with the flux as witness."""
    if tol_z < 0:
        raise DomainError("tol_z must be nonnegative")
    p = alpha_polynomial(sys, kappa=(point.kappa1, point.kappa2))
    if p.degenerate:
        return MembershipResult(True, None, True)
    r = p.roots()
    if r.size == 0:
        return MembershipResult(False, None)
    defect = np.abs(np.abs(r) - 1.0)
    j = int(defect.argmin())
    if defect[j] <= tol_z:
        return MembershipResult(True, float(np.angle(r[j])))
    return MembershipResult(False, None)


def alpha_scan_membership(
    sys: SecularSystem,
    point: TorusPoint,
    step: float = 1e-3,
    threshold: float = 1e-6,
) -> bool:
    """Membership decided by scanning the smallest singular value over a dense flux grid.

    Each local minimum of the scan is polished by golden section before
    comparing with ``threshold``, since a simple zero is generically missed
    by the grid itself.
    """
    from .secular import golden_minimize, smallest_singular

    n = int(math.ceil(TWO_PI / step))
    al = -math.pi + TWO_PI * np.arange(n) / n
    s = smallest_singular(sys.torus_matrix(point.kappa1, point.kappa2, al))
    if s.min() < threshold:
        return True
    left, right = np.roll(s, 1), np.roll(s, -1)
    for i in np.nonzero((s <= left) & (s <= right))[0]:
        a, b = al[i] - TWO_PI / n, al[i] + TWO_PI / n

        def f(x):
            return float(smallest_singular(sys.torus_matrix(point.kappa1, point.kappa2, x)))

        _, fx = golden_minimize(f, a, b, 1e-12)
        if fx < threshold:
            return True
    return False


# -- probability ----------------------------------------------------------------------


@dataclass
class ProbabilityEstimate:
    topology: str
    method: str
    p_sigma: float
    grid: int
    tol_z: float
    error_bound: float
    seed: int | None = None
    samples: int = 0
    symmetry_check: float | None = None
    boundary_cells: int | None = None

    def to_dict(self) -> dict:
        return {
            "topology": self.topology,
            "method": self.method,
            "grid": self.grid,
            "tol_z": self.tol_z,
            "seed": self.seed,
            "p_sigma": self.p_sigma,
            "error_bound": self.error_bound,
            "octant_discrepancy": self.symmetry_check,
        }


def midpoints(n: int, lo: float = 0.0, hi: float = TWO_PI) -> np.ndarray:
    return lo + (hi - lo) * (np.arange(n) + 0.5) / n


def membership_grid(sys: SecularSystem, grid_n: int, tol_z: float = DEFAULT_TOL_Z, threads: int = 1) -> np.ndarray:
    """Boolean ``(N, N)`` membership at cell midpoints, indexed ``[kappa1, kappa2]``."""
    m = midpoints(grid_n)
    K1, K2 = np.meshgrid(m, m, indexing="ij")
    hit, _, _ = membership_points(sys, K1, K2, tol_z, threads=threads)
    return hit


def _boundary_cells(mask: np.ndarray) -> int:
    """Cells whose state differs from a periodic neighbour."""
    edge = (mask != np.roll(mask, 1, axis=0)) | (mask != np.roll(mask, -1, axis=0))
    edge |= (mask != np.roll(mask, 1, axis=1)) | (mask != np.roll(mask, -1, axis=1))
    return int(edge.sum())


def probability(
    sys: SecularSystem,
    grid_n: int = 1024,
    tol_z: float = DEFAULT_TOL_Z,
    method: str = "grid",
    seed: int = 0,
    samples: int | None = None,
    threads: int = 1,
) -> ProbabilityEstimate:
    """Fraction of the phase torus that lies in the spectrum for some flux.

    ``grid`` evaluates membership at the ``N^2`` cell midpoints; its error
    bound is half the fraction of cells on the spectrum boundary, which
    scales as ``1/N``.  ``monte_carlo`` draws uniform points from a
    counter-based generator keyed by ``(seed, chunk)``, so the sample
    sequence does not depend on how chunks are scheduled.
    """
    sys.check_torus()
    if method == "grid":
        if grid_n < 128:
            raise DomainError("grid method needs grid_n >= 128")
        mask = membership_grid(sys, grid_n, tol_z, threads)
        n = grid_n * grid_n
        count = int(mask.sum())
        boundary = _boundary_cells(mask)
        bound = max(0.5 * boundary / n, 1.0 / n)
        return ProbabilityEstimate(
            sys.topology, "grid", count / n, grid_n, tol_z, bound, None, n, boundary_cells=boundary
        )
    if method == "monte_carlo":
        n = samples if samples is not None else grid_n * grid_n
        if n < 1:
            raise DomainError("monte_carlo needs at least one sample")
        support = laurent_support(sys)
        chunks = range((n + MC_CHUNK - 1) // MC_CHUNK)

        def work(c):
            size = min(MC_CHUNK, n - c * MC_CHUNK)
            rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, c])))
            pts = rng.uniform(0.0, TWO_PI, size=(size, 2))
            hit, _, _ = membership_points(sys, pts[:, 0], pts[:, 1], tol_z, support=support)
            return int(hit.sum())

        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as ex:
                counts = list(ex.map(work, chunks))
        else:
            counts = [work(c) for c in chunks]
        p = sum(counts) / n
        bound = max(3.0 * math.sqrt(p * (1.0 - p) / n), 1.0 / n)
        return ProbabilityEstimate(sys.topology, "monte_carlo", p, grid_n, tol_z, bound, seed, n)
    raise DomainError(f"unknown method {method!r}")


@dataclass
class EmpiricalFraction:
    fraction: float
    samples: int
    k_max: float
    warning: str | None = None

    def __float__(self) -> float:
        return self.fraction


def near_rational(ratio: float, max_denominator: int = 1000, tol: float = 1e-12) -> Fraction | None:
    """The small-denominator fraction within ``tol`` of ``ratio``, if any."""
    f = Fraction(ratio).limit_denominator(max_denominator)
    return f if abs(float(f) - ratio) <= tol * max(1.0, abs(ratio)) else None


def empirical_spectrum_fraction(
    sys: SecularSystem,
    lengths: Sequence[float] | None = None,
    k_max: float = 500.0,
    samples: int = 50_000,
    seed: int = 0,
    tol_z: float = DEFAULT_TOL_Z,
) -> EmpiricalFraction:
    """Fraction of uniformly drawn ``k`` in ``(0, k_max]`` whose torus image is in the spectrum.

    ``lengths = (l1, l2)`` overrides the geometry of ``sys`` (for the loop
    both arcs take ``l2``).  A commensurate length ratio makes the torus
    image a closed curve, so the result carries a warning instead of
    estimating the torus measure.
    """
    if k_max <= 0 or samples < 1:
        raise DomainError("need k_max > 0 and samples >= 1")
    if lengths is not None:
        l1, l2 = map(float, lengths)
        sys = replace(sys, l1=l1, l2=l2, l3=None)
    sys.check_torus()
    l1, l2 = sys.torus_lengths[:2]
    warn = None
    frac = near_rational(l1 / l2)
    if frac is not None:
        warn = f"length ratio {l1 / l2!r} is within 1e-12 of {frac}; torus orbit is not equidistributed"
        warnings.warn(warn, RuntimeWarning, stacklevel=2)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, 0])))
    k = k_max * (1.0 - rng.random(samples))  # (0, k_max]
    hit, _, _ = membership_points(sys, np.remainder(k * l1, TWO_PI), np.remainder(k * l2, TWO_PI), tol_z)
    return EmpiricalFraction(float(hit.mean()), samples, k_max, warn)


def octant_reduction_check(
    sys: SecularSystem | None,
    grid_n: int = 512,
    tol_z: float = DEFAULT_TOL_Z,
    membership_fn: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None,
    full_p: float | None = None,
    bisections: int = 30,
) -> tuple[float, float, float]:
    """Compare the full-torus measure with eight times the measure of one octant.

    The octant is ``[0, pi] x [0, pi/2]``.  Along each ``kappa1`` column the
    spectrum boundary is located by bisection, so the octant area is measured
    from the boundary curve rather than by counting cells.  Returns
    ``(discrepancy, p_full, p_octant)``.  ``membership_fn(k1, k2)`` replaces
    the spectral test, which lets a deliberately asymmetric field be checked.
    """
    if membership_fn is None:
        if sys is None:
            raise DomainError("need a system or a membership function")
        sys.check_torus()
        support = laurent_support(sys)

        def membership_fn(a, b):
            return membership_points(sys, a, b, tol_z, support=support)[0]

    if full_p is None:
        m = midpoints(grid_n)
        K1, K2 = np.meshgrid(m, m, indexing="ij")
        full_p = float(np.asarray(membership_fn(K1.ravel(), K2.ravel())).mean())

    cols = midpoints(grid_n // 2, 0.0, math.pi)
    rows = np.linspace(0.0, math.pi / 2, grid_n // 4 + 1)
    K1, K2 = np.meshgrid(cols, rows, indexing="ij")
    inside = np.asarray(membership_fn(K1.ravel(), K2.ravel())).reshape(K1.shape)
    h = rows[1] - rows[0]
    length = (inside[:, :-1] & inside[:, 1:]).sum(axis=1) * h

    ci, ri = np.nonzero(inside[:, :-1] != inside[:, 1:])
    if ci.size:
        lo = rows[ri].copy()
        hi = rows[ri + 1].copy()
        lo_in = inside[ci, ri]
        x = cols[ci]
        for _ in range(bisections):
            mid = 0.5 * (lo + hi)
            mid_in = np.asarray(membership_fn(x, mid))
            same = mid_in == lo_in
            lo = np.where(same, mid, lo)
            hi = np.where(same, hi, mid)
        cut = 0.5 * (lo + hi)
        part = np.where(lo_in, cut - rows[ri], rows[ri + 1] - cut)
        np.add.at(length, ci, part)
    area = float(length.sum()) * (math.pi / len(cols))
    p_oct = area / (math.pi**2 / 2.0)
    return abs(full_p - p_oct), full_p, p_oct


# -- zero-set curves ------------------------------------------------------------------


@dataclass
class ZeroCurve:
    alpha: float
    points: list[TorusPoint]
    closed: bool = False
    branch: int = -1

    @property
    def length(self) -> float:
        if len(self.points) < 2:
            return 0.0
        a = np.array([[p.kappa1, p.kappa2] for p in self.points])
        return float(np.hypot(*np.diff(a, axis=0).T).sum())


def _chebyshev_matrix(m: int) -> np.ndarray:
    """Row ``d`` holds the power-basis coefficients of ``T_d``."""
    T = np.zeros((m + 1, m + 1))
    T[0, 0] = 1.0
    if m >= 1:
        T[1, 1] = 1.0
    for d in range(2, m + 1):
        T[d, 1:] = 2.0 * T[d - 1, :-1]
        T[d] -= T[d - 2]
    return T


def zeta_roots(sys: SecularSystem, k1, k2, support: LaurentSupport) -> np.ndarray:
    """Roots in ``zeta = (z + 1/z)/2`` of the palindromic flux polynomial.

    Unit-circle roots ``z = e^{i alpha}`` correspond to real ``zeta =
    cos(alpha)`` in ``[-1, 1]``.
    """
    if support.span % 2:
        raise UnsupportedReductionError("flux polynomial has odd span; it is not palindromic about an integer power")
    return batched_roots(zeta_coefficients(sys, k1, k2, support))


def zeta_coefficients(sys: SecularSystem, k1, k2, support: LaurentSupport) -> np.ndarray:
    """Power-basis coefficients in ``zeta`` of ``z^{-centre} Phi``."""
    m = support.span // 2
    c = torus_coefficients(sys, k1, k2, support)
    # centred coefficients b_{-m..m}; palindromic means b_{-d} = b_d
    b = c[:, m:]
    T = _chebyshev_matrix(m)
    return b[:, :1] * T[0] + 2.0 * (b[:, 1:] @ T[1:])


def check_palindromic(sys: SecularSystem, support: LaurentSupport, tol: float = 1e-9) -> None:
    rng = np.random.default_rng(7)
    kap = rng.uniform(0.0, TWO_PI, size=(8, 2))
    c = torus_coefficients(sys, kap[:, 0], kap[:, 1], support)
    if support.span % 2 or np.abs(c - c[:, ::-1]).max() > tol * np.abs(c).max():
        raise UnsupportedReductionError("flux polynomial is not palindromic; zero sets are not curves")


# marching-squares cases: corners ordered (0,0), (1,0), (1,1), (0,1); edges
# 0: bottom (c0-c1), 1: right (c1-c2), 2: top (c3-c2), 3: left (c0-c3)
_EDGE_CORNERS = ((0, 1), (1, 2), (3, 2), (0, 3))


def _cell_segments(v, centre):
    """Edge pairs crossed by the zero level inside one cell."""
    s = [x > 0 for x in v]
    crossed = [e for e, (a, b) in enumerate(_EDGE_CORNERS) if s[a] != s[b]]
    if len(crossed) == 2:
        return [tuple(crossed)]
    if len(crossed) == 4:
        # saddle: the centre value decides which corners are joined
        if (centre > 0) == s[0]:
            return [(0, 1), (2, 3)]
        return [(0, 3), (1, 2)]
    return []


def coefficient_scale(sys: SecularSystem, support: LaurentSupport, n: int = 64) -> float:
    """Typical size of the flux polynomial's coefficients over the torus."""
    m = midpoints(n)
    K1, K2 = np.meshgrid(m, m, indexing="ij")
    g = _zeta_coefficients_chunked(sys, K1.ravel(), K2.ravel(), support)
    return float(np.median(np.abs(g).max(axis=1)))


def polynomial_residual(sys, support, alpha, k1, k2, scale: float | None = None) -> np.ndarray:
    """``|G(cos alpha)|`` relative to the typical coefficient size.

    ``G`` is the flux polynomial in ``zeta``; it vanishes exactly on the
    zero set of ``Phi(.; alpha)``.
    """
    if scale is None:
        scale = coefficient_scale(sys, support)
    k1 = np.asarray(k1, dtype=float)
    k2 = np.asarray(k2, dtype=float)
    g = _zeta_coefficients_chunked(sys, k1.ravel(), k2.ravel(), support)
    val = np.abs(np.polynomial.polynomial.polyval(math.cos(alpha), g.T))
    return (val / scale).reshape(k1.shape)


def zero_distance(sys, support, alpha, k1, k2, scale: float | None = None, step: float = 1e-6) -> np.ndarray:
    """First-order distance ``|G| / |grad G|`` from each point to the zero set.

    Unlike the plain residual this stays large next to a pole of a root
    branch, where ``G`` is small but does not vanish.
    """
    if scale is None:
        scale = coefficient_scale(sys, support)
    k1 = np.asarray(k1, dtype=float).ravel()
    k2 = np.asarray(k2, dtype=float).ravel()
    ca = math.cos(alpha)
    a = np.concatenate([k1, k1 + step, k1 - step, k1, k1])
    b = np.concatenate([k2, k2, k2, k2 + step, k2 - step])
    g = _zeta_coefficients_chunked(sys, a, b, support)
    v = np.polynomial.polynomial.polyval(ca, g.T).reshape(5, -1)
    grad = np.hypot(np.abs(v[1] - v[2]), np.abs(v[3] - v[4])) / (2 * step)
    val = np.abs(v[0])
    with np.errstate(divide="ignore", invalid="ignore"):
        d = val / grad
    # an exact zero (or a vanishing-gradient crossing of two curves) counts as on the set
    return np.where(val <= 1e-12 * scale, 0.0, np.nan_to_num(d, nan=np.inf))


def zero_set_curves(
    sys: SecularSystem,
    alpha: float,
    grid_n: int = 256,
    tol_z: float = DEFAULT_TOL_Z,
    defect_tol: float | None = None,
) -> list[ZeroCurve]:
    """Curves on the torus where ``Phi(.; alpha)`` vanishes.

    Each real root branch ``zeta_b`` of the flux polynomial ``G`` gives a
    field ``sign(zeta_b - cos(alpha)) * |G(cos(alpha))|``, which is smooth
    through the curve even where ``zeta_b`` itself has a pole, and is
    contoured by marching squares on an ``(N+1) x (N+1)`` node grid
    covering ``[0, 2pi]^2``.  Sign flips at poles of ``zeta_b`` are not
    zeros of ``G``; they are removed by estimating each emitted point's
    distance to the zero set as ``|G| / |grad G|`` and splitting the
    polyline where it exceeds ``defect_tol`` (half a grid cell by default).  ``tol_z`` decides which roots ``z = e^{i alpha}`` count as
    lying on the unit circle, through ``|Im zeta|``.
    """
    if grid_n < 64:
        raise DomainError("zero_set_curves needs grid_n >= 64")
    sys.check_torus()
    support = laurent_support(sys)
    check_palindromic(sys, support)
    N = grid_n
    h = TWO_PI / N
    if defect_tol is None:
        defect_tol = 0.5 * h
    scale = coefficient_scale(sys, support)
    nodes = np.linspace(0.0, TWO_PI, N + 1)
    # a tiny irrational shift keeps nodes off the lines where a coefficient
    # vanishes identically (poles of zeta, dead lines, their crossings)
    n1, n2 = nodes + NODE_SHIFT[0] * h, nodes + NODE_SHIFT[1] * h
    K1, K2 = np.meshgrid(n1, n2, indexing="ij")
    g = _zeta_coefficients_chunked(sys, K1.ravel(), K2.ravel(), support)
    ca = math.cos(alpha)
    zeta = _sorted_real_first(batched_roots(g), tol_z)
    size = np.abs(np.polynomial.polynomial.polyval(ca, g.T))
    field_v = np.where(~np.isnan(zeta), np.sign(zeta - ca) * size[:, None], np.nan)
    field_v = field_v.reshape(N + 1, N + 1, -1)
    near_dead = (np.abs(g).max(axis=1) <= 1e-4 * scale).reshape(K1.shape)

    curves: list[ZeroCurve] = []
    for br in range(field_v.shape[-1]):
        F = field_v[..., br]
        corners = np.stack([F[:-1, :-1], F[1:, :-1], F[1:, 1:], F[:-1, 1:]], axis=-1)
        valid = ~np.isnan(corners).any(axis=-1)
        pos = corners > 0
        mixed = valid & pos.any(axis=-1) & ~pos.all(axis=-1)
        segs: dict = {}
        for i, j in zip(*np.nonzero(mixed)):
            v = corners[i, j]
            for ea, eb in _cell_segments(v, float(v.mean())):
                ka, kb = _edge_key(i, j, ea), _edge_key(i, j, eb)
                segs.setdefault(ka, []).append(kb)
                segs.setdefault(kb, []).append(ka)
        for chain, closed in _link(segs):
            pts = [_edge_point(key, F, n1, n2) for key in chain]
            curves.extend(_validated(sys, support, alpha, pts, closed, br, defect_tol, h, scale))
    curves.extend(_degenerate_lines(sys, support, scale, near_dead, alpha, nodes))
    return curves


def _zeta_coefficients_chunked(sys, k1, k2, support):
    if k1.size == 0:
        return np.zeros((0, support.span // 2 + 1), dtype=complex)
    return np.concatenate([
        zeta_coefficients(sys, k1[s : s + CHUNK], k2[s : s + CHUNK], support)
        for s in range(0, k1.size, CHUNK)
    ])


def _sorted_real_first(z: np.ndarray, tol_z: float) -> np.ndarray:
    """Real parts of the real roots, ascending, NaN-padded on the right.

    A root ``zeta`` is real when ``|Im zeta| <= max(tol_z, 1e-7) * (1 + |zeta|)``;
    keeping the complex ones out of the ordering stops them from swapping
    branch labels with the real ones.
    """
    re = z.real
    real = ~np.isnan(re) & (np.abs(z.imag) <= max(tol_z, 1e-7) * (1.0 + np.abs(z)))
    key = np.where(real, re, np.inf)
    key.sort(axis=1)
    return np.where(np.isfinite(key), key, np.nan)


def _edge_key(i, j, e):
    # edges are shared between cells, so key them by node pairs
    if e == 0:
        return ((i, j), (i + 1, j))
    if e == 1:
        return ((i + 1, j), (i + 1, j + 1))
    if e == 2:
        return ((i, j + 1), (i + 1, j + 1))
    return ((i, j), (i, j + 1))


def _edge_point(key, F, n1, n2):
    (i0, j0), (i1, j1) = key
    f0, f1 = F[i0, j0], F[i1, j1]
    t = f0 / (f0 - f1)
    return (
        n1[i0] + t * (n1[i1] - n1[i0]),
        n2[j0] + t * (n2[j1] - n2[j0]),
    )


def _link(adj):
    """Walk the segment graph into chains; yields ``(keys, closed)``."""
    seen_edges = set()

    def walk(start, nxt):
        chain = [start]
        prev, cur = start, nxt
        while True:
            seen_edges.add(frozenset((prev, cur)))
            chain.append(cur)
            if cur == start:
                return chain, True
            options = [n for n in adj[cur] if frozenset((cur, n)) not in seen_edges]
            if not options:
                return chain, False
            prev, cur = cur, options[0]

    out = []
    # open chains start at dangling ends
    for key in sorted(adj):
        if len(adj[key]) == 1:
            n = adj[key][0]
            if frozenset((key, n)) not in seen_edges:
                out.append(walk(key, n))
    for key in sorted(adj):
        for n in adj[key]:
            if frozenset((key, n)) not in seen_edges:
                out.append(walk(key, n))
    return out


def _validated(sys, support, alpha, pts, closed, branch, tol, h, scale):
    if len(pts) < 2:
        return []
    arr = np.array(pts)
    ok = zero_distance(sys, support, alpha, arr[:, 0], arr[:, 1], scale) <= tol
    # the node grid spans [0, 2pi]; keep the far edge just inside the torus
    # chart instead of wrapping it to 0, which would cut off the last segment
    wrapped = np.clip(arr, 0.0, np.nextafter(TWO_PI, 0.0))
    step_ok = np.ones(len(arr), dtype=bool)
    step_ok[1:] = np.hypot(*np.diff(wrapped, axis=0).T) < 2.0 * h
    out = []
    run: list[TorusPoint] = []
    for p, good, link in zip(wrapped, ok, step_ok):
        if run and not link:
            out.append(run)
            run = []
        if good:
            run.append(TorusPoint(float(p[0]), float(p[1])))
        elif run:
            out.append(run)
            run = []
    if run:
        out.append(run)
    whole = len(out) == 1 and len(out[0]) == len(pts)
    return [ZeroCurve(alpha, r, closed and whole, branch) for r in out if len(r) >= 2]


def _degenerate_lines(sys, support, scale, near_dead, alpha, nodes):
    """Grid rows or columns on which the flux polynomial vanishes identically.

    Candidates are node lines that are small everywhere on the shifted grid;
    each is confirmed on the exact grid line before it is emitted.
    """
    top = float(np.nextafter(TWO_PI, 0.0))
    curves = []
    for axis in (0, 1):
        for j in range(len(nodes) - 1):
            line = near_dead[:, j] if axis == 1 else near_dead[j, :]
            if not line.all():
                continue
            c = np.full(len(nodes), nodes[j])
            k1, k2 = (nodes, c) if axis == 1 else (c, nodes)
            g = _zeta_coefficients_chunked(sys, k1, k2, support)
            if np.abs(g).max() > 1e-12 * scale:
                continue
            run = np.append(nodes[:-1], top)
            if axis == 1:
                pts = [TorusPoint(float(x), float(nodes[j])) for x in run]
            else:
                pts = [TorusPoint(float(nodes[j]), float(y)) for y in run]
            curves.append(ZeroCurve(alpha, pts, True, -1))
    return curves


def curves_length(curves: Sequence[ZeroCurve]) -> float:
    return float(sum(c.length for c in curves))
