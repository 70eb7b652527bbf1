"""Band spectra over the flux interval and detection of (avoided) level crossings."""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .core import energy
from .errors import DomainError, NonConvergenceError
from .secular import SecularSystem, find_roots_k, golden_minimize

DELTA_CROSS = 1e-6
DELTA_AVOID = 1e-4
K_FLOOR = 1e-6
CSV_COLUMNS = ("alpha", "k", "E_pos", "E_neg", "band_index", "multiplicity")


def alpha_grid(steps: int) -> np.ndarray:
    """``steps`` points on ``[-pi, pi]``, exactly antisymmetric about 0."""
    if steps < 2:
        raise DomainError("alpha_steps must be at least 2")
    a = np.linspace(-math.pi, math.pi, steps)
    return 0.5 * (a - a[::-1])


class BandPoint(NamedTuple):
    alpha: float
    k: float
    band_index: int
    multiplicity: int

    @property
    def E_pos(self) -> float:
        return float(energy(self.k, "positive"))

    @property
    def E_neg(self) -> float:
        return -self.E_pos


@dataclass
class BandSet:
    """Band spectrum ``k_n(alpha)`` with bands indexed by sorted order at each flux.

    A root of multiplicity ``m`` occupies ``m`` consecutive band indices with
    equal ``k``.  Flat-band intervals reported by the root finder (the
    secular function vanishing on a whole ``k`` range) are kept in
    ``flat_intervals`` rather than as band points.
    """

    geometry: dict
    alpha_grid: np.ndarray
    ks: list[np.ndarray]
    multiplicities: list[np.ndarray]
    flat_intervals: list[tuple[float, float, float]] = field(default_factory=list)
    k_max: float | None = None
    system: SecularSystem | None = field(default=None, repr=False, compare=False)

    @property
    def topology(self) -> str:
        return self.geometry.get("topology", "custom")

    def points(self) -> list[BandPoint]:
        out = []
        for a, ks, ms in zip(self.alpha_grid, self.ks, self.multiplicities):
            for n, (k, m) in enumerate(zip(ks, ms)):
                out.append(BandPoint(float(a), float(k), n, int(m)))
        return out

    def band_matrix(self) -> np.ndarray:
        """``(n_alpha, n_bands)`` array of ``k``, NaN where a band is absent."""
        width = max((len(k) for k in self.ks), default=0)
        K = np.full((len(self.alpha_grid), width), np.nan)
        for i, k in enumerate(self.ks):
            K[i, : len(k)] = k
        return K

    def energies(self, branch: str = "positive") -> np.ndarray:
        return energy(np.nan_to_num(self.band_matrix(), nan=np.inf), branch)

    def __eq__(self, other) -> bool:
        if not isinstance(other, BandSet):
            return NotImplemented
        return self.points() == other.points()


def _column(sys, alpha, k_max, tol, samples):
    roots = find_roots_k(sys, alpha, (K_FLOOR, k_max), samples=samples, tol=tol)
    ks, ms, flats = [], [], []
    for r in roots:
        if r.flat:
            flats.append((float(alpha), r.interval[0], r.interval[1]))
            continue
        m = max(1, r.multiplicity)
        ks += [r.k] * m
        ms += [m] * m
    return np.array(ks, dtype=float), np.array(ms, dtype=int), flats


def compute_bands(
    sys: SecularSystem,
    alpha_steps: int,
    k_max: float,
    tol: float = 1e-12,
    samples: int | None = None,
    threads: int = 1,
) -> BandSet:
    """Roots ``k`` in ``(0, k_max]`` at each flux of an antisymmetric grid on ``[-pi, pi]``.

    Build ``sys`` with ``SecularSystem.from_beta`` to use the ``l1 = beta*l2``
    parameterization.  Columns are independent and may be computed on
    several threads; the result does not depend on the thread count.
    """
    if not k_max > 0:
        raise DomainError("k_max must be positive")
    grid = alpha_grid(alpha_steps)

    def work(a):
        return _column(sys, float(a), k_max, tol, samples)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            cols = list(ex.map(work, grid))
    else:
        cols = [work(a) for a in grid]
    geometry = sys.describe()
    if sys.topology != "custom":
        geometry["beta"] = sys.l1 / sys.l2
    return BandSet(
        geometry=geometry,
        alpha_grid=grid,
        ks=[c[0] for c in cols],
        multiplicities=[c[1] for c in cols],
        flat_intervals=[f for c in cols for f in c[2]],
        k_max=float(k_max),
        system=sys,
    )


# -- crossings --------------------------------------------------------------------


@dataclass
class CrossingEvent:
    alpha: float
    band_pair: tuple[int, int]
    min_gap: float
    kind: str
    k: float = math.nan

    def to_dict(self) -> dict:
        return {"alpha": self.alpha, "band_pair": list(self.band_pair), "min_gap": self.min_gap,
                "kind": self.kind, "k": self.k}


def _parabolic(x, y):
    """Vertex of the parabola through three equally spaced samples."""
    d = y[0] - 2.0 * y[1] + y[2]
    if d <= 0:
        return x[1], y[1]
    h = x[1] - x[0]
    t = 0.5 * (y[0] - y[2]) / d
    t = min(max(t, -1.0), 1.0)
    return x[1] + t * h, max(y[1] - 0.25 * (y[0] - y[2]) * t, 0.0)


def _pair_gap(sys, alpha, lo, hi, tol):
    """Gap between the two lowest roots in ``[lo, hi]`` (counted with multiplicity)."""
    roots = find_roots_k(sys, alpha, (lo, hi), samples=64, tol=tol)
    ks = []
    for r in roots:
        if not r.flat:
            ks += [r.k] * max(1, r.multiplicity)
    if len(ks) != 2:
        return math.nan, math.nan
    return ks[1] - ks[0], 0.5 * (ks[0] + ks[1])


def _refine(sys, grid, cols, i, mid, tol):
    """Golden-section search in flux for the closest approach of a root pair.

    The flux window is ``grid[i-1]..grid[i+1]``.  Roots are re-solved in a
    ``k`` window centred on the pair midpoint, wide enough to hold the two
    roots nearest ``mid`` in all three columns and narrow enough to leave
    out every third root.
    """
    inner, outer = 0.0, math.inf
    for ks in cols[i - 1 : i + 2]:
        d = np.sort(np.abs(np.asarray(ks) - mid))
        if len(d) >= 2:
            inner = max(inner, d[1])
        if len(d) >= 3:
            outer = min(outer, d[2])
    if not inner < outer:
        return None
    r = 0.5 * (inner + outer) if math.isfinite(outer) else 2.0 * inner + 1e-3
    w_lo, w_hi = max(mid - r, 1e-9), mid + r

    def gap(a):
        g, _ = _pair_gap(sys, a, w_lo, w_hi, tol)
        return math.inf if math.isnan(g) else g

    try:
        a, g = golden_minimize(gap, grid[i - 1], grid[i + 1], 1e-10)
    except NonConvergenceError:
        return None
    if not math.isfinite(g):
        return None
    _, k = _pair_gap(sys, a, w_lo, w_hi, tol)
    return a, g, k


def _matched_gap(ks, mid):
    """Gap of the adjacent pair whose midpoint is nearest ``mid``."""
    if len(ks) < 2:
        return math.inf
    mids = 0.5 * (ks[:-1] + ks[1:])
    j = int(np.abs(mids - mid).argmin())
    return float(ks[j + 1] - ks[j])


def detect_crossings(
    bands: BandSet,
    delta_cross: float = DELTA_CROSS,
    delta_avoid: float = DELTA_AVOID,
    refine: bool = True,
    tol: float = 1e-12,
) -> list[CrossingEvent]:
    """Closest approaches of adjacent bands, classified by the minimal gap.

    Gaps are taken between neighbouring roots at each flux.  A gap is a
    local minimum when it is no larger than the gap of the pair with the
    nearest midpoint at both neighbouring fluxes; matching by position
    rather than by index keeps pairs aligned when a band leaves through
    ``k -> 0`` or ``k_max``.  Each minimum is then located more precisely:
    by golden-section search in flux with fresh root solves when the band
    set carries its system and ``refine`` is set, otherwise by a parabola
    through the three grid samples.  A minimum is ``crossing`` below
    ``delta_cross``, ``avoided`` up to ``delta_avoid`` and dropped above
    that; minima on the first or last grid point are ``unresolved``.
    """
    if len(bands.alpha_grid) < 3:
        raise DomainError("crossing detection needs at least 3 flux samples")
    if not delta_cross < delta_avoid:
        raise DomainError("need delta_cross < delta_avoid")
    grid = np.asarray(bands.alpha_grid, dtype=float)
    cols = [np.asarray(k, dtype=float) for k in bands.ks]
    sys = bands.system if refine else None
    last = len(grid) - 1
    events: list[CrossingEvent] = []
    for i, ks in enumerate(cols):
        for j in range(len(ks) - 1):
            g = float(ks[j + 1] - ks[j])
            mid = float(0.5 * (ks[j] + ks[j + 1]))
            left = _matched_gap(cols[i - 1], mid) if i > 0 else math.inf
            right = _matched_gap(cols[i + 1], mid) if i < last else math.inf
            if not (g <= left and g <= right and (g < left or g < right)):
                continue
            if i == 0 or i == last:
                if g <= delta_avoid:
                    events.append(CrossingEvent(float(grid[i]), (j, j + 1), g, "unresolved", mid))
                continue
            a, gmin = _parabolic(grid[i - 1 : i + 2], np.array([left, g, right]))
            k_mid = mid
            # a V-shaped minimum may dip to zero between grid points
            could_close = g <= delta_avoid or g <= max(left - g, right - g)
            if g == 0.0:
                a, gmin = float(grid[i]), 0.0
            elif sys is not None and could_close:
                hit = _refine(sys, grid, cols, i, mid, tol)
                if hit is not None and hit[1] <= g:
                    a, gmin, k_mid = hit
            if gmin < delta_cross:
                kind = "crossing"
            elif gmin <= delta_avoid:
                kind = "avoided"
            else:
                continue
            events.append(CrossingEvent(float(a) + 0.0, (j, j + 1), float(gmin), kind, float(k_mid)))
    events.sort(key=lambda e: (e.alpha, e.band_pair))
    # a minimum between two grid points is reached from both of them
    unique: list[CrossingEvent] = []
    for e in events:
        if any(
            u.kind == e.kind and abs(u.alpha - e.alpha) < 1e-6 and abs(u.k - e.k) < 1e-6
            for u in unique
        ):
            continue
        unique.append(e)
    return unique


def summarize(events: list[CrossingEvent]) -> dict[str, int]:
    out = {"crossing": 0, "avoided": 0, "unresolved": 0}
    for e in events:
        out[e.kind] += 1
    return out


# -- serialization ----------------------------------------------------------------


def _g17(x: float) -> str:
    return format(x, ".17g")


def band_rows(bands: BandSet) -> list[tuple]:
    return [(p.alpha, p.k, p.E_pos, p.E_neg, p.band_index, p.multiplicity) for p in bands.points()]


def export_bands(bands: BandSet, fmt: str = "csv", header: str | None = None) -> str:
    """Serialize as CSV (17 significant digits, LF) or as the equivalent JSON.

    ``header`` is written first as a ``#`` comment line in CSV, or as the
    ``comment`` member in JSON.  The band geometry always goes along.
    """
    rows = band_rows(bands)
    if fmt == "csv":
        buf = io.StringIO()
        if header is not None:
            buf.write(f"# {header}\n")
        buf.write("# bandset " + json.dumps({"geometry": bands.geometry, "k_max": bands.k_max}, sort_keys=True) + "\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in rows:
            w.writerow([_g17(r[0]), _g17(r[1]), _g17(r[2]), _g17(r[3]), r[4], r[5]])
        return buf.getvalue()
    if fmt == "json":
        doc = {}
        if header is not None:
            doc["comment"] = header
        doc.update({
            "geometry": bands.geometry,
            "k_max": bands.k_max,
            "alpha_grid": [float(a) for a in bands.alpha_grid],
            "columns": list(CSV_COLUMNS),
            "rows": [list(r) for r in rows],
        })
        return json.dumps(doc, indent=1) + "\n"
    raise DomainError(f"unknown format {fmt!r}")


def load_bands(text: str, fmt: str = "csv") -> BandSet:
    """Inverse of ``export_bands``; the flux grid is rebuilt from the rows in CSV."""
    geometry, k_max = {}, None
    if fmt == "csv":
        body = []
        for line in text.splitlines():
            if line.startswith("# bandset "):
                meta = json.loads(line[len("# bandset "):])
                geometry, k_max = meta["geometry"], meta["k_max"]
            elif not line.startswith("#"):
                body.append(line)
        reader = csv.reader(body)
        head = next(reader, None)
        if head is not None and tuple(head) != CSV_COLUMNS:
            raise DomainError(f"unexpected columns {head}")
        rows = [(float(r[0]), float(r[1]), int(r[4]), int(r[5])) for r in reader if r]
        alphas = sorted({r[0] for r in rows})
    elif fmt == "json":
        doc = json.loads(text)
        geometry, k_max = doc["geometry"], doc["k_max"]
        rows = [(float(r[0]), float(r[1]), int(r[4]), int(r[5])) for r in doc["rows"]]
        alphas = doc["alpha_grid"]
    else:
        raise DomainError(f"unknown format {fmt!r}")
    by_alpha: dict[float, list] = {a: [] for a in alphas}
    for a, k, n, m in rows:
        by_alpha[a].append((n, k, m))
    ks, ms = [], []
    for a in alphas:
        col = sorted(by_alpha[a])
        ks.append(np.array([c[1] for c in col], dtype=float))
        ms.append(np.array([c[2] for c in col], dtype=int))
    return BandSet(geometry, np.array(alphas, dtype=float), ks, ms, k_max=k_max)


GNUPLOT_TEMPLATE = """\
# gnuplot template for {data}
set datafile separator ','
set datafile commentschars '#'
set key off
set xlabel 'alpha'
set ylabel 'E'
set xrange [-pi:pi]
plot '{data}' every ::1 using 1:3 with points pt 7 ps 0.3
"""
