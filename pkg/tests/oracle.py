"""Independent reference formulas for the tests.

Every relation here is a scalar dispersion relation for the equivalent
Kirchhoff network, derived by hand and evaluated with plain numpy and
scipy.  None of it touches the package's matrices.
"""

import math

import numpy as np
from scipy.optimize import brentq


def comb_dispersion(k, alpha, l1, l2):
    """Spine ``l1``, tooth ``l2`` with a free tip; pole-free form."""
    a, b = k * l1, k * l2
    return np.cos(b) * (np.cos(a) - np.cos(alpha)) - 0.5 * np.sin(a) * np.sin(b)


def ladder_dispersion(k, alpha, l1, l2):
    """Rail ``l1``, stub ``l2`` with a clamped end; pole-free form."""
    a, b = k * l1, k * l2
    return np.sin(b) * (np.cos(a) - np.cos(alpha)) + 0.5 * np.sin(a) * np.cos(b)


def loop_dispersion(k, alpha, l1, l2):
    """Rings of two equal arcs ``l2`` joined by bonds ``l1`` (dispersive bands only)."""
    a, b = k * l1, k * l2
    return (9.0 * np.cos(a + b) - np.cos(a - b)) / 8.0 - np.cos(alpha)


def loop_flat_roots(l2, k_max):
    """Ring states with nodes on both junctions exist at every flux."""
    n = np.arange(1, int(k_max * l2 / math.pi) + 1)
    return n * math.pi / l2


def star_dispersion(k, lengths):
    """Star with clamped tips: ``sum_j cot(k L_j) = 0`` times the product of sines."""
    s = [np.sin(k * L) for L in lengths]
    c = [np.cos(k * L) for L in lengths]
    total = 0.0
    for j in range(len(lengths)):
        term = c[j]
        for i in range(len(lengths)):
            if i != j:
                term = term * s[i]
        total = total + term
    return total


def scalar_roots(f, k_min, k_max, n=200_000):
    """Sign changes of a real function, polished by Brent's method."""
    ks = np.linspace(k_min, k_max, n)
    v = f(ks)
    out = []
    for i in np.nonzero(np.sign(v[:-1]) * np.sign(v[1:]) < 0)[0]:
        out.append(brentq(f, ks[i], ks[i + 1], xtol=1e-14, rtol=1e-15))
    return np.array(out)


def dispersive_roots(topology, alpha, l1, l2, k_max, k_min=1e-3):
    f = {"comb": comb_dispersion, "ladder": ladder_dispersion, "loop": loop_dispersion}[topology]
    return scalar_roots(lambda k: f(k, alpha, l1, l2), k_min, k_max)


# -- regions of the phase torus ---------------------------------------------------------


def comb_region(k1, k2):
    with np.errstate(divide="ignore", invalid="ignore"):
        g = (3 * np.cos(k1 + k2) + np.cos(k1 - k2)) / (4 * np.cos(k2))
    return np.abs(g) <= 1


def ladder_region(k1, k2):
    with np.errstate(divide="ignore", invalid="ignore"):
        g = np.cos(k1) + 0.5 * np.sin(k1) / np.tan(k2)
    return np.abs(g) <= 1


def loop_region(k1, k2):
    return np.abs((9 * np.cos(k1 + k2) - np.cos(k1 - k2)) / 8) <= 1


REGIONS = {"comb": comb_region, "ladder": ladder_region, "loop": loop_region}


def region_fraction(topology, n):
    m = (np.arange(n) + 0.5) * 2 * math.pi / n
    K1, K2 = np.meshgrid(m, m, indexing="ij")
    return float(REGIONS[topology](K1, K2).mean())
