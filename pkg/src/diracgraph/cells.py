"""Unit-cell descriptions for periodic Dirac graphs.

A cell is a list of bonds (each a segment ``[0, length]``), a list of
vertices that glue bond ends together under one of four matching rules,
and a list of quasiperiodic vertex pairs that stitch the cell to its
right-hand neighbour with the Bloch phase ``exp(i*alpha)``.

JSON layout (consumed by ``diracgraph ... --cell path.json``)::

    {
      "name": "comb",
      "bonds": [{"id": "b-", "length": 0.5}, ...],
      "vertices": [
        {"id": "center", "role": "kirchhoff",
         "attached": [["b-", "0"], ["b+", "0"], ["b", "0"]]},
        {"id": "tip", "role": "dead_end_chi", "attached": [["b", "L"]]},
        {"id": "left", "role": "flux_link", "attached": [["b-", "L"]]},
        {"id": "right", "role": "flux_link", "attached": [["b+", "L"]]}
      ],
      "flux_pairs": [["left", "right"]]
    }

Vertex ``id`` is optional; without it a vertex is addressed by its
position in the array.  In a flux pair ``[left, right]`` the right vertex
carries ``exp(i*alpha)`` times the left one.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import AssemblyError

ROLES = ("kirchhoff", "dead_end_chi", "dead_end_phi", "flux_link")
ENDS = ("0", "L")


@dataclass(frozen=True)
class Bond:
    id: str
    length: float


@dataclass(frozen=True)
class Vertex:
    role: str
    attached: tuple[tuple[str, str], ...]
    id: str | None = None


@dataclass(frozen=True)
class CellSpec:
    bonds: tuple[Bond, ...]
    vertices: tuple[Vertex, ...]
    flux_pairs: tuple[tuple[int, int], ...] = ()
    name: str = "custom"
    _bond_index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_bond_index", {b.id: i for i, b in enumerate(self.bonds)})
        self.check()

    @property
    def n_bonds(self) -> int:
        return len(self.bonds)

    @property
    def lengths(self) -> np.ndarray:
        return np.array([b.length for b in self.bonds], dtype=float)

    def bond_index(self, bond_id: str) -> int:
        try:
            return self._bond_index[bond_id]
        except KeyError:
            raise AssemblyError(f"unknown bond id {bond_id!r}") from None

    def check(self) -> None:
        """Raise AssemblyError unless the cell is well formed."""
        if not self.bonds:
            raise AssemblyError("cell has no bonds")
        if len(self._bond_index) != len(self.bonds):
            raise AssemblyError("duplicate bond ids")
        for b in self.bonds:
            if not (b.length > 0 and np.isfinite(b.length)):
                raise AssemblyError(f"bond {b.id!r} must have positive finite length")

        seen: dict[tuple[str, str], int] = {}
        for vi, v in enumerate(self.vertices):
            if v.role not in ROLES:
                raise AssemblyError(f"vertex {vi}: unknown role {v.role!r}")
            if not v.attached:
                raise AssemblyError(f"vertex {vi} has no attached bond ends")
            if v.role.startswith("dead_end") and len(v.attached) != 1:
                raise AssemblyError(f"vertex {vi}: a dead end takes exactly one bond end")
            for bid, end in v.attached:
                self.bond_index(bid)
                if end not in ENDS:
                    raise AssemblyError(f"vertex {vi}: bond end must be '0' or 'L', got {end!r}")
                if (bid, end) in seen:
                    raise AssemblyError(f"bond end {bid}:{end} attached twice")
                seen[(bid, end)] = vi
        missing = [(b.id, e) for b in self.bonds for e in ENDS if (b.id, e) not in seen]
        if missing:
            raise AssemblyError(f"unattached bond ends: {missing}")

        paired: list[int] = []
        for left, right in self.flux_pairs:
            for vi in (left, right):
                if not 0 <= vi < len(self.vertices):
                    raise AssemblyError(f"flux pair references missing vertex {vi}")
                if self.vertices[vi].role != "flux_link":
                    raise AssemblyError(f"flux pair vertex {vi} is not a flux_link")
            if left == right:
                raise AssemblyError("flux pair joins a vertex to itself")
            paired += [left, right]
        links = [vi for vi, v in enumerate(self.vertices) if v.role == "flux_link"]
        if sorted(paired) != sorted(links):
            raise AssemblyError("every flux_link vertex must appear in exactly one flux pair")

        for b in self.bonds:
            if seen[(b.id, "0")] == seen[(b.id, "L")]:
                raise AssemblyError(f"bond {b.id!r} is a self-loop; split it with a vertex")

    def adjacency(self) -> np.ndarray:
        """Symmetric 0/1 vertex adjacency of the cell (no diagonal)."""
        owner = {}
        for vi, v in enumerate(self.vertices):
            for bid, end in v.attached:
                owner[(bid, end)] = vi
        n = len(self.vertices)
        C = np.zeros((n, n), dtype=int)
        for b in self.bonds:
            i, j = owner[(b.id, "0")], owner[(b.id, "L")]
            C[i, j] = C[j, i] = 1
        return C

    # -- serialization -------------------------------------------------

    def to_dict(self) -> dict:
        ids = [v.id if v.id is not None else i for i, v in enumerate(self.vertices)]
        out = {
            "name": self.name,
            "bonds": [{"id": b.id, "length": b.length} for b in self.bonds],
            "vertices": [],
            "flux_pairs": [[ids[a], ids[b]] for a, b in self.flux_pairs],
        }
        for v in self.vertices:
            d = {"role": v.role, "attached": [[bid, end] for bid, end in v.attached]}
            if v.id is not None:
                d = {"id": v.id, **d}
            out["vertices"].append(d)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "CellSpec":
        try:
            bonds = tuple(Bond(str(b["id"]), float(b["length"])) for b in data["bonds"])
            vertices = tuple(
                Vertex(
                    role=str(v["role"]),
                    attached=tuple((str(bid), str(end)) for bid, end in v["attached"]),
                    id=None if v.get("id") is None else str(v["id"]),
                )
                for v in data["vertices"]
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise AssemblyError(f"malformed cell document: {exc}") from exc
        lookup = {v.id: i for i, v in enumerate(vertices) if v.id is not None}

        def resolve(ref):
            if isinstance(ref, int) and not isinstance(ref, bool):
                return ref
            if ref in lookup:
                return lookup[ref]
            raise AssemblyError(f"flux pair references unknown vertex {ref!r}")

        pairs = tuple((resolve(a), resolve(b)) for a, b in data.get("flux_pairs", []))
        return cls(bonds, vertices, pairs, name=str(data.get("name", "custom")))

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def load(cls, path: str | Path) -> "CellSpec":
        with open(path) as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise AssemblyError(f"{path}: not valid JSON ({exc})") from exc
        return cls.from_dict(data)


def _cell(name, bonds, vertices, pairs) -> CellSpec:
    bonds = tuple(Bond(i, float(L)) for i, L in bonds)
    verts = tuple(Vertex(role, tuple(att), vid) for vid, role, att in vertices)
    ids = {v.id: i for i, v in enumerate(verts)}
    return CellSpec(bonds, verts, tuple((ids[a], ids[b]) for a, b in pairs), name=name)


def comb_cell(l1: float, l2: float) -> CellSpec:
    """Comb cell: two half spine bonds and a tooth with chi = 0 at its tip."""
    return _cell(
        "comb",
        [("b-", l1 / 2), ("b+", l1 / 2), ("b", l2)],
        [
            ("center", "kirchhoff", [("b-", "0"), ("b+", "0"), ("b", "0")]),
            ("tip", "dead_end_chi", [("b", "L")]),
            ("left", "flux_link", [("b-", "L")]),
            ("right", "flux_link", [("b+", "L")]),
        ],
        [("left", "right")],
    )


def ladder_cell(l1: float, l2: float) -> CellSpec:
    """Boundary-condition cell whose spectrum equals the printed ladder S-matrix.

    This is one rail of the ladder with a rung stub of length ``l2`` ending
    in a phi = 0 node, i.e. the antisymmetric sector of a two-rail ladder
    whose rungs have length ``2*l2``.
    """
    return _cell(
        "ladder",
        [("r-", l1 / 2), ("r+", l1 / 2), ("s", l2)],
        [
            ("center", "kirchhoff", [("r-", "0"), ("r+", "0"), ("s", "0")]),
            ("node", "dead_end_phi", [("s", "L")]),
            ("left", "flux_link", [("r-", "L")]),
            ("right", "flux_link", [("r+", "L")]),
        ],
        [("left", "right")],
    )


def two_rail_ladder_cell(l1: float, l2: float) -> CellSpec:
    """Genuine two-rail ladder with one rung per cell and tied rail fluxes."""
    return _cell(
        "two_rail_ladder",
        [("t-", l1 / 2), ("t+", l1 / 2), ("d-", l1 / 2), ("d+", l1 / 2), ("rung", l2)],
        [
            ("top", "kirchhoff", [("t-", "0"), ("t+", "0"), ("rung", "0")]),
            ("bottom", "kirchhoff", [("d-", "0"), ("d+", "0"), ("rung", "L")]),
            ("tl", "flux_link", [("t-", "L")]),
            ("tr", "flux_link", [("t+", "L")]),
            ("dl", "flux_link", [("d-", "L")]),
            ("dr", "flux_link", [("d+", "L")]),
        ],
        [("tl", "tr"), ("dl", "dr")],
    )


def loop_cell(l1: float, l2: float, l3: float | None = None) -> CellSpec:
    """Necklace cell: a ring of two arcs (l2, l3) joined to the next ring by a bond l1."""
    l3 = l2 if l3 is None else l3
    return _cell(
        "loop",
        [("c-", l1 / 2), ("c+", l1 / 2), ("arc2", l2), ("arc3", l3)],
        [
            ("p", "kirchhoff", [("arc2", "0"), ("arc3", "0"), ("c-", "0")]),
            ("q", "kirchhoff", [("arc2", "L"), ("arc3", "L"), ("c+", "0")]),
            ("left", "flux_link", [("c-", "L")]),
            ("right", "flux_link", [("c+", "L")]),
        ],
        [("left", "right")],
    )


def star_cell(lengths) -> CellSpec:
    """Star graph with phi continuity and zero chi sum at the centre, phi = 0 at the tips."""
    lengths = list(lengths)
    bonds = [(f"b{j + 1}", L) for j, L in enumerate(lengths)]
    verts = [("center", "kirchhoff", [(bid, "0") for bid, _ in bonds])]
    verts += [(f"tip{j + 1}", "dead_end_phi", [(bid, "L")]) for j, (bid, _) in enumerate(bonds)]
    return _cell("star", bonds, verts, [])


def interval_cell(length: float) -> CellSpec:
    """Single interval with phi = 0 at both ends."""
    return _cell(
        "interval",
        [("b", length)],
        [("a", "dead_end_phi", [("b", "0")]), ("z", "dead_end_phi", [("b", "L")])],
        [],
    )


BUILTIN_CELLS = {"comb": comb_cell, "ladder": ladder_cell, "loop": loop_cell}
