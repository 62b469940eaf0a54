"""Causal cones of nearest-neighbour bang-bang circuits.

A gate slot is ``(kind, layer, index)`` with ``kind`` either ``"beta"``
(bond gate, index into ``Lattice.bonds``) or ``"alpha"`` (site gate).
Bond gates of one layer commute, so a free gate in layer ``j`` spreads its
influence by one site per ZZ layer ``j+1 .. N``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Iterable

from .model import OPEN_CHAIN, OPEN_SQUARE, Lattice

BETA = "beta"
ALPHA = "alpha"

Slot = tuple[str, int, int]


@dataclass(frozen=True)
class ConeRegion:
    lattice: Lattice
    N: int
    free_bonds: tuple[frozenset[int], ...]
    free_sites: tuple[frozenset[int], ...]
    groups: tuple[tuple[Slot, ...], ...]
    label: str = ""

    def __post_init__(self):
        if len(self.free_bonds) != self.N or len(self.free_sites) != self.N:
            raise ValueError("one slot set per layer required")
        nb, ns = self.lattice.n_bonds, self.lattice.n_sites
        for fb, fs in zip(self.free_bonds, self.free_sites):
            if any(b < 0 or b >= nb for b in fb) or any(i < 0 or i >= ns for i in fs):
                raise ValueError("slot index out of range for the lattice")
        flat = [s for g in self.groups for s in g]
        if len(flat) != len(set(flat)) or set(flat) != set(self.slots()):
            raise ValueError("tying groups must partition the free slots")

    def slots(self) -> list[Slot]:
        out: list[Slot] = []
        for j in range(self.N):
            out += [(BETA, j, b) for b in sorted(self.free_bonds[j])]
            out += [(ALPHA, j, i) for i in sorted(self.free_sites[j])]
        return out

    @property
    def n_free(self) -> int:
        return sum(len(b) + len(s) for b, s in zip(self.free_bonds, self.free_sites))

    @property
    def n_variables(self) -> int:
        return len(self.groups)

    def issubset(self, other: "ConeRegion") -> bool:
        return all(
            a <= b and c <= d
            for a, b, c, d in zip(self.free_bonds, other.free_bonds, self.free_sites, other.free_sites)
        )

    def is_empty(self) -> bool:
        return self.n_free == 0


# ---------------------------------------------------------------------------
# symmetry


def symmetry_group(lat: Lattice, tie: bool = True) -> list[tuple[int, ...]]:
    """Site permutations used for tying: chain mirror; square D4 or rectangle D2."""
    n = lat.n_sites
    ident = tuple(range(n))
    if not tie:
        return [ident]
    if not lat.is_2d:
        return [ident, tuple(n - 1 - i for i in range(n))]
    W, H = lat.lx, lat.ly

    def perm(f):
        return tuple(f(*divmod(s, W)) for s in range(n))

    gens = [
        perm(lambda r, c: r * W + (W - 1 - c)),
        perm(lambda r, c: (H - 1 - r) * W + c),
    ]
    if W == H:
        gens.append(perm(lambda r, c: c * W + (W - 1 - r)))
    group = {ident}
    frontier = [ident]
    while frontier:
        p = frontier.pop()
        for gperm in gens:
            q = tuple(gperm[p[s]] for s in range(n))
            if q not in group:
                group.add(q)
                frontier.append(q)
    return sorted(group)


def _bond_map(lat: Lattice, perm: tuple[int, ...]) -> list[int]:
    index = {b: k for k, b in enumerate(lat.bonds)}
    out = []
    for i, j in lat.bonds:
        a, c = perm[i], perm[j]
        key = (a, c) if (a, c) in index else (c, a)
        out.append(index[key])
    return out


def _make_region(lat: Lattice, N: int, bonds, sites, tie: bool, label: str) -> ConeRegion:
    group = symmetry_group(lat, tie)
    bmaps = [_bond_map(lat, p) for p in group]
    fb = [set(x) for x in bonds]
    fs = [set(x) for x in sites]
    # close the free set under the symmetry so tying is well defined
    for j in range(N):
        fs[j] = {p[i] for p in group for i in fs[j]}
        fb[j] = {m[b] for m in bmaps for b in fb[j]}
    groups: list[tuple[Slot, ...]] = []
    for j in range(N):
        seen: set[int] = set()
        for b in sorted(fb[j]):
            if b in seen:
                continue
            orbit = sorted({m[b] for m in bmaps})
            seen.update(orbit)
            groups.append(tuple((BETA, j, o) for o in orbit))
        seen = set()
        for i in sorted(fs[j]):
            if i in seen:
                continue
            orbit = sorted({p[i] for p in group})
            seen.update(orbit)
            groups.append(tuple((ALPHA, j, o) for o in orbit))
    return ConeRegion(
        lat, N, tuple(frozenset(x) for x in fb), tuple(frozenset(x) for x in fs),
        tuple(groups), label,
    )


def empty_region(lat: Lattice, N: int) -> ConeRegion:
    return ConeRegion(lat, N, (frozenset(),) * N, (frozenset(),) * N, (), "empty")


def full_region(lat: Lattice, N: int, tie: bool = False) -> ConeRegion:
    return _make_region(
        lat, N, [range(lat.n_bonds)] * N, [range(lat.n_sites)] * N, tie, "all"
    )


def _require_chain(lat: Lattice) -> None:
    if lat.kind != OPEN_CHAIN:
        raise ValueError("boundary cones are defined for open chains")


def cone_for_depth(lat: Lattice, N: int, d: int, mirror: bool = True) -> ConeRegion:
    """Gates that can influence sites ``0 .. d-1`` (and their mirror images).

    Layer ``j`` (0-based) frees site gates ``i < d + N - 1 - j`` and bond
    gates ``(b, b+1)`` with ``b < d + N - 1 - j``.
    """
    _require_chain(lat)
    if d < 0:
        raise ValueError("depth must be non-negative")
    L = lat.n_sites
    if d == 0:
        return empty_region(lat, N)
    if d > L:
        warnings.warn(f"depth {d} exceeds the chain length {L}; clamping", stacklevel=2)
        d = L
    sites, bonds = [], []
    for j in range(N):
        r = d + N - 1 - j
        sites.append(range(min(r, L)))
        bonds.append(range(min(r, L - 1)))
    return _make_region(lat, N, bonds, sites, mirror, f"d={d}")


def ends_region(lat: Lattice, N: int, mirror: bool = True) -> ConeRegion:
    """The end site gate and end bond gate of every layer, at both ends."""
    _require_chain(lat)
    L = lat.n_sites
    sites = [{0, L - 1}] * N
    bonds = [{0, lat.n_bonds - 1}] * N
    return _make_region(lat, N, bonds, sites, mirror, "ends")


def _corner_sites(lat: Lattice) -> set[int]:
    W, H = lat.lx, lat.ly
    return {0, W - 1, (H - 1) * W, H * W - 1}


def _boundary_sites(lat: Lattice) -> set[int]:
    W, H = lat.lx, lat.ly
    return {s for s in range(lat.n_sites)
            if divmod(s, W)[0] in (0, H - 1) or divmod(s, W)[1] in (0, W - 1)}


def corner_region(lat: Lattice, N: int) -> ConeRegion:
    """Corner site gates and the bond gates touching a corner, per layer."""
    if lat.kind != OPEN_SQUARE:
        raise ValueError("corner regions need an open square lattice")
    corners = _corner_sites(lat)
    cb = {b for b, (i, j) in enumerate(lat.bonds) if i in corners or j in corners}
    if lat.lx != lat.ly:
        warnings.warn("non-square lattice: using mirror tying instead of 4-fold", stacklevel=2)
    return _make_region(lat, N, [cb] * N, [corners] * N, True, "corners")


def edge_region(lat: Lattice, N: int) -> ConeRegion:
    """All boundary site gates and the bond gates running along the boundary."""
    if lat.kind != OPEN_SQUARE:
        raise ValueError("edge regions need an open square lattice")
    edge = _boundary_sites(lat)
    eb = {b for b, (i, j) in enumerate(lat.bonds) if i in edge and j in edge}
    if lat.lx != lat.ly:
        warnings.warn("non-square lattice: using mirror tying instead of 4-fold", stacklevel=2)
    return _make_region(lat, N, [eb] * N, [edge] * N, True, "edges")


# ---------------------------------------------------------------------------
# light cones


def _spread(sites: set[int], nbrs: list[list[int]], steps: int) -> set[int]:
    out = set(sites)
    for _ in range(steps):
        out |= {k for s in out for k in nbrs[s]}
    return out


def slot_light_cone(lat: Lattice, N: int, slot: Slot) -> set[int]:
    """Sites whose reduced state can depend on one gate slot."""
    kind, j, idx = slot
    start = set(lat.bonds[idx]) if kind == BETA else {idx}
    return _spread(start, lat.neighbours(), N - 1 - j)


def affected_sites(region: ConeRegion) -> frozenset[int]:
    nbrs = region.lattice.neighbours()
    out: set[int] = set()
    for kind, j, idx in region.slots():
        start = set(region.lattice.bonds[idx]) if kind == BETA else {idx}
        out |= _spread(start, nbrs, region.N - 1 - j)
    return frozenset(out)


def backward_cone(lat: Lattice, N: int, sites: Iterable[int]) -> ConeRegion:
    """All gate slots whose light cone reaches any of ``sites`` (untied)."""
    target = set(sites)
    nbrs = lat.neighbours()
    fb, fs = [], []
    for j in range(N):
        reach = _spread(target, nbrs, N - 1 - j)
        fs.append({i for i in range(lat.n_sites) if i in reach})
        fb.append({b for b, (i, k) in enumerate(lat.bonds) if i in reach or k in reach})
    return _make_region(lat, N, fb, fs, False, "backward")


# ---------------------------------------------------------------------------
# audit output


def region_to_text(region: ConeRegion) -> str:
    """Explicit slot lists, one line per layer and gate kind, plus the tying groups."""
    lines = [
        f"lattice = {region.lattice.describe()}",
        f"N = {region.N}",
        f"label = {region.label}",
    ]
    for j in range(region.N):
        lines.append(f"bonds[{j}] = " + ",".join(str(b) for b in sorted(region.free_bonds[j])))
        lines.append(f"sites[{j}] = " + ",".join(str(i) for i in sorted(region.free_sites[j])))
    for k, grp in enumerate(region.groups):
        lines.append(f"group[{k}] = " + " ".join(f"{t}:{j}:{i}" for t, j, i in grp))
    return "\n".join(lines) + "\n"


def render_chain(region: ConeRegion, width: int | None = None) -> str:
    """Text picture of a 1D cone, last layer on top, ``#`` free and ``.`` frozen.

    Each layer shows an X row above a ZZ row; bond characters sit between sites.
    """
    lat = region.lattice
    L = lat.n_sites if width is None else min(width, lat.n_sites)
    rows = []
    for j in reversed(range(region.N)):
        xs = "".join("#" if i in region.free_sites[j] else "." for i in range(L))
        zz = "".join(
            "=" if b in region.free_bonds[j] else "-" for b in range(min(L - 1, lat.n_bonds))
        )
        rows.append(f"X {j + 1:>2} " + " ".join(xs))
        rows.append(f"ZZ{j + 1:>2}  " + " ".join(zz))
    return "\n".join(rows) + "\n"
