"""Lattices, Ising parameters and bang-bang angle schedules.

The circuit acting on ``|+...+>`` is, in application order::

    ZZ(beta_1), X(g alpha_1), ZZ(beta_2), ..., ZZ(beta_N), X(g alpha_N / 2)

with bond gates ``exp(+i beta Z Z)`` and site gates ``exp(+i theta X)``.
All engines in the package share this convention through
:func:`site_angles`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

INFINITE_CHAIN = "infinite-chain"
OPEN_CHAIN = "open-chain"
RING = "ring"
OPEN_SQUARE = "open-square"
TORUS = "torus"

KINDS = (INFINITE_CHAIN, OPEN_CHAIN, RING, OPEN_SQUARE, TORUS)
CHAIN_KINDS = (OPEN_CHAIN, RING)
SQUARE_KINDS = (OPEN_SQUARE, TORUS)

SCHEDULE_FORMAT_VERSION = 1


def _frozen(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Lattice:
    """A lattice of spin-1/2 sites with a transverse-field profile.

    ``lx`` is the chain length (1D) or the number of columns (2D); ``ly`` is
    the number of rows. Sites of 2D lattices are numbered row-major,
    ``site = row * lx + col``.
    """

    kind: str
    lx: int = 0
    ly: int = 1
    fields: np.ndarray | float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown lattice kind {self.kind!r}")
        if self.kind in CHAIN_KINDS and self.lx < 2:
            raise ValueError("finite chains need L >= 2")
        if self.kind in SQUARE_KINDS and (self.lx < 2 or self.ly < 2):
            raise ValueError("2D lattices need Lx, Ly >= 2")
        if np.ndim(self.fields) == 0:
            g = float(self.fields)
            if not g > 0:
                raise ValueError("transverse field must be positive")
            object.__setattr__(self, "fields", g)
        else:
            if self.kind == INFINITE_CHAIN:
                raise ValueError("the infinite chain takes a single uniform field")
            prof = _frozen(self.fields)
            if prof.shape != (self.n_sites,):
                raise ValueError(
                    f"field profile has {prof.size} entries, lattice has {self.n_sites} sites"
                )
            if not np.all(prof > 0):
                raise ValueError("all g_i must be positive")
            object.__setattr__(self, "fields", prof)

    # constructors ---------------------------------------------------------
    @classmethod
    def infinite_chain(cls, g: float) -> "Lattice":
        return cls(INFINITE_CHAIN, 0, 1, g)

    @classmethod
    def open_chain(cls, L: int, g=1.0) -> "Lattice":
        return cls(OPEN_CHAIN, L, 1, g)

    @classmethod
    def ring(cls, L: int, g=1.0) -> "Lattice":
        return cls(RING, L, 1, g)

    @classmethod
    def open_square(cls, lx: int, ly: int, g=1.0) -> "Lattice":
        return cls(OPEN_SQUARE, lx, ly, g)

    @classmethod
    def torus(cls, lx: int, ly: int, g=1.0) -> "Lattice":
        return cls(TORUS, lx, ly, g)

    def with_fields(self, fields) -> "Lattice":
        return Lattice(self.kind, self.lx, self.ly, fields)

    # geometry -------------------------------------------------------------
    @property
    def is_finite(self) -> bool:
        return self.kind != INFINITE_CHAIN

    @property
    def is_2d(self) -> bool:
        return self.kind in SQUARE_KINDS

    @property
    def uniform(self) -> bool:
        return np.ndim(self.fields) == 0

    @property
    def n_sites(self) -> int:
        if self.kind == INFINITE_CHAIN:
            raise ValueError("the infinite chain has no finite site count")
        return self.lx * self.ly

    @property
    def bonds(self) -> tuple[tuple[int, int], ...]:
        """Nearest-neighbour pairs in canonical order.

        Chains: bond ``b`` joins ``b`` and ``b + 1``; a ring's closing bond
        ``(L-1, 0)`` comes last. Squares: horizontal bonds first, then
        vertical ones, each sorted lexicographically.
        """
        return _bonds(self.kind, self.lx, self.ly)

    @property
    def n_bonds(self) -> int:
        return len(self.bonds)

    def coords(self, site: int) -> tuple[int, int]:
        """(row, col) of a site."""
        return divmod(site, self.lx)

    def site_fields(self) -> np.ndarray:
        if self.uniform:
            return np.full(self.n_sites, self.fields)
        return np.asarray(self.fields)

    @property
    def g(self) -> float:
        """The uniform field; raises for inhomogeneous profiles."""
        if not self.uniform:
            raise ValueError("lattice carries a site-dependent field profile")
        return float(self.fields)

    def neighbours(self) -> list[list[int]]:
        nb: list[list[int]] = [[] for _ in range(self.n_sites)]
        for i, j in self.bonds:
            nb[i].append(j)
            nb[j].append(i)
        return nb

    def describe(self) -> str:
        if self.kind == INFINITE_CHAIN:
            return self.kind
        if self.is_2d:
            return f"{self.kind}({self.lx},{self.ly})"
        return f"{self.kind}({self.lx})"

    def __eq__(self, other):
        if not isinstance(other, Lattice):
            return NotImplemented
        return (
            self.kind == other.kind
            and self.lx == other.lx
            and self.ly == other.ly
            and np.array_equal(np.asarray(self.fields), np.asarray(other.fields))
        )

    def __hash__(self):
        return hash((self.kind, self.lx, self.ly, np.asarray(self.fields).tobytes()))


_BOND_CACHE: dict = {}


def _bonds(kind: str, lx: int, ly: int) -> tuple[tuple[int, int], ...]:
    key = (kind, lx, ly)
    if key in _BOND_CACHE:
        return _BOND_CACHE[key]
    if kind == INFINITE_CHAIN:
        raise ValueError("the infinite chain has no finite bond list")
    if kind == OPEN_CHAIN:
        bonds = [(i, i + 1) for i in range(lx - 1)]
    elif kind == RING:
        bonds = [(i, i + 1) for i in range(lx - 1)]
        if lx > 2:
            bonds.append((lx - 1, 0))
    else:
        periodic = kind == TORUS
        horiz, vert = set(), set()
        for r in range(ly):
            for c in range(lx):
                s = r * lx + c
                if c + 1 < lx:
                    horiz.add((s, s + 1))
                elif periodic and lx > 2:
                    horiz.add(tuple(sorted((s, r * lx))))
                if r + 1 < ly:
                    vert.add((s, s + lx))
                elif periodic and ly > 2:
                    vert.add(tuple(sorted((s, c))))
        bonds = sorted(horiz) + sorted(vert)
    out = tuple(bonds)
    _BOND_CACHE[key] = out
    return out


@dataclass(frozen=True, eq=False)
class AngleSchedule:
    """Uniform bang-bang angles ``betas[j]``, ``alphas[j]`` for layers j = 0..N-1."""

    betas: np.ndarray
    alphas: np.ndarray

    def __post_init__(self):
        b = _frozen(self.betas).reshape(-1)
        a = _frozen(self.alphas).reshape(-1)
        if b.size != a.size or b.size < 1:
            raise ValueError("betas and alphas must both have N >= 1 entries")
        if not (np.all(np.isfinite(b)) and np.all(np.isfinite(a))):
            raise ValueError("angles must be finite")
        object.__setattr__(self, "betas", b)
        object.__setattr__(self, "alphas", a)

    @property
    def N(self) -> int:
        return self.betas.size

    @classmethod
    def zeros(cls, N: int) -> "AngleSchedule":
        return cls(np.zeros(N), np.zeros(N))

    @classmethod
    def from_vector(cls, x: Sequence[float]) -> "AngleSchedule":
        """Inverse of :meth:`as_vector`: ``[betas..., alphas...]``."""
        x = np.asarray(x, dtype=float)
        n = x.size // 2
        return cls(x[:n], x[n:])

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.betas, self.alphas])

    def __neg__(self) -> "AngleSchedule":
        return AngleSchedule(-self.betas, -self.alphas)

    def __eq__(self, other):
        if not isinstance(other, AngleSchedule):
            return NotImplemented
        return np.array_equal(self.betas, other.betas) and np.array_equal(
            self.alphas, other.alphas
        )

    def __hash__(self):
        return hash((self.betas.tobytes(), self.alphas.tobytes()))


@dataclass(frozen=True)
class ApConfig:
    """Trotterized adiabatic ramp with ``N`` steps of size ``dt``."""

    N: int
    dt: float

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("N must be >= 1")
        if not self.dt > 0:
            raise ValueError("dt must be positive")

    @property
    def tau(self) -> float:
        return self.N * self.dt


@dataclass(frozen=True, eq=False)
class SiteResolvedSchedule:
    """Per-gate angles on a finite lattice.

    ``beta_layers[j, b]`` is the angle of bond ``b`` (``Lattice.bonds``
    order) in layer ``j``; ``alpha_layers[j, i]`` the angle of site ``i``.
    """

    beta_layers: np.ndarray
    alpha_layers: np.ndarray

    def __post_init__(self):
        b = _frozen(self.beta_layers)
        a = _frozen(self.alpha_layers)
        if b.ndim != 2 or a.ndim != 2 or b.shape[0] != a.shape[0] or b.shape[0] < 1:
            raise ValueError("layer arrays must be 2D with matching layer counts")
        if not (np.all(np.isfinite(b)) and np.all(np.isfinite(a))):
            raise ValueError("angles must be finite")
        object.__setattr__(self, "beta_layers", b)
        object.__setattr__(self, "alpha_layers", a)

    @property
    def N(self) -> int:
        return self.beta_layers.shape[0]

    @property
    def n_bonds(self) -> int:
        return self.beta_layers.shape[1]

    @property
    def n_sites(self) -> int:
        return self.alpha_layers.shape[1]

    def check_lattice(self, lat: Lattice) -> None:
        if self.n_sites != lat.n_sites or self.n_bonds != lat.n_bonds:
            raise ValueError(
                f"schedule sized for {self.n_sites} sites/{self.n_bonds} bonds, "
                f"lattice {lat.describe()} has {lat.n_sites}/{lat.n_bonds}"
            )

    def replace(self, beta_layers=None, alpha_layers=None) -> "SiteResolvedSchedule":
        return SiteResolvedSchedule(
            self.beta_layers if beta_layers is None else beta_layers,
            self.alpha_layers if alpha_layers is None else alpha_layers,
        )

    def __eq__(self, other):
        if not isinstance(other, SiteResolvedSchedule):
            return NotImplemented
        return np.array_equal(self.beta_layers, other.beta_layers) and np.array_equal(
            self.alpha_layers, other.alpha_layers
        )

    __hash__ = None


# --------------------------------------------------------------------------
# field profiles


def end_ramp_profile(L: int, g_end: float, g_bulk: float, flat: int = 10,
                     width: int = 30) -> np.ndarray:
    """Transverse field that is ``g_end`` on the ``flat`` sites nearest each
    end, rises as a half cosine over the next ``width`` sites and is
    ``g_bulk`` in the middle."""
    if L < 2 or flat < 0 or width < 1:
        raise ValueError("invalid profile geometry")
    dist = np.minimum(np.arange(L), np.arange(L)[::-1]) + 1  # 1-based distance from an end
    t = np.clip((dist - flat) / width, 0.0, 1.0)
    return g_end + (g_bulk - g_end) * 0.5 * (1 - np.cos(np.pi * t))


# --------------------------------------------------------------------------
# schedule builders


def ramp(t: float) -> float:
    """Coupling ramp J(t/tau) rising from 0 to 1."""
    return 0.5 + 0.5 * math.sin(math.pi * (t - 0.5))


def ap_schedule(cfg: ApConfig) -> AngleSchedule:
    """Second-order Trotter angles of the adiabatic ramp."""
    N = cfg.N
    betas = [cfg.dt * ramp((2 * j - 1) / (2 * N)) for j in range(1, N + 1)]
    return AngleSchedule(betas, np.full(N, cfg.dt))


def angle_periods(g: float, N: int) -> np.ndarray:
    """Exact periods of the uniform energy in ``[betas..., alphas...]`` order."""
    per = np.empty(2 * N)
    per[:N] = math.pi / 2
    per[N:] = math.pi / (2 * g)
    per[-1] = math.pi / g
    return per


def fold_vector(x: np.ndarray, periods: np.ndarray) -> np.ndarray:
    y = np.mod(np.asarray(x, dtype=float), periods)
    # mod can round up to the period itself for tiny negative inputs
    y[y >= periods] = 0.0
    return y


def fold_angles(s: AngleSchedule, g: float) -> AngleSchedule:
    """Map every angle into its half-open fundamental interval starting at 0."""
    if not g > 0:
        raise ValueError("g must be positive")
    return AngleSchedule.from_vector(fold_vector(s.as_vector(), angle_periods(g, s.N)))


def expand_uniform(s: AngleSchedule, lat: Lattice) -> SiteResolvedSchedule:
    if not lat.is_finite:
        raise ValueError("expand_uniform needs a finite lattice")
    betas = np.repeat(s.betas[:, None], lat.n_bonds, axis=1)
    alphas = np.repeat(s.alphas[:, None], lat.n_sites, axis=1)
    return SiteResolvedSchedule(betas, alphas)


def zero_schedule(lat: Lattice, N: int) -> SiteResolvedSchedule:
    return SiteResolvedSchedule(np.zeros((N, lat.n_bonds)), np.zeros((N, lat.n_sites)))


def layer_factor(N: int) -> np.ndarray:
    """Multiplier on ``g * alpha`` per layer: 1, ..., 1, 1/2."""
    f = np.ones(N)
    f[-1] = 0.5
    return f


def site_angles(alpha_layers: np.ndarray, fields: np.ndarray) -> np.ndarray:
    """Rotation angles ``theta[j, i]`` of the X gates."""
    alpha_layers = np.asarray(alpha_layers, dtype=float)
    return alpha_layers * np.asarray(fields)[None, :] * layer_factor(alpha_layers.shape[0])[:, None]


def uniform_thetas(s: AngleSchedule, g: float) -> np.ndarray:
    return s.alphas * g * layer_factor(s.N)


# --------------------------------------------------------------------------
# serialization


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def dumps_schedule(s: AngleSchedule, g: float | None = None, profile: str | None = None,
                   extra: dict | None = None) -> str:
    """Key-value text record of a uniform schedule.

    One ``key = value`` per line; arrays are comma-separated; angles carry
    17 significant digits so a round trip is exact.
    """
    lines = [f"version = {SCHEDULE_FORMAT_VERSION}", f"N = {s.N}"]
    if g is not None:
        lines.append(f"g = {_fmt(g)}")
    if profile is not None:
        lines.append(f"profile = {profile}")
    lines.append("betas = " + ", ".join(_fmt(v) for v in s.betas))
    lines.append("alphas = " + ", ".join(_fmt(v) for v in s.alphas))
    for k, v in (extra or {}).items():
        lines.append(f"{k} = {v}")
    return "\n".join(lines) + "\n"


def parse_record(text: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ValueError(f"malformed record line: {raw!r}")
        out[key.strip()] = value.strip()
    return out


def loads_schedule(text: str) -> tuple[AngleSchedule, dict[str, str]]:
    rec = parse_record(text)
    if int(rec.get("version", -1)) != SCHEDULE_FORMAT_VERSION:
        raise ValueError(f"unsupported schedule record version {rec.get('version')!r}")
    betas = [float(v) for v in rec["betas"].split(",")]
    alphas = [float(v) for v in rec["alphas"].split(",")]
    s = AngleSchedule(betas, alphas)
    if s.N != int(rec["N"]):
        raise ValueError("N does not match the angle arrays")
    return s, rec


def dumps_site_schedule(s: SiteResolvedSchedule, lat: Lattice) -> str:
    lines = [
        f"version = {SCHEDULE_FORMAT_VERSION}",
        f"N = {s.N}",
        f"lattice = {lat.describe()}",
    ]
    if lat.uniform:
        lines.append(f"g = {_fmt(lat.g)}")
    else:
        lines.append("profile = " + ", ".join(_fmt(v) for v in lat.site_fields()))
    for j in range(s.N):
        lines.append(f"betas[{j}] = " + ", ".join(_fmt(v) for v in s.beta_layers[j]))
        lines.append(f"alphas[{j}] = " + ", ".join(_fmt(v) for v in s.alpha_layers[j]))
    return "\n".join(lines) + "\n"


def loads_site_schedule(text: str) -> tuple[SiteResolvedSchedule, dict[str, str]]:
    rec = parse_record(text)
    if int(rec.get("version", -1)) != SCHEDULE_FORMAT_VERSION:
        raise ValueError(f"unsupported schedule record version {rec.get('version')!r}")
    N = int(rec["N"])
    b = [[float(v) for v in rec[f"betas[{j}]"].split(",")] for j in range(N)]
    a = [[float(v) for v in rec[f"alphas[{j}]"].split(",")] for j in range(N)]
    return SiteResolvedSchedule(b, a), rec


def parse_lattice(desc: str, fields) -> Lattice:
    """Inverse of :meth:`Lattice.describe`."""
    desc = desc.strip()
    if desc == INFINITE_CHAIN:
        return Lattice.infinite_chain(fields)
    kind, _, rest = desc.partition("(")
    dims = [int(v) for v in rest.rstrip(")").split(",")]
    if kind in CHAIN_KINDS:
        return Lattice(kind, dims[0], 1, fields)
    return Lattice(kind, dims[0], dims[1], fields)
