"""Open-boundary MPS engine for site-resolved bang-bang schedules."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _linalg as tl
from .model import OPEN_CHAIN, Lattice, SiteResolvedSchedule, site_angles

DEFAULT_DMAX = 40
DEFAULT_TOL = 1e-12


@dataclass(frozen=True)
class FiniteMps:
    """Tensors ``(left, physical, right)``; sites left of ``center`` are
    left-isometric, sites right of it right-isometric."""

    tensors: tuple[np.ndarray, ...]
    center: int
    D: int = DEFAULT_DMAX
    discarded: float = 0.0

    @property
    def L(self) -> int:
        return len(self.tensors)

    @property
    def bond_dims(self) -> list[int]:
        return [t.shape[2] for t in self.tensors[:-1]]


@dataclass(frozen=True)
class SiteProfile:
    x: np.ndarray
    zz: np.ndarray
    x_err: np.ndarray | None = None
    zz_err: np.ndarray | None = None


def init_plus(L: int, D: int = DEFAULT_DMAX) -> FiniteMps:
    if L < 2:
        raise ValueError("L must be >= 2")
    t = np.full((1, 2, 1), 1 / math.sqrt(2), dtype=complex)
    return FiniteMps(tuple(t.copy() for _ in range(L)), 0, D)


def _shift_right(ts: list, i: int) -> None:
    """Move the orthogonality center from ``i`` to ``i + 1``."""
    dl, d, dr = ts[i].shape
    q, r = np.linalg.qr(ts[i].reshape(dl * d, dr))
    ts[i] = q.reshape(dl, d, -1)
    ts[i + 1] = np.tensordot(r, ts[i + 1], axes=(1, 0))


def _shift_left(ts: list, i: int) -> None:
    """Move the orthogonality center from ``i`` to ``i - 1``."""
    dl, d, dr = ts[i].shape
    q, r = np.linalg.qr(ts[i].reshape(dl, d * dr).T)
    ts[i] = q.T.reshape(-1, d, dr)
    ts[i - 1] = np.tensordot(ts[i - 1], r.T, axes=(2, 0))


def _move_center(ts: list, center: int, target: int) -> int:
    while center < target:
        _shift_right(ts, center)
        center += 1
    while center > target:
        _shift_left(ts, center)
        center -= 1
    return center


def with_center(state: FiniteMps, target: int) -> FiniteMps:
    ts = list(state.tensors)
    c = _move_center(ts, state.center, target)
    return FiniteMps(tuple(ts), c, state.D, state.discarded)


def _check_lattice(state: FiniteMps, lat: Lattice) -> None:
    if lat.kind != OPEN_CHAIN or lat.n_sites != state.L:
        raise ValueError("finite MPS engine needs an open chain of matching length")


def apply_schedule(state: FiniteMps, s: SiteResolvedSchedule, lat: Lattice,
                   Dmax: int | None = None, tol: float = DEFAULT_TOL,
                   bond_order=None) -> FiniteMps:
    """Run every layer: bond gates swept left to right, then the site gates.

    ``bond_order`` optionally permutes the bond gates of each layer (they
    commute); the center is moved to each bond before it is truncated.
    """
    _check_lattice(state, lat)
    s.check_lattice(lat)
    dmax = state.D if Dmax is None else Dmax
    thetas = site_angles(s.alpha_layers, lat.site_fields())
    ts = list(state.tensors)
    center = state.center
    discarded = state.discarded
    order = range(lat.n_bonds) if bond_order is None else bond_order
    for j in range(s.N):
        for b in order:
            beta = s.beta_layers[j, b]
            if beta == 0.0:
                continue
            center = _move_center(ts, center, b)
            a, c = ts[b], ts[b + 1]
            theta = np.tensordot(a, c, axes=(2, 0))
            theta = theta * tl.zz_phase(beta)[None, :, :, None]
            dl, dr = theta.shape[0], theta.shape[3]
            u, sv, vh, disc = tl.svd_truncate(theta.reshape(dl * 2, 2 * dr), dmax, tol)
            discarded += disc
            ts[b] = u.reshape(dl, 2, -1)
            ts[b + 1] = (sv[:, None] * vh).reshape(-1, 2, dr)
            center = b + 1
        for i in range(state.L):
            if thetas[j, i] != 0.0:
                ts[i] = np.einsum("st,atb->asb", tl.x_rotation(thetas[j, i]), ts[i])
    return FiniteMps(tuple(ts), center, dmax, discarded)


def run_bb_fmps(lat: Lattice, s: SiteResolvedSchedule, Dmax: int = DEFAULT_DMAX,
                tol: float = DEFAULT_TOL) -> FiniteMps:
    return apply_schedule(init_plus(lat.n_sites, Dmax), s, lat, Dmax, tol)


def site_profile(state: FiniteMps, ref_x=None, ref_zz=None) -> SiteProfile:
    """``<X_i>`` (length L) and ``<Z_i Z_{i+1}>`` (length L-1), plus errors against a reference."""
    ts = list(state.tensors)
    center = _move_center(ts, state.center, 0)
    L = len(ts)
    x = np.empty(L)
    zz = np.empty(L - 1)
    zmat = np.outer(tl.ZVALS, tl.ZVALS)
    for i in range(L):
        a = ts[i]
        nrm = np.vdot(a, a).real
        x[i] = np.einsum("asb,st,atb->", a.conj(), tl.X, a).real / nrm
        if i < L - 1:
            theta = np.tensordot(a, ts[i + 1], axes=(2, 0))
            w = np.abs(theta) ** 2
            zz[i] = np.einsum("astc,st->", w, zmat) / w.sum()
            center = _move_center(ts, center, i + 1)
    x_err = None if ref_x is None else x - np.asarray(ref_x)
    zz_err = None if ref_zz is None else zz - np.asarray(ref_zz)
    return SiteProfile(x, zz, x_err, zz_err)


def total_energy(state: FiniteMps, fields) -> tuple[float, float]:
    """(total, per-site) energy for field profile ``fields`` (scalar or per site)."""
    prof = site_profile(state)
    g = np.broadcast_to(np.asarray(fields, dtype=float), prof.x.shape)
    e = float(-np.dot(g, prof.x) - prof.zz.sum())
    return e, e / state.L


def norm(state: FiniteMps) -> float:
    c = state.tensors[state.center]
    return float(np.sqrt(np.vdot(c, c).real))


def isometry_residual(state: FiniteMps) -> float:
    res = 0.0
    for i, t in enumerate(state.tensors):
        if i < state.center:
            e = np.einsum("asb,asc->bc", t.conj(), t)
        elif i > state.center:
            e = np.einsum("asb,csb->ac", t, t.conj())
        else:
            continue
        res = max(res, float(np.abs(e - np.eye(e.shape[0])).max()))
    return res


def to_dense(state: FiniteMps) -> np.ndarray:
    """Flat amplitudes with site 0 as the most significant bit."""
    if state.L > 24:
        raise ValueError("state too large to densify")
    v = state.tensors[0]
    for t in state.tensors[1:]:
        v = np.tensordot(v, t, axes=(v.ndim - 1, 0))
    return v.reshape(-1)


def fidelity(a: np.ndarray, b: np.ndarray) -> float:
    return float(abs(np.vdot(a, b)) ** 2 / (np.vdot(a, a).real * np.vdot(b, b).real))


def write_profile_csv(path, prof: SiteProfile) -> None:
    """Columns ``site, X, ZZ, X_err, ZZ_err``; ZZ of site i is bond (i, i+1)."""
    path = Path(path)
    L = prof.x.size
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["site", "X", "ZZ", "X_err", "ZZ_err"])
        for i in range(L):
            zz = prof.zz[i] if i < L - 1 else float("nan")
            xe = prof.x_err[i] if prof.x_err is not None else float("nan")
            ze = prof.zz_err[i] if (prof.zz_err is not None and i < L - 1) else float("nan")
            w.writerow([i] + [format(float(v), ".17g") for v in (prof.x[i], zz, xe, ze)])


def read_profile_csv(path) -> SiteProfile:
    rows = list(csv.DictReader(Path(path).open()))
    x = np.array([float(r["X"]) for r in rows])
    zz = np.array([float(r["ZZ"]) for r in rows[:-1]])
    xe = np.array([float(r["X_err"]) for r in rows])
    ze = np.array([float(r["ZZ_err"]) for r in rows[:-1]])
    return SiteProfile(x, zz, xe, ze)
