"""Exact statevector execution of bang-bang circuits on small lattices.

Site ``i`` is axis ``i`` of the amplitude tensor reshaped to ``(2,) * n``
(site 0 is the most significant bit of the flat index). Bit value 0 is the
``Z = +1`` state.
"""

from __future__ import annotations

import csv
import io
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse.linalg as spla

from .model import Lattice, SiteResolvedSchedule, site_angles

DEFAULT_CAP = 24

DUMP_MAGIC = b"BBSV"
DUMP_VERSION = 1


class LatticeTooLarge(ValueError):
    pass


@dataclass(frozen=True)
class StateVector:
    amplitudes: np.ndarray
    lattice: Lattice

    @property
    def n(self) -> int:
        return self.lattice.n_sites

    def tensor(self) -> np.ndarray:
        return self.amplitudes.reshape((2,) * self.n)


@dataclass(frozen=True)
class Observables:
    x: np.ndarray  # per site
    zz: np.ndarray  # per bond, lattice bond order
    energy: float  # total

    @property
    def energy_per_site(self) -> float:
        return self.energy / self.x.size


def _check_size(lat: Lattice, cap: int) -> int:
    n = lat.n_sites
    if n > cap:
        raise LatticeTooLarge(f"{n} sites exceed the statevector cap of {cap}")
    return n


def _zz_axis_values(n: int, i: int, j: int) -> np.ndarray:
    """z_i z_j broadcastable against the ``(2,)*n`` tensor."""
    shape_i = [1] * n
    shape_j = [1] * n
    shape_i[i] = 2
    shape_j[j] = 2
    zi = np.array([1.0, -1.0]).reshape(shape_i)
    zj = np.array([1.0, -1.0]).reshape(shape_j)
    return zi * zj


def bond_phase_angles(lat: Lattice, betas: np.ndarray) -> np.ndarray:
    """Sum of ``beta_b z_i z_j`` over bonds, accumulated in bond order."""
    n = lat.n_sites
    acc = np.zeros((2,) * n)
    for beta, (i, j) in zip(betas, lat.bonds):
        if beta != 0.0:
            acc += beta * _zz_axis_values(n, i, j)
    return acc


def apply_zz_gates(psi: np.ndarray, lat: Lattice, betas: np.ndarray) -> np.ndarray:
    """All bond gates exp(+i beta_b Z Z) of one layer as a single diagonal phase."""
    return psi * np.exp(1j * bond_phase_angles(lat, betas))


def apply_x_gate(psi: np.ndarray, site: int, theta: float) -> np.ndarray:
    """exp(+i theta X) on one site of the ``(2,)*n`` tensor."""
    if theta == 0.0:
        return psi
    n = psi.ndim
    out = np.empty(psi.shape, dtype=complex)
    v = psi.reshape(2**site, 2, 2 ** (n - site - 1))
    o = out.reshape(v.shape)
    c, s = np.cos(theta), 1j * np.sin(theta)
    o[:, 0] = c * v[:, 0] + s * v[:, 1]
    o[:, 1] = c * v[:, 1] + s * v[:, 0]
    return out


def plus_state(lat: Lattice, cap: int = DEFAULT_CAP) -> StateVector:
    n = _check_size(lat, cap)
    return StateVector(np.full(2**n, 2.0 ** (-n / 2), dtype=complex), lat)


def run_bb_sv(lat: Lattice, s: SiteResolvedSchedule, cap: int = DEFAULT_CAP) -> StateVector:
    n = _check_size(lat, cap)
    s.check_lattice(lat)
    thetas = site_angles(s.alpha_layers, lat.site_fields())
    psi = plus_state(lat, cap).tensor()
    for j in range(s.N):
        psi = apply_zz_gates(psi, lat, s.beta_layers[j])
        for i in range(n):
            psi = apply_x_gate(psi, i, thetas[j, i])
    return StateVector(psi.reshape(-1), lat)


def observables_sv(state: StateVector) -> Observables:
    lat = state.lattice
    psi = state.tensor()
    prob = np.abs(psi) ** 2
    flat = psi.reshape(-1)
    x = np.empty(state.n)
    for i in range(state.n):
        v = flat.reshape(2**i, 2, -1)
        x[i] = 2 * np.vdot(v[:, 0], v[:, 1]).real
    zz = np.array([np.sum(prob * _zz_axis_values(state.n, i, j)) for i, j in lat.bonds])
    energy = float(-np.dot(lat.site_fields(), x) - zz.sum())
    return Observables(x, zz, energy)


def zz_diagonal(lat: Lattice) -> np.ndarray:
    """Diagonal of -sum Z_i Z_j as a flat vector."""
    return -bond_phase_angles(lat, np.ones(lat.n_bonds)).reshape(-1)


def hamiltonian_operator(lat: Lattice, cap: int = DEFAULT_CAP) -> spla.LinearOperator:
    n = _check_size(lat, cap)
    diag = zz_diagonal(lat)
    fields = lat.site_fields()
    shape = (2,) * n

    def matvec(v):
        v = np.asarray(v).reshape(-1)
        out = diag * v
        t = v.reshape(shape)
        acc = np.zeros(shape, dtype=np.result_type(v, float))
        for i in range(n):
            acc -= fields[i] * np.flip(t, axis=i)
        return out + acc.reshape(-1)

    dim = 2**n
    return spla.LinearOperator((dim, dim), matvec=matvec, dtype=complex)


def energy_direct(state: StateVector) -> float:
    """<psi|H|psi> from the Hamiltonian action."""
    h = hamiltonian_operator(state.lattice, max(DEFAULT_CAP, state.n))
    return float(np.vdot(state.amplitudes, h.matvec(state.amplitudes)).real)


def exact_gs_sv(lat: Lattice, cap: int = DEFAULT_CAP, tol: float = 1e-12
                ) -> tuple[float, StateVector]:
    """Lowest eigenpair of H (Lanczos)."""
    n = _check_size(lat, cap)
    h = hamiltonian_operator(lat, cap)
    if n <= 10:
        dense = np.column_stack([h.matvec(e) for e in np.eye(2**n)]).real
        w, v = np.linalg.eigh(dense)
        return float(w[0]), StateVector(v[:, 0].astype(complex), lat)
    # real symmetric operator; the |+> vector overlaps the ground state
    hr = spla.LinearOperator(h.shape, matvec=lambda v: h.matvec(v).real, dtype=float)
    v0 = np.full(2**n, 2.0 ** (-n / 2))
    try:
        w, v = spla.eigsh(hr, k=1, which="SA", v0=v0, tol=tol, maxiter=20000)
    except spla.ArpackNoConvergence as exc:
        raise RuntimeError(f"Lanczos did not converge: {exc}") from exc
    vec = v[:, 0].astype(complex)
    resid = np.linalg.norm(h.matvec(vec) - w[0] * vec)
    if resid > 1e-6:
        raise RuntimeError(f"Lanczos residual {resid:.2e} too large")
    return float(w[0]), StateVector(vec, lat)


# ---------------------------------------------------------------------------
# I/O


def dump_state(state: StateVector) -> bytes:
    """Header ``BBSV, version, n, len(kind), kind, lx, ly`` then complex128 amplitudes."""
    kind = state.lattice.kind.encode()
    head = DUMP_MAGIC + struct.pack("<III", DUMP_VERSION, state.n, len(kind)) + kind
    head += struct.pack("<II", state.lattice.lx, state.lattice.ly)
    return head + np.ascontiguousarray(state.amplitudes, dtype="<c16").tobytes()


def load_state(data: bytes, fields=1.0) -> StateVector:
    buf = io.BytesIO(data)
    if buf.read(4) != DUMP_MAGIC:
        raise ValueError("not a statevector dump")
    version, n, klen = struct.unpack("<III", buf.read(12))
    if version != DUMP_VERSION:
        raise ValueError(f"unsupported dump version {version}")
    kind = buf.read(klen).decode()
    lx, ly = struct.unpack("<II", buf.read(8))
    amps = np.frombuffer(buf.read(16 * 2**n), dtype="<c16").copy()
    return StateVector(amps, Lattice(kind, lx, ly, fields))


def write_observables_csv(path, obs: Observables, lat: Lattice,
                          ref: Observables | None = None) -> None:
    """Site section (site, X, ZZ, X_err, ZZ_err) then a bond section for 2D.

    For chains the ``ZZ`` column of site ``i`` is bond ``(i, i+1)``.
    """
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["site", "X", "ZZ", "X_err", "ZZ_err"])
        chain_zz = {i: b for b, (i, j) in enumerate(lat.bonds) if j == i + 1} if not lat.is_2d else {}
        for i in range(lat.n_sites):
            b = chain_zz.get(i)
            zz = obs.zz[b] if b is not None else float("nan")
            xe = obs.x[i] - ref.x[i] if ref is not None else float("nan")
            ze = zz - ref.zz[b] if (ref is not None and b is not None) else float("nan")
            w.writerow([i, _g(obs.x[i]), _g(zz), _g(xe), _g(ze)])
        if lat.is_2d:
            w.writerow([])
            w.writerow(["bond", "i", "j", "ZZ", "ZZ_err"])
            for b, (i, j) in enumerate(lat.bonds):
                ze = obs.zz[b] - ref.zz[b] if ref is not None else float("nan")
                w.writerow([b, i, j, _g(obs.zz[b]), _g(ze)])


def _g(v: float) -> str:
    return format(float(v), ".17g")
