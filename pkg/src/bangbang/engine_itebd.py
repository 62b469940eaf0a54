"""Infinite-chain evolution with a two-site unit cell in Vidal form.

The chain reads ``... lamB GA lamA GB lamB GA ...``. Gamma tensors are
indexed ``(left, physical, right)``.
"""

from __future__ import annotations

import io
import math
import struct
from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse.linalg as spla

from . import _linalg as tl
from .model import AngleSchedule, uniform_thetas

DEFAULT_DMAX = 40
DEFAULT_TOL = 1e-12

SNAPSHOT_MAGIC = b"BBIT"
SNAPSHOT_VERSION = 1


@dataclass(frozen=True)
class ItebdState:
    gammaA: np.ndarray
    gammaB: np.ndarray
    lambdaA: np.ndarray  # bond A -> B
    lambdaB: np.ndarray  # bond B -> A
    D: int = DEFAULT_DMAX
    discarded: float = 0.0  # accumulated truncation weight

    @property
    def bond_dims(self) -> tuple[int, int]:
        return self.lambdaA.size, self.lambdaB.size


def init_plus(D: int = DEFAULT_DMAX) -> ItebdState:
    g = np.full((1, 2, 1), 1 / math.sqrt(2), dtype=complex)
    one = np.ones(1)
    return ItebdState(g, g.copy(), one, one.copy(), D)


def _bond_update(GA, lamA, GB, lamB, phase, dmax, tol):
    """Apply a diagonal two-site gate on the bond carrying ``lamA``."""
    left = lamB[:, None, None] * GA * lamA[None, None, :]
    right = GB * lamB[None, None, :]
    theta = np.tensordot(left, right, axes=(2, 0))  # (a, s, t, c)
    theta *= phase[None, :, :, None]
    dl, dr = theta.shape[0], theta.shape[3]
    u, s, vh, disc = tl.svd_truncate(theta.reshape(dl * 2, 2 * dr), dmax, tol)
    chi = s.size
    inv = tl.inverse_floor(lamB)
    newA = u.reshape(dl, 2, chi) * inv[:, None, None]
    newB = vh.reshape(chi, 2, dr) * inv[None, None, :]
    return newA, s, newB, disc


def apply_zz_layer(state: ItebdState, beta: float, Dmax: int | None = None,
                   tol: float = DEFAULT_TOL) -> ItebdState:
    """exp(+i beta Z Z) on every bond, A-B first then B-A.

    If anything was truncated the result is re-canonicalized, since the
    inverse-lambda update is only exact for untruncated unitary gates.
    """
    dmax = state.D if Dmax is None else Dmax
    phase = tl.zz_phase(beta)
    GA, lA, GB, d1 = _bond_update(state.gammaA, state.lambdaA, state.gammaB,
                                  state.lambdaB, phase, dmax, tol)
    GB, lB, GA, d2 = _bond_update(GB, state.lambdaB, GA, lA, phase, dmax, tol)
    out = ItebdState(GA, GB, lA, lB, dmax, state.discarded + d1 + d2)
    if d1 > 0 or d2 > 0:
        out = canonicalize(out, tol)
    return out


def apply_x_layer(state: ItebdState, theta: float) -> ItebdState:
    """exp(+i theta X) on every site; exact."""
    u = tl.x_rotation(theta)
    GA = np.einsum("st,atb->asb", u, state.gammaA)
    GB = np.einsum("st,atb->asb", u, state.gammaB)
    return replace(state, gammaA=GA, gammaB=GB)


def run_bb(s: AngleSchedule, g: float, Dmax: int = DEFAULT_DMAX,
           tol: float = DEFAULT_TOL) -> ItebdState:
    """The full bang-bang circuit on ``|+...+>``; ``.discarded`` sums truncations."""
    state = init_plus(Dmax)
    thetas = uniform_thetas(s, g)
    for beta, theta in zip(s.betas, thetas):
        state = apply_zz_layer(state, beta, Dmax, tol)
        state = apply_x_layer(state, theta)
    return state


def _fixed_point(apply, D: int, v0: np.ndarray, maxiter: int = 2000,
                 tol: float = 1e-14) -> tuple[complex, np.ndarray]:
    """Dominant eigenpair of a D^2 transfer map, returned as a Hermitian matrix.

    Power iteration from ``v0``; near-canonical states start almost at the
    fixed point. Falls back to ARPACK when convergence is slow.
    """
    m = v0 / np.trace(v0)
    val = 1.0
    for _ in range(maxiter):
        nxt = apply(m)
        val = np.trace(nxt)
        nxt = nxt / val
        nxt = 0.5 * (nxt + nxt.conj().T)
        if np.abs(nxt - m).max() < tol:
            return val, nxt
        m = nxt
    n = D * D
    op = spla.LinearOperator((n, n), matvec=lambda v: apply(v.reshape(D, D)).reshape(-1),
                             dtype=complex)
    try:
        vals, vecs = spla.eigs(op, k=1, which="LM", v0=m.reshape(-1), tol=1e-14,
                               maxiter=20000)
    except spla.ArpackNoConvergence as exc:
        raise RuntimeError("canonicalization eigensolver did not converge") from exc
    m = vecs[:, 0].reshape(D, D)
    m = m / np.trace(m)
    return vals[0], 0.5 * (m + m.conj().T)


def _psd_sqrt(m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``m = W W^dagger``: returns W and its inverse."""
    w, v = np.linalg.eigh(m)
    w = np.maximum(w, tl.LAMBDA_FLOOR * w.max())
    r = np.sqrt(w)
    return v * r[None, :], (v.conj().T) / r[:, None]


def canonicalize(state: ItebdState, tol: float = DEFAULT_TOL) -> ItebdState:
    """Restore the canonical form from the transfer-matrix fixed points."""
    GA, GB, lA, lB = state.gammaA, state.gammaB, state.lambdaA, state.lambdaB
    D = lB.size
    dl = GA.shape[0]
    # unit cell tensor GA lA GB with bond lB on both sides, physical dim 4
    cell = np.tensordot(GA * lA[None, None, :], GB, axes=(2, 0)).reshape(dl, 4, -1)
    right = cell * lB[None, None, :]
    left = lB[:, None, None] * cell

    def r_apply(m):
        t = np.tensordot(right, m, axes=(2, 0))  # (a, s, c)
        return np.tensordot(t, right.conj(), axes=([1, 2], [1, 2]))

    def l_apply(m):
        t = np.tensordot(m, left, axes=(1, 0))  # (c, s, d)
        return np.tensordot(left.conj(), t, axes=([0, 1], [0, 1]))

    eye = np.eye(D, dtype=complex)
    eta, vr = _fixed_point(r_apply, D, eye)
    _, vl = _fixed_point(l_apply, D, eye)
    Xm, Xinv = _psd_sqrt(vr)  # vr = X X^dagger
    Wl, _ = _psd_sqrt(vl.conj())  # vl^* = W W^dagger
    Ym = Wl.T  # vl = Y^dagger Y
    Yinv = np.linalg.pinv(Ym)
    u, lam, vh = tl.svd(Ym @ np.diag(lB) @ Xm)
    keep = int(np.count_nonzero(lam > tl.LAMBDA_FLOOR * lam[0]))
    u, lam, vh = u[:, :keep], lam[:keep], vh[:keep]
    lam = lam / np.linalg.norm(lam)
    left_map = vh @ Xinv
    right_map = Yinv @ u
    new_cell = np.einsum("ab,bsc,cd->asd", left_map, cell, right_map) / np.sqrt(abs(eta))
    # split the cell back into A and B
    theta = lam[:, None, None] * new_cell * lam[None, None, :]
    D2 = lam.size
    uu, s, vv, disc = tl.svd_truncate(theta.reshape(D2 * 2, 2 * D2), state.D, tol)
    inv = tl.inverse_floor(lam)
    newA = uu.reshape(D2, 2, -1) * inv[:, None, None]
    newB = vv.reshape(-1, 2, D2) * inv[None, None, :]
    return ItebdState(newA, newB, s, lam, state.D, state.discarded + disc)


# ---------------------------------------------------------------------------
# measurements


def _site_expect(G, lam_left, lam_right, op) -> float:
    t = lam_left[:, None, None] * G * lam_right[None, None, :]
    val = np.einsum("asb,st,atb->", t.conj(), op, t)
    return float(val.real / np.vdot(t, t).real)


def _bond_expect_zz(GA, lamA, GB, lamB) -> float:
    left = lamB[:, None, None] * GA * lamA[None, None, :]
    right = GB * lamB[None, None, :]
    theta = np.tensordot(left, right, axes=(2, 0))
    w = np.abs(theta) ** 2
    zz = np.outer(tl.ZVALS, tl.ZVALS)
    return float(np.einsum("astc,st->", w, zz) / w.sum())


def local_x(state: ItebdState) -> tuple[float, float]:
    """(<X_A>, <X_B>)."""
    return (
        _site_expect(state.gammaA, state.lambdaB, state.lambdaA, tl.X),
        _site_expect(state.gammaB, state.lambdaA, state.lambdaB, tl.X),
    )


def local_zz(state: ItebdState) -> tuple[float, float]:
    """(<Z_A Z_B>, <Z_B Z_A>) on the two inequivalent bonds."""
    return (
        _bond_expect_zz(state.gammaA, state.lambdaA, state.gammaB, state.lambdaB),
        _bond_expect_zz(state.gammaB, state.lambdaB, state.gammaA, state.lambdaA),
    )


def energy_per_site(state: ItebdState, g: float) -> float:
    xa, xb = local_x(state)
    za, zb = local_zz(state)
    return -g * 0.5 * (xa + xb) - 0.5 * (za + zb)


def canonical_residual(state: ItebdState) -> float:
    """Largest deviation of the left/right environments from the identity."""
    res = 0.0
    for G, ll, lr in (
        (state.gammaA, state.lambdaB, state.lambdaA),
        (state.gammaB, state.lambdaA, state.lambdaB),
    ):
        left = ll[:, None, None] * G  # left-isometric
        e = np.einsum("asb,asc->bc", left.conj(), left)
        res = max(res, np.abs(e - np.eye(e.shape[0])).max())
        right = G * lr[None, None, :]
        e = np.einsum("asb,csb->ac", right, right.conj())
        res = max(res, np.abs(e - np.eye(e.shape[0])).max())
    return float(res)


def _transfer_eigs(state: ItebdState, k: int) -> np.ndarray:
    A1 = state.lambdaB[:, None, None] * state.gammaA
    A2 = state.lambdaA[:, None, None] * state.gammaB
    D = A1.shape[0]

    def apply(v):
        m = v.reshape(D, D)
        m = np.einsum("ab,asc,bsd->cd", m, A1, A1.conj())
        m = np.einsum("ab,asc,bsd->cd", m, A2, A2.conj())
        return m.reshape(-1)

    n = D * D
    if n <= 256:
        T = np.column_stack([apply(e) for e in np.eye(n, dtype=complex)])
        vals = np.linalg.eigvals(T)
    else:
        op = spla.LinearOperator((n, n), matvec=apply, dtype=complex)
        try:
            vals = spla.eigs(op, k=k, which="LM", tol=1e-12, maxiter=5000,
                             return_eigenvectors=False)
        except spla.ArpackNoConvergence as exc:
            raise RuntimeError("transfer-matrix eigensolver did not converge") from exc
    return vals[np.argsort(-np.abs(vals))]


def correlation_length(state: ItebdState) -> float:
    """Correlation length in lattice sites from the unit-cell transfer matrix.

    The unit cell spans two sites, so ``xi = -2 / ln|lambda_2 / lambda_1|``.
    A product state (D = 1) has ``xi = 0``.
    """
    if state.lambdaA.size == 1 and state.lambdaB.size == 1:
        return 0.0
    vals = _transfer_eigs(state, 4)
    l1, l2 = abs(vals[0]), abs(vals[1])
    if l2 < 1e-300:
        return 0.0
    ratio = l2 / l1
    if ratio > 1 - 1e-10:
        raise ValueError("degenerate dominant transfer-matrix eigenvalue")
    return -2.0 / math.log(ratio)


# ---------------------------------------------------------------------------
# binary snapshots: little-endian header, then tensors row-major complex128


def to_bytes(state: ItebdState) -> bytes:
    buf = io.BytesIO()
    buf.write(SNAPSHOT_MAGIC)
    buf.write(struct.pack("<IId", SNAPSHOT_VERSION, state.D, state.discarded))
    for G in (state.gammaA, state.gammaB):
        buf.write(struct.pack("<3I", *G.shape))
        buf.write(np.ascontiguousarray(G, dtype="<c16").tobytes())
    for lam in (state.lambdaA, state.lambdaB):
        buf.write(struct.pack("<I", lam.size))
        buf.write(np.ascontiguousarray(lam, dtype="<f8").tobytes())
    return buf.getvalue()


def from_bytes(data: bytes) -> ItebdState:
    buf = io.BytesIO(data)
    if buf.read(4) != SNAPSHOT_MAGIC:
        raise ValueError("not an iTEBD snapshot")
    version, D, disc = struct.unpack("<IId", buf.read(16))
    if version != SNAPSHOT_VERSION:
        raise ValueError(f"unsupported snapshot version {version}")
    gammas = []
    for _ in range(2):
        shape = struct.unpack("<3I", buf.read(12))
        n = int(np.prod(shape))
        gammas.append(np.frombuffer(buf.read(16 * n), dtype="<c16").reshape(shape).copy())
    lams = []
    for _ in range(2):
        (n,) = struct.unpack("<I", buf.read(4))
        lams.append(np.frombuffer(buf.read(8 * n), dtype="<f8").copy())
    return ItebdState(gammas[0], gammas[1], lams[0], lams[1], D, disc)
