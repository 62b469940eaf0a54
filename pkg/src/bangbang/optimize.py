"""Energy objectives and their minimization.

Variables are offsets added to a frozen base schedule, one per tying group
of gate slots. Uniform objectives (one beta and one alpha per layer, zero
base) have variables equal to the angles, ordered ``[betas..., alphas...]``.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize as so

from . import engine_fmps, engine_itebd, engine_sv, freefermion
from .cone import ALPHA, BETA, ConeRegion, Slot
from .model import (
    INFINITE_CHAIN,
    OPEN_CHAIN,
    RING,
    SQUARE_KINDS,
    TORUS,
    AngleSchedule,
    ApConfig,
    Lattice,
    SiteResolvedSchedule,
    angle_periods,
    ap_schedule,
    expand_uniform,
    fold_vector,
    zero_schedule,
)

ENGINES = ("itebd", "fmps", "sv", "ff")

# energies closer than this are treated as the same minimum
DEGENERACY_TOL = 1e-9

# default cap on the AP total ramp time N * dt
AP_TAU_MAX = 2.5


@dataclass(frozen=True, eq=False)
class ObjectiveSpec:
    engine: str
    lattice: Lattice
    N: int
    base: AngleSchedule | SiteResolvedSchedule
    groups: tuple[tuple[Slot, ...], ...]
    dmax: int = 40
    tol: float = 1e-12
    uniform: bool = False

    def __post_init__(self):
        if self.engine not in ENGINES:
            raise ValueError(f"unknown engine {self.engine!r}")
        infinite = self.lattice.kind == INFINITE_CHAIN
        if infinite != isinstance(self.base, AngleSchedule):
            raise ValueError("infinite chains take a uniform base, finite lattices a site-resolved one")
        if self.base.N != self.N:
            raise ValueError("base schedule has the wrong layer count")
        if self.engine == "itebd" and not infinite:
            raise ValueError("itebd engine needs the infinite chain")
        if self.engine == "fmps" and self.lattice.kind != OPEN_CHAIN:
            raise ValueError("fmps engine needs an open chain")
        if self.engine == "ff" and self.lattice.kind not in (INFINITE_CHAIN, OPEN_CHAIN, RING):
            raise ValueError("ff engine needs a chain")
        if self.engine == "sv" and infinite:
            raise ValueError("sv engine needs a finite lattice")

    @property
    def dim(self) -> int:
        return len(self.groups)

    @property
    def mask_descriptor(self) -> str:
        return f"{self.dim} variables over {sum(len(g) for g in self.groups)} gates"

    def build(self, x) -> AngleSchedule | SiteResolvedSchedule:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise ValueError(f"expected {self.dim} variables, got shape {x.shape}")
        if isinstance(self.base, AngleSchedule):
            b = self.base.betas.copy()
            a = self.base.alphas.copy()
            for v, grp in zip(x, self.groups):
                for kind, j, _ in grp:
                    (b if kind == BETA else a)[j] += v
            return AngleSchedule(b, a)
        b = self.base.beta_layers.copy()
        a = self.base.alpha_layers.copy()
        for v, grp in zip(x, self.groups):
            for kind, j, i in grp:
                (b if kind == BETA else a)[j, i] += v
        return SiteResolvedSchedule(b, a)

    def periods(self) -> np.ndarray:
        """Nominal period per variable (used for jump scales and folding)."""
        fields = None if self.lattice.kind == INFINITE_CHAIN else self.lattice.site_fields()
        out = np.empty(self.dim)
        for k, grp in enumerate(self.groups):
            kind, j, _ = grp[0]
            if kind == BETA:
                out[k] = math.pi / 2
            else:
                g = self.lattice.g if fields is None else float(np.mean([fields[i] for _, _, i in grp]))
                out[k] = math.pi / (2 * g) * (2 if j == self.N - 1 else 1)
        return out

    @property
    def foldable(self) -> bool:
        """Whether the periods are exact symmetries of the objective."""
        if not self.uniform or not self.lattice.uniform:
            return False
        return self.lattice.kind in (INFINITE_CHAIN, RING, TORUS)


def uniform_objective(lat: Lattice, N: int, engine: str = "itebd", dmax: int = 40,
                      tol: float = 1e-12) -> ObjectiveSpec:
    """2N angles shared by all gates of a layer."""
    if lat.kind == INFINITE_CHAIN:
        base = AngleSchedule.zeros(N)
        groups = [((BETA, j, 0),) for j in range(N)] + [((ALPHA, j, 0),) for j in range(N)]
    else:
        base = zero_schedule(lat, N)
        groups = [tuple((BETA, j, b) for b in range(lat.n_bonds)) for j in range(N)]
        groups += [tuple((ALPHA, j, i) for i in range(lat.n_sites)) for j in range(N)]
    return ObjectiveSpec(engine, lat, N, base, tuple(groups), dmax, tol, uniform=True)


def region_objective(base: SiteResolvedSchedule, region: ConeRegion, engine: str,
                     dmax: int = 40, tol: float = 1e-12) -> ObjectiveSpec:
    return ObjectiveSpec(engine, region.lattice, region.N, base, region.groups, dmax, tol)


def schedule_energy(engine: str, lat: Lattice, s, dmax: int = 40, tol: float = 1e-12) -> float:
    """Per-site energy of a schedule on a lattice with the chosen engine."""
    if lat.kind == INFINITE_CHAIN:
        if engine == "itebd":
            return engine_itebd.energy_per_site(engine_itebd.run_bb(s, lat.g, dmax, tol), lat.g)
        if engine == "ff":
            return freefermion.infinite_energy_ff(s, lat.g)
        raise ValueError(f"engine {engine!r} cannot evaluate the infinite chain")
    if engine == "ff":
        return freefermion.run_bb_ff(lat, s).energy() / lat.n_sites
    if engine == "fmps":
        st = engine_fmps.run_bb_fmps(lat, s, dmax, tol)
        return engine_fmps.total_energy(st, lat.site_fields())[1]
    if engine == "sv":
        return engine_sv.observables_sv(engine_sv.run_bb_sv(lat, s)).energy_per_site
    raise ValueError(f"engine {engine!r} cannot evaluate {lat.kind}")


def evaluate(obj: ObjectiveSpec, x) -> float:
    """Per-site energy at variable vector ``x``."""
    s = obj.build(x)
    try:
        return schedule_energy(obj.engine, obj.lattice, s, obj.dmax, obj.tol)
    except Exception as exc:  # add context, keep the original type visible
        raise RuntimeError(f"{obj.engine} evaluation failed at x={np.asarray(x)!r}") from exc


def evaluate_with_grad(obj: ObjectiveSpec, x) -> tuple[float, np.ndarray]:
    """Per-site energy and exact gradient; free-fermion engine only."""
    if obj.engine != "ff":
        raise ValueError("analytic gradients need the ff engine")
    s = obj.build(x)
    if obj.lattice.kind == INFINITE_CHAIN:
        e, grad = freefermion.infinite_energy_and_grad_ff(s, obj.lattice.g)
        N = obj.N
        out = np.empty(obj.dim)
        for k, grp in enumerate(obj.groups):
            out[k] = sum(grad[j] if kind == BETA else grad[N + j] for kind, j, _ in grp)
        return e, out
    e, db, da = freefermion.energy_and_grad_ff(obj.lattice, s)
    out = np.empty(obj.dim)
    for k, grp in enumerate(obj.groups):
        out[k] = sum(db[j, i] if kind == BETA else da[j, i] for kind, j, i in grp)
    n = obj.lattice.n_sites
    return e / n, out / n


# ---------------------------------------------------------------------------
# configuration and results


@dataclass(frozen=True)
class OptimizerConfig:
    method: str = "nelder-mead"  # or "bfgs"
    ftol: float = 1e-10
    hops: int = 50
    step_scale: tuple[float, ...] | None = None  # default: quarter period per variable
    temperature: float = 1e-3
    seed: int = 0
    restarts: int = 0  # extra purely random starting points
    maxiter: int | None = None

    def __post_init__(self):
        if self.method not in ("nelder-mead", "bfgs"):
            raise ValueError(f"unknown local method {self.method!r}")
        if not (self.ftol > 0 and self.temperature > 0):
            raise ValueError("tolerances and temperature must be positive")
        if self.hops < 0 or self.restarts < 0:
            raise ValueError("hop and restart counts must be non-negative")


@dataclass
class HopRecord:
    hop: int
    energy: float
    accepted: bool
    best: float


@dataclass
class BBResult:
    x: np.ndarray
    x_folded: np.ndarray
    energy: float
    seed: int
    evaluations: int
    wall_time: float
    trace: list[HopRecord] = field(default_factory=list)


class _Counter:
    """Wraps the objective, counts calls and tracks the best point seen."""

    def __init__(self, obj: ObjectiveSpec, use_grad: bool):
        self.obj = obj
        self.use_grad = use_grad
        self.calls = 0
        self.best_x: np.ndarray | None = None
        self.best_f = math.inf

    def _track(self, x, f):
        self.calls += 1
        if f < self.best_f:
            self.best_f = f
            self.best_x = np.array(x, dtype=float)

    def __call__(self, x):
        if self.use_grad:
            f, g = evaluate_with_grad(self.obj, x)
            self._track(x, f)
            return f, g
        f = evaluate(self.obj, x)
        self._track(x, f)
        return f


def _local_minimize(fun, x0, cfg: OptimizerConfig, jac=None):
    n = len(x0)
    if cfg.method == "bfgs":
        opts = {"gtol": 1e-9, "maxiter": cfg.maxiter or 200 * max(n, 1)}
        return so.minimize(fun, x0, jac=jac, method="BFGS", options=opts)
    # Nelder-Mead, restarted from the best vertex until it stops improving
    opts = {"xatol": 1e-9, "fatol": cfg.ftol, "adaptive": n > 4,
            "maxiter": cfg.maxiter or 400 * max(n, 1), "maxfev": cfg.maxiter or 800 * max(n, 1)}
    res = so.minimize(fun, x0, method="Nelder-Mead", options=opts)
    for _ in range(5):
        again = so.minimize(fun, res.x, method="Nelder-Mead", options=opts)
        improved = res.fun - again.fun
        if again.fun < res.fun:
            again.nfev += res.nfev
            res = again
        if improved <= cfg.ftol:
            break
    return res


class _QuarterStep:
    def __init__(self, scales, rng):
        self.scales = np.asarray(scales, dtype=float)
        self.rng = rng

    def __call__(self, x):
        return x + self.rng.uniform(-1.0, 1.0, size=x.shape) * self.scales


def canonical_representative(obj: ObjectiveSpec, x) -> np.ndarray:
    """Folded, sign-canonical copy of ``x`` (lexicographically smallest)."""
    x = np.asarray(x, dtype=float)
    if not obj.foldable:
        return x.copy()
    per = obj.periods()
    a, b = fold_vector(x, per), fold_vector(-x, per)
    return a if tuple(a) <= tuple(b) else b


def optimize_bb(obj: ObjectiveSpec, cfg: OptimizerConfig, x0) -> BBResult:
    """Basin hopping: local descent plus uniform quarter-period jumps with
    Metropolis acceptance at fixed temperature."""
    t0 = time.perf_counter()
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (obj.dim,):
        raise ValueError(f"x0 must have {obj.dim} entries")
    if obj.dim == 0:
        e = evaluate(obj, x0)
        return BBResult(x0, x0, e, cfg.seed, 1, time.perf_counter() - t0,
                        [HopRecord(0, e, True, e)])
    use_grad = obj.engine == "ff" and cfg.method == "bfgs"
    counter = _Counter(obj, use_grad)
    rng = np.random.default_rng(cfg.seed)
    scales = np.asarray(cfg.step_scale) if cfg.step_scale is not None else obj.periods() / 4
    trace: list[HopRecord] = []
    f0 = counter(x0)
    f0 = f0[0] if use_grad else f0
    trace.append(HopRecord(-1, f0, True, f0))

    def local(fun, x, args=(), jac=None, **_):
        # with jac=True scipy hands over a value-only wrapper plus a jac callable
        return _local_minimize(fun, x, cfg, jac=jac if callable(jac) else None)

    starts = [x0] + [rng.uniform(0, 4 * scales) for _ in range(cfg.restarts)]
    for start in starts:
        def record(x, f, accept):
            trace.append(HopRecord(len(trace), float(f), bool(accept),
                                   min(float(f), trace[-1].best)))

        so.basinhopping(
            counter, start, niter=cfg.hops, T=cfg.temperature,
            minimizer_kwargs={"method": local, "jac": use_grad},
            take_step=_QuarterStep(scales, rng), callback=record,
            rng=np.random.default_rng(rng.integers(2**63)),
        )
    xbest = counter.best_x
    ebest = counter.best_f
    xf = canonical_representative(obj, xbest)
    return BBResult(xbest, xf, float(ebest), cfg.seed, counter.calls,
                    time.perf_counter() - t0, trace)


def write_trace_csv(path, result: BBResult) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["hop", "energy", "accepted", "best"])
        for r in result.trace:
            w.writerow([r.hop, format(r.energy, ".17g"), int(r.accepted), format(r.best, ".17g")])


def result_record(result: BBResult, obj: ObjectiveSpec) -> str:
    """Key-value result record, one per run."""
    g = obj.lattice.g if obj.lattice.uniform else "profile"
    lines = [
        f"seed = {result.seed}",
        f"N = {obj.N}",
        f"g = {g}",
        f"engine = {obj.engine}",
        f"lattice = {obj.lattice.describe()}",
        f"mask = {obj.mask_descriptor}",
        "x = " + ", ".join(format(v, ".17g") for v in result.x),
        "x_folded = " + ", ".join(format(v, ".17g") for v in result.x_folded),
        f"energy = {result.energy:.17g}",
        f"evaluations = {result.evaluations}",
        f"wall_time = {result.wall_time:.3f}",
    ]
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# adiabatic preparation


class NoBracketError(ValueError):
    """The AP energy was still decreasing at the largest allowed time step."""


def optimize_ap(N: int, g: float, engine: str = "itebd", dt_max: float | None = None,
                tau_max: float | None = None, grid: int = 120, dmax: int = 40,
                tol: float = 1e-12) -> tuple[float, float]:
    """Best Trotter time step: grid bracket, then bounded scalar refinement.

    ``tau_max`` caps the total ramp time ``N * dt``; under that explicit
    constraint an optimum on the boundary is accepted. Without it, a minimum
    at ``dt_max`` raises :class:`NoBracketError`.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    lat = Lattice.infinite_chain(g)
    if dt_max is None:
        dt_max = math.pi / (2 * g)
    constrained = tau_max is not None and tau_max / N < dt_max
    if constrained:
        dt_max = tau_max / N

    def energy(dt):
        return schedule_energy(engine, lat, ap_schedule(ApConfig(N, dt)), dmax, tol)

    dts = np.linspace(dt_max / grid, dt_max, grid)
    es = np.array([energy(d) for d in dts])
    k = int(np.argmin(es))
    if k == grid - 1 and not constrained:
        raise NoBracketError(f"no bracket: energy still decreasing at dt_max={dt_max}")
    lo = dts[k - 1] if k > 0 else 0.0
    hi = dts[min(k + 1, grid - 1)]
    res = so.minimize_scalar(energy, bounds=(lo, hi), method="bounded",
                             options={"xatol": 1e-10})
    best_dt, best_e = float(dts[k]), float(es[k])
    if res.fun < best_e:
        best_dt, best_e = float(res.x), float(res.fun)
    return best_dt, best_e


# ---------------------------------------------------------------------------
# stage one


@dataclass
class StageOneResult:
    N: int
    g: float
    schedule: AngleSchedule
    energy: float
    ap_dt: float
    ap_energy: float
    search: BBResult
    source: str  # which candidate won: "ap-basin" or "basin-hopping"


def stage_one(N: int, g: float, cfg: OptimizerConfig | None = None, engine: str = "itebd",
              search_engine: str = "ff", x_init=None, dmax: int = 40,
              tol: float = 1e-12, ap_tau_max: float | None = AP_TAU_MAX,
              polish: bool = False) -> StageOneResult:
    """Optimal uniform schedule on the infinite chain.

    Among degenerate global minima the one reached by local descent from the
    optimal AP schedule (or from ``x_init``) is preferred; the remaining ties
    break lexicographically. The search runs with ``search_engine`` and the
    winner is reported with ``engine``; ``polish`` adds a simplex descent
    with the reporting engine.
    """
    cfg = cfg or OptimizerConfig(method="bfgs")
    lat = Lattice.infinite_chain(g)
    dt, e_ap = optimize_ap(N, g, engine, tau_max=ap_tau_max, dmax=dmax, tol=tol)
    search = uniform_objective(lat, N, search_engine, dmax, tol)
    x_ap = ap_schedule(ApConfig(N, dt)).as_vector()
    seeds = [x_ap] if x_init is None else [np.asarray(x_init, dtype=float), x_ap]
    local_cfg = OptimizerConfig(method=cfg.method, ftol=cfg.ftol, hops=0, seed=cfg.seed)
    cont = [optimize_bb(search, local_cfg, s0) for s0 in seeds]
    anchor = min(cont, key=lambda r: r.energy)
    bh = optimize_bb(search, cfg, anchor.x)
    if anchor.energy <= bh.energy + DEGENERACY_TOL:
        x, source = anchor.x, "ap-basin"
    else:
        x, source = bh.x_folded, "basin-hopping"
    x = fold_vector(x, angle_periods(g, N))
    if engine != search_engine:
        report = uniform_objective(lat, N, engine, dmax, tol)
        if polish:
            polished = optimize_bb(report, OptimizerConfig(method="nelder-mead", ftol=1e-12,
                                                           hops=0, seed=cfg.seed), x)
            if polished.energy < evaluate(report, x):
                x = fold_vector(polished.x, angle_periods(g, N))
        energy = evaluate(report, x)
    else:
        energy = evaluate(search, x)
    return StageOneResult(N, g, AngleSchedule.from_vector(x), energy, dt, e_ap, bh, source)


def interpolate_schedule(s: AngleSchedule, N: int) -> AngleSchedule:
    """Linear resampling of a depth-``s.N`` schedule to ``N`` layers (warm start)."""
    if s.N == 1:
        return AngleSchedule(np.full(N, s.betas[0]), np.full(N, s.alphas[0]))
    old = np.linspace(0, 1, s.N)
    new = np.linspace(0, 1, N)
    a = s.alphas.copy()
    a[-1] *= 0.5  # the last layer carries a half step
    alphas = np.interp(new, old, a)
    alphas[-1] *= 2
    return AngleSchedule(np.interp(new, old, s.betas), alphas)


def angle_library(N: int, gs, cfg: OptimizerConfig | None = None, engine: str = "ff",
                  first: AngleSchedule | None = None) -> dict[float, AngleSchedule]:
    """Uniform optima on a grid of fields, followed by continuation.

    Each field starts from the previous optimum so neighbouring entries sit on
    the same branch and interpolate smoothly. A continuation step that lands
    more than ``DEGENERACY_TOL`` above a fresh stage-one search is replaced.
    """
    gs = sorted(float(g) for g in gs)
    if not gs:
        raise ValueError("empty field grid")
    cfg = cfg or OptimizerConfig(method="bfgs", hops=5)
    local_cfg = OptimizerConfig(method="bfgs", hops=0, seed=cfg.seed)
    out: dict[float, AngleSchedule] = {}
    prev = first.as_vector() if first is not None else None
    for g in gs:
        fresh = stage_one(N, g, cfg, engine="ff", search_engine="ff")
        x = fresh.schedule.as_vector()
        if prev is not None:
            obj = uniform_objective(Lattice.infinite_chain(g), N, "ff")
            cont = optimize_bb(obj, local_cfg, prev)
            if cont.energy <= fresh.energy + DEGENERACY_TOL:
                x = cont.x
        if engine != "ff":
            obj = uniform_objective(Lattice.infinite_chain(g), N, engine)
            pol = optimize_bb(obj, OptimizerConfig(hops=0, ftol=1e-12), x)
            if pol.energy < evaluate(obj, x):
                x = pol.x
        out[g] = AngleSchedule.from_vector(x)
        prev = x
    return out


# ---------------------------------------------------------------------------
# stage two


@dataclass
class BoundaryResult:
    schedule: SiteResolvedSchedule
    energy: float  # per site
    start_energy: float
    search: BBResult | None


def optimize_boundary(lat: Lattice, schedule: AngleSchedule | SiteResolvedSchedule,
                      region: ConeRegion, cfg: OptimizerConfig | None = None,
                      engine: str | None = None, x0=None) -> BoundaryResult:
    """Free only the gates in ``region`` (tied per its groups); bulk stays frozen."""
    if region.lattice != lat:
        raise ValueError("region was built for a different lattice")
    base = expand_uniform(schedule, lat) if isinstance(schedule, AngleSchedule) else schedule
    if base.N != region.N:
        raise ValueError("region and schedule disagree on N")
    if engine is None:
        engine = "ff" if lat.kind in (OPEN_CHAIN, RING) else "sv"
    cfg = cfg or OptimizerConfig(method="bfgs", hops=0)
    obj = region_objective(base, region, engine)
    start = schedule_energy(engine, lat, base)
    if obj.dim == 0:
        return BoundaryResult(base, start, start, None)
    x0 = np.zeros(obj.dim) if x0 is None else np.asarray(x0, dtype=float)
    res = optimize_bb(obj, cfg, x0)
    if res.energy > start:
        return BoundaryResult(base, start, start, res)
    return BoundaryResult(obj.build(res.x), res.energy, start, res)


def assign_local_angles(lat: Lattice, library: dict[float, AngleSchedule]) -> SiteResolvedSchedule:
    """Per-gate angles interpolated from uniform optima at the local field.

    Site gates use ``g_i``; bond gates use the mean of their endpoint fields.
    """
    if not library:
        raise ValueError("empty angle library")
    keys = np.array(sorted(library))
    Ns = {s.N for s in library.values()}
    if len(Ns) != 1:
        raise ValueError("library schedules differ in depth")
    N = Ns.pop()
    fields = lat.site_fields()
    bond_g = np.array([(fields[i] + fields[j]) / 2 for i, j in lat.bonds])
    lo, hi = keys[0], keys[-1]
    for v in np.concatenate([fields, bond_g]):
        if v < lo - 1e-12 or v > hi + 1e-12:
            raise ValueError(f"field {v} outside the library range [{lo}, {hi}]")
    B = np.array([library[k].betas for k in keys])  # (K, N)
    A = np.array([library[k].alphas for k in keys])

    def interp(table, xs):
        if keys.size == 1:
            return np.repeat(table[0][:, None], xs.size, axis=1)
        return np.array([np.interp(xs, keys, table[:, j]) for j in range(N)])

    return SiteResolvedSchedule(interp(B, bond_g), interp(A, fields))


__all__ = [
    "ENGINES",
    "ObjectiveSpec",
    "OptimizerConfig",
    "BBResult",
    "HopRecord",
    "uniform_objective",
    "region_objective",
    "schedule_energy",
    "evaluate",
    "evaluate_with_grad",
    "optimize_bb",
    "optimize_ap",
    "NoBracketError",
    "AP_TAU_MAX",
    "stage_one",
    "optimize_boundary",
    "assign_local_angles",
    "angle_library",
    "canonical_representative",
    "interpolate_schedule",
    "SQUARE_KINDS",
]
