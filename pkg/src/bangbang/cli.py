"""Command-line experiment runner.

Subcommands::

    stage1         uniform optima on the infinite chain (AP and BB energies)
    stage2         embed stage-one angles in an open chain, optimize boundary cones
    inhomogeneous  local-field angle assignment on a chain with ramped field
    2d             torus stage one, then corner/edge optimization on an open square
    verify         run the acceptance suite

Values come from built-in defaults, then a JSON ``--config`` file, then the
flags given explicitly on the command line. Every CSV starts with a
``# config_hash=... seed=...`` line and the resolved config is written next
to the outputs as ``config.json``.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import subprocess
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import engine_fmps, engine_sv, freefermion, oracle
from .cone import ConeRegion, corner_region, cone_for_depth, edge_region, empty_region, ends_region
from .model import (
    INFINITE_CHAIN,
    AngleSchedule,
    ApConfig,
    Lattice,
    SiteResolvedSchedule,
    ap_schedule,
    dumps_schedule,
    end_ramp_profile,
    expand_uniform,
    loads_schedule,
)
from .optimize import (
    AP_TAU_MAX,
    OptimizerConfig,
    angle_library,
    assign_local_angles,
    interpolate_schedule,
    optimize_bb,
    optimize_boundary,
    result_record,
    schedule_energy,
    stage_one,
    uniform_objective,
    write_trace_csv,
)

log = logging.getLogger("bangbang")

FIXTURE_DIR = Path(__file__).parent / "fixtures"

DEFAULTS = {
    "g": None,
    "N": None,
    "L": 100,
    "Lx": 4,
    "Ly": 4,
    "mode": None,
    "depth": None,
    "engine": None,
    "dmax": 40,
    "tol": 1e-12,
    "seed": 0,
    "hops": 20,
    "method": "bfgs",
    "out": "out",
    "fixtures": str(FIXTURE_DIR),
    "g_end": 1.1,
    "g_bulk": "1.1,1.3,1.5",
    "ap_tau_max": AP_TAU_MAX,
}

COMMAND_DEFAULTS = {
    "stage1": {"g": 1.1, "N": "2-10", "engine": "itebd"},
    "stage2": {"g": 1.1, "N": "2-5", "mode": "no-opt,ends,d=10,d=20", "engine": "fmps"},
    "inhomogeneous": {"N": "7", "engine": "fmps"},
    "2d": {"g": 3.1, "N": "2-3", "mode": "no-opt,corners,edges", "engine": "sv", "method": "bfgs",
           "hops": 3},
}


class CliError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# config plumbing


def parse_range(text) -> list[int]:
    """``"2-5"`` -> [2, 3, 4, 5]; ``"2,4"`` -> [2, 4]; ``3`` -> [3]."""
    out: list[int] = []
    for part in str(text).split(","):
        part = part.strip()
        if not part:
            continue
        lo, sep, hi = part.partition("-")
        out += list(range(int(lo), int(hi) + 1)) if sep else [int(lo)]
    if not out:
        raise CliError(f"empty range {text!r}")
    return out


def parse_floats(text) -> list[float]:
    return [float(v) for v in str(text).split(",") if v.strip()]


def resolve_config(command: str, flags: dict, config_path: str | None) -> dict:
    cfg = dict(DEFAULTS)
    cfg.update(COMMAND_DEFAULTS.get(command, {}))
    if config_path:
        with open(config_path) as fh:
            loaded = json.load(fh)
        unknown = set(loaded) - set(DEFAULTS)
        if unknown:
            raise CliError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(loaded)
    cfg.update({k: v for k, v in flags.items() if v is not None})
    cfg["command"] = command
    return cfg


def config_hash(cfg: dict) -> str:
    blob = json.dumps({k: v for k, v in cfg.items() if k not in ("out", "fixtures")},
                      sort_keys=True, default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass
class Output:
    root: Path
    tag: str  # config hash

    seed: int

    def path(self, name: str) -> Path:
        self.root.mkdir(parents=True, exist_ok=True)
        return self.root / name

    def write_csv(self, name: str, header: list[str], rows) -> Path:
        p = self.path(name)
        with p.open("w", newline="") as fh:
            fh.write(f"# config_hash={self.tag} seed={self.seed}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for r in rows:
                w.writerow([_cell(v) for v in r])
        return p

    def write_text(self, name: str, text: str) -> Path:
        p = self.path(name)
        p.write_text(f"# config_hash={self.tag} seed={self.seed}\n" + text)
        return p


def _cell(v) -> str:
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def read_csv(path) -> list[dict[str, str]]:
    """Read a CSV written by this tool (comment lines skipped)."""
    with open(path) as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.DictReader(lines))


# ---------------------------------------------------------------------------
# fixtures


def fixture_name(g: float, N: int, lattice: str) -> str:
    kind = lattice.replace("(", "").replace(")", "").replace(",", "x")
    return f"{kind}_g{g:.4f}_N{N}.txt"


def _content_hash(text: str) -> str:
    body = "\n".join(ln for ln in text.splitlines() if not ln.startswith("sha256"))
    return hashlib.sha256(body.encode()).hexdigest()


def save_fixture(directory, s: AngleSchedule, g: float, lattice: str, energy: float,
                 extra: dict | None = None) -> Path:
    fields = {"lattice": lattice, "energy": format(energy, ".17g")}
    fields.update(extra or {})
    text = dumps_schedule(s, g=g, extra=fields)
    text += f"sha256 = {_content_hash(text)}\n"
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    p = d / fixture_name(g, s.N, lattice)
    p.write_text(text)
    return p


def load_fixture(directory, g: float, N: int, lattice: str = INFINITE_CHAIN
                 ) -> tuple[AngleSchedule, dict]:
    p = Path(directory) / fixture_name(g, N, lattice)
    if not p.exists():
        hint = "stage1" if lattice == INFINITE_CHAIN else "2d"
        raise CliError(f"missing fixture {p}; generate it with "
                       f"`python -m bangbang {hint} --g {g} --N {N}`")
    text = p.read_text()
    s, rec = loads_schedule(text)
    if "sha256" in rec and rec["sha256"] != _content_hash(text):
        raise CliError(f"fixture {p} fails its content hash")
    return s, rec


# ---------------------------------------------------------------------------
# commands


def _optimizer(cfg: dict) -> OptimizerConfig:
    return OptimizerConfig(method=cfg["method"], hops=int(cfg["hops"]), seed=int(cfg["seed"]))


def cmd_stage1(cfg: dict, out: Output) -> int:
    g = float(cfg["g"])
    rows = []
    prev: AngleSchedule | None = None
    exact = oracle.infinite_gs_energy(g)
    for N in parse_range(cfg["N"]):
        x_init = None if prev is None else interpolate_schedule(prev, N).as_vector()
        res = stage_one(N, g, _optimizer(cfg), engine=cfg["engine"], x_init=x_init,
                        dmax=int(cfg["dmax"]), tol=float(cfg["tol"]),
                        ap_tau_max=cfg["ap_tau_max"])
        prev = res.schedule
        log.info("N=%d  AP %.7f  BB %.7f  (%s)", N, res.ap_energy, res.energy, res.source)
        rows.append([N, res.ap_dt, res.ap_energy, res.energy, exact, res.source])
        save_fixture(cfg["fixtures"], res.schedule, g, INFINITE_CHAIN, res.energy,
                     {"engine": cfg["engine"], "seed": cfg["seed"]})
        write_trace_csv(out.path(f"trace_N{N}.csv"), res.search)
        obj = uniform_objective(Lattice.infinite_chain(g), N, "ff")
        out.write_text(f"result_N{N}.txt", result_record(res.search, obj))
    out.write_csv("table1.csv", ["N", "dt_AP", "E_AP", "E_BB", "E_exact", "source"], rows)
    return 0


def _stage2_region(lat: Lattice, N: int, mode: str) -> ConeRegion:
    if mode == "no-opt":
        return empty_region(lat, N)
    if mode == "ends":
        return ends_region(lat, N)
    if mode.startswith("d="):
        return cone_for_depth(lat, N, int(mode[2:]))
    raise CliError(f"unknown stage-two mode {mode!r}")


def _profile_rows(lat: Lattice, s: SiteResolvedSchedule, engine: str, dmax: int, tol: float,
                  ref: oracle.FreeFermionSolution):
    if engine == "fmps":
        prof = engine_fmps.site_profile(engine_fmps.run_bb_fmps(lat, s, dmax, tol))
        x, zz = prof.x, prof.zz
    elif engine == "ff":
        x, zz = freefermion.run_bb_ff(lat, s).observables()
    else:
        obs = engine_sv.observables_sv(engine_sv.run_bb_sv(lat, s))
        x, zz = obs.x, obs.zz
    L = lat.n_sites
    rows = []
    for i in range(L):
        z = zz[i] if i < L - 1 else float("nan")
        ze = z - ref.zz[i] if i < L - 1 else float("nan")
        rows.append([i, x[i], z, x[i] - ref.x[i], ze])
    return rows


def cmd_stage2(cfg: dict, out: Output) -> int:
    g = float(cfg["g"])
    L = int(cfg["L"])
    lat = Lattice.open_chain(L, g)
    modes = [m.strip() for m in str(cfg["mode"]).split(",")]
    if cfg.get("depth") is not None:
        modes = [f"d={d}" for d in parse_range(cfg["depth"])]
    ref = oracle.finite_gs(lat)
    rows = []
    for N in parse_range(cfg["N"]):
        s, _ = load_fixture(cfg["fixtures"], g, N)
        base = expand_uniform(s, lat)
        for mode in modes:
            region = _stage2_region(lat, N, mode)
            res = optimize_boundary(lat, base, region, _optimizer(cfg), engine="ff")
            e = schedule_energy(cfg["engine"], lat, res.schedule, int(cfg["dmax"]), float(cfg["tol"]))
            log.info("N=%d %-7s E=%.7f", N, mode, e)
            rows.append([N, mode, region.n_variables, e, ref.energy / L, "mirror"])
            out.write_csv(f"profile_N{N}_{mode.replace('=', '')}.csv",
                          ["site", "X", "ZZ", "X_err", "ZZ_err"],
                          _profile_rows(lat, res.schedule, cfg["engine"], int(cfg["dmax"]),
                                        float(cfg["tol"]), ref))
    out.write_csv("table2.csv", ["N", "mode", "variables", "E", "E_exact", "tying"], rows)
    return 0


def cmd_inhomogeneous(cfg: dict, out: Output) -> int:
    L = int(cfg["L"])
    g_end = float(cfg["g_end"])
    rows = []
    for N in parse_range(cfg["N"]):
        for g_bulk in parse_floats(cfg["g_bulk"]):
            prof = end_ramp_profile(L, g_end, g_bulk)
            lat = Lattice.open_chain(L, prof)
            lo, hi = min(g_end, g_bulk), max(g_end, g_bulk)
            grid = np.unique(np.concatenate([np.arange(lo, hi, 0.05), [hi]]).round(10))
            lib = angle_library(N, grid, _optimizer(cfg))
            local = assign_local_angles(lat, lib)
            bulk = expand_uniform(lib[max(lib) if g_bulk >= g_end else min(lib)], lat)
            ref = oracle.finite_gs(lat)
            for label, s in (("local", local), ("bulk", bulk)):
                prows = _profile_rows(lat, s, cfg["engine"], int(cfg["dmax"]), float(cfg["tol"]), ref)
                out.write_csv(f"profile_N{N}_gb{g_bulk:g}_{label}.csv",
                              ["site", "X", "ZZ", "X_err", "ZZ_err"], prows)
                e = schedule_energy(cfg["engine"], lat, s, int(cfg["dmax"]), float(cfg["tol"]))
                err = max(abs(r[3]) for r in prows[:40])
                rows.append([N, g_end, g_bulk, label, e, ref.energy / L, err])
    out.write_csv("inhomogeneous.csv",
                  ["N", "g_end", "g_bulk", "angles", "E", "E_exact", "max_X_err_1_40"], rows)
    return 0


def torus_stage_one(N: int, g: float, lx: int, ly: int, cfg: OptimizerConfig,
                    restarts: int = 2):
    """Uniform optimum on a small torus (stand-in for the infinite 2D lattice)."""
    tor = Lattice.torus(lx, ly, g)
    obj = uniform_objective(tor, N, "sv")
    per = obj.periods()
    # AP start at a modest step, plus random starts
    starts = [ap_schedule(ApConfig(N, 0.5 / g)).as_vector()]
    rng = np.random.default_rng(cfg.seed)
    starts += [rng.uniform(0, 1, obj.dim) * per for _ in range(restarts)]
    best = None
    for k, x0 in enumerate(starts):
        r = optimize_bb(obj, OptimizerConfig(method=cfg.method, hops=cfg.hops, seed=cfg.seed + k), x0)
        if best is None or r.energy < best.energy:
            best = r
    return AngleSchedule.from_vector(best.x_folded), best


def cmd_2d(cfg: dict, out: Output) -> int:
    g = float(cfg["g"])
    lx, ly = int(cfg["Lx"]), int(cfg["Ly"])
    sq = Lattice.open_square(lx, ly, g)
    torus_desc = Lattice.torus(lx, ly, g).describe()
    modes = [m.strip() for m in str(cfg["mode"]).split(",")]
    exact, gs = engine_sv.exact_gs_sv(sq)
    ref = engine_sv.observables_sv(gs)
    opt = _optimizer(cfg)
    rows = []
    for N in parse_range(cfg["N"]):
        try:
            s, _ = load_fixture(cfg["fixtures"], g, N, torus_desc)
        except CliError:
            s, r = torus_stage_one(N, g, lx, ly, opt)
            save_fixture(cfg["fixtures"], s, g, torus_desc, r.energy, {"engine": "sv"})
        sched = expand_uniform(s, sq)
        for mode in modes:
            if mode == "corners":
                sched = optimize_boundary(sq, sched, corner_region(sq, N), opt, "sv").schedule
            elif mode == "edges":
                # start from the corner optimum when it was computed (corners lie inside edges)
                sched = optimize_boundary(sq, sched, edge_region(sq, N), opt, "sv").schedule
            elif mode != "no-opt":
                raise CliError(f"unknown 2d mode {mode!r}")
            obs = engine_sv.observables_sv(engine_sv.run_bb_sv(sq, sched))
            log.info("N=%d %-8s E=%.8f", N, mode, obs.energy_per_site)
            rows.append([N, mode, obs.energy_per_site, exact / sq.n_sites])
            engine_sv.write_observables_csv(out.path(f"observables_N{N}_{mode}.csv"), obs, sq, ref)
    out.write_csv("table_2d.csv", ["N", "mode", "E", "E_exact"], rows)
    return 0


def cmd_verify(cfg: dict, out: Output) -> int:
    tests = Path(__file__).resolve().parents[2] / "tests" / "test_acceptance.py"
    if not tests.exists():
        raise CliError(f"acceptance suite not found at {tests}")
    return subprocess.call([sys.executable, "-m", "pytest", "-s", "-q", str(tests)])


COMMANDS = {
    "stage1": cmd_stage1,
    "stage2": cmd_stage2,
    "inhomogeneous": cmd_inhomogeneous,
    "2d": cmd_2d,
    "verify": cmd_verify,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bangbang", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="JSON file of option values")
        sp.add_argument("--g", type=float)
        sp.add_argument("--N", help="layer counts, e.g. 2-5 or 2,4")
        sp.add_argument("--L", type=int, help="chain length")
        sp.add_argument("--Lx", type=int)
        sp.add_argument("--Ly", type=int)
        sp.add_argument("--mode", help="comma list, e.g. no-opt,ends,d=10")
        sp.add_argument("--depth", help="cone depths (overrides --mode in stage2)")
        sp.add_argument("--engine", choices=["itebd", "fmps", "sv", "ff"])
        sp.add_argument("--dmax", type=int)
        sp.add_argument("--tol", type=float)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--hops", type=int)
        sp.add_argument("--method", choices=["nelder-mead", "bfgs"])
        sp.add_argument("--g-end", dest="g_end", type=float)
        sp.add_argument("--g-bulk", dest="g_bulk", help="comma list of bulk fields")
        sp.add_argument("--out")
        sp.add_argument("--fixtures")
        sp.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s")
    flags = {k: v for k, v in vars(args).items() if k not in ("command", "config", "verbose")}
    try:
        cfg = resolve_config(args.command, flags, args.config)
        tag = config_hash(cfg)
        out = Output(Path(cfg["out"]), tag, int(cfg["seed"]))
        if args.command != "verify":
            out.path("config.json").write_text(
                json.dumps(dict(cfg, config_hash=tag), indent=2, sort_keys=True, default=str) + "\n")
        return COMMANDS[args.command](cfg, out)
    except (CliError, ValueError, RuntimeError) as exc:
        print(f"bangbang {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
