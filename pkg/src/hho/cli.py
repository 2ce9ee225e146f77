"""Command-line front end: ``hho solve|converge|adapt``.

Exit codes: 0 success, 1 runtime failure, 2 configuration error,
3 convergence-gate failure in ``converge``.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from .mesh import MeshError, generate_mesh, l_shaped_mesh, read_mesh, refine

log = logging.getLogger("hho")

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG, EXIT_GATE = 0, 1, 2, 3
CSV_HEADER = ["level", "h", "ndof", "err_energy", "err_l2", "err_jump", "eoc_energy", "eoc_l2"]
EXTRA_COLUMNS = {
    "poisson": ["err_grad", "eta_total", "effectivity", "max_balance", "max_continuity"],
    "plaplace": ["err_grad_lp", "newton_iterations"],
    "adr": ["err_flat", "pe_min", "pe_max"],
}
MESH_ALIASES = {"tri": "triangular", "cart": "cartesian", "voro": "voronoi_polygonal"}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    command: str = "solve"
    problem: str = "poisson"
    mesh: str = "tri"
    n: int = 8
    levels: int = 4
    degree: int = 1
    stab: str = "hho"
    p: float = 1.75
    kappa: float = 1.0
    zeta: float = 1.0
    seed: int = 1234
    theta: float = 0.5
    max_iter: int = 12
    out: str = "hho_out"

    def validate(self):
        if self.problem not in ("poisson", "plaplace", "adr"):
            raise ConfigError(f"unknown problem {self.problem!r}")
        if self.degree < 0:
            raise ConfigError("degree k must be >= 0")
        if self.levels < 1:
            raise ConfigError("levels must be >= 1")
        if self.n < 1:
            raise ConfigError("n must be >= 1")
        if self.stab not in ("hho", "vem"):
            raise ConfigError(f"unknown stabilization {self.stab!r}")
        if self.problem == "plaplace" and not self.p > 1:
            raise ConfigError("p must be > 1")
        if self.problem == "adr" and self.zeta < 1:
            raise ConfigError("zeta must be ≥ 1")
        if self.problem == "adr" and self.kappa < 0:
            raise ConfigError("kappa must be >= 0")
        if not (self.mesh in MESH_ALIASES or self.mesh in MESH_ALIASES.values()
                or self.mesh == "lshape" or self.mesh.startswith("file:")):
            raise ConfigError(f"unknown mesh {self.mesh!r}")
        if self.command == "converge" and self.levels < 3:
            raise ConfigError("converge needs at least 3 levels")
        if self.command == "adapt":
            if self.problem != "poisson":
                raise ConfigError("adapt supports the poisson problem only")
            if not 0 < self.theta <= 1:
                raise ConfigError("theta must lie in (0, 1]")
        if self.mesh == "lshape" and self.problem != "poisson":
            raise ConfigError("the L-shaped domain is only set up for the poisson problem")


# --------------------------------------------------------------------------
# meshes and problems

def build_meshes(cfg: RunConfig, levels: int):
    if cfg.mesh.startswith("file:"):
        try:
            mesh = read_mesh(cfg.mesh[5:])
        except (OSError, MeshError) as exc:
            raise ConfigError(f"cannot load mesh file: {exc}") from exc
        out = [mesh]
        for _ in range(levels - 1):
            if any(len(fl) != 3 for fl in mesh.element_faces):
                raise ConfigError("refinement of a file mesh needs an all-triangle mesh")
            mesh, _ = refine(mesh, np.arange(mesh.n_elements))
            mesh, _ = refine(mesh, np.arange(mesh.n_elements))
            out.append(mesh)
        return out
    if cfg.mesh == "lshape":
        return [l_shaped_mesh(cfg.n * 2 ** i) for i in range(levels)]
    kind = MESH_ALIASES.get(cfg.mesh, cfg.mesh)
    return [generate_mesh(kind, cfg.n * 2 ** i, seed=cfg.seed) for i in range(levels)]


def _poisson_data(cfg):
    if cfg.mesh == "lshape":
        from .estimators import lshape_problem
        P = lshape_problem(1)
        return P.exact, P.grad, P.f, P.g
    from .poisson import sinsin
    u, gu, f = sinsin()
    return u, gu, f, None


def run_level(cfg: RunConfig, mesh):
    """Solve on one mesh; return (row dict, solution, reconstruction, extras for export)."""
    from .hho_core import global_reconstruct, jump_seminorm, l2_norm_elements, reduce_global, DofVector
    k = cfg.degree
    if cfg.problem == "poisson":
        from .estimators import local_estimators
        from .poisson import compute_errors, fluxes_and_balance, solve_poisson
        u, gu, f, g = _poisson_data(cfg)
        uh = solve_poisson(mesh, k, f, cfg.stab, g=g)
        r = compute_errors(uh, u, gu, cfg.stab)
        fr = fluxes_and_balance(uh, f, cfg.stab)
        est = local_estimators(uh, f, variant=cfg.stab, boundary=g)
        est.error = r.grad_recon
        row = dict(h=mesh.h, ndof=r.ndof, err_energy=r.energy, err_l2=r.l2_element, err_jump=r.jump,
                   err_grad=r.grad_recon, eta_total=est.bound, effectivity=est.effectivity,
                   max_balance=fr.max_balance, max_continuity=fr.max_continuity)
        extras = {"estimators": est, "fluxes": fr, "exact": u}
    elif cfg.problem == "plaplace":
        from .plaplace import exp_benchmark, newton_solve, plap_errors
        u, gu, f = exp_benchmark(cfg.p)
        res = newton_solve(mesh, k, f, cfg.p, g=u)
        uh = res.u
        e = plap_errors(uh, u, gu, cfg.p)
        Iu = reduce_global(uh.space, u)
        row = dict(h=mesh.h, ndof=e.ndof, err_energy=e.discrete,
                   err_l2=l2_norm_elements(DofVector(uh.space, Iu.values - uh.values)),
                   err_jump=jump_seminorm(global_reconstruct(uh), k), err_grad_lp=e.grad_recon,
                   newton_iterations=res.iterations)
        extras = {"newton": res, "exact": u}
    else:
        from .adr import AdrDiscretization, peclet_and_norms, rotating_benchmark
        data, u, gu = rotating_benchmark(cfg.kappa)
        data.zeta = cfg.zeta
        disc = AdrDiscretization(mesh, k, data, cfg.stab)
        uh = disc.solve()
        Iu = reduce_global(uh.space, u, disc.order)
        diff = DofVector(uh.space, Iu.values - uh.values)
        nr = peclet_and_norms(disc, diff)
        row = dict(h=mesh.h, ndof=uh.space.n_face_dofs, err_energy=nr.sharp, err_l2=l2_norm_elements(diff),
                   err_jump=jump_seminorm(global_reconstruct(uh), k), err_flat=nr.flat,
                   pe_min=float(nr.peclet.min()), pe_max=float(nr.peclet.max()))
        extras = {"norms": nr, "exact": u}
    return row, uh, extras


def gate_bounds(cfg: RunConfig):
    """Expected final-EOC windows (energy, l2) per problem; None means not gated."""
    k = cfg.degree
    if cfg.problem == "poisson":
        if cfg.mesh == "lshape":
            return None, None
        return (k + 0.75, k + 1.25), ((k + 1.75, k + 2.25) if k >= 1 else None)
    if cfg.problem == "plaplace":
        p = cfg.p
        if p < 2:
            r = (k + 1) * (p - 1)
            return (r - 0.25, r + 0.25), None
        return ((k + 1) / (p - 1) - 0.1, np.inf), None
    if cfg.kappa == 0:
        return (k + 0.2, k + 0.8), None
    if cfg.kappa >= 1:
        return (k + 0.75, k + 1.25), None
    return (k + 0.2, k + 1.25), None


# --------------------------------------------------------------------------
# commands

def _out(cfg) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def run_solve(cfg: RunConfig) -> int:
    from .export import export_fields, write_csv
    from .hho_core import global_reconstruct
    out = _out(cfg)
    mesh = build_meshes(cfg, 1)[0]
    t0 = time.perf_counter()
    row, uh, extras = run_level(cfg, mesh)
    log.info("solved %s on %d elements, k=%d: N_dof=%d (%.2fs)", cfg.problem, mesh.n_elements,
             cfg.degree, row["ndof"], time.perf_counter() - t0)
    ph = global_reconstruct(uh)
    export_fields(out / "solution.vtu", ph, {"exact": extras["exact"]})
    write_csv(out / "summary.csv", list(row), [list(row.values())])
    if cfg.problem == "poisson":
        fr, est = extras["fluxes"], extras["estimators"]
        write_csv(out / "balance.csv", ["element", "balance_residual"],
                  [[T, float(b)] for T, b in enumerate(fr.balance)])
        write_csv(out / "estimators.csv", ["element", "eta_nc", "eta_res", "eta_sta"],
                  [[T, float(a), float(b), float(c)]
                   for T, (a, b, c) in enumerate(zip(est.eta_nc, est.eta_res, est.eta_sta))])
    print(f"N_dof = {row['ndof']}  err_energy = {row['err_energy']:.6e}")
    return EXIT_OK


def convergence_table(cfg: RunConfig):
    from .poisson import eoc
    rows = []
    for lev, mesh in enumerate(build_meshes(cfg, cfg.levels)):
        row, _, _ = run_level(cfg, mesh)
        row["level"] = lev
        rows.append(row)
        log.info("level %d: h=%.4g ndof=%d err=%.4e", lev, row["h"], row["ndof"], row["err_energy"])
    h = [r["h"] for r in rows]
    for key, col in (("err_energy", "eoc_energy"), ("err_l2", "eoc_l2")):
        rates = eoc(h, [r[key] for r in rows])
        for r, v in zip(rows, rates):
            r[col] = float(v)
    return rows


def run_convergence(cfg: RunConfig) -> int:
    from .export import write_csv
    from .poisson import eoc_fit
    out = _out(cfg)
    rows = convergence_table(cfg)
    header = CSV_HEADER + EXTRA_COLUMNS[cfg.problem]
    write_csv(out / "convergence.csv", header, [[r.get(c) for c in header] for r in rows])
    h = [r["h"] for r in rows]
    ok = True
    for name, key, bounds in zip(("energy", "l2"), ("err_energy", "err_l2"), gate_bounds(cfg)):
        rate = eoc_fit(h, [r[key] for r in rows])
        if bounds is None:
            print(f"final EOC {name}: {rate:.3f} (not gated)")
            continue
        passed = bounds[0] <= rate <= bounds[1]
        ok &= passed
        print(f"{'PASS' if passed else 'FAIL'} final EOC {name}: {rate:.3f} in [{bounds[0]:.2f}, {bounds[1]:.2f}]")
    return EXIT_OK if ok else EXIT_GATE


def run_adapt(cfg: RunConfig) -> int:
    from .estimators import ESTIMATOR_CSV_HEADER, Problem, adapt_loop, estimator_rows
    from .export import export_fields, write_csv
    from .hho_core import global_reconstruct
    out = _out(cfg)
    mesh = build_meshes(cfg, 1)[0]
    if any(len(fl) != 3 for fl in mesh.element_faces):
        raise ConfigError("adaptive refinement needs a triangular initial mesh")
    u, gu, f, g = _poisson_data(cfg)
    steps = adapt_loop(Problem("cli", mesh, f, g=g, exact=u, grad=gu), cfg.degree, cfg.theta,
                       cfg.max_iter, variant=cfg.stab)
    write_csv(out / "adapt.csv", ESTIMATOR_CSV_HEADER, estimator_rows(steps))
    last = steps[-1]
    export_fields(out / "solution.vtu", global_reconstruct(last.u), {"exact": u})
    print(f"{len(steps)} iterations, final N_dof = {last.ndof}, eta = {last.estimator.bound:.4e}")
    return EXIT_OK


COMMANDS = {"solve": run_solve, "converge": run_convergence, "adapt": run_adapt}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hho", description="Hybrid high-order solvers on polygonal meshes")
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", help="JSON file with RunConfig keys; command-line flags override it")
    ap.add_argument("--problem", choices=["poisson", "plaplace", "adr"])
    ap.add_argument("--mesh", help="tri | cart | voro | lshape | file:PATH")
    ap.add_argument("--n", type=int, help="base mesh resolution")
    ap.add_argument("--levels", type=int)
    ap.add_argument("--degree", "-k", type=int)
    ap.add_argument("--stab", choices=["hho", "vem"])
    ap.add_argument("--p", type=float)
    ap.add_argument("--kappa", type=float)
    ap.add_argument("--zeta", type=float)
    ap.add_argument("--seed", type=int)
    ap.add_argument("--theta", type=float)
    ap.add_argument("--max-iter", dest="max_iter", type=int)
    ap.add_argument("--out")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def make_config(args) -> RunConfig:
    values = {}
    if args.config:
        try:
            values.update(json.loads(Path(args.config).read_text()))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config file: {exc}") from exc
        known = {f.name for f in fields(RunConfig)}
        unknown = set(values) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    for f in fields(RunConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            values[f.name] = v
    values["command"] = args.command
    try:
        cfg = RunConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    cfg.validate()
    return cfg


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = make_config(args)
        Path(cfg.out).mkdir(parents=True, exist_ok=True)
        (Path(cfg.out) / "config.json").write_text(json.dumps(asdict(cfg), indent=2, sort_keys=True) + "\n")
        return COMMANDS[cfg.command](cfg)
    except ConfigError as exc:
        print(f"hho: configuration error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - report any module failure with a nonzero exit
        log.debug("failure", exc_info=True)
        print(f"hho: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
