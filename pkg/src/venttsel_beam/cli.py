"""Command-line experiment runner.

Subcommands ``simulate``, ``observability``, ``control`` and ``sweep``.  A
run is configured by a flat ``key = value`` file (``--config``) whose entries
are overridden by command-line flags.  Exit status: 0 on success, 2 on
invalid configuration, 3 when the CG solver does not converge.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields
from itertools import product
from pathlib import Path
from typing import Optional

import numpy as np

from . import export
from .assembly import Grid, GridError, assemble
from .evolution import TimeGrid, solve_damped, solve_homogeneous
from .filters import ModalFilter
from .hum import IllPosedFilterError, initial_state, null_control_pipeline
from .model import HansenSpiesParams, ParameterError, PhysicalParams, from_hansen_spies
from .observability import estimate_observability_constant

log = logging.getLogger("venttsel_beam")

EXIT_OK, EXIT_CONFIG, EXIT_NONCONVERGED = 0, 2, 3
# fixed filter size so observability constants compare across meshes
DEFAULT_MODES = 10


class ConfigError(ValueError):
    """Invalid run configuration; the message names the offending field."""


@dataclass
class RunConfig:
    command: str = "simulate"
    params_form: str = "timoshenko"
    # displacement / rotation / slip form
    rho1: float = 1.0
    rho2: float = 1.0
    k: float = 1.0
    b: float = 1.0
    gamma: float = 1.0
    beta: float = 0.0
    L: float = 1.0
    # Hansen-Spies form
    rho: float = 1.0
    I_rho: float = 1.0
    G: float = 1.0
    D: float = 1.0
    delta0: float = 0.75
    gamma0: float = 0.0
    # discretization
    n: int = 32
    T: Optional[float] = None
    nt: Optional[int] = None
    m: Optional[int] = None
    lumped: bool = False
    # solver
    tol: float = 1e-6
    max_iter: int = 200
    weighted: bool = True
    samples: int = 32
    # initial data: exactly one source
    initial_mode: Optional[int] = None
    initial_random: bool = False
    initial_file: Optional[str] = None
    seed: int = 0
    damped: bool = False
    # output
    out: str = "out"
    export_matrices: bool = False
    snapshots: bool = False
    # sweep ranges (comma-separated)
    sweep_n: str = ""
    sweep_m: str = ""
    sweep_T: str = ""
    sweep_gamma: str = ""
    sweep_beta: str = ""
    workers: int = 1

    def physical_params(self) -> PhysicalParams:
        try:
            if self.params_form == "timoshenko":
                return PhysicalParams(
                    rho1=self.rho1, rho2=self.rho2, k=self.k, b=self.b,
                    gamma=self.gamma, beta=self.beta, L=self.L,
                )
            if self.params_form == "hansen_spies":
                return from_hansen_spies(
                    HansenSpiesParams(
                        rho=self.rho, I_rho=self.I_rho, G=self.G, D=self.D,
                        delta0=self.delta0, gamma0=self.gamma0, L=self.L,
                    )
                )
        except ParameterError as exc:
            raise ConfigError(f"params: {exc}") from exc
        raise ConfigError(
            f"params_form: expected 'timoshenko' or 'hansen_spies', got {self.params_form!r}"
        )

    @property
    def filter_size(self) -> int:
        return self.m if self.m is not None else min(DEFAULT_MODES, 3 * self.n)

    def initial_source(self) -> str:
        given = [
            self.initial_mode is not None,
            bool(self.initial_random),
            self.initial_file is not None,
        ]
        if sum(given) > 1:
            raise ConfigError(
                "initial data: set exactly one of initial_mode, initial_random, initial_file"
            )
        if self.initial_random:
            return "random"
        if self.initial_file is not None:
            return f"file:{self.initial_file}"
        return f"mode:{self.initial_mode if self.initial_mode is not None else 0}"

    def validate(self) -> PhysicalParams:
        p = self.physical_params()
        if self.n < 4:
            raise ConfigError(f"n: need at least 4 elements, got {self.n}")
        if self.T is not None and not self.T > 0:
            raise ConfigError(f"T: must be positive, got {self.T}")
        if self.nt is not None and self.nt < 1:
            raise ConfigError(f"nt: must be >= 1, got {self.nt}")
        if not 1 <= self.filter_size <= 3 * self.n:
            raise ConfigError(f"m: must lie in [1, {3 * self.n}], got {self.filter_size}")
        if self.initial_mode is not None and not 0 <= self.initial_mode < self.filter_size:
            raise ConfigError(
                f"initial_mode: must lie in [0, {self.filter_size - 1}], got {self.initial_mode}"
            )
        if not self.tol > 0:
            raise ConfigError(f"tol: must be positive, got {self.tol}")
        if self.max_iter < 1:
            raise ConfigError(f"max_iter: must be >= 1, got {self.max_iter}")
        if self.seed < 0 or self.seed >= 2**64:
            raise ConfigError(f"seed: must be a 64-bit unsigned integer, got {self.seed}")
        self.initial_source()
        return p

    def resolved(self) -> dict:
        p = self.physical_params()
        d = dataclasses.asdict(self)
        d.update(
            {
                "resolved_rho1": p.rho1, "resolved_rho2": p.rho2, "resolved_k": p.k,
                "resolved_b": p.b, "resolved_gamma": p.gamma, "resolved_beta": p.beta,
                "resolved_T": self.horizon(p), "resolved_nt": self.steps(p),
                "resolved_m": self.filter_size, "resolved_initial": self.initial_source(),
            }
        )
        return d

    def horizon(self, p: PhysicalParams) -> float:
        return p.default_horizon if self.T is None else float(self.T)

    def steps(self, p: PhysicalParams) -> int:
        from .hum import default_steps

        return default_steps(self.horizon(p), p, self.n) if self.nt is None else int(self.nt)


def _coerce(name: str, raw: str, ftype) -> object:
    text = raw.strip()
    kind = str(ftype)
    try:
        if "bool" in kind:
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if text.lower() in ("none", "") and "Optional" in kind:
            return None
        if "int" in kind:
            return int(text)
        if "float" in kind:
            return float(text)
        return text
    except ValueError as exc:
        raise ConfigError(f"{name}: cannot parse {raw!r} as {kind}") from exc


_FIELDS = {f.name: f for f in fields(RunConfig)}


def parse_config_text(text: str) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, _, val = line.partition("=")
        key = key.strip()
        if key not in _FIELDS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        out[key] = _coerce(key, val, _FIELDS[key].type)
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="venttsel-beam",
        description="Simulation, observability and HUM boundary control of a laminated beam.",
    )
    parser.add_argument("command", choices=["simulate", "observability", "control", "sweep"])
    parser.add_argument("--config", type=Path, help="flat key = value configuration file")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--out", type=str, help="output directory")
    parser.add_argument("--n", type=int, help="number of elements")
    parser.add_argument("--nt", type=int, help="number of time steps")
    parser.add_argument("--T", type=float, help="time horizon")
    parser.add_argument("--m", type=int, help="number of retained modes")
    parser.add_argument("--tol", type=float, help="CG relative tolerance")
    parser.add_argument("--max-iter", dest="max_iter", type=int)
    parser.add_argument("--damped", action="store_true", default=None)
    parser.add_argument("--workers", type=int)
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def load_config(args: argparse.Namespace) -> RunConfig:
    values = {}
    if args.config is not None:
        try:
            values.update(parse_config_text(args.config.read_text()))
        except OSError as exc:
            raise ConfigError(f"config: cannot read {args.config}: {exc}") from exc
    for key in ("seed", "out", "n", "nt", "T", "m", "tol", "max_iter", "damped", "workers"):
        val = getattr(args, key)
        if val is not None:
            values[key] = val
    values["command"] = args.command
    return RunConfig(**values)


def _outdir(cfg: RunConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_simulate(cfg: RunConfig) -> int:
    p = cfg.validate()
    if cfg.damped and not p.beta > 0:
        raise ConfigError("damped: the damped run needs beta > 0 (or gamma0 > 0)")
    if not cfg.damped and p.beta != 0:
        raise ConfigError("beta: nonzero damping requires the --damped flag")
    sys_ = assemble(p, Grid(cfg.n, p.L), lumped=cfg.lumped)
    filt = ModalFilter.build(sys_, cfg.filter_size)
    U0 = initial_state(sys_, filt, cfg.initial_source(), cfg.seed)
    tg = TimeGrid(cfg.horizon(p), cfg.steps(p))
    traj = solve_damped(sys_, U0, tg) if cfg.damped else solve_homogeneous(sys_, U0, tg)

    E = traj.energy
    E0 = E[0]
    drift = float(np.max(np.abs(E - E0)) / E0) if E0 > 0 else 0.0
    steps = np.diff(E)
    summary = {
        "initial_energy": E0,
        "final_energy": E[-1],
        "energy_drift": drift,
        "monotone_nonincreasing": bool(np.all(steps <= 1e-12 * max(E0, 1e-300))),
        "damped": cfg.damped,
    }
    out, conf = _outdir(cfg), cfg.resolved()
    export.write_trajectory_csv(out / "trajectory.csv", traj, conf)
    export.write_json(out / "summary.json", summary, conf)
    if cfg.snapshots:
        export.write_snapshots(out / "snapshots.bin", traj)
    if cfg.export_matrices:
        export.write_matrix_market(out / "matrices", sys_)
    log.info("energy drift %.3e", drift)
    return EXIT_OK


def cmd_observability(cfg: RunConfig) -> int:
    p = cfg.validate()
    try:
        p.require_control_ready()
    except ParameterError as exc:
        raise ConfigError(f"phase space: {exc}") from exc
    sys_ = assemble(p, Grid(cfg.n, p.L), lumped=cfg.lumped)
    filt = ModalFilter.build(sys_, cfg.filter_size)
    rep = estimate_observability_constant(
        sys_, cfg.horizon(p), filt, samples=cfg.samples, seed=cfg.seed,
        nt=cfg.steps(p), weighted=cfg.weighted,
    )
    out, conf = _outdir(cfg), cfg.resolved()
    payload = rep.to_dict()
    ratios = payload.pop("sample_ratios")
    export.write_json(out / "observability.json", payload, conf)
    export.write_csv(out / "samples.csv", ("sample", "ratio"), enumerate(ratios), conf)
    log.info("mu_min %.6e, C_obs %.6e", rep.mu_min, rep.C_obs)
    return EXIT_OK


def _control_outputs(cfg: RunConfig, stream: int = 0):
    p = cfg.validate()
    try:
        p.require_control_ready()
    except ParameterError as exc:
        raise ConfigError(f"phase space: {exc}") from exc
    return p, null_control_pipeline(
        p, cfg.n, cfg.filter_size, T=cfg.horizon(p), U0=cfg.initial_source(),
        seed=cfg.seed, nt=cfg.steps(p), tol=cfg.tol, max_iter=cfg.max_iter,
        weighted=cfg.weighted, stream=stream,
    )


def cmd_control(cfg: RunConfig) -> int:
    out, conf = _outdir(cfg), cfg.resolved()
    try:
        _, res = _control_outputs(cfg)
    except IllPosedFilterError as exc:
        export.write_json(out / "diagnostics.json", {"converged": False, "error": str(exc)}, conf)
        log.error("%s", exc)
        return EXIT_NONCONVERGED
    sol = res.solution
    export.write_controls_csv(out / "controls.csv", sol.controls, conf)
    export.write_trajectory_csv(out / "controlled_trajectory.csv", res.trajectory, conf)
    diag = sol.diagnostics()
    diag["unfiltered_ratio"] = res.unfiltered_ratio
    export.write_json(out / "diagnostics.json", diag, conf)
    if cfg.export_matrices:
        export.write_matrix_market(out / "matrices", res.system)
    if not sol.converged:
        log.error("CG did not converge in %d iterations", sol.iterations)
        return EXIT_NONCONVERGED
    log.info(
        "filtered ratio %.3e, unfiltered ratio %.3e, %d CG iterations",
        sol.filtered_ratio, res.unfiltered_ratio, sol.iterations,
    )
    return EXIT_OK


SWEEP_COLUMNS = (
    "cell", "n", "m", "T", "gamma", "beta", "status", "mu_min", "C_obs",
    "final_ratio", "filtered_ratio", "control_norm", "cg_iters", "error",
)


def _parse_range(name: str, text: str, conv, default):
    if not text.strip():
        return [default]
    try:
        return [conv(tok) for tok in text.split(",") if tok.strip()]
    except ValueError as exc:
        raise ConfigError(f"{name}: cannot parse {text!r}") from exc


def sweep_cells(cfg: RunConfig) -> list[RunConfig]:
    p = cfg.physical_params()
    ns = _parse_range("sweep_n", cfg.sweep_n, int, cfg.n)
    ms = _parse_range("sweep_m", cfg.sweep_m, int, cfg.m)
    Ts = _parse_range("sweep_T", cfg.sweep_T, float, cfg.T)
    gs = _parse_range("sweep_gamma", cfg.sweep_gamma, float, p.gamma)
    bs = _parse_range("sweep_beta", cfg.sweep_beta, float, p.beta)
    cells = []
    for n, m, T, g, b in product(ns, ms, Ts, gs, bs):
        cells.append(
            dataclasses.replace(
                cfg, command="control", params_form="timoshenko",
                rho1=p.rho1, rho2=p.rho2, k=p.k, b=p.b, L=p.L,
                n=n, m=m, T=T, gamma=g, beta=b,
                sweep_n="", sweep_m="", sweep_T="", sweep_gamma="", sweep_beta="",
            )
        )
    return cells


def _run_cell(args) -> tuple:
    index, cell = args
    p = None
    try:
        p = cell.physical_params()
        cell.validate()
        p.require_control_ready()
        _, res = _control_outputs(cell, stream=index)
        sol = res.solution
        status = "ok" if sol.converged else "not_converged"
        mu = sol.mu_min
        C = 1.0 / mu if mu and mu > 0 else float("inf")
        return (
            index, cell.n, cell.filter_size, cell.horizon(p), p.gamma, p.beta, status,
            mu, C, sol.final_ratio, sol.filtered_ratio, sol.control_norm, sol.iterations, "",
        )
    except (ConfigError, ParameterError, GridError, IllPosedFilterError, ValueError) as exc:
        T = cell.horizon(p) if p is not None else cell.T
        return (
            index, cell.n, cell.filter_size, T, cell.gamma, cell.beta, "failed",
            "", "", "", "", "", "", str(exc),
        )


def cmd_sweep(cfg: RunConfig) -> int:
    cfg.validate()
    cells = sweep_cells(cfg)
    # cell i draws random data from counter stream i of the run seed
    jobs = list(enumerate(cells))
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            rows = list(pool.map(_run_cell, jobs))
    else:
        rows = [_run_cell(job) for job in jobs]
    rows.sort(key=lambda r: r[0])
    out, conf = _outdir(cfg), cfg.resolved()
    export.write_csv(out / "summary.csv", SWEEP_COLUMNS, rows, conf)
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "observability": cmd_observability,
    "control": cmd_control,
    "sweep": cmd_sweep,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = load_config(args)
        return COMMANDS[cfg.command](cfg)
    except (ConfigError, ParameterError, GridError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
