"""Config-driven experiment runner for the coupled-chain experiments.

Subcommands
-----------
run-coupling            one synchronous coupling, distance trace to a csv file
average                 mean coupled distance over several independently seeded runs
audit                   empirical regularity-constant report as key=value lines
compare-representations the same experiment in spectral and grid form

Every option can come from a flat ``key = value`` config file (``--config``)
and be overridden by the command-line flag of the same name.  Data files are
'#'-commented delimited text; alongside each one a PNG of the distance curves
is rendered unless ``--no-plot`` is given.  Exit codes: 0 success, 2 config
error, 3 runtime divergence.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .coupling import (
    CouplingTrace,
    audit_assumptions,
    estimate_contraction_rate,
    run_coupling,
)
from .integrator import IntegratorParams, TrajectoryDivergence
from .potentials import POTENTIALS, make_potential
from .report import render_distance_figure, write_delimited
from .sampler import ADJUSTED, EXACT, ChainError, HmcConfig
from .space import (
    GRID,
    SPECTRAL,
    BridgeGridCovariance,
    Field,
    SpectralCovariance,
    bridge_eigenvalues,
    field_from_grid_values,
    sample_prior,
    to_grid,
)

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "PRESETS",
    "cmd_audit",
    "cmd_average",
    "cmd_compare_representations",
    "cmd_run_coupling",
    "entrypoint",
    "initial_pair",
    "main",
    "run_average",
]


class ConfigError(ValueError):
    """Invalid configuration; carries the offending field name."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"field {field_name!r}: {message}")
        self.field_name = field_name


@dataclass
class ExperimentConfig:
    experiment: str = ""
    potential: str = "linear"
    gamma: float = 20.0
    representation: str = SPECTRAL
    dim: int = 5000
    h: float = 0.2
    steps: int = 12
    iters: int = 200
    runs: int = 1
    seed: int = 0
    mode: str = ADJUSTED
    init: str = "fig1-pair"
    pairs: int = 1000
    surrogate: int = 0
    coalesce_atol: float = 0.0
    out: str = ""
    plot: bool = True


PRESETS = {
    "linear-fig": dict(
        experiment="linear-fig", potential="linear", representation=SPECTRAL,
        dim=5000, h=0.2, steps=12, iters=400, init="fig1-pair",
    ),
    "quartic-fig": dict(
        experiment="quartic-fig", potential="quartic-norm",
        representation=SPECTRAL, dim=5000, h=0.2, steps=12, iters=400,
        init="fig1-pair",
    ),
    "doublewell": dict(
        experiment="doublewell", potential="double-well", gamma=20.0,
        representation=GRID, dim=5000, h=0.2, steps=12, iters=2000,
        init="doublewell-pair",
    ),
    "zero-smoke": dict(
        experiment="zero-smoke", potential="zero", dim=64, h=0.2, steps=12,
        iters=50, init="fig1-pair",
    ),
}

_CASTERS = {
    "experiment": str,
    "potential": str,
    "gamma": float,
    "representation": str,
    "dim": int,
    "h": float,
    "steps": int,
    "iters": int,
    "runs": int,
    "seed": int,
    "mode": str,
    "init": str,
    "pairs": int,
    "surrogate": int,
    "coalesce_atol": float,
    "out": str,
}

# Config-file key -> dataclass field (flags use the same names).
_KEY_ALIASES = {"repr": "representation"}


def parse_config_file(path: str) -> dict:
    values = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path!r}: {exc}") from exc
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError("config", f"line {lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        key = _KEY_ALIASES.get(key, key)
        if key == "preset":
            values["preset"] = value
            continue
        if key == "plot":
            values["plot"] = value.lower() not in ("0", "false", "no")
            continue
        if key not in _CASTERS:
            raise ConfigError(key, "unknown configuration key")
        try:
            values[key] = _CASTERS[key](value)
        except ValueError as exc:
            raise ConfigError(key, f"cannot parse {value!r}") from exc
    return values


def _validate(cfg: ExperimentConfig) -> None:
    if cfg.potential not in POTENTIALS:
        raise ConfigError(
            "potential", f"unknown name {cfg.potential!r} "
            f"(known: {', '.join(sorted(POTENTIALS))})"
        )
    if cfg.representation not in (SPECTRAL, GRID):
        raise ConfigError("repr", f"must be '{SPECTRAL}' or '{GRID}'")
    if cfg.mode not in (EXACT, ADJUSTED):
        raise ConfigError("mode", f"must be '{EXACT}' or '{ADJUSTED}'")
    if cfg.init not in ("fig1-pair", "doublewell-pair"):
        raise ConfigError("init", "must be 'fig1-pair' or 'doublewell-pair'")
    if cfg.dim < 1:
        raise ConfigError("dim", "must be a positive integer")
    if not np.isfinite(cfg.h) or cfg.h <= 0.0:
        raise ConfigError("h", "must be a positive real")
    if cfg.steps < 1:
        raise ConfigError("steps", "must be a positive integer")
    if cfg.iters < 1:
        raise ConfigError("iters", "must be a positive integer")
    if cfg.runs < 1:
        raise ConfigError("runs", "must be a positive integer")
    if cfg.seed < 0:
        raise ConfigError("seed", "must be a non-negative integer")
    if cfg.potential == "double-well" and (
        not np.isfinite(cfg.gamma) or cfg.gamma <= 0.0
    ):
        raise ConfigError("gamma", "must be a positive real")
    if cfg.pairs < 100:
        raise ConfigError("pairs", "must be at least 100")
    if cfg.surrogate < 0:
        raise ConfigError("surrogate", "must be non-negative (0 disables)")
    if not np.isfinite(cfg.coalesce_atol) or cfg.coalesce_atol < 0.0:
        raise ConfigError("coalesce_atol", "must be a non-negative real")


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    """Layer defaults, preset, config file, then command-line flags."""
    file_values = parse_config_file(args.config) if args.config else {}
    preset_name = args.preset or file_values.pop("preset", None)
    cfg = ExperimentConfig()
    if preset_name is not None:
        if preset_name not in PRESETS:
            raise ConfigError(
                "preset", f"unknown preset {preset_name!r} "
                f"(known: {', '.join(sorted(PRESETS))})"
            )
        cfg = replace(cfg, **PRESETS[preset_name])
        if not cfg.experiment:
            cfg = replace(cfg, experiment=preset_name)
    for key, value in file_values.items():
        cfg = replace(cfg, **{key: value})
    for f in fields(ExperimentConfig):
        flag_value = getattr(args, f.name, None)
        if flag_value is not None:
            cfg = replace(cfg, **{f.name: flag_value})
    if getattr(args, "no_plot", False):
        cfg = replace(cfg, plot=False)
    _validate(cfg)
    return cfg


def build_hmc_config(cfg: ExperimentConfig) -> HmcConfig:
    if cfg.representation == SPECTRAL:
        covariance = SpectralCovariance(bridge_eigenvalues(cfg.dim))
    else:
        covariance = BridgeGridCovariance(cfg.dim)
    potential = make_potential(cfg.potential, dim=cfg.dim, gamma=cfg.gamma)
    try:
        return HmcConfig(
            integrator=IntegratorParams(cfg.h, cfg.steps),
            potential=potential,
            covariance=covariance,
            mode=cfg.mode,
            exact_surrogate_steps=cfg.surrogate or None,
        )
    except ValueError as exc:
        raise ConfigError("mode", str(exc)) from exc


def initial_pair(
    cfg: ExperimentConfig, hmc: HmcConfig, rng: np.random.Generator
) -> Tuple[Field, Field]:
    """Build the two starting positions named by the ``init`` preset.

    ``fig1-pair`` draws two independent prior samples.  ``doublewell-pair``
    places the chains near the two constant minima +1/2 and -1/2, each nudged
    by a small prior perturbation.
    """
    if cfg.init == "fig1-pair":
        return sample_prior(hmc.covariance, rng), sample_prior(hmc.covariance, rng)
    up = field_from_grid_values(np.full(cfg.dim, 0.5), cfg.representation)
    down = field_from_grid_values(np.full(cfg.dim, -0.5), cfg.representation)
    x0 = up + 0.05 * sample_prior(hmc.covariance, rng)
    y0 = down + 0.05 * sample_prior(hmc.covariance, rng)
    return x0, y0


def _header_lines(cfg: ExperimentConfig, command: str) -> List[str]:
    lines = [f"command = {command}"]
    for f in fields(ExperimentConfig):
        lines.append(f"{f.name} = {getattr(cfg, f.name)}")
    return lines


def _trace_columns(trace: CouplingTrace) -> dict:
    recs = trace.records
    return {
        "iter": [r.iteration for r in recs],
        "distance_l2": [r.distance_l2 for r in recs],
        "accepted_x": [r.accepted_x for r in recs],
        "accepted_y": [r.accepted_y for r in recs],
        "delta_h_x": [r.delta_h_x for r in recs],
        "delta_h_y": [r.delta_h_y for r in recs],
    }


def _trace_summary(trace: CouplingTrace) -> List[str]:
    coalesced = "none" if trace.coalesced_at is None else str(trace.coalesced_at)
    try:
        rate = repr(estimate_contraction_rate(trace))
    except ValueError:
        rate = "nan"
    return [f"coalescence: {coalesced}", f"contraction_rate: {rate}"]


def _figure_path(out: str) -> str:
    return str(Path(out).with_suffix(".png"))


def _default_out(cfg: ExperimentConfig, name: str) -> ExperimentConfig:
    return cfg if cfg.out else replace(cfg, out=name)


def cmd_run_coupling(cfg: ExperimentConfig) -> int:
    """Run one coupling and write the distance trace."""
    cfg = _default_out(cfg, "coupling.csv")
    hmc = build_hmc_config(cfg)
    rng = np.random.default_rng(cfg.seed)
    x0, y0 = initial_pair(cfg, hmc, rng)
    trace = run_coupling(
        x0, y0, cfg.iters, rng, hmc, coalescence_atol=cfg.coalesce_atol
    )
    summary = _trace_summary(trace)
    write_delimited(
        cfg.out, _trace_columns(trace), _header_lines(cfg, "run-coupling"), summary
    )
    if cfg.plot:
        label = cfg.experiment or cfg.potential
        render_distance_figure(
            _figure_path(cfg.out),
            [(label, trace.iterations(), trace.distances())],
            f"coupled distance ({label})",
        )
    for line in summary:
        print(line)
    print(f"wrote {cfg.out}")
    return 0


def _padded_distances(trace: CouplingTrace, n_iters: int) -> np.ndarray:
    out = np.zeros(n_iters + 1)
    dist = trace.distances()
    out[: dist.size] = dist
    return out


def run_average(
    cfg: ExperimentConfig,
    run_seeds: "Optional[Sequence] | None" = None,
) -> Tuple[np.ndarray, List[CouplingTrace]]:
    """Per-iteration distance matrix over independently seeded runs.

    ``run_seeds`` defaults to children spawned from the master seed; passing an
    explicit list (possibly with repeats) pins each run's stream.
    """
    hmc = build_hmc_config(cfg)
    if run_seeds is None:
        run_seeds = np.random.SeedSequence(cfg.seed).spawn(cfg.runs)
    curves = np.zeros((len(run_seeds), cfg.iters + 1))
    traces = []
    for i, seed in enumerate(run_seeds):
        rng = np.random.default_rng(seed)
        x0, y0 = initial_pair(cfg, hmc, rng)
        trace = run_coupling(
            x0, y0, cfg.iters, rng, hmc, coalescence_atol=cfg.coalesce_atol
        )
        curves[i] = _padded_distances(trace, cfg.iters)
        traces.append(trace)
    return curves, traces


def cmd_average(cfg: ExperimentConfig) -> int:
    """Average the coupled distance over ``runs`` independently seeded runs."""
    if cfg.runs < 2:
        raise ConfigError("runs", "averaging needs at least 2 runs")
    cfg = _default_out(cfg, "average.csv")
    curves, traces = run_average(cfg)
    iters = np.arange(cfg.iters + 1)
    n_alive = np.array(
        [
            sum(
                1
                for t in traces
                if t.coalesced_at is None or t.coalesced_at > int(k)
            )
            for k in iters
        ]
    )
    columns = {
        "iter": iters.tolist(),
        "mean_distance": curves.mean(axis=0).tolist(),
        "min": curves.min(axis=0).tolist(),
        "max": curves.max(axis=0).tolist(),
        "n_alive": n_alive.tolist(),
    }
    coalesced = sum(1 for t in traces if t.coalesced_at is not None)
    summary = [f"coalesced_runs: {coalesced}/{len(traces)}"]
    write_delimited(cfg.out, columns, _header_lines(cfg, "average"), summary)
    if cfg.plot:
        label = cfg.experiment or cfg.potential
        render_distance_figure(
            _figure_path(cfg.out),
            [(f"mean over {len(traces)} runs", iters, curves.mean(axis=0))],
            f"average coupled distance ({label})",
            band=(iters, curves.min(axis=0), curves.max(axis=0)),
        )
    for line in summary:
        print(line)
    print(f"wrote {cfg.out}")
    return 0


def cmd_audit(cfg: ExperimentConfig) -> int:
    """Estimate the regularity constants and print PASS/FAIL per assumption."""
    hmc = build_hmc_config(cfg)
    rng = np.random.default_rng(cfg.seed)
    report = audit_assumptions(
        hmc.potential, hmc.covariance, hmc.integrator, cfg.pairs, rng
    )

    def verdict(ok: bool) -> str:
        return "PASS" if ok else "FAIL"

    lines = [
        f"L_hat={report.L_hat!r}",
        f"L_prime_hat={report.L_prime_hat!r}",
        f"zeta_hat={report.zeta_hat!r}",
        f"M_hat={report.M_hat!r}",
        f"R_hat={report.R_hat!r}",
        f"condition_value={report.condition_value!r}",
        f"theorem_rate={report.theorem_rate!r}",
        f"n_pairs={report.n_pairs}",
        f"assumption4_lipschitz_growth={verdict(report.lipschitz_growth_ok)}",
        f"assumption5_convexity={verdict(report.convexity_ok)}",
        f"assumption6_step_condition={verdict(report.step_condition_ok)}",
        f"assumption7_trajectory_gate={verdict(report.trajectory_gate_ok)}",
    ]
    for line in lines:
        print(line)
    if cfg.out:
        with open(cfg.out, "w", encoding="utf-8") as fh:
            for line in _header_lines(cfg, "audit"):
                fh.write(f"# {line}\n")
            fh.write("\n".join(lines) + "\n")
        print(f"wrote {cfg.out}")
    return 0


def cmd_compare_representations(cfg: ExperimentConfig) -> int:
    """Run the same coupling in spectral and grid form and compare the rates."""
    cfg = _default_out(cfg, "compare.csv")
    base = Path(cfg.out)
    stem = base.with_suffix("")
    seq = np.random.SeedSequence(cfg.seed)
    seed_init, seed_spec, seed_grid = seq.spawn(3)

    spec_cfg = replace(cfg, representation=SPECTRAL)
    grid_cfg = replace(cfg, representation=GRID)
    hmc_spec = build_hmc_config(spec_cfg)
    hmc_grid = build_hmc_config(grid_cfg)

    init_rng = np.random.default_rng(seed_init)
    x0s, y0s = initial_pair(spec_cfg, hmc_spec, init_rng)
    x0g = to_grid(x0s, hmc_grid.covariance)
    y0g = to_grid(y0s, hmc_grid.covariance)

    results = {}
    for rep, hmc, pair, seed, run_cfg in (
        (SPECTRAL, hmc_spec, (x0s, y0s), seed_spec, spec_cfg),
        (GRID, hmc_grid, (x0g, y0g), seed_grid, grid_cfg),
    ):
        rng = np.random.default_rng(seed)
        trace = run_coupling(
            pair[0], pair[1], cfg.iters, rng, hmc,
            coalescence_atol=cfg.coalesce_atol,
        )
        out = f"{stem}.{rep}.csv"
        write_delimited(
            out,
            _trace_columns(trace),
            _header_lines(run_cfg, "compare-representations"),
            _trace_summary(trace),
        )
        results[rep] = trace
        print(f"wrote {out}")

    rates = {}
    for rep, trace in results.items():
        try:
            rates[rep] = estimate_contraction_rate(trace)
        except ValueError:
            rates[rep] = float("nan")
    mean_rate = 0.5 * (rates[SPECTRAL] + rates[GRID])
    rel = (
        abs(rates[SPECTRAL] - rates[GRID]) / mean_rate
        if mean_rate > 0
        else float("nan")
    )
    summary_lines = [
        f"rate_spectral={rates[SPECTRAL]!r}",
        f"rate_grid={rates[GRID]!r}",
        f"relative_difference={rel!r}",
    ]
    summary_path = f"{stem}.summary.txt"
    with open(summary_path, "w", encoding="utf-8") as fh:
        for line in _header_lines(cfg, "compare-representations"):
            fh.write(f"# {line}\n")
        fh.write("\n".join(summary_lines) + "\n")
    if cfg.plot:
        render_distance_figure(
            f"{stem}.png",
            [
                (rep, results[rep].iterations(), results[rep].distances())
                for rep in (SPECTRAL, GRID)
            ],
            f"representation comparison ({cfg.experiment or cfg.potential})",
        )
    for line in summary_lines:
        print(line)
    print(f"wrote {summary_path}")
    return 0


_COMMANDS = {
    "run-coupling": cmd_run_coupling,
    "average": cmd_average,
    "audit": cmd_audit,
    "compare-representations": cmd_compare_representations,
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="phmc",
        description="Coupled preconditioned HMC experiment runner.",
        allow_abbrev=False,
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, func in _COMMANDS.items():
        p = sub.add_parser(name, help=func.__doc__, allow_abbrev=False)
        p.add_argument("--config", type=str, default=None, help="key = value file")
        p.add_argument("--preset", type=str, default=None,
                       help=f"named preset ({', '.join(sorted(PRESETS))})")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--potential", type=str, default=None)
        p.add_argument("--gamma", type=float, default=None)
        p.add_argument("--dim", type=int, default=None)
        p.add_argument("--h", type=float, default=None)
        p.add_argument("--steps", type=int, default=None)
        p.add_argument("--iters", type=int, default=None)
        p.add_argument("--runs", type=int, default=None)
        p.add_argument("--repr", dest="representation", type=str, default=None,
                       choices=(SPECTRAL, GRID))
        p.add_argument("--mode", type=str, default=None, choices=(EXACT, ADJUSTED))
        p.add_argument("--init", type=str, default=None)
        p.add_argument("--pairs", type=int, default=None)
        p.add_argument("--surrogate", type=int, default=None,
                       help="substeps per h for exact-mode surrogate (0 = off)")
        p.add_argument("--coalesce-atol", dest="coalesce_atol", type=float,
                       default=None,
                       help="coalescence threshold (0 = bitwise equality)")
        p.add_argument("--out", type=str, default=None)
        p.add_argument("--experiment", type=str, default=None)
        p.add_argument("--no-plot", dest="no_plot", action="store_true")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
        return _COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ChainError as exc:
        print(f"runtime divergence: {exc}", file=sys.stderr)
        return 3
    except TrajectoryDivergence as exc:
        print(f"runtime divergence: {exc}", file=sys.stderr)
        return 3


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
