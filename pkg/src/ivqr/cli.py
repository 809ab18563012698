"""Command-line front end.

Subcommands: estimate, ci, identify, simulate, mc.  Options come from the
command line, an optional flat key-value config file, and defaults, with
precedence command line > file > defaults.  Every command writes a single
JSON report (to --output or stdout) and prints a table rendered from that
JSON.  Exit codes: 0 success, 2 config errors, 3 data errors, 4 numerical
failures.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import dgp as dgp_mod
from . import report as report_mod
from .dataio import load_csv, write_csv, write_truth
from .dataset import QuantileDataset
from .estimation import (
    LinearIvqrSpec,
    build_profile,
    default_grid,
    estimate,
    robust_confidence_region,
    variance_by_subsampling,
)
from .exceptions import ConfigError, DataError, IvqrError, NumericalError
from .identification import (
    estimate_moment_system,
    global_univalence_check,
    identification_region_scan,
    inequality_region_scan,
    local_rank_check,
    mlr_check,
)
from .regions import ParameterPolytope

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4

WEAK_ID_FRACTION = 0.9
MAX_EXPORTED_POINTS = 5000

DGP_BUILDERS = {
    "location_scale": (dgp_mod.LocationScaleDgp, dgp_mod.simulate_location_scale),
    "demand": (dgp_mod.DemandDgp, dgp_mod.simulate_demand),
    "binary": (dgp_mod.BinaryTreatmentDgp, dgp_mod.simulate_binary),
}


@dataclasses.dataclass
class RunConfig:
    """Resolved options for one command invocation."""

    command: str
    input_path: str | None = None
    output_path: str | None = None
    y: str | None = None
    d: tuple = ()
    x: tuple = ()
    z: tuple = ()
    taus: tuple = (0.5,)
    grid_min: tuple | None = None
    grid_max: tuple | None = None
    grid_step: tuple | None = None
    level: float = 0.95
    seed: int = 0
    dgp: str | None = None
    params: dict = dataclasses.field(default_factory=dict)
    reps: int = 200
    n: int = 1000
    se: bool = True
    subsample_reps: int = 120
    block_size: int | None = None
    region_radius: float | None = None
    scan_epsilon: float | None = None
    min_cell: int = 20
    jobs: int = 1

    def __post_init__(self):
        for tau in self.taus:
            if not 0.0 < tau < 1.0:
                raise ConfigError(f"tau must be in (0, 1), got {tau}")
        if not 0.0 < self.level < 1.0:
            raise ConfigError(f"level must be in (0, 1), got {self.level}")
        if self.grid_step is not None and any(s <= 0 for s in self.grid_step):
            raise ConfigError(f"grid step must be positive, got {self.grid_step}")
        given = [g is not None for g in (self.grid_min, self.grid_max, self.grid_step)]
        if any(given) and not all(given):
            raise ConfigError("grid-min, grid-max, and grid-step must be given together")
        if self.dgp is not None and self.dgp not in DGP_BUILDERS:
            raise ConfigError(
                f"unknown dgp {self.dgp!r}; choose from {sorted(DGP_BUILDERS)}"
            )
        if self.jobs < 1:
            raise ConfigError(f"jobs must be >= 1, got {self.jobs}")

    def echo(self) -> dict:
        d = dataclasses.asdict(self)
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in d.items()}

    def roles(self) -> dict:
        if not self.y:
            raise ConfigError("--y is required for this command")
        return {"y": self.y, "d": list(self.d), "x": list(self.x), "z": list(self.z)}

    def explicit_grid(self, dim_d: int):
        if self.grid_min is None:
            return None

        def per_dim(vals):
            if len(vals) == 1:
                return list(vals) * dim_d
            if len(vals) != dim_d:
                raise ConfigError(
                    f"grid spec must have 1 or {dim_d} entries, got {len(vals)}"
                )
            return list(vals)

        los = per_dim(self.grid_min)
        his = per_dim(self.grid_max)
        steps = per_dim(self.grid_step)
        axes = []
        for lo, hi, step in zip(los, his, steps):
            if hi <= lo:
                raise ConfigError(f"grid-max must exceed grid-min ({lo} >= {hi})")
            npts = int(np.floor((hi - lo) / step + 1e-9)) + 1
            axes.append(lo + step * np.arange(npts))
        from .estimation import product_grid

        return product_grid(axes)


# ---------------------------------------------------------------------------
# config file and argument merging


def parse_config_file(path) -> dict:
    """Flat ``key = value`` pairs; lists are comma separated; # comments."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


_LIST_STR = ("d", "x", "z")
_LIST_FLOAT = ("taus", "grid_min", "grid_max", "grid_step")
_FLOATS = ("level", "region_radius", "scan_epsilon")
_INTS = ("seed", "reps", "n", "subsample_reps", "block_size", "min_cell", "jobs")
_BOOLS = ("se",)


def _convert(key: str, value: str):
    if key in _LIST_STR:
        return tuple(v.strip() for v in value.split(",") if v.strip())
    if key in _LIST_FLOAT:
        return tuple(float(v) for v in value.split(",") if v.strip())
    if key in _FLOATS:
        return float(value)
    if key in _INTS:
        return int(value)
    if key in _BOOLS:
        return value.strip().lower() in ("1", "true", "yes", "on")
    return value


def _parse_params(pairs) -> dict:
    out = {}
    for pair in pairs or ():
        if "=" not in pair:
            raise ConfigError(f"--param expects key=value, got {pair!r}")
        key, value = pair.split("=", 1)
        try:
            out[key.strip()] = json.loads(value)
        except json.JSONDecodeError:
            out[key.strip()] = value.strip()
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ivqr",
        description="Instrumental-variables quantile regression toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in (
        ("estimate", "inverse quantile regression point estimates"),
        ("ci", "weak-identification-robust confidence regions"),
        ("identify", "identification diagnostics for discrete D and Z"),
        ("simulate", "generate a dataset with known ground truth"),
        ("mc", "replicated simulate/estimate/ci study"),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", help="flat key=value config file")
        p.add_argument("--input", dest="input_path")
        p.add_argument("--output", dest="output_path")
        p.add_argument("--y")
        p.add_argument("--d", action="append")
        p.add_argument("--x", action="append")
        p.add_argument("--z", action="append")
        p.add_argument("--tau", dest="taus", action="append", type=float)
        p.add_argument("--grid-min", dest="grid_min", action="append", type=float)
        p.add_argument("--grid-max", dest="grid_max", action="append", type=float)
        p.add_argument("--grid-step", dest="grid_step", action="append", type=float)
        p.add_argument("--level", type=float)
        p.add_argument("--seed", type=int)
        p.add_argument("--dgp")
        p.add_argument("--param", dest="params", action="append", metavar="KEY=VALUE")
        p.add_argument("--reps", type=int)
        p.add_argument("--n", type=int)
        p.add_argument("--no-se", dest="se", action="store_false", default=None)
        p.add_argument("--subsample-reps", dest="subsample_reps", type=int)
        p.add_argument("--block-size", dest="block_size", type=int)
        p.add_argument("--region-radius", dest="region_radius", type=float)
        p.add_argument("--scan-epsilon", dest="scan_epsilon", type=float)
        p.add_argument("--min-cell", dest="min_cell", type=int)
        p.add_argument("--jobs", type=int)
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    fields = {f.name: f for f in dataclasses.fields(RunConfig)}
    merged = {"command": args.command}

    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.exists():
            raise ConfigError(f"config file does not exist: {path}")
        for key, raw in parse_config_file(path).items():
            if key == "param" or key == "params":
                merged.setdefault("params", {}).update(_parse_params(raw.split()))
                continue
            if key not in fields:
                raise ConfigError(f"unknown config key {key!r}")
            merged[key] = _convert(key, raw)

    for key, value in vars(args).items():
        if key in ("command", "config") or value is None:
            continue
        if key == "params":
            merged.setdefault("params", {}).update(_parse_params(value))
        elif key in ("d", "x", "z", "taus", "grid_min", "grid_max", "grid_step"):
            merged[key] = tuple(value)
        else:
            merged[key] = value
    return RunConfig(**merged)


# ---------------------------------------------------------------------------
# command implementations


def _grid_block(grid: np.ndarray) -> dict:
    steps = []
    for k in range(grid.shape[1]):
        u = np.unique(grid[:, k])
        steps.append(float(np.min(np.diff(u))) if u.size > 1 else None)
    return {
        "min": grid.min(axis=0).tolist(),
        "max": grid.max(axis=0).tolist(),
        "step": None if any(s is None for s in steps) else steps,
        "n_points": int(grid.shape[0]),
    }


def _coefficient_names(data: QuantileDataset, spec: LinearIvqrSpec) -> list:
    d_cols = spec.endogenous_cols if spec.endogenous_cols is not None else data.d_cols
    x_cols = spec.exogenous_cols if spec.exogenous_cols is not None else data.x_cols
    names = [f"alpha[{data.column_names[c]}]" for c in d_cols]
    names.append("beta[intercept]")
    names += [f"beta[{data.column_names[c]}]" for c in x_cols]
    return names


def _estimate_block(data, cfg: RunConfig, tau: float, with_se: bool) -> tuple[dict, dict]:
    spec = LinearIvqrSpec(tau=tau)
    grid = cfg.explicit_grid(len(data.d_cols))
    if grid is None:
        grid = default_grid(data, spec)
    profile = build_profile(data, spec, grid, n_jobs=cfg.jobs)
    est = estimate(profile)
    block = {
        "tau": tau,
        "alpha_hat": est.alpha_hat,
        "beta_hat": est.beta_hat,
        "gamma_hat": est.gamma_hat,
        "wald_min": est.wald_min,
        "coefficient_names": _coefficient_names(data, spec),
        "standard_errors": None,
        "standard_errors_reason": None,
        "boundary_warning": est.boundary_warning,
        "local_minima": est.local_minima,
        "n_invalid_grid_points": profile.diagnostics["n_invalid"],
        "grid": _grid_block(grid),
    }
    if with_se and cfg.se:
        block_size = cfg.block_size or max(data.n // 5, 2 * (len(data.d_cols) + len(data.x_cols) + len(data.z_cols) + 2))
        try:
            cov = variance_by_subsampling(
                data,
                spec,
                grid,
                block_size=min(block_size, data.n - 1),
                replications=cfg.subsample_reps,
                seed=cfg.seed,
            )
            block["standard_errors"] = np.sqrt(np.clip(np.diag(cov), 0.0, np.inf))
        except IvqrError as exc:
            block["standard_errors_reason"] = f"subsampling failed: {exc}"
    elif not cfg.se:
        block["standard_errors_reason"] = "disabled by configuration"
    return block, {"profile": profile, "estimate": est}


def cmd_estimate(cfg: RunConfig) -> dict:
    data = load_csv(cfg.input_path, cfg.roles())
    report = report_mod.new_report("estimate", cfg.echo(), cfg.seed)
    report["estimates"] = []
    for tau in cfg.taus:
        block, extra = _estimate_block(data, cfg, tau, with_se=True)
        report["estimates"].append(block)
        if block["boundary_warning"]:
            report["warnings"].append(
                f"tau={tau:g}: Wald profile minimized at a grid edge; "
                "the grid may exclude the truth"
            )
    return report


def cmd_ci(cfg: RunConfig) -> dict:
    data = load_csv(cfg.input_path, cfg.roles())
    report = report_mod.new_report("ci", cfg.echo(), cfg.seed)
    report["estimates"] = []
    report["confidence_regions"] = []
    for tau in cfg.taus:
        block, extra = _estimate_block(data, cfg, tau, with_se=False)
        report["estimates"].append(block)
        region = robust_confidence_region(extra["profile"], cfg.level)
        weak = region.fraction_of_grid >= WEAK_ID_FRACTION
        one_dim = region.grid.shape[1] == 1
        ci_block = {
            "tau": tau,
            "level": cfg.level,
            "threshold": region.threshold,
            "alpha_points": region.alphas,
            "n_points": region.n_points,
            "fraction_of_grid": region.fraction_of_grid,
            "width": region.width if one_dim else None,
            "width_reason": None if one_dim else "multidimensional grid",
            "weak_identification_suspected": weak,
            "grid": _grid_block(region.grid),
        }
        report["confidence_regions"].append(ci_block)
        if weak:
            report["warnings"].append(
                f"tau={tau:g}: weak identification suspected; confidence region "
                f"spans {region.fraction_of_grid:.0%} of the grid"
            )
    return report


def cmd_identify(cfg: RunConfig) -> dict:
    data = load_csv(cfg.input_path, cfg.roles())
    if len(data.d_cols) != 1 or len(data.z_cols) != 1:
        raise ConfigError("identify needs exactly one --d and one --z column")
    d_vals = data.d[:, 0]
    z_vals = data.z[:, 0]
    if not data.is_discrete(d_vals) or not data.is_discrete(z_vals):
        raise DataError(
            "identify requires discrete D and Z (at most 10 distinct values "
            f"each; got {np.unique(d_vals).size} and {np.unique(z_vals).size})"
        )

    report = report_mod.new_report("identify", cfg.echo(), cfg.seed)
    report["identification"] = []
    y = data.y
    for tau in cfg.taus:
        sys = estimate_moment_system(data, tau, min_cell_count=cfg.min_cell)

        lo, hi = float(y.min()), float(y.max())
        span = max(hi - lo, 1e-6)
        bounds = [(lo - 0.05 * span, hi + 0.05 * span)] * sys.l
        step = 1.1 * span / 100
        scan = identification_region_scan(sys, bounds, step, epsilon=cfg.scan_epsilon)
        # the point of best moment fit anchors the local check and the regions
        best = scan.best_point

        rank = local_rank_check(sys, best)
        radius = cfg.region_radius if cfg.region_radius is not None else 0.5 * float(np.std(y))
        box = ParameterPolytope.box(best, radius)
        checks = [("box", global_univalence_check(sys, box, radius / 10))]
        if sys.l == 2 and best[1] >= best[0]:
            bh = ParameterPolytope.box_halfspace(best, radius)
            checks.append(("box_halfspace", global_univalence_check(sys, bh, radius / 10)))

        if sys.l == 2 and sys.r == 2:
            m = mlr_check(sys, box, radius / 10)
            mlr_block = {
                "applicable": True,
                "direct_holds": m.direct.holds,
                "swapped_holds": m.swapped.holds,
                "worst_point_direct": m.direct.worst_point,
                "worst_point_swapped": m.swapped.worst_point,
            }
        else:
            mlr_block = {"applicable": False, "reason": "binary case only"}

        ineq_block = None
        ineq_reason = None
        if np.unique(y).size <= 8:
            ineq = inequality_region_scan(data)
            ineq_block = {
                "n_surviving": int(ineq.candidates.shape[0]),
                "n_candidates": ineq.n_candidates,
                "n_index_sets": ineq.n_index_sets,
                "slack": ineq.slack,
            }
        else:
            ineq_reason = "outcome is not discrete"

        truncated = scan.points.shape[0] > MAX_EXPORTED_POINTS
        report["identification"].append(
            {
                "tau": tau,
                "d_support": sys.d_support,
                "z_support": sys.z_support,
                "cell_probs": sys.cell_probs,
                "cell_counts": sys.cell_counts,
                "best_point": best,
                "best_deviation": scan.best_deviation,
                "local_rank": {
                    "rank": rank.rank,
                    "min_singular_value": rank.min_singular_value,
                    "passed": rank.passed,
                },
                "mlr": mlr_block,
                "univalence": [
                    {
                        "region": name,
                        "passed": rep.passed,
                        "permutation": list(rep.permutation) if rep.permutation else None,
                        "faces": [
                            {
                                "label": f.label,
                                "min_det": f.min_det,
                                "n_points": f.n_points,
                            }
                            for f in rep.faces
                        ],
                    }
                    for name, rep in checks
                ],
                "equality_scan": {
                    "epsilon": scan.epsilon,
                    "n_points": int(scan.points.shape[0]),
                    "n_grid": scan.n_grid,
                    "step": scan.step,
                    "bounds": [list(b) for b in scan.bounds],
                    "points_truncated": truncated,
                    "points": scan.points[:MAX_EXPORTED_POINTS],
                },
                "inequality_scan": ineq_block,
                "inequality_scan_reason": ineq_reason,
            }
        )
    return report


def _build_dgp(cfg: RunConfig):
    if cfg.dgp is None:
        raise ConfigError("--dgp is required for this command")
    cls, simulate = DGP_BUILDERS[cfg.dgp]
    valid = {f.name for f in dataclasses.fields(cls)}
    params = dict(cfg.params)
    unknown = set(params) - valid
    if unknown:
        raise ConfigError(
            f"unknown parameter(s) {sorted(unknown)} for dgp {cfg.dgp!r}; "
            f"valid: {sorted(valid)}"
        )
    coerced = {
        key: tuple(value) if isinstance(value, list) else value
        for key, value in params.items()
    }
    return cls(**coerced), simulate


def cmd_simulate(cfg: RunConfig) -> dict:
    if not cfg.output_path:
        raise ConfigError("--output is required for simulate")
    dgp, simulate = _build_dgp(cfg)
    sim = simulate(dgp, cfg.n, cfg.seed)
    csv_path = Path(cfg.output_path)
    truth_path = csv_path.with_suffix(csv_path.suffix + ".truth.json")
    write_csv(sim.data, csv_path)
    write_truth(sim.truth, truth_path)
    report = report_mod.new_report("simulate", cfg.echo(), cfg.seed)
    report["simulation"] = {
        "dgp": cfg.dgp,
        "n": cfg.n,
        "seed": cfg.seed,
        "csv_path": str(csv_path),
        "truth_path": str(truth_path),
        "params": report_mod.sanitize(cfg.params),
    }
    return report


def _mc_single(dgp, simulate, cfg: RunConfig, tau: float, child_seed):
    rng_seed = child_seed
    sim = simulate(dgp, cfg.n, rng_seed)
    data = sim.data
    spec = LinearIvqrSpec(tau=tau)
    grid = cfg.explicit_grid(len(data.d_cols))
    if grid is None:
        grid = default_grid(data, spec)
    profile = build_profile(data, spec, grid)
    est = estimate(profile)
    region = robust_confidence_region(profile, cfg.level)
    true_alpha = np.atleast_1d(sim.truth.alpha(tau))
    return {
        "alpha_hat": est.alpha_hat,
        "true_alpha": true_alpha,
        "covered": bool(region.covers(true_alpha)),
        "width": region.width if grid.shape[1] == 1 else None,
    }


def cmd_mc(cfg: RunConfig) -> dict:
    dgp, simulate = _build_dgp(cfg)
    report = report_mod.new_report("mc", cfg.echo(), cfg.seed)
    report["monte_carlo"] = []
    children = dgp_mod.replication_seeds(cfg.seed, cfg.reps)
    for tau in cfg.taus:
        def run(r):
            return _mc_single(dgp, simulate, cfg, tau, children[r])

        if cfg.jobs > 1:
            with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
                results = list(pool.map(run, range(cfg.reps)))
        else:
            results = [run(r) for r in range(cfg.reps)]
        alpha_hats = np.vstack([r["alpha_hat"] for r in results])
        true_alpha = results[0]["true_alpha"]
        errors = alpha_hats - true_alpha[None, :]
        widths = [r["width"] for r in results if r["width"] is not None]
        report["monte_carlo"].append(
            {
                "tau": tau,
                "replications": cfg.reps,
                "n": cfg.n,
                "true_alpha": true_alpha,
                "mean_bias": errors.mean(axis=0),
                "median_bias": np.median(errors, axis=0),
                "rmse": np.sqrt(np.mean(errors**2, axis=0)),
                "coverage": float(np.mean([r["covered"] for r in results])),
                "level": cfg.level,
                "median_region_width": float(np.median(widths)) if widths else None,
                "n_failed": 0,
            }
        )
    return report


COMMANDS = {
    "estimate": cmd_estimate,
    "ci": cmd_ci,
    "identify": cmd_identify,
    "simulate": cmd_simulate,
    "mc": cmd_mc,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
        if cfg.command in ("estimate", "ci", "identify") and not cfg.input_path:
            raise ConfigError("--input is required for this command")
        report = COMMANDS[cfg.command](cfg)
        report = report_mod.finalize(report)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC

    text = json.dumps(report, indent=2)
    if cfg.output_path and cfg.command != "simulate":
        # JSON to the file, table to stdout
        Path(cfg.output_path).write_text(text + "\n")
        print(report_mod.render_text(report))
    else:
        # JSON occupies stdout; table goes to stderr
        print(text)
        print(report_mod.render_text(report), file=sys.stderr)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
