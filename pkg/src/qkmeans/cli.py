"""Command-line harness: ``gen``, ``run``, ``sweep`` and ``opt``.

Exit status: 0 success, 2 configuration error, 3 brute force infeasible,
4 sampler starvation, 5 candidate-list cap exceeded, 1 anything else from
the pipeline. ``QKS_SEED`` in the environment overrides the run seed.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import tempfile
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from qkmeans.core import load_csv, normalize_dataset, write_csv
from qkmeans.errors import ConfigError, QKMeansError
from qkmeans.oracle import MODES, OracleConfig
from qkmeans.scheme import DEFAULT_LIST_CAP, SchemeParams, brute_force_opt, solve

log = logging.getLogger("qkmeans")

PRESET_HELP = (
    "parameter preset. 'paper': tau = ceil(2/eps'), rho = ceil(k/eps'^4) with eps' = eps/4; "
    "keeps the worst-case guarantee but the list explodes beyond toy sizes. "
    "'desk': tau = 2, rho = 2k; tractable for N ~ 20, no worst-case guarantee. "
    "Both multiply rho by ceil(1/(1-delta)) under a deterministic-delta oracle."
)


@dataclass
class RunConfig:
    data: str | None = None
    k: int = 2
    eps: float = 0.5
    mode: str = "exact"
    eps_rel: float = 0.0
    delta_fail: float = 0.0
    oracle_seed: int = 0
    preset: str = "desk"
    rho: int | None = None
    tau: int | None = None
    repetitions: int | None = None
    list_cap: int = DEFAULT_LIST_CAP
    seed: int = 0
    output: str | None = None
    brute_force: bool = False

    def oracle_config(self) -> OracleConfig:
        return OracleConfig(self.mode, self.eps_rel, self.delta_fail, self.oracle_seed)

    def scheme_params(self) -> SchemeParams:
        delta = self.eps_rel if self.mode == "deterministic-delta" else 0.0
        base = SchemeParams.preset_for(self.preset, self.k, self.eps, delta, list_cap=self.list_cap)
        overrides = {
            name: value
            for name, value in (("rho", self.rho), ("tau", self.tau), ("repetitions", self.repetitions))
            if value is not None
        }
        if not overrides:
            return base
        fields_ = base.to_dict()
        fields_.update(overrides, preset="custom")
        return SchemeParams(**fields_)

    @classmethod
    def from_file(cls, path) -> RunConfig:
        try:
            raw = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as err:
            raise ConfigError(f"cannot read config {path}: {err}") from err
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        return cls(**raw)


def atomic_write(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def to_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n"


def _jsonable(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"not JSON serializable: {type(x).__name__}")


# dataset generation


def generate_points(kind: str, seed: int, n: int, d: int, clusters: int = 2, separation: float = 10.0, spread: float = 0.1, side: int = 3):
    rng = np.random.default_rng(seed)
    if kind == "gaussian-mixture":
        means = np.zeros((clusters, d))
        means[:, 0] = separation * np.arange(clusters)
        labels = np.arange(n) % clusters
        return means[labels] + rng.normal(0.0, spread, size=(n, d))
    if kind == "uniform-box":
        return rng.uniform(0.0, 1.0, size=(n, d))
    if kind == "grid":
        axes = np.meshgrid(*[np.arange(side, dtype=float)] * d, indexing="ij")
        return np.stack([a.ravel() for a in axes], axis=1)
    raise ConfigError(f"unknown generator {kind!r}")


def generate_dataset(args) -> dict:
    pts = generate_points(args.kind, args.seed, args.n, args.d, args.clusters, args.separation, args.spread, args.side)
    data = normalize_dataset(pts)  # raises on degenerate specs
    spec = {
        "kind": args.kind,
        "seed": args.seed,
        "n": len(pts),
        "d": pts.shape[1],
        "clusters": args.clusters,
        "separation": args.separation,
        "spread": args.spread,
        "side": args.side,
    }
    write_csv(args.out, pts, header="generator " + json.dumps(spec, sort_keys=True))
    return {"path": str(args.out), "n": data.n, "d": data.dim, "eta": data.eta, "scale": data.scale}


# runs


def _load(cfg: RunConfig):
    if not cfg.data:
        raise ConfigError("no dataset given (--data)")
    try:
        return load_csv(cfg.data)
    except OSError as err:
        raise ConfigError(f"cannot read dataset {cfg.data}: {err}") from err
    except ValueError as err:
        if isinstance(err, QKMeansError):
            raise
        raise ConfigError(f"cannot parse dataset {cfg.data}: {err}") from err


def run_experiment(cfg: RunConfig, data=None, opt=None) -> dict:
    """Solve one configuration; attach OPT and the achieved ratio when requested."""
    data = data if data is not None else _load(cfg)
    oracle_cfg = cfg.oracle_config()
    params = cfg.scheme_params()
    if cfg.brute_force and opt is None:
        opt = brute_force_opt(data, cfg.k)
    _, report = solve(data, cfg.k, cfg.eps, oracle_cfg, cfg.seed, params)
    report["config"] = asdict(cfg)
    if opt is not None:
        report["opt"] = opt.cost
        report["ratio"] = report["cost"] / opt.cost if opt.cost > 0 else (1.0 if report["cost"] == 0 else float("inf"))
        report["success"] = bool(report["cost"] <= (1.0 + cfg.eps) * opt.cost)
    return report


def _parse_grid(text, cast=float):
    return [cast(x) for x in text.split(",") if x.strip()]


def _parse_seeds(text):
    if ":" in text:
        lo, hi = text.split(":")
        return list(range(int(lo), int(hi)))
    return _parse_grid(text, int)


def sweep(cfg: RunConfig, seeds, deltas, eps_grid, out=None) -> list[dict]:
    """Run ``cfg`` over seeds x delta grid x eps grid; one record per run.

    A delta of 0 runs the exact oracle, any other value the deterministic-delta
    oracle with that delta.
    """
    data = _load(cfg)
    opt = brute_force_opt(data, cfg.k) if cfg.brute_force else None
    records = []
    lines = []
    for eps in eps_grid:
        for delta in deltas:
            for seed in seeds:
                run_cfg = RunConfig(**{**asdict(cfg), "eps": eps, "seed": seed, "output": None})
                if delta > 0:
                    run_cfg.mode, run_cfg.eps_rel, run_cfg.delta_fail = "deterministic-delta", delta, 0.0
                elif cfg.mode == "deterministic-delta":
                    run_cfg.mode, run_cfg.eps_rel = "exact", 0.0
                report = run_experiment(run_cfg, data=data, opt=opt)
                record = {
                    "seed": seed,
                    "eps": eps,
                    "delta": delta,
                    "cost": report["cost"],
                    "list_size": report["candidates"]["size"],
                    "m": report["selection"]["m"],
                    "oracle_queries": report["oracle_queries"]["total"],
                    "opt": report.get("opt"),
                    "ratio": report.get("ratio"),
                    "success": report.get("success"),
                }
                records.append(record)
                lines.append(json.dumps(record, sort_keys=True))
                log.info("eps=%s delta=%s seed=%s cost=%.6g ratio=%s", eps, delta, seed, record["cost"], record["ratio"])
    if out:
        atomic_write(out, "\n".join(lines) + "\n")
    return records


# argument parsing


def _add_run_flags(p):
    p.add_argument("--config", help="JSON run configuration; command-line flags override it")
    p.add_argument("--data", help="CSV dataset, one point per row, '#' comments")
    p.add_argument("--k", type=int)
    p.add_argument("--eps", type=float, help="target error, 0 < eps <= 1/2")
    p.add_argument("--oracle", dest="mode", choices=MODES, help="distance channel")
    p.add_argument("--delta", type=float, help="closeness of the deterministic-delta oracle (sets eps-rel)")
    p.add_argument("--eps-rel", type=float, help="relative error of the oracle")
    p.add_argument("--delta-fail", type=float, help="per-estimate failure parameter of the stochastic oracle")
    p.add_argument("--oracle-seed", type=int)
    p.add_argument("--preset", choices=("desk", "paper"), help=PRESET_HELP)
    p.add_argument("--rho", type=int, help="override: D^2 samples per center (rho)")
    p.add_argument("--tau", type=int, help="override: subset size (tau)")
    p.add_argument("--repetitions", type=int, help="override: outer repetitions (default min(2^k, 32))")
    p.add_argument("--list-cap", type=int, help=f"abort if the candidate list exceeds this size (default {DEFAULT_LIST_CAP})")
    p.add_argument("--seed", type=int)
    p.add_argument("--brute-force", action="store_true", default=None, help="also compute OPT exhaustively and report the ratio")


def config_from_args(args) -> RunConfig:
    cfg = RunConfig.from_file(args.config) if args.config else RunConfig()
    mapping = {
        "data": args.data,
        "k": args.k,
        "eps": args.eps,
        "mode": args.mode,
        "eps_rel": args.eps_rel,
        "delta_fail": args.delta_fail,
        "oracle_seed": args.oracle_seed,
        "preset": args.preset,
        "rho": args.rho,
        "tau": args.tau,
        "repetitions": args.repetitions,
        "list_cap": args.list_cap,
        "seed": args.seed,
        "brute_force": args.brute_force,
        "output": getattr(args, "out", None),
    }
    for name, value in mapping.items():
        if value is not None:
            setattr(cfg, name, value)
    if args.delta is not None:
        cfg.eps_rel = args.delta
        if args.mode is None:
            cfg.mode = "deterministic-delta"
    env_seed = os.environ.get("QKS_SEED")
    if env_seed:
        try:
            cfg.seed = int(env_seed)
        except ValueError as err:
            raise ConfigError(f"QKS_SEED must be an integer, got {env_seed!r}") from err
    return cfg


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qkmeans", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="write a synthetic dataset as CSV")
    gen.add_argument("kind", choices=("gaussian-mixture", "uniform-box", "grid"))
    gen.add_argument("--out", required=True)
    gen.add_argument("--n", type=int, default=20)
    gen.add_argument("--d", type=int, default=2)
    gen.add_argument("--clusters", type=int, default=2, help="gaussian-mixture: number of components")
    gen.add_argument("--separation", type=float, default=10.0, help="gaussian-mixture: distance between consecutive means")
    gen.add_argument("--spread", type=float, default=0.1, help="gaussian-mixture: per-coordinate standard deviation")
    gen.add_argument("--side", type=int, default=3, help="grid: points per axis")
    gen.add_argument("--seed", type=int, default=0)

    run = sub.add_parser("run", help="solve one configuration and write a JSON report")
    _add_run_flags(run)
    run.add_argument("--out", help="report path (default: stdout)")

    sw = sub.add_parser("sweep", help="run over seed ranges and delta/eps grids, JSON lines out")
    _add_run_flags(sw)
    sw.add_argument("--seeds", default="0:20", help="'lo:hi' range or comma list")
    sw.add_argument("--deltas", default="0", help="comma list; 0 = exact oracle, >0 = deterministic-delta")
    sw.add_argument("--eps-grid", help="comma list of eps values (default: --eps)")
    sw.add_argument("--out", help="JSON-lines path (default: stdout)")

    opt = sub.add_parser("opt", help="exact optimum by brute force")
    opt.add_argument("--data", required=True)
    opt.add_argument("--k", type=int, required=True)
    opt.add_argument("--out")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        if args.command == "gen":
            info = generate_dataset(args)
            print(f"N={info['n']} d={info['d']} eta={info['eta']:.6g}")
        elif args.command == "run":
            cfg = config_from_args(args)
            report = run_experiment(cfg)
            text = to_json(report)
            if cfg.output:
                atomic_write(cfg.output, text)
            else:
                sys.stdout.write(text)
        elif args.command == "sweep":
            cfg = config_from_args(args)
            eps_grid = _parse_grid(args.eps_grid) if args.eps_grid else [cfg.eps]
            records = sweep(cfg, _parse_seeds(args.seeds), _parse_grid(args.deltas), eps_grid, out=args.out)
            if not args.out:
                for r in records:
                    print(json.dumps(r, sort_keys=True))
            wins = [r["success"] for r in records if r["success"] is not None]
            if wins:
                print(f"success {sum(wins)}/{len(wins)}", file=sys.stderr)
        elif args.command == "opt":
            cfg = RunConfig(data=args.data, k=args.k)
            res = brute_force_opt(_load(cfg), args.k)
            text = to_json({"cost": res.cost, "centers": res.centers, "assignment": res.assignment})
            if args.out:
                atomic_write(args.out, text)
            else:
                sys.stdout.write(text)
    except QKMeansError as err:
        stage = f" [{err.stage}]" if err.stage else ""
        print(f"error{stage}: {err}", file=sys.stderr)
        return err.exit_code
    except ValueError as err:
        print(f"error: {err}", file=sys.stderr)
        return ConfigError.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
