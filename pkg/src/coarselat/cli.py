"""Command-line front end: ``coarselat <command> --config <file>``.

Commands read a JSON config, run one pipeline and write CSV/JSON artifacts
plus a ``manifest.json`` that is written last.  Exit status: 0 on success,
2 for an invalid config, 3 for a numerical failure, 4 when a declared
invariant check fails.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .analysis import fit_rate, holder_fit, kernel_estimates, living_mean
from .backward import comparison_violation, integrate_backward
from .construction import build_approximant
from .core import Configuration, DomainError, ModelParams
from .forward import integrate_forward
from .integrator import IntegratorPolicy, NumericalError, read_trajectory_csv
from .kernel import kernel_profile, write_kernel_csv

log = logging.getLogger("coarselat")

COMMANDS = ("forward", "backward", "construct", "kernel", "sweep", "analyze")
SWEEPABLE = ("beta", "epsilon", "ode_tol", "mass_tol", "n", "window_size", "M0", "t_end")
CSV_SCHEMA_VERSION = 1
EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_INVARIANT = 0, 2, 3, 4


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    """Validated run description.  ``raw`` keeps the JSON as given."""

    command: str
    params: ModelParams
    window_size: int = 64
    initial_data: dict = field(default_factory=lambda: {"kind": "constant", "value": 1.0})
    t_end: float = 1.0
    output_dir: str = "coarselat-out"
    sweep_axis: dict | None = None
    base_command: str | None = None
    threads: int = 1
    n: int = 2
    M0: int = 512
    delta: float = 0.0
    samples: int | None = None
    t_list: tuple = (0.5, 1.0, 5.0)
    input_dir: str | None = None
    raw: dict = field(default_factory=dict, repr=False)

    @classmethod
    def from_dict(cls, data: dict, output: str | None = None, seed: int | None = None) -> "RunConfig":
        data = json.loads(json.dumps(data))
        if seed is not None:
            init = data.setdefault("initial_data", {"kind": "constant", "value": 1.0})
            if isinstance(init, dict) and init.get("kind") == "random":
                init["seed"] = int(seed)
            data["seed"] = int(seed)
        if output is not None:
            data["output_dir"] = output
        cmd = data.get("command")
        if cmd not in COMMANDS:
            raise ConfigError(f"command must be one of {COMMANDS}, got {cmd!r}")
        try:
            params = ModelParams(**data.get("params", {"beta": 1.0}))
        except (TypeError, DomainError) as exc:
            raise ConfigError(f"bad params: {exc}") from exc
        threads = int(os.environ.get("COARSELAT_THREADS", data.get("threads", 1)))
        cfg = cls(
            command=cmd,
            params=params,
            window_size=int(data.get("window_size", 64)),
            initial_data=data.get("initial_data", {"kind": "constant", "value": 1.0}),
            t_end=float(data.get("t_end", 1.0)),
            output_dir=str(data.get("output_dir", "coarselat-out")),
            sweep_axis=data.get("sweep_axis"),
            base_command=data.get("base_command"),
            threads=max(1, threads),
            n=int(data.get("n", 2)),
            M0=int(data.get("M0", 512)),
            delta=float(data.get("delta", 0.0)),
            samples=data.get("samples"),
            t_list=tuple(float(v) for v in data.get("t_list", (0.5, 1.0, 5.0))),
            input_dir=data.get("input"),
            raw=data,
        )
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if self.window_size < 1 or self.M0 < 1:
            raise ConfigError("window sizes must be positive")
        if self.n < 0:
            raise ConfigError("n must be nonnegative")
        if self.command in ("forward", "backward") and not self.t_end > 0:
            raise ConfigError("t_end must be positive")
        if self.command in ("forward", "backward"):
            _initial_configuration(self)
        if self.command == "kernel" and (not self.t_list or min(self.t_list) <= 0):
            raise ConfigError("t_list must hold positive times")
        if self.command == "analyze":
            if not self.input_dir or not os.path.isfile(os.path.join(self.input_dir, "trajectory.csv")):
                raise ConfigError("analyze needs 'input' pointing at a run directory")
        if self.command == "sweep":
            ax = self.sweep_axis
            if not isinstance(ax, dict) or "name" not in ax or "values" not in ax:
                raise ConfigError("sweep needs sweep_axis = {name, values}")
            if ax["name"] not in SWEEPABLE:
                raise ConfigError(f"cannot sweep {ax['name']!r}")
            if not ax["values"]:
                raise ConfigError("sweep_axis.values is empty")
            if self.base_command not in COMMANDS or self.base_command == "sweep":
                raise ConfigError("sweep needs a base_command other than sweep")


@dataclass
class RunManifest:
    config: dict
    params: dict
    files: list
    fits: list
    wall_clock: float
    stats: dict
    checks: dict
    exit_code: int

    def to_dict(self) -> dict:
        return {
            "csv_schema_version": CSV_SCHEMA_VERSION,
            "config": self.config,
            "resolved_params": self.params,
            "files": self.files,
            "fits": self.fits,
            "wall_clock_seconds": self.wall_clock,
            "integrator": self.stats,
            "checks": self.checks,
            "exit_code": self.exit_code,
        }


def _initial_configuration(cfg: RunConfig) -> Configuration:
    desc = cfg.initial_data
    M = cfg.window_size
    if not isinstance(desc, dict) or "kind" not in desc:
        raise ConfigError("initial_data must be an object with a 'kind'")
    kind = desc["kind"]
    try:
        if kind == "constant":
            return Configuration.constant(float(desc["value"]), M)
        if kind == "periodic":
            return Configuration.periodic(desc["pattern"], M)
        if kind == "random":
            if "seed" not in desc:
                raise ConfigError("random initial data needs a seed")
            rng = np.random.default_rng(int(desc["seed"]))
            return Configuration(rng.uniform(float(desc.get("low", 0.5)), float(desc.get("high", 1.0)), M))
        if kind == "delta":
            m = np.zeros(M)
            m[int(desc.get("site", 0)) % M] = float(desc.get("mass", 1.0))
            return Configuration(m)
        if kind == "file":
            path = desc["path"]
            if not os.path.isfile(path):
                raise ConfigError(f"initial data file {path!r} does not exist")
            with open(path) as fh:
                return Configuration.from_json(fh.read())
    except (KeyError, DomainError) as exc:
        raise ConfigError(f"bad initial_data: {exc}") from exc
    raise ConfigError(f"unknown initial_data kind {kind!r}")


def _policy(cfg: RunConfig, t_end: float) -> IntegratorPolicy:
    if cfg.samples:
        grid = np.linspace(0.0, t_end, int(cfg.samples) + 1)[1:]
        return IntegratorPolicy(sample_times=tuple(grid))
    return IntegratorPolicy()


def _mass_check(traj) -> dict:
    tm = traj.total_mass()
    rel = float(np.max(np.abs(tm - tm[0])) / max(tm[0], 1e-300))
    return {"passed": rel <= 1e-9, "value": rel, "bound": 1e-9}


def _run_forward(cfg, out):
    x0 = _initial_configuration(cfg)
    traj = integrate_forward(x0, cfg.params, cfg.t_end, _policy(cfg, cfg.t_end))
    files = _write_traj(traj, out)
    return files, [], traj.stats, {"mass_conservation": _mass_check(traj)}


def _run_backward(cfg, out):
    u0 = _initial_configuration(cfg)
    traj = integrate_backward(u0, cfg.params, cfg.t_end, cfg.delta, _policy(cfg, cfg.t_end))
    files = _write_traj(traj, out)
    viol = comparison_violation(traj)
    scale = float(np.max(traj.masses[0]))
    checks = {
        "mass_conservation": _mass_check(traj),
        "comparison": {"passed": viol <= 10 * cfg.params.ode_tol * scale, "value": viol},
    }
    return files, [], traj.stats, checks


def _write_traj(traj, out):
    p1, p2 = os.path.join(out, "trajectory.csv"), os.path.join(out, "events.csv")
    traj.to_csv(p1)
    traj.events_to_csv(p2)
    return [p1, p2]


def approximant_rate_fit(ap):
    """Living-mean growth fit: over the scheduled times when there are at
    least 5 of them, otherwise over every recorded time up to ``T_n``."""
    sched = ap.schedule
    beta = ap.params.beta
    mode = "exponential" if beta == 1 else "power"
    origin = 0.0 if beta == 1 else sched.origin()
    if sched.n >= 4:
        t = sched.t_events
        v = ap.living_means()
    else:
        t = ap.forward_times()
        t = t[t <= sched.T_n]
        v = np.array([living_mean(Configuration(ap.masses_at(float(s)))) for s in t])
    return fit_rate(t, v, mode, origin=origin)


def _run_construct(cfg, out):
    seed = int(cfg.raw.get("seed", 0))
    ap = build_approximant(cfg.params, cfg.n, M0=cfg.M0, seed=seed)
    files = ap.export(out)
    theta, n = cfg.params.theta, cfg.n
    te = ap.schedule.t_events
    checks = {}
    x = ap.masses_at(ap.schedule.T_n)
    dev = float(np.max(np.abs(x[x > 0] / theta**n - 1)))
    checks["terminal_value"] = {"passed": dev <= 1e-6, "value": dev}
    sup_ok, low_ok = True, True
    for j in range(1, n + 1):
        sup_ok &= ap.sup_norm(te[j - 1], te[j]) <= theta**j * (1 + 1e-6)
        xj = ap.masses_at(float(te[j]))
        low_ok &= float(xj[xj > 0].min()) >= 0.5 * theta**j * (1 - 1e-6)
    checks["sup_bound"] = {"passed": bool(sup_ok)}
    checks["alive_floor"] = {"passed": bool(low_ok)}
    fits = []
    if n >= 1:
        try:
            fits.append(approximant_rate_fit(ap).to_dict())
        except (ValueError, DomainError) as exc:
            fits.append({"kind": "rate", "error": str(exc)})
    stats = dict(ap.stats)
    stats["schedule"] = ap.schedule.to_dict()
    return files, fits, stats, checks


def _run_kernel(cfg, out):
    profiles = [kernel_profile(t) for t in cfg.t_list]
    path = os.path.join(out, "kernel.csv")
    write_kernel_csv(profiles, path)
    worst = max(abs(p.total_mass() - 1.0) for p in profiles)
    aronson, nash = kernel_estimates(profiles)
    checks = {"normalization": {"passed": worst <= 1e-9, "value": worst}}
    return [path], [aronson.to_dict(), nash.to_dict()], {}, checks


def _run_analyze(cfg, out):
    src = cfg.input_dir
    ev = os.path.join(src, "events.csv")
    traj = read_trajectory_csv(os.path.join(src, "trajectory.csv"), ev if os.path.isfile(ev) else None)
    fits = [holder_fit(traj, cfg.params.beta).to_dict()]
    means = np.array([living_mean(Configuration(m)) for m in traj.masses if np.any(m > 0)])
    times = traj.times[: means.size]
    pos = times > 0
    if np.count_nonzero(pos) >= 5:
        mode = "exponential" if cfg.params.beta == 1 else "power"
        fits.append(fit_rate(times[pos], means[pos], mode).to_dict())
    checks = {"mass_conservation": _mass_check(traj)}
    return [], fits, {}, checks


_RUNNERS = {
    "forward": _run_forward,
    "backward": _run_backward,
    "construct": _run_construct,
    "kernel": _run_kernel,
    "analyze": _run_analyze,
}


def run(cfg: RunConfig) -> RunManifest:
    """Execute one non-sweep command and write its artifacts."""
    if cfg.command == "sweep":
        raise ConfigError("use sweep() for sweep configs")
    out = cfg.output_dir
    os.makedirs(out, exist_ok=True)
    start = time.perf_counter()
    files, fits, stats, checks = _RUNNERS[cfg.command](cfg, out)
    if fits:
        fp = os.path.join(out, "fits.json")
        with open(fp, "w") as fh:
            json.dump(fits, fh, indent=1, sort_keys=True)
        files.append(fp)
    ok = all(c.get("passed", True) for c in checks.values())
    manifest = RunManifest(
        config=cfg.raw,
        params=cfg.params.to_dict(),
        files=[os.path.basename(f) for f in files],
        fits=fits,
        wall_clock=time.perf_counter() - start,
        stats=_jsonable(stats),
        checks=_jsonable(checks),
        exit_code=EXIT_OK if ok else EXIT_INVARIANT,
    )
    with open(os.path.join(out, "manifest.json"), "w") as fh:
        json.dump(manifest.to_dict(), fh, indent=1, sort_keys=True)
    return manifest


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    return obj


def _sweep_task(args):
    data, out = args
    try:
        cfg = RunConfig.from_dict(data, output=out)
        m = run(cfg)
        return {"exit_code": m.exit_code, "fits": m.fits, "output_dir": out}
    except ConfigError as exc:
        return {"exit_code": EXIT_CONFIG, "error": str(exc), "output_dir": out}
    except (NumericalError, FloatingPointError) as exc:
        return {"exit_code": EXIT_NUMERIC, "error": str(exc), "output_dir": out}


def sweep(cfg: RunConfig) -> list:
    """One independent sub-run per axis value, run in worker processes.

    Writes ``summary.json`` with the per-value outcome; returns the list of
    per-value records in axis order.
    """
    name, values = cfg.sweep_axis["name"], list(cfg.sweep_axis["values"])
    tasks = []
    for v in values:
        data = json.loads(json.dumps(cfg.raw))
        data["command"] = cfg.base_command
        data.pop("sweep_axis", None)
        data.pop("base_command", None)
        if name in ("beta", "epsilon", "ode_tol", "mass_tol"):
            data.setdefault("params", {})[name] = v
        else:
            data[name] = v
        tasks.append((data, os.path.join(cfg.output_dir, f"{name}={v}")))
    os.makedirs(cfg.output_dir, exist_ok=True)
    if cfg.threads == 1:
        results = [_sweep_task(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=cfg.threads) as pool:
            results = list(pool.map(_sweep_task, tasks))
    records = [{"value": v, **r} for v, r in zip(values, results)]
    with open(os.path.join(cfg.output_dir, "summary.json"), "w") as fh:
        json.dump({"axis": name, "runs": _jsonable(records)}, fh, indent=1, sort_keys=True)
    return records


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="coarselat", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, help="JSON run configuration")
    parser.add_argument("--output", help="output directory (overrides the config)")
    parser.add_argument("--seed", type=int, help="seed for random initial data and probes")
    parser.add_argument("-v", "--verbose", action="store_true")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        with open(args.config) as fh:
            data = json.load(fh)
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        data["command"] = args.command
        cfg = RunConfig.from_dict(data, output=args.output, seed=args.seed)
    except (OSError, json.JSONDecodeError, ConfigError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if cfg.command == "sweep":
            records = sweep(cfg)
            codes = [r["exit_code"] for r in records]
            for r in records:
                log.info("%s: exit %s", r["value"], r["exit_code"])
            return max(codes)
        manifest = run(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    for name, chk in manifest.checks.items():
        if not chk.get("passed", True):
            print(f"invariant check failed: {name} {chk}", file=sys.stderr)
    return manifest.exit_code


if __name__ == "__main__":
    sys.exit(main())
