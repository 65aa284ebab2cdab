"""Command-line entry point.

    switchflow SUBCOMMAND --config PATH [--seed N] [--out DIR] [--jobs N] [--format csv|jsonl]

Exit status: 0 on success, 1 for invalid input (config, expressions, model
assumptions, bad flags), 2 when numerical integration or field evaluation
fails at run time.
"""
from __future__ import annotations

import argparse
import hashlib
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Callable

import numpy as np

from . import __version__
from .config import (ConfigError, RunConfig, _float, _get, _int, _positive, box_of,
                     config_from_text, points_of, vector)
from .density import (endpoint_histogram, occupation_histogram, reference_histogram,
                      tv_distance)
from .expr import EvaluationError, ParseError
from .flow import IntegrationError
from .formats import dumps, write_table
from .lie import check_condition_A, check_condition_B
from .pdmp import ModelError, sample_endpoints, sample_path, sample_resolvents
from .reach import AnyTime, FixedTime, approachable_distance, sample_reachable
from .rng import make_rng, rng_identifier

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2
COMMANDS = ("check", "simulate", "density", "reach", "resolvent", "validate")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit with status 2
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="switchflow",
                description="Randomly switched ODE systems: bracket conditions, simulation, "
                            "occupation densities and reachable sets.")
    p.add_argument("--version", action="version", version=f"switchflow {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    helps = {
        "check": "rank Conditions A and B at configured points",
        "simulate": "sample trajectories and jump-event logs",
        "density": "occupation histogram of long trajectories",
        "reach": "Monte Carlo reachable-set cloud and target distances",
        "resolvent": "resolvent (or fixed-time) endpoint samples",
        "validate": "parse and validate the config only",
    }
    for name in COMMANDS:
        sp = sub.add_parser(name, help=helps[name])
        sp.add_argument("--config", required=True, metavar="PATH")
        sp.add_argument("--seed", type=int, metavar="N", help="override the config seed")
        sp.add_argument("--out", metavar="DIR", help="output directory (default: [output].dir or .)")
        sp.add_argument("--jobs", type=int, default=1, metavar="N",
                        help="worker processes for multi-seed jobs")
        sp.add_argument("--format", choices=("csv", "jsonl"), help="table format (default csv)")
    return p


# ---------------------------------------------------------------- helpers

class _Run:
    """Per-invocation context: config, output directory, and the files written."""

    def __init__(self, args, cfg: RunConfig, text: str, argv: list[str]):
        self.args = args
        self.cfg = cfg
        self.text = text
        self.argv = argv
        out_sec = cfg.section("output")
        self.out = Path(args.out or out_sec.get("dir", "."))
        fmt = args.format or out_sec.get("format", "csv")
        if fmt not in ("csv", "jsonl"):
            raise ConfigError("output.format", "must be 'csv' or 'jsonl'")
        self.fmt = fmt
        self.outputs: list[str] = []
        self.extra: dict = {}
        self.seeds: list[int] = [cfg.seed]

    @property
    def ext(self) -> str:
        return self.fmt

    def open(self, name: str):
        self.out.mkdir(parents=True, exist_ok=True)
        self.outputs.append(name)
        return open(self.out / name, "w", encoding="utf-8", newline="")

    def write_metadata(self) -> None:
        outputs = {}
        for name in self.outputs:
            outputs[name] = hashlib.sha256((self.out / name).read_bytes()).hexdigest()
        meta = {
            "tool": "switchflow",
            "version": __version__,
            "command": self.args.command,
            "argv": self.argv,
            "config_path": self.cfg.source,
            "config_sha256": self.cfg.digest,
            "seed": self.cfg.seed,
            "seeds": self.seeds,
            "rng": rng_identifier(),
            "format": self.fmt,
            "outputs": outputs,
            **self.extra,
            "config_text": self.text,
        }
        self.out.mkdir(parents=True, exist_ok=True)
        (self.out / f"{self.args.command}.meta.json").write_text(dumps(meta) + "\n",
                                                                  encoding="utf-8")


def _start(cfg: RunConfig, sec: dict, path: str) -> tuple[np.ndarray, int]:
    n, k = cfg.system.dim, cfg.system.n_states
    xi = _get(sec, "initial_point", path, vector(n), default=np.zeros(n))
    i = _get(sec, "initial_state", path, _int, default=1,
             check=lambda v: None if 1 <= v <= k else f"must be in 1..{k}")
    return xi, i - 1


def _seeds(run: _Run) -> list[int]:
    if run.args.seed is not None:
        return [run.cfg.seed]
    sec = run.cfg.section("simulate")
    seeds = _get(sec, "seeds", "simulate", list, default=[run.cfg.seed],
                 check=lambda v: None if v else "need at least one seed")
    for j, s in enumerate(seeds):
        _get({"s": s}, "s", f"simulate.seeds[{j}]", _int,
             check=lambda v: None if v >= 0 else "must be nonnegative")
    return [int(s) for s in seeds]


def _box(cfg: RunConfig, sec: dict, path: str) -> np.ndarray:
    n = cfg.system.dim
    if cfg.manifold.is_torus:
        default = np.array([[0.0, 1.0]] * n)
    else:
        default = ...
    return _get(sec, "box", path, box_of(n), default=default)


def _map(jobs: int, fn: Callable, tasks: list) -> list:
    """Run ``fn`` over ``tasks`` in order, optionally across processes."""
    if jobs <= 1 or len(tasks) <= 1:
        return [fn(*t) for t in tasks]
    with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as pool:
        return list(pool.map(fn, *zip(*tasks)))


# Workers rebuild the configuration from its text: compiled fields are
# generated code and do not pickle.

def _path_worker(text: str, seed: int):
    cfg = config_from_text(text)
    sec = cfg.section("simulate")
    xi, i = _start(cfg, sec, "simulate")
    horizon = _get(sec, "horizon", "simulate", _float, check=_positive)
    dt = _get(sec, "sample_dt", "simulate", _float, default=0.01, check=_positive)
    return sample_path(cfg.system, xi, i, horizon, seed, dt, cfg.options)


def _density_worker(text: str, seed: int):
    cfg = config_from_text(text)
    traj = _path_worker(text, seed)
    sec = cfg.section("density")
    burn = _get(sec, "burn_in", "density", _float, default=None)
    return occupation_histogram([traj], _box(cfg, sec, "density"),
                                _get(sec, "bins", "density", default=20), burn_in=burn)


# ---------------------------------------------------------------- commands

def cmd_validate(run: _Run) -> None:
    sys_ = run.cfg.system
    print(f"{run.cfg.source}: valid ({sys_.manifold.kind}, n={sys_.dim}, "
          f"{sys_.n_states} states)")


def cmd_check(run: _Run) -> None:
    cfg = run.cfg
    sec = cfg.section("check")
    n = cfg.system.dim
    pts = []
    if "points" in sec:
        pts.extend(_get(sec, "points", "check", points_of(n)))
    n_random = _get(sec, "random_points", "check", _int, default=0,
                    check=lambda v: None if v >= 0 else "must be nonnegative")
    if n_random:
        default = np.array([[0.0, 1.0]] * n) if cfg.manifold.is_torus else ...
        box = _get(sec, "random_box", "check", box_of(n), default=default)
        rng = make_rng(cfg.seed)
        pts.extend(box[:, 0] + (box[:, 1] - box[:, 0]) * rng.random((n_random, n)))
    if not pts:
        raise ConfigError("check.points", "no points to check (give points or random_points)")
    depth = _get(sec, "depth_cap", "check", _int, default=4, check=_positive)
    tol = _get(sec, "tol", "check", _float, default=1e-9, check=_positive)
    cap = _get(sec, "max_elements", "check", _int, default=5000, check=_positive)
    records = []
    for x in pts:
        x = cfg.manifold.canonicalize(np.asarray(x, dtype=float))
        for check in (check_condition_A, check_condition_B):
            rep = check(cfg.fields, x, depth, tol, cap)
            print(rep.summary())
            records.append(rep.to_record())
    with run.open("check.jsonl") as fh:
        for rec in records:
            fh.write(dumps(rec) + "\n")
    run.extra["check"] = {"depth_cap": depth, "tol": tol, "max_elements": cap,
                          "n_points": len(pts)}


def cmd_simulate(run: _Run) -> None:
    run.seeds = _seeds(run)
    trajs = _map(run.args.jobs, _path_worker, [(run.text, s) for s in run.seeds])
    for seed, tr in zip(run.seeds, trajs):
        with run.open(f"trajectory_seed{seed}.{run.ext}") as fh:
            tr.write_csv(fh, run.fmt)
        with run.open(f"events_seed{seed}.jsonl") as fh:
            tr.write_events(fh)
        print(f"seed {seed}: {tr.n_jumps} jumps on [0, {tr.total_time:g}]")


def cmd_density(run: _Run) -> None:
    run.seeds = _seeds(run)
    hists = _map(run.args.jobs, _density_worker, [(run.text, s) for s in run.seeds])
    hist = hists[0]
    for h in hists[1:]:
        hist = hist + h
    with run.open(f"density.{run.ext}") as fh:
        hist.write_csv(fh, run.fmt)
    sim = run.cfg.section("simulate")
    meta = hist.metadata()
    meta["horizon"] = _get(sim, "horizon", "simulate", _float)
    meta["burn_in"] = _get(run.cfg.section("density"), "burn_in", "density", _float,
                           default=0.1 * meta["horizon"])
    meta["state_marginal"] = hist.state_marginal().tolist()
    if run.cfg.manifold.is_torus:
        ref = reference_histogram(hist, run.cfg.system.stationary_distribution())
        meta["tv_to_uniform_product"] = tv_distance(hist, ref)
        print(f"TV to uniform x stationary-state measure: {meta['tv_to_uniform_product']:.4g}")
    marg = ", ".join(f"{m:.4f}" for m in meta["state_marginal"])
    print(f"state marginal: {marg}; out-of-box fraction "
          f"{hist.out_of_box_weight / hist.total_weight:.4g}")
    run.extra["density"] = meta


def cmd_reach(run: _Run) -> None:
    cfg = run.cfg
    sec = cfg.section("reach")
    n = cfg.system.dim
    mode_name = _get(sec, "mode", "reach", str, default="any",
                     check=lambda v: None if v in ("fixed", "any") else "must be 'fixed' or 'any'")
    if mode_name == "fixed":
        mode = FixedTime(_get(sec, "time", "reach", _float, check=_positive))
    else:
        mode = AnyTime(_get(sec, "max_total", "reach", _float, check=_positive))
    n_samples = _get(sec, "n_samples", "reach", _int, default=1000, check=_positive)
    max_sw = _get(sec, "max_switches", "reach", _int, default=4, check=_positive)
    xi = _get(sec, "initial_point", "reach", vector(n), default=np.zeros(n))
    cloud = sample_reachable(cfg.fields, xi, mode, n_samples, max_sw, cfg.seed,
                             cfg.manifold, cfg.options)
    with run.open(f"reach.{run.ext}") as fh:
        cloud.write_csv(fh, run.fmt)
    with run.open("witnesses.jsonl") as fh:
        cloud.write_witnesses(fh)
    targets = _get(sec, "targets", "reach", points_of(n), default=np.zeros((0, n)))
    if len(targets):
        if not len(cloud):
            raise IntegrationError("every reachability sample failed to integrate")
        header = [f"target_x{j}" for j in range(1, n + 1)] + ["distance", "switches"]
        rows = []
        for tgt in targets:
            d, (states, _) = approachable_distance(cloud, tgt)
            rows.append([*tgt, d, len(states) - 1])
            print(f"target ({', '.join(f'{v:g}' for v in tgt)}): distance {d:.4g}")
        with run.open(f"targets.{run.ext}") as fh:
            write_table(fh, header, rows, run.fmt)
    print(f"{len(cloud)} reachable points ({cloud.skipped} skipped)")
    run.extra["reach"] = {"mode": mode_name, "n_samples": n_samples, "max_switches": max_sw,
                          "skipped": cloud.skipped}


def cmd_resolvent(run: _Run) -> None:
    cfg = run.cfg
    sec = cfg.section("resolvent")
    n = cfg.system.dim
    xi, i = _start(cfg, sec, "resolvent")
    n_samples = _get(sec, "n_samples", "resolvent", _int, default=10000, check=_positive)
    t = _get(sec, "time", "resolvent", _float, default=None)
    if t is None:
        pts, states = sample_resolvents(cfg.system, xi, i, n_samples, cfg.seed, cfg.options)
    else:
        if not t > 0:
            raise ConfigError("resolvent.time", "must be positive")
        pts, states = sample_endpoints(cfg.system, xi, i, t, n_samples, cfg.seed, cfg.options)
    header = [f"x{j}" for j in range(1, n + 1)] + ["state"]
    with run.open(f"resolvent.{run.ext}") as fh:
        write_table(fh, header, ([*p, s + 1] for p, s in zip(pts, states)), run.fmt)
    info = {"n_samples": n_samples, "time": t}
    if "box" in sec or cfg.manifold.is_torus:
        hist = endpoint_histogram(pts, states, _box(cfg, sec, "resolvent"),
                                  _get(sec, "bins", "resolvent", default=20),
                                  cfg.system.n_states, periodic=cfg.manifold.is_torus)
        with run.open(f"resolvent_hist.{run.ext}") as fh:
            hist.write_csv(fh, run.fmt)
        cells = int(np.prod(hist.bins))
        info["occupied_cells"] = hist.occupied_cells()
        info["cells"] = cells
        print(f"occupied cells: {hist.occupied_cells()} of {cells}")
    run.extra["resolvent"] = info


HANDLERS = {"check": cmd_check, "simulate": cmd_simulate, "density": cmd_density,
            "reach": cmd_reach, "resolvent": cmd_resolvent, "validate": cmd_validate}


def run(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
        if args.jobs < 1:
            raise UsageError("--jobs must be at least 1")
        if args.seed is not None and args.seed < 0:
            raise UsageError("--seed must be nonnegative")
        path = Path(args.config)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError("", f"cannot read config {path}: {exc.strerror}") from None
        with warnings.catch_warnings():
            warnings.simplefilter("always")
            cfg = config_from_text(text, str(path), args.seed)
        ctx = _Run(args, cfg, text, argv)
        HANDLERS[args.command](ctx)
        if args.command != "validate":
            ctx.write_metadata()
        return EXIT_OK
    except UsageError as exc:
        print(f"switchflow: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (IntegrationError, EvaluationError) as exc:
        print(f"switchflow: runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (ConfigError, ModelError, ParseError) as exc:
        print(f"switchflow: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (ValueError, OSError) as exc:
        print(f"switchflow: error: {exc}", file=sys.stderr)
        return EXIT_INVALID


def main() -> None:
    sys.exit(run())
