"""Command-line entry point.

::

    rieszlab build       --manifold "kind=cycle n=4" --out DIR
    rieszlab riesz-norm  --config run.ini --seed 0 --out DIR
    rieszlab experiment  heat --config run.ini --seed 0 --out DIR --threads 2

Configs are INI files with ``[run]``, ``[manifold]``, ``[estimator]`` and
``[grids]`` sections. Every run writes the resolved config back as
``run.ini`` next to its outputs, so a run can be repeated exactly.
"""
from __future__ import annotations

import argparse
import configparser
import io
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import experiments as ex
from .errors import (DataError, InternalError, InvalidArgument, OutOfRange, ResourceLimit,
                     SurgeryFailure)
from .formats import dumps_estimates, dumps_field, estimate_row, read_graph, write_graph
from .graph import (GluedManifold, as_manifold, build_cycle, build_cylinder, build_path,
                    build_torus)
from .norms import hilbert_reference, riesz_norm
from .settings import threads as thread_limit
from .spectral import SIZE_CAP, decompose

EXIT_PASS, EXIT_FAIL, EXIT_INCONCLUSIVE = 0, 2, 3
EXIT_USAGE, EXIT_DATA, EXIT_RESOURCE, EXIT_INTERNAL = 64, 65, 69, 70

EXPERIMENTS = ("cylinder", "rescale", "localize", "heat", "sigma-bounds", "dichotomy")
COMMANDS = ("build", "riesz-norm", "experiment")

# manifold defaults per experiment, used when the config has no [manifold] section
_DEFAULT_MANIFOLD = {
    "cylinder": {"kind": "cycle", "n": "16"},
    "rescale": {"kind": "cycle", "n": "16", "axis_steps": "64"},
    "localize": {"kind": "glued", "pieces": "16,16", "backbone_n": "16", "axis_steps": "32"},
    "heat": {"kind": "glued", "pieces": "16,16", "backbone_n": "16", "axis_steps": "32"},
    "sigma-bounds": {"kind": "cylinder", "base": "cycle", "n": "16", "axis_steps": "16"},
    "dichotomy": {"kind": "glued", "pieces": "8,16,32", "backbone_n": "8", "axis_steps": "16"},
}


class UsageError(Exception):
    pass


def _floats(s) -> tuple:
    return tuple(float(x) for x in str(s).replace(";", ",").split(",") if x.strip())


def _ints(s) -> tuple:
    return tuple(int(x) for x in str(s).replace(";", ",").split(",") if x.strip())


def _fmt_list(xs) -> str:
    return ", ".join(repr(float(x)) if isinstance(x, float) else str(x) for x in xs)


@dataclass
class RunConfig:
    """Everything that determines a run."""

    command: str = "experiment"
    experiment: str = ""
    manifold: dict = field(default_factory=dict)
    p: tuple = ()
    s_grid: tuple = ()
    lambda_grid: tuple = ()
    sigma_grid: tuple = ()
    sigma: float = 4.0
    restarts: int = 32
    max_iter: int = 500
    size_cap: int = SIZE_CAP
    mc_samples: int = 100_000
    seed: Optional[int] = None
    out: str = "."
    threads: int = 1

    # serialization -------------------------------------------------------------

    def to_ini(self) -> str:
        cp = configparser.ConfigParser(interpolation=None)
        cp["run"] = {"command": self.command, "experiment": self.experiment,
                     "seed": "" if self.seed is None else str(self.seed), "out": self.out,
                     "threads": str(self.threads)}
        cp["manifold"] = {k: str(v) for k, v in sorted(self.manifold.items())}
        cp["estimator"] = {"p": _fmt_list(self.p), "restarts": str(self.restarts),
                           "max_iter": str(self.max_iter), "size_cap": str(self.size_cap)}
        cp["grids"] = {"s": _fmt_list(self.s_grid), "lambda": _fmt_list(self.lambda_grid),
                       "sigma": _fmt_list(self.sigma_grid), "heat_sigma": repr(float(self.sigma)),
                       "mc_samples": str(self.mc_samples)}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    @classmethod
    def from_ini(cls, text: str) -> "RunConfig":
        cp = configparser.ConfigParser(interpolation=None)
        try:
            cp.read_string(text)
        except configparser.Error as exc:
            raise UsageError(f"bad config: {exc}") from exc
        cfg = cls()
        try:
            run = cp["run"] if cp.has_section("run") else {}
            est = cp["estimator"] if cp.has_section("estimator") else {}
            grids = cp["grids"] if cp.has_section("grids") else {}
            cfg.command = run.get("command", cfg.command)
            cfg.experiment = run.get("experiment", cfg.experiment)
            seed = run.get("seed", "").strip()
            cfg.seed = int(seed) if seed else None
            cfg.out = run.get("out", cfg.out)
            cfg.threads = int(run.get("threads", cfg.threads))
            if cp.has_section("manifold"):
                cfg.manifold = dict(cp["manifold"])
            cfg.p = _floats(est.get("p", ""))
            cfg.restarts = int(est.get("restarts", cfg.restarts))
            cfg.max_iter = int(est.get("max_iter", cfg.max_iter))
            cfg.size_cap = int(est.get("size_cap", cfg.size_cap))
            cfg.s_grid = _ints(grids.get("s", ""))
            cfg.lambda_grid = _floats(grids.get("lambda", ""))
            cfg.sigma_grid = _floats(grids.get("sigma", ""))
            cfg.sigma = float(grids.get("heat_sigma", cfg.sigma))
            cfg.mc_samples = int(grids.get("mc_samples", cfg.mc_samples))
        except ValueError as exc:
            raise UsageError(f"bad config value: {exc}") from exc
        return cfg


def parse_manifold_spec(text: str) -> dict:
    """``"kind=cycle n=16"`` -> ``{"kind": "cycle", "n": "16"}``."""
    out = {}
    for tok in text.split():
        k, sep, v = tok.partition("=")
        if not sep:
            raise UsageError(f"manifold spec token {tok!r} is not key=value")
        out[k] = v
    return out


# construction ----------------------------------------------------------------------

def _base(spec: dict, kind: str):
    if kind == "cycle":
        c = spec.get("circumference")
        return build_cycle(int(spec["n"]), float(c) if c else None)
    if kind == "path":
        return build_path(int(spec["n"]), float(spec.get("spacing", 1.0)))
    if kind == "torus":
        side = spec.get("side")
        return build_torus(int(spec.get("d", 2)), int(spec["n"]), float(side) if side else None)
    raise UsageError(f"unknown manifold kind {kind!r}")


def build_manifold(spec: dict):
    """Construct a graph, cylinder or glued manifold from a spec dict."""
    try:
        kind = spec.get("kind", "")
        if kind == "file":
            try:
                return read_graph(spec["path"])
            except OSError as exc:
                raise DataError(f"cannot read graph file: {exc}") from exc
        if kind == "cylinder":
            return build_cylinder(_base(spec, spec.get("base", "cycle")), int(spec["axis_steps"]),
                                  float(spec.get("spacing", 1.0)),
                                  spec.get("axis_boundary", "periodic"))
        if kind == "glued":
            return ex.pilot_glued(_ints(spec.get("pieces", "16,16")), int(spec.get("backbone_n", 16)),
                                  int(spec.get("axis_steps", 32)), float(spec.get("spacing", 1.0)),
                                  int(spec.get("cut", 2)), int(spec.get("d", 1)))
        return _base(spec, kind)
    except KeyError as exc:
        raise UsageError(f"manifold spec is missing {exc}") from exc
    except (TypeError, ValueError) as exc:
        if isinstance(exc, (InvalidArgument, DataError)):
            raise
        raise UsageError(f"bad manifold spec: {exc}") from exc


# commands ------------------------------------------------------------------------

def _write_config(cfg: RunConfig, out: Path):
    (out / "run.ini").write_text(cfg.to_ini())


def cmd_build(cfg: RunConfig, stdout=sys.stdout) -> int:
    obj = build_manifold(cfg.manifold)
    M = as_manifold(obj)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    name = (M.name or "graph").replace(" ", "_")
    write_graph(obj, out / f"{name}.graph")
    D = decompose(M, size_cap=cfg.size_cap)
    line = f"vertices {M.n_vertices} edges {M.n_edges} gap {D.gap:.12g}"
    if isinstance(obj, GluedManifold):
        line += f" embeddings {len(obj.embeddings)}"
    print(line, file=stdout)
    _write_config(cfg, out)
    return EXIT_PASS


def cmd_riesz_norm(cfg: RunConfig, stdout=sys.stdout) -> int:
    obj = build_manifold(cfg.manifold)
    M = as_manifold(obj)
    D = decompose(M, size_cap=cfg.size_cap)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    host_id = (M.name or "graph").replace(" ", "_")
    rows, ok = [], True
    for p in cfg.p or (2.0,):
        est = riesz_norm(M, p, restarts=cfg.restarts, seed=cfg.seed, decomposition=D,
                         max_iter=cfg.max_iter)
        wfile = f"witness_p{p:g}.txt"
        (out / wfile).write_text(dumps_field(est.witness))
        rows.append(estimate_row(host_id, est, wfile))
        if p == 2.0 and abs(est.value - 1.0) > 1e-6:
            ok = False
        ref = hilbert_reference(p)
        print(f"{host_id} p={p:g} value={est.value:.12g} reference={ref:.12g} "
              f"converged={int(est.converged)}", file=stdout)
    (out / "estimates.csv").write_text(dumps_estimates(rows))
    verdict = ex.PASS if ok else ex.FAIL
    (out / "riesz-norm.verdict").write_text(f"riesz-norm {verdict}\n")
    _write_config(cfg, out)
    return EXIT_PASS if ok else EXIT_FAIL


def _run_experiment(cfg: RunConfig, obj) -> list:
    name = cfg.experiment
    ps = cfg.p or (3.0,)
    if name == "cylinder":
        return [ex.exp_cylinder_lemma(as_manifold(obj), p, axis_steps=int(cfg.manifold.get("axis_steps", 8)),
                                      seed=cfg.seed, restarts=cfg.restarts) for p in ps]
    if name == "rescale":
        kw = {"lambda_grid": cfg.lambda_grid} if cfg.lambda_grid else {}
        return [ex.exp_rescaling(as_manifold(obj), p=p, axis_steps=int(cfg.manifold.get("axis_steps", 64)),
                                 **kw) for p in ps]
    if name in ("localize", "heat"):
        if not isinstance(obj, GluedManifold):
            raise UsageError(f"{name} needs a glued manifold")
        s = cfg.s_grid or None
        if name == "localize":
            return [ex.exp_localization(obj, 0, p=p, s_grid=s, seed=cfg.seed) for p in ps]
        return [ex.exp_heat_convergence(obj, 0, sigma=cfg.sigma, s_grid=s, mc_samples=cfg.mc_samples,
                                        seed=cfg.seed)]
    if name == "sigma-bounds":
        kw = {"sigma_grid": np.asarray(cfg.sigma_grid)} if cfg.sigma_grid else {}
        return [ex.exp_sigma_bounds(obj, seed=cfg.seed, **kw)]
    if name == "dichotomy":
        m = cfg.manifold
        if m.get("kind") != "glued":
            raise UsageError("dichotomy needs kind=glued with a pieces list")
        bases = [build_cycle(n) for n in _ints(m.get("pieces", "8,16,32"))]
        return [ex.exp_dichotomy(bases, p=p, axis_steps=int(m.get("axis_steps", 16)), seed=cfg.seed,
                                 restarts=cfg.restarts,
                                 backbone_n=int(m.get("backbone_n", 8))) for p in ps]
    raise UsageError(f"unknown experiment {name!r}; choose from {', '.join(EXPERIMENTS)}")


def cmd_experiment(cfg: RunConfig, stdout=sys.stdout) -> int:
    if cfg.experiment not in EXPERIMENTS:
        raise UsageError(f"unknown experiment {cfg.experiment!r}; choose from {', '.join(EXPERIMENTS)}")
    if not cfg.manifold:
        cfg = replace(cfg, manifold=dict(_DEFAULT_MANIFOLD[cfg.experiment]))
    obj = None if cfg.experiment == "dichotomy" else build_manifold(cfg.manifold)
    reports = _run_experiment(cfg, obj)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    verdicts = []
    for rep in reports:
        stem = cfg.experiment
        if len(reports) > 1 or cfg.p:
            stem += f"-p{rep.params.get('p', 0):g}" if "p" in rep.params else ""
        rep.write(out, stem)
        print(rep.verdict_line(), end="", file=stdout)
        verdicts.append(rep.verdict)
    _write_config(cfg, out)
    if ex.FAIL in verdicts:
        return EXIT_FAIL
    if ex.INCONCLUSIVE in verdicts:
        return EXIT_INCONCLUSIVE
    return EXIT_PASS


# argument handling -----------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def make_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="rieszlab", description="Riesz-transform norm estimation on weighted graphs.")
    sub = ap.add_subparsers(dest="command", parser_class=_Parser)

    def common(p):
        p.add_argument("--config", help="INI config file")
        p.add_argument("--seed", type=int, help="random seed (overrides the config)")
        p.add_argument("--out", help="output directory")
        p.add_argument("--threads", type=int, help="worker threads for BLAS and walk sampling")
        p.add_argument("--manifold", help='inline manifold spec, e.g. "kind=torus d=2 n=8"')
        p.add_argument("--p", help="comma-separated exponents")

    common(sub.add_parser("build", help="construct a graph and write its interchange file"))
    common(sub.add_parser("riesz-norm", help="estimate Riesz-transform norms"))
    e = sub.add_parser("experiment", help="run a scripted experiment")
    e.add_argument("id", help=" | ".join(EXPERIMENTS))
    common(e)
    return ap


def resolve_config(args) -> RunConfig:
    if args.config:
        try:
            text = Path(args.config).read_text()
        except OSError as exc:
            raise UsageError(f"cannot read config: {exc}") from exc
        cfg = RunConfig.from_ini(text)
    else:
        cfg = RunConfig()
    cfg.command = args.command
    if args.command == "experiment":
        cfg.experiment = args.id
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out:
        cfg.out = args.out
    if args.threads is not None:
        cfg.threads = args.threads
    if args.manifold:
        cfg.manifold = parse_manifold_spec(args.manifold)
    if args.p:
        try:
            cfg.p = _floats(args.p)
        except ValueError as exc:
            raise UsageError(f"bad --p: {exc}") from exc
    if cfg.threads < 1:
        raise UsageError("--threads must be positive")
    if cfg.command != "build" and cfg.seed is None:
        raise UsageError("a seed is required (--seed or [run] seed)")
    if cfg.command in ("build", "riesz-norm") and not cfg.manifold:
        raise UsageError("a manifold is required ([manifold] section or --manifold)")
    return cfg


def run(argv=None, stdout=sys.stdout, stderr=sys.stderr) -> int:
    try:
        args = make_parser().parse_args(argv)
        if args.command is None:
            raise UsageError(f"a command is required: {', '.join(COMMANDS)}")
        cfg = resolve_config(args)
        handler = {"build": cmd_build, "riesz-norm": cmd_riesz_norm, "experiment": cmd_experiment}
        with thread_limit(cfg.threads):
            return handler[cfg.command](cfg, stdout=stdout)
    except (UsageError, InvalidArgument, OutOfRange) as exc:
        print(f"rieszlab: usage error: {exc}", file=stderr)
        return EXIT_USAGE
    except (DataError, SurgeryFailure) as exc:
        print(f"rieszlab: data error: {exc}", file=stderr)
        return EXIT_DATA
    except ResourceLimit as exc:
        print(f"rieszlab: resource limit: {exc}", file=stderr)
        return EXIT_RESOURCE
    except (InternalError, Exception) as exc:  # noqa: BLE001 - last-resort mapping
        print(f"rieszlab: internal error: {type(exc).__name__}: {exc}", file=stderr)
        return EXIT_INTERNAL


def main(argv=None) -> None:
    sys.exit(run(argv))
