"""Command-line entry point: ``fracmin <command> [--config FILE] [options]``.

Every option can also be set in a YAML config file; flags win over file
values.  Exit codes: 0 success, 1 a check failed (``verify``), 2 bad
configuration, 3 I/O error, 4 solver failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
import warnings
from dataclasses import dataclass

import yaml

log = logging.getLogger("fracmin")

COMMANDS = ("minimize", "energy", "nmc", "barrier", "sweep", "critical", "depthfit", "verify")

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_IO, EXIT_SOLVER = 0, 1, 2, 3, 4


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    command: str
    # problem
    n: int = 2
    s: float | None = None
    M: float | None = None
    h: float | None = None
    pad: float = 1.0
    clamp_band: bool = True
    trunc_radius: float | None = None
    free_depth: float | None = None
    # sweep / critical
    M_values: list | None = None
    guard: float = 0.125
    trunc_cap: float | None = 4.0
    lo: float | None = None
    hi: float | None = None
    tol: float = 0.1
    # nmc
    shape: str = "slab_complement"
    q: list | None = None
    radius: float = 1.0
    # barrier
    eta: float | None = None
    variant: str = "F"
    samples: int = 21
    # verify
    instances: int = 50
    seed: int = 0
    # io
    out: str | None = None
    dump: str | None = None
    field_path: str | None = None
    rows_csv: str | None = None
    cache_dir: str | None = None
    threads: int = 1

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


_KEYS = {f.name: f for f in dataclasses.fields(RunConfig)}
_ALIASES = {"field": "field_path", "rows": "rows_csv", "clamp": "clamp_band", "trunc": "trunc_radius"}
_NEEDS_S = {"minimize", "nmc", "barrier", "sweep", "critical", "depthfit"}


def _key_lines(text: str) -> dict:
    """Line number (1-based) of every top-level key in a YAML mapping."""
    try:
        node = yaml.compose(text)
    except yaml.YAMLError:
        return {}
    if not isinstance(node, yaml.MappingNode):
        return {}
    return {k.value: k.start_mark.line + 1 for k, _ in node.value}


def _load_text(text: str) -> dict:
    try:
        data = yaml.safe_load(text) if text.strip() else {}
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"line {mark.line + 1}, column {mark.column + 1}: " if mark is not None else ""
        raise ConfigError(f"config parse error: {where}{getattr(exc, 'problem', exc)}") from None
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError("config parse error: top level must be a mapping")
    lines = _key_lines(text)
    out = {}
    for k, v in data.items():
        name = _ALIASES.get(str(k), str(k))
        if name not in _KEYS:
            line = lines.get(str(k))
            at = f" (line {line})" if line else ""
            raise ConfigError(f"unknown config key '{k}'{at}")
        out[name] = v
    return out


def _coerce(name: str, value):
    if value is None:
        return None
    f = _KEYS[name]
    kind = str(f.type)
    try:
        if kind.startswith("int"):
            if isinstance(value, float) and not value.is_integer():
                raise ValueError
            return int(value)
        if kind.startswith("float"):
            return float(value)
        if kind.startswith("bool"):
            if isinstance(value, str):
                if value.lower() in ("1", "true", "yes", "on"):
                    return True
                if value.lower() in ("0", "false", "no", "off"):
                    return False
                raise ValueError
            return bool(value)
        if kind.startswith("list"):
            if isinstance(value, str):
                value = [v for v in value.replace(",", " ").split()]
            return [float(v) for v in value]
        return str(value)
    except (TypeError, ValueError):
        raise ConfigError(f"field '{name}': cannot read {value!r} as {kind.split(' ')[0]}") from None


def parse_config(text: str = "", overrides: dict | None = None, command: str | None = None) -> RunConfig:
    """Merge YAML ``text`` with flag ``overrides`` (flags win) and validate."""
    values = _load_text(text)
    for k, v in (overrides or {}).items():
        name = _ALIASES.get(k, k)
        if name not in _KEYS:
            raise ConfigError(f"unknown config key '{k}'")
        if v is not None:
            values[name] = v
    if command is not None:
        values["command"] = command
    cmd = values.get("command")
    if cmd not in COMMANDS:
        raise ConfigError(f"field 'command': expected one of {', '.join(COMMANDS)}, got {cmd!r}")
    kw = {k: _coerce(k, v) for k, v in values.items() if k != "command"}
    cfg = RunConfig(command=cmd, **kw)
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig) -> None:
    if cfg.command in _NEEDS_S and (cfg.s is None or not 0.0 < cfg.s < 1.0):
        raise ConfigError("s required in (0,1)")
    if cfg.n not in (2, 3):
        raise ConfigError(f"field 'n': dimension must be 2 or 3, got {cfg.n}")
    if cfg.M is not None and not cfg.M > 0:
        raise ConfigError(f"field 'M': must be positive, got {cfg.M}")
    if cfg.h is not None and not cfg.h > 0:
        raise ConfigError(f"field 'h': must be positive, got {cfg.h}")
    if cfg.threads < 1:
        raise ConfigError("field 'threads': must be >= 1")
    need = {"minimize": ["M"], "barrier": ["eta", "M"], "critical": ["lo", "hi"], "energy": ["field_path"]}
    for name in need.get(cfg.command, []):
        if getattr(cfg, name) is None:
            raise ConfigError(f"field '{name}' is required for '{cfg.command}'")
    if cfg.command == "sweep" and not cfg.M_values:
        raise ConfigError("field 'M_values' is required for 'sweep'")
    if cfg.command == "depthfit" and not (cfg.M_values or cfg.rows_csv):
        raise ConfigError("'depthfit' needs M_values or rows_csv")


# --- commands ----------------------------------------------------------------------

def _problem(cfg: RunConfig):
    from .geometry import make_problem
    from .experiments import resolution_for

    h = cfg.h if cfg.h is not None else resolution_for(cfg.M, cfg.s, cfg.guard)
    return make_problem(n=cfg.n, s=cfg.s, M=cfg.M, h=h, pad=cfg.pad, clamp_band=cfg.clamp_band,
                        trunc_radius=cfg.trunc_radius, free_depth=cfg.free_depth)


def _template(cfg: RunConfig):
    from .experiments import SweepTemplate

    fd = "auto" if cfg.free_depth is None else cfg.free_depth
    return SweepTemplate(n=cfg.n, s=cfg.s, pad=cfg.pad, clamp_band=cfg.clamp_band, h=cfg.h, guard=cfg.guard,
                         trunc_cap=cfg.trunc_cap, free_depth=fd, cache_dir=cfg.cache_dir)


def _emit(cfg: RunConfig, obj) -> None:
    from .io import write_json

    if cfg.out:
        write_json(cfg.out, obj)
    else:
        print(json.dumps(obj, indent=2, sort_keys=True))


def cmd_minimize(cfg):
    from .energy import fractional_perimeter
    from .experiments import classify_minimizer
    from .geometry import write_field
    from .kernel import build_kernel_table
    from .mincut import min_cut

    prob = _problem(cfg)
    table = build_kernel_table(prob, cache_dir=cfg.cache_dir)
    res = min_cut(prob, table)
    if cfg.dump:
        write_field(cfg.dump, res.labels)
    info = classify_minimizer(res.labels)
    _emit(cfg, {"problem": list(prob.key()), "energy": fractional_perimeter(res.labels, table).to_dict(),
                "flow_value": res.flow_value, "optimal": res.optimal, "degenerate": res.degenerate,
                "num_free": prob.num_free, "num_edges": res.num_edges, "seconds": res.seconds, **info})
    return EXIT_OK if res.optimal else EXIT_SOLVER


def cmd_energy(cfg):
    from .energy import fractional_perimeter
    from .geometry import read_field
    from .kernel import build_kernel_table

    fld = read_field(cfg.field_path)
    table = build_kernel_table(fld.problem, cache_dir=cfg.cache_dir)
    _emit(cfg, fractional_perimeter(fld, table).to_dict())
    return EXIT_OK


def _analytic_shape(cfg):
    from .shapes import Ball, HalfSpace, slab_complement

    n = cfg.n
    if cfg.shape == "halfspace":
        return HalfSpace(n - 1, 0.0, -1), [0.0] * n
    if cfg.shape == "ball":
        q = [0.0] * n
        q[-1] = cfg.radius
        return Ball(tuple([0.0] * n), cfg.radius), q
    if cfg.shape == "slab_complement":
        if cfg.M is None:
            raise ConfigError("field 'M' is required for shape slab_complement")
        q = [0.0] * n
        q[-1] = -cfg.M
        return slab_complement(n, cfg.M), q
    raise ConfigError(f"field 'shape': expected halfspace, ball, slab_complement or field, got {cfg.shape!r}")


def cmd_nmc(cfg):
    from .curvature import NmcQuery, nmc_analytic, nmc_grid
    from .geometry import read_field
    from .kernel import build_kernel_table

    if cfg.shape == "field":
        if not cfg.field_path or cfg.q is None:
            raise ConfigError("shape 'field' needs field_path and q")
        fld = read_field(cfg.field_path)
        table = build_kernel_table(fld.problem, cache_dir=cfg.cache_dir)
        val = nmc_grid(NmcQuery(tuple(cfg.q), fld), table)
        _emit(cfg, {"q": cfg.q, "value": val, "method": "grid"})
        return EXIT_OK
    shape, q = _analytic_shape(cfg)
    if cfg.q is not None:
        q = list(cfg.q)
    if len(q) != cfg.n:
        raise ConfigError(f"field 'q': expected {cfg.n} coordinates")
    res = nmc_analytic(NmcQuery(tuple(q), shape), cfg.s)
    _emit(cfg, {"q": q, "shape": cfg.shape, "value": res.value, "error": res.error, "method": "analytic"})
    return EXIT_OK


def cmd_barrier(cfg):
    from .curvature import BarrierSpec, barrier_nmc_bound

    rep = barrier_nmc_bound(BarrierSpec(eta=cfg.eta, M=cfg.M, s=cfg.s, n=cfg.n, variant=cfg.variant,
                                        samples=cfg.samples))
    _emit(cfg, rep.to_dict())
    return EXIT_OK


def cmd_sweep(cfg):
    from .experiments import rows_to_csv, sweep_M

    rows = sweep_M(sorted(cfg.M_values), _template(cfg), csv_path=cfg.out, n_jobs=cfg.threads)
    if not cfg.out:
        sys.stdout.write(rows_to_csv(rows))
    return EXIT_OK if all(r.regime != "Failed" for r in rows) else EXIT_SOLVER


def cmd_critical(cfg):
    from .experiments import locate_critical_M

    ci = locate_critical_M(cfg.lo, cfg.hi, cfg.tol, _template(cfg))
    _emit(cfg, ci.to_dict())
    return EXIT_OK if ci.ok else EXIT_SOLVER


def _read_rows(path):
    import csv

    from .experiments import SweepRow

    with open(path, newline="") as fh:
        out = []
        for rec in csv.DictReader(fh):
            out.append(SweepRow(M=float(rec["M"]), regime=rec["regime"], energy=float(rec["energy"]),
                                depth_center=float(rec["depth_center"]), depth_wall=float(rec["depth_wall"]),
                                component_count=int(rec["component_count"]), h=float(rec["h"]),
                                s=float(rec["s"]), n=int(rec["n"]), wall_clock=float(rec["wall_clock"])))
        return out


def cmd_depthfit(cfg):
    from .experiments import stickiness_depth_fit, sweep_M

    rows = _read_rows(cfg.rows_csv) if cfg.rows_csv else sweep_M(sorted(cfg.M_values), _template(cfg),
                                                                 n_jobs=cfg.threads)
    fit = stickiness_depth_fit(rows)
    _emit(cfg, fit.to_dict())
    return EXIT_SOLVER if fit.resolution_limited else EXIT_OK


def cmd_verify(cfg):
    from .verify import run_all

    rep = run_all(cfg.instances, cfg.seed)
    _emit(cfg, rep)
    return EXIT_OK if rep["passed"] else EXIT_CHECK


_DISPATCH = {"minimize": cmd_minimize, "energy": cmd_energy, "nmc": cmd_nmc, "barrier": cmd_barrier,
             "sweep": cmd_sweep, "critical": cmd_critical, "depthfit": cmd_depthfit, "verify": cmd_verify}


def run(cfg: RunConfig) -> int:
    if cfg.cache_dir is None:
        cfg.cache_dir = os.environ.get("FRACMIN_CACHE_DIR") or None
    try:
        import numba

        with warnings.catch_warnings():
            # numba complains about old TBB builds when picking a threading layer
            warnings.simplefilter("ignore")
            numba.set_num_threads(min(cfg.threads, numba.config.NUMBA_NUM_THREADS))
    except (ImportError, ValueError):
        pass
    try:
        return _DISPATCH[cfg.command](cfg)
    except ConfigError as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    except OSError as exc:
        log.error("I/O error: %s", exc)
        return EXIT_IO
    except (ValueError, OverflowError, RuntimeError) as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return EXIT_SOLVER


# --- argument parsing ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fracmin", description="Discrete s-minimal surfaces in a cylinder over a slab.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="YAML file with any of the options below")
    p.add_argument("-v", "--verbose", action="store_true")
    g = p.add_argument_group("problem")
    g.add_argument("--n", type=int)
    g.add_argument("--s", type=float)
    g.add_argument("--M", type=float)
    g.add_argument("--h", type=float)
    g.add_argument("--pad", type=float)
    g.add_argument("--clamp-band", dest="clamp_band", choices=["true", "false"])
    g.add_argument("--trunc-radius", dest="trunc_radius", type=float)
    g.add_argument("--free-depth", dest="free_depth", type=float)
    g = p.add_argument_group("sweeps")
    g.add_argument("--M-values", dest="M_values", type=float, nargs="+")
    g.add_argument("--guard", type=float)
    g.add_argument("--lo", type=float)
    g.add_argument("--hi", type=float)
    g.add_argument("--tol", type=float)
    g = p.add_argument_group("curvature")
    g.add_argument("--shape", choices=["halfspace", "ball", "slab_complement", "field"])
    g.add_argument("--q", type=float, nargs="+")
    g.add_argument("--radius", type=float)
    g.add_argument("--eta", type=float)
    g.add_argument("--variant", choices=["F", "G"])
    g.add_argument("--samples", type=int)
    g = p.add_argument_group("output")
    g.add_argument("--out")
    g.add_argument("--dump")
    g.add_argument("--field", dest="field_path")
    g.add_argument("--rows", dest="rows_csv")
    g.add_argument("--instances", type=int)
    g.add_argument("--seed", type=int)
    g.add_argument("--threads", type=int)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    over = {k: v for k, v in vars(args).items() if k not in ("command", "config", "verbose") and v is not None}
    text = ""
    if args.config:
        try:
            with open(args.config) as fh:
                text = fh.read()
        except OSError as exc:
            log.error("cannot read config: %s", exc)
            return EXIT_IO
    try:
        cfg = parse_config(text, over, command=args.command)
    except ConfigError as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
