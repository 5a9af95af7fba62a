"""Command line front end: fit, eval, verify, seminorm.

Config files are JSON::

    {
      "p": 2, "knots": [0, 1, 2], "n": 1, "K": 4, "grid_m": 16,
      "data": {"synthetic": {"seed": 0, "K_data": 2, "real": true}},
      "output": {"model": "model.json", "report": "fit_report.json"},
      "seed": 0,
      "tolerances": {"identity": 1e-7}
    }

``data`` is one of ``{"synthetic": {...}}``, ``{"csv": [path, ...]}`` (one
file per hyperplane, values row-major over the y grid) or
``{"bundle": path}`` (JSON with ``"slices"`` and optionally ``"imag"``).
Relative paths are resolved against the config file's directory.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import polyspline as ps
from .errors import DerivativeOrderTooHigh, SolverError, TransfiniteError
from .spline1d import KnotSet
from .suites import DEFAULT_TOLERANCES, SUITES, run_suites

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_DATA, EXIT_SOLVER = 0, 1, 2, 3, 4


class ConfigError(Exception):
    pass


class DataError(Exception):
    pass


_CONFIG_KEYS = {"p", "knots", "n", "K", "grid_m", "data", "output", "seed", "tolerances", "verify"}


@dataclass
class RunConfig:
    p: int
    knots: list
    n: int = 1
    K: int = 4
    grid_m: int = 16
    data: dict = field(default_factory=lambda: {"synthetic": {"seed": 0}})
    output: dict = field(default_factory=dict)
    seed: int = 0
    tolerances: dict = field(default_factory=dict)
    verify: dict = field(default_factory=dict)
    base_dir: Path = field(default=Path("."), compare=False, repr=False)

    @classmethod
    def from_dict(cls, d, base_dir=Path(".")):
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        unknown = set(d) - _CONFIG_KEYS
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        for key in ("p", "knots"):
            if key not in d:
                raise ConfigError(f"config is missing '{key}'")
        try:
            cfg = cls(
                p=int(d["p"]), knots=[float(v) for v in d["knots"]], n=int(d.get("n", 1)),
                K=int(d.get("K", 4)), grid_m=int(d.get("grid_m", 16)),
                data=dict(d.get("data", {"synthetic": {"seed": 0}})),
                output=dict(d.get("output", {})), seed=int(d.get("seed", 0)),
                tolerances={k: float(v) for k, v in d.get("tolerances", {}).items()},
                verify=dict(d.get("verify", {})), base_dir=Path(base_dir),
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad config value: {exc}") from exc
        bad = [k for k in cfg.tolerances if k not in DEFAULT_TOLERANCES]
        if bad:
            raise ConfigError(f"unknown tolerance names: {bad}")
        if any(v <= 0 for v in cfg.tolerances.values()):
            raise ConfigError("tolerances must be positive")
        if len(cfg.data) != 1 or next(iter(cfg.data)) not in ("synthetic", "csv", "bundle"):
            raise ConfigError("data must have exactly one of 'synthetic', 'csv', 'bundle'")
        cfg.poly_config()
        return cfg

    @classmethod
    def load(cls, path):
        path = Path(path)
        try:
            d = json.loads(path.read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        return cls.from_dict(d, path.parent)

    def to_dict(self):
        return {"p": self.p, "knots": self.knots, "n": self.n, "K": self.K, "grid_m": self.grid_m,
                "data": self.data, "output": self.output, "seed": self.seed,
                "tolerances": self.tolerances, "verify": self.verify}

    def canonical_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def poly_config(self):
        try:
            return ps.PolyConfig(self.p, KnotSet(self.knots), self.n, self.K, self.grid_m)
        except (TransfiniteError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    def resolve(self, p):
        p = Path(p)
        return p if p.is_absolute() else self.base_dir / p


def load_data(rc: RunConfig, cfg: ps.PolyConfig) -> ps.HyperplaneData:
    kind, spec = next(iter(rc.data.items()))
    shape = (len(cfg.knots),) + (cfg.grid_m,) * cfg.n
    if kind == "synthetic":
        spec = spec or {}
        return ps.band_limited_data(cfg, seed=int(spec.get("seed", rc.seed)), K_data=spec.get("K_data"),
                                    real=bool(spec.get("real", True)), decay=float(spec.get("decay", 1.0)))
    if kind == "csv":
        if len(spec) != len(cfg.knots):
            raise DataError(f"{len(spec)} CSV files for {len(cfg.knots)} hyperplanes")
        slices = []
        for path in spec:
            try:
                vals = np.loadtxt(rc.resolve(path), delimiter=",", ndmin=1).ravel()
            except (OSError, ValueError) as exc:
                raise DataError(f"cannot read {path}: {exc}") from exc
            if vals.size != cfg.grid_m**cfg.n:
                raise DataError(f"{path} has {vals.size} values, expected {cfg.grid_m ** cfg.n}")
            slices.append(vals.reshape(shape[1:]))
        return ps.HyperplaneData(np.array(slices), "sampled")
    try:
        bundle = json.loads(rc.resolve(spec).read_text())
        arr = np.array(bundle["slices"], dtype=float)
        if "imag" in bundle:
            arr = arr + 1j * np.array(bundle["imag"], dtype=float)
    except (OSError, KeyError, ValueError, TypeError) as exc:
        raise DataError(f"cannot read bundle {spec}: {exc}") from exc
    if arr.shape != shape:
        raise DataError(f"bundle has shape {arr.shape}, expected {shape}")
    try:
        return ps.HyperplaneData(arr, "sampled")
    except ValueError as exc:
        raise DataError(str(exc)) from exc


def atomic_write(path, text: str):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _xi_key(xi):
    return ",".join(str(v) for v in xi)


def _err(msg):
    print(f"error: {msg}", file=sys.stderr)


# ---------------------------------------------------------------------------


def cmd_fit(args):
    try:
        rc = RunConfig.load(args.config)
        cfg = rc.poly_config()
    except ConfigError as exc:
        _err(exc)
        return EXIT_CONFIG
    try:
        data = load_data(rc, cfg)
        fdata = ps.analyze(cfg, data)
    except (DataError, ValueError) as exc:
        _err(exc)
        return EXIT_DATA
    try:
        model = ps.fit(cfg, fdata)
    except SolverError as exc:
        _err(f"{exc} (xi = {exc.xi})")
        return EXIT_SOLVER
    model_path = rc.resolve(rc.output.get("model", "model.json"))
    report_path = rc.resolve(rc.output.get("report", "fit_report.json"))
    atomic_write(model_path, ps.dumps_model(model))
    report = {
        "modes": len(model.per_xi),
        "cond_estimates": {_xi_key(x): c for x, c in model.cond_estimates.items()},
        "discarded_fraction": fdata.discarded_fraction,
        "wiener_norms": [float(v) for v in fdata.wiener_norms],
        "provenance": data.provenance,
        "convention": model.convention,
    }
    atomic_write(report_path, json.dumps(report, sort_keys=True, indent=1))
    print(f"wrote {model_path} ({len(model.per_xi)} modes)")
    return EXIT_OK


def load_model(path):
    try:
        return ps.loads_model(Path(path).read_text())
    except (OSError, ValueError, KeyError, TypeError, IndexError, TransfiniteError) as exc:
        raise DataError(f"malformed model {path}: {exc}") from exc


def parse_axis(text, default=None):
    text = text.strip()
    if text in ("data", "knots"):
        return text
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ValueError(f"range '{text}' must be a:b:n")
        a, b, n = float(parts[0]), float(parts[1]), int(parts[2])
        if n < 1:
            raise ValueError("a range needs at least one point")
        return np.linspace(a, b, n)
    return np.array([float(v) for v in text.split(",") if v.strip()])


def parse_grid(spec: str, model: ps.PolysplineModel):
    """'t=a:b:n;y1=a:b:n' with lists 'v1,v2' or the keywords 'data' (y) and 'knots' (t)."""
    n = model.config.n
    axes = {}
    for part in spec.split(";"):
        if not part.strip():
            continue
        if "=" not in part:
            raise ValueError(f"grid component '{part}' needs name=values")
        name, val = part.split("=", 1)
        axes[name.strip()] = parse_axis(val)
    names = ["t"] + [f"y{d + 1}" for d in range(n)]
    extra = set(axes) - set(names)
    if extra:
        raise ValueError(f"unknown grid axes {sorted(extra)}")
    if "t" not in axes:
        raise ValueError("grid spec needs a t axis")
    t = axes["t"]
    if isinstance(t, str):
        if t != "knots":
            raise ValueError("t accepts 'knots' but not 'data'")
        t = model.config.knots.knots.copy()
    ys = []
    for name in names[1:]:
        a = axes.get(name, "data")
        if isinstance(a, str):
            if a != "data":
                raise ValueError(f"{name} accepts 'data' but not 'knots'")
            a = 2 * np.pi * np.arange(model.config.grid_m) / model.config.grid_m
        ys.append(a)
    return t, ys


def _fmt(x):
    return format(float(x), ".17g")


def grid_csv(model, t, ys, deriv, with_spec):
    vals = ps.evaluate_grid(model, t, ys, deriv)
    n = model.config.n
    header = ["t"] + [f"y{d + 1}" for d in range(n)]
    header += ["value"] if model.is_real else ["value", "value_imag"]
    if with_spec:
        header.append("d_spec")
    spec = ";".join(str(v) for v in deriv)
    lines = [",".join(header)]
    mesh = np.meshgrid(t, *ys, indexing="ij")
    flat_pts = [g.ravel() for g in mesh]
    flat_vals = vals.ravel()
    for i in range(flat_vals.size):
        row = [_fmt(g[i]) for g in flat_pts]
        v = flat_vals[i]
        row += [_fmt(v)] if model.is_real else [_fmt(v.real), _fmt(v.imag)]
        if with_spec:
            row.append(spec)
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def cmd_eval(args):
    try:
        model = load_model(args.model)
    except DataError as exc:
        _err(exc)
        return EXIT_DATA
    try:
        deriv = (0,) * (model.config.n + 1)
        if args.deriv:
            deriv = tuple(int(v) for v in args.deriv.split(","))
            if len(deriv) != model.config.n + 1:
                raise ValueError(f"--deriv needs m plus {model.config.n} y orders")
            ps._check_deriv(model.p, deriv[0], deriv[1:], model.config.n)
        t, ys = parse_grid(args.grid, model)
    except (ValueError, DerivativeOrderTooHigh) as exc:
        _err(exc)
        return EXIT_CONFIG
    text = grid_csv(model, t, ys, deriv, bool(args.deriv))
    if args.out == "-":
        sys.stdout.write(text)
    else:
        atomic_write(args.out, text)
    return EXIT_OK


def cmd_verify(args):
    try:
        rc = RunConfig.load(args.config)
        cfg = rc.poly_config()
    except ConfigError as exc:
        _err(exc)
        return EXIT_CONFIG
    names = ["all"] if args.suite == "all" else [s.strip() for s in args.suite.split(",")]
    unknown = [s for s in names if s != "all" and s not in SUITES]
    if unknown:
        _err(f"unknown suite(s) {unknown}; choose from {sorted(SUITES)} or 'all'")
        return EXIT_CONFIG
    seed = rc.seed if args.seed is None else args.seed
    try:
        model = ps.fit(cfg, ps.analyze(cfg, load_data(rc, cfg)))
    except (DataError, ValueError, SolverError) as exc:
        _err(exc)
        return EXIT_CONFIG
    checks = run_suites(cfg, "all" if names == ["all"] else names, rc.tolerances, seed, model)
    passed = all(c.passed for c in checks)
    report = {"seed": seed, "passed": passed, "checks": [c.to_dict() for c in checks]}
    text = json.dumps(report, sort_keys=True, indent=1)
    if "verify_report" in rc.output:
        atomic_write(rc.resolve(rc.output["verify_report"]), text)
    print(text)
    return EXIT_OK if passed else EXIT_FAIL


def cmd_seminorm(args):
    try:
        model = load_model(args.model)
    except DataError as exc:
        _err(exc)
        return EXIT_DATA
    rep = ps.duchon_seminorm(model)
    out = {
        "total": rep.total,
        "torus_factor": (2 * np.pi) ** model.config.n,
        "per_xi": {_xi_key(x): v for x, v in rep.per_xi.items()},
        "per_xi_m": {_xi_key(x): {str(m): v for m, v in d.items()} for x, d in rep.per_xi_m.items()},
        "factored": {_xi_key(x): v for x, v in rep.factored.items()},
        "deltas": {_xi_key(x): v for x, v in rep.deltas().items()},
        "max_delta": rep.max_delta,
    }
    print(json.dumps(out, sort_keys=True, indent=1))
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="transfinite", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("fit", help="fit a polyspline to hyperplane data")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_fit)
    p = sub.add_parser("eval", help="evaluate a model on a grid and write CSV")
    p.add_argument("--model", required=True)
    p.add_argument("--grid", required=True, help="e.g. 't=-1:3:9;y1=data'")
    p.add_argument("--out", required=True, help="CSV path or '-' for stdout")
    p.add_argument("--deriv", help="m,b1,...,bn")
    p.set_defaults(func=cmd_eval)
    p = sub.add_parser("verify", help="run verification suites")
    p.add_argument("--config", required=True)
    p.add_argument("--suite", default="all", help=f"one of {', '.join(SUITES)} (comma separated) or all")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_verify)
    p = sub.add_parser("seminorm", help="Duchon seminorm report of a model")
    p.add_argument("--model", required=True)
    p.set_defaults(func=cmd_seminorm)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
