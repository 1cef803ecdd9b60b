"""Experiment runner.

    krflab run-flow    --config exp.ini [--mode test|explore] [--seed N] [--out DIR]
    krflab check-royden --config royden.ini
    krflab certify     --config certify.ini
    krflab sweep       --config sweep.ini

Configs are INI files (flat keys under section headers). Exit status is 0 on
success, 1 on a monitor or inequality violation, 2 on a configuration error.
Outputs are deterministic: identical config and seed give identical bytes.
"""

import argparse
import configparser
import csv
import json
import math
import os
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import cone_certifier as cc
from . import flow_engine as fe
from . import geometry_models as gm
from . import royden_estimates as re_
from .errors import ConfigError, KrfError, MonitorViolation

SCHEMA_VERSION = 1
EXIT_OK, EXIT_VIOLATION, EXIT_CONFIG = 0, 1, 2

TRAJECTORY_COLUMNS = ("t", "f_or_min_metric", "max_trace", "trace_bound", "schwarz_residual",
                      "volume_ratio", "ke_residual", "pass")
ROYDEN_COLUMNS = ("seed", "n", "kappa", "measured_sup", "lhs", "rhs", "margin", "holds")

MODEL_KINDS = {
    "flat_torus": gm.FLAT_TORUS,
    "hyperbolic": gm.HYPERBOLIC,
    "projective_line": gm.PROJECTIVE_LINE,
    "torus_grid": gm.TORUS_GRID,
}


# ------------------------------------------------------------------ config


@dataclass(frozen=True)
class ExperimentConfig:
    model: gm.ModelManifold = None
    f0: float = 1.0
    amplitude: float = 0.0  # grid cosine amplitude, absolute
    amplitude_fraction: float = None  # or relative to the positivity threshold
    axis: int = 0
    noise: float = 0.0
    dt: float = 1e-3
    t_end: float = 1.0
    record_interval: float = None
    monitors: fe.MonitorConfig = field(default_factory=fe.MonitorConfig)
    ke_window: tuple = (2.0, 8.0)
    mode: str = fe.TEST
    seed: int = 0
    out: str = "out"
    prefix: str = "flow"
    csv_every: int = 1
    sections: dict = field(default_factory=dict)  # raw sections for royden/certify/sweep


def _number(text):
    """Float with an optional ``pi`` factor: ``4pi``, ``4*pi``, ``-pi``, ``inf``."""
    s = text.strip().replace(" ", "")
    try:
        if s.endswith("pi"):
            head = s[:-2].rstrip("*")
            coef = {"": 1.0, "-": -1.0, "+": 1.0}.get(head)
            return (float(head) if coef is None else coef) * math.pi
        return float(s)
    except ValueError:
        raise ConfigError(f"not a number: {text!r}") from None


def _numbers(text):
    return [_number(x) for x in text.replace(";", ",").split(",") if x.strip()]


def _matrix(text):
    rows = [r for r in text.split(";") if r.strip()]
    return [[_number(x) for x in r.replace(",", " ").split()] for r in rows]


class _Section:
    def __init__(self, sections, name):
        self.name = name
        self.data = dict(sections.get(name, {}))

    # configparser lowercases keys
    def get(self, key, default=None):
        return self.data.get(key.lower(), default)

    def number(self, key, default=None):
        v = self.get(key)
        return default if v is None or v.strip() == "" else _number(v)

    def integer(self, key, default=None):
        v = self.number(key, default)
        if v is None:
            return None
        if v != int(v):
            raise ConfigError(f"[{self.name}] {key} must be an integer")
        return int(v)

    def boolean(self, key, default=False):
        v = self.get(key)
        if v is None:
            return default
        lowered = v.strip().lower()
        if lowered in ("1", "true", "yes", "on"):
            return True
        if lowered in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"[{self.name}] {key} must be a boolean")


def read_config(path):
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except configparser.Error as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from None
    return parser


def _model_from(sec):
    kind = (sec.get("kind") or "").strip().lower()
    if kind not in MODEL_KINDS:
        raise ConfigError(f"[model] kind must be one of {sorted(MODEL_KINDS)}, got {kind!r}")
    try:
        if kind == "flat_torus":
            return gm.FlatTorus(sec.integer("n", 1))
        if kind == "hyperbolic":
            return gm.HyperbolicSurface(sec.integer("genus", 2))
        if kind == "projective_line":
            return gm.ProjectiveLine()
        return gm.TorusGrid(sec.integer("resolution", 64), sec.number("g_flat", 1.0))
    except ValueError as exc:
        raise ConfigError(f"[model] {exc}") from None


def load_config(path, mode=None, seed=None, out=None):
    """Parse and validate ``path``; command-line overrides win over the file."""
    parser = read_config(path)
    sections = {name: dict(parser[name]) for name in parser.sections()}
    run = _Section(sections, "run")
    output = _Section(sections, "output")
    cfg = ExperimentConfig(
        mode=mode or run.get("mode", fe.TEST).strip(),
        seed=seed if seed is not None else run.integer("seed", 0),
        out=out or output.get("dir", "out"),
        prefix=output.get("prefix", "flow"),
        csv_every=output.integer("csv_every", 1),
        sections=sections,
    )
    if cfg.mode not in (fe.TEST, fe.EXPLORE):
        raise ConfigError(f"mode must be 'test' or 'explore', got {cfg.mode!r}")
    if cfg.csv_every < 1:
        raise ConfigError("[output] csv_every must be >= 1")
    if "model" not in sections:
        return cfg
    model = _model_from(_Section(sections, "model"))
    init = _Section(sections, "initial")
    flow = _Section(sections, "flow")
    mon = _Section(sections, "monitors")
    kappa = mon.number("kappa")
    if kappa is not None and kappa < 0:
        raise ConfigError(f"kappa must be >= 0, got {kappa}")
    window = _numbers(mon.get("ke_window", "2, 8"))
    if len(window) != 2:
        raise ConfigError("[monitors] ke_window needs two numbers")
    monitors = fe.MonitorConfig(
        trace=mon.boolean("trace", True),
        schwarz=mon.boolean("schwarz", True),
        volume=mon.boolean("volume", True),
        trace_rtol=mon.number("trace_rtol"),
        schwarz_dt_coeff=mon.number("schwarz_dt_coeff", 1.0),
        schwarz_h_coeff=mon.number("schwarz_h_coeff", 1.0),
        schwarz_floor=mon.number("schwarz_floor", 1e-8),
        volume_ceiling=mon.number("volume_ceiling", 1e6),
        kappa=kappa,
        T0=mon.number("T0"),
    )
    cfg = replace(
        cfg,
        model=model,
        f0=init.number("f0", 1.0),
        amplitude=init.number("amplitude", 0.0),
        amplitude_fraction=init.number("amplitude_fraction"),
        axis=init.integer("axis", 0),
        noise=init.number("noise", 0.0),
        dt=flow.number("dt", 1e-3),
        t_end=flow.number("t_end", 1.0),
        record_interval=flow.number("record_interval"),
        monitors=monitors,
        ke_window=tuple(window),
    )
    if not cfg.dt > 0:
        raise ConfigError(f"dt must be > 0, got {cfg.dt}")
    if not cfg.t_end > 0:
        raise ConfigError(f"t_end must be > 0, got {cfg.t_end}")
    return cfg


def initial_params(cfg):
    model = cfg.model
    if model.homogeneous:
        return {"f0": cfg.f0}
    N = model.resolution
    amp = cfg.amplitude
    if cfg.amplitude_fraction is not None:
        amp = cfg.amplitude_fraction * gm.cosine_positivity_threshold(N, model.g_flat)
    phi = gm.cosine_potential(N, amp, cfg.axis)
    if cfg.noise:
        phi = phi + cfg.noise * np.random.default_rng(cfg.seed).standard_normal((N, N))
    return {"phi0": phi}


# ----------------------------------------------------------------- writers


def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def _write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return None
        if math.isinf(x):
            return "infinity" if x > 0 else "-infinity"
        return x
    return obj


def _write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def trajectory_rows(traj, every=1):
    cols = traj.reports.columns
    S = len(traj.times)
    idx = list(range(0, S, every))
    if idx[-1] != S - 1:
        idx.append(S - 1)
    for k in idx:
        yield (cols["t"][k], traj.min_metric[k], cols["trace"][k], cols["trace_bound"][k],
               cols["schwarz_residual"][k], cols["volume_ratio_max"][k], cols["ke_residual"][k],
               bool(cols["all_pass"][k]))


PLOT_SERIES = (
    ("scale", "f_or_min_metric", 1),
    ("trace", "max_trace", 2),
    ("trace_bound", "trace_bound", 3),
    ("schwarz", "schwarz_residual", 4),
    ("volume", "volume_ratio", 5),
    ("ke", "ke_residual", 6),
)


def write_plot_data(out, prefix, rows):
    """Two-column ``.dat`` files plus a gnuplot script drawing them."""
    rows = list(rows)
    written = []
    for name, label, col in PLOT_SERIES:
        pts = [(r[0], r[col]) for r in rows if math.isfinite(float(r[col]))]
        if not pts:
            continue
        fname = f"{prefix}_{name}.dat"
        with open(os.path.join(out, fname), "w", encoding="utf-8") as fh:
            fh.write(f"# t {label}\n")
            for t, v in pts:
                fh.write(f"{_fmt(t)} {_fmt(v)}\n")
        written.append((fname, label))
    lines = [
        "set terminal pngcairo size 900,600",
        "set xlabel 't'",
        "set grid",
    ]
    for fname, label in written:
        lines += [f"set output '{fname[:-4]}.png'", f"set title '{label}'",
                  f"plot '{fname}' using 1:2 with lines title '{label}'"]
    with open(os.path.join(out, f"{prefix}.gp"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


# ---------------------------------------------------------------- commands


def run_flow(cfg):
    """Integrate, write CSV/JSON/plot data, return the exit status."""
    if cfg.model is None:
        raise ConfigError("missing [model] section")
    os.makedirs(cfg.out, exist_ok=True)
    status = EXIT_OK
    violation = None
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", fe.MonitorWarning)
        try:
            traj = fe.run(cfg.model, initial_params(cfg), cfg.t_end, cfg.dt, cfg.monitors,
                          mode=cfg.mode, record_interval=cfg.record_interval)
        except MonitorViolation as exc:
            traj, violation, status = exc.trajectory, str(exc), EXIT_VIOLATION
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    rows = list(trajectory_rows(traj, cfg.csv_every))
    _write_csv(os.path.join(cfg.out, f"{cfg.prefix}.csv"), TRAJECTORY_COLUMNS, rows)
    write_plot_data(cfg.out, cfg.prefix, rows)
    summary = fe.summary(traj, cfg.ke_window)
    summary.update({
        "schema_version": SCHEMA_VERSION,
        "mode": cfg.mode,
        "seed": cfg.seed,
        "violation": violation,
        "warnings": [str(w.message) for w in caught],
    })
    _write_json(os.path.join(cfg.out, f"{cfg.prefix}_summary.json"), summary)
    if violation:
        print(f"monitor violation: {violation}", file=sys.stderr)
    return status


def check_royden(cfg):
    sec = _Section(cfg.sections, "royden")
    trials = sec.integer("trials", 1000)
    n_values = [int(x) for x in _numbers(sec.get("n", "1, 2, 3"))]
    kappa = sec.number("kappa", 1.0)
    perturbation = sec.number("perturbation", 0.5)
    tol = sec.number("tol", re_.DEFAULT_TOL)
    same = sec.boolean("omega_equals_hat", False)
    if kappa < 0:
        raise ConfigError(f"kappa must be >= 0, got {kappa}")
    if kappa == 0:
        raise ConfigError("the randomized suite needs kappa > 0")
    if trials < 1 or not n_values or min(n_values) < 1:
        raise ConfigError("[royden] needs trials >= 1 and dimensions >= 1")
    if perturbation < 0:
        raise ConfigError("[royden] perturbation must be >= 0")
    os.makedirs(cfg.out, exist_ok=True)
    records = re_.run_trials(cfg.seed, trials, n_values, kappa, perturbation,
                             omega_equals_hat=same, tol=tol)
    _write_csv(os.path.join(cfg.out, "royden.csv"), ROYDEN_COLUMNS,
               [(r.seed, r.n, r.kappa, r.measured_sup, r.lhs, r.rhs, r.margin, r.holds)
                for r in records])
    margins = np.array([r.margin for r in records])
    failures = sum(not r.holds for r in records)
    _write_json(os.path.join(cfg.out, "royden_summary.json"), {
        "schema_version": SCHEMA_VERSION,
        "seed": cfg.seed,
        "trials": len(records),
        "n": n_values,
        "kappa": kappa,
        "perturbation": perturbation,
        "failures": failures,
        "min_margin": float(margins.min()),
        "max_abs_margin": float(np.abs(margins).max()),
    })
    return EXIT_VIOLATION if failures else EXIT_OK


def _lattice_from(sec):
    name = (sec.get("lattice") or "").strip()
    key = name.lower()
    try:
        if key == "p1":
            return cc.P1()
        if key == "p2":
            return cc.P2()
        if key == "p1xp1":
            return cc.P1xP1()
        if key == "hyperbolic":
            return cc.HyperbolicCurve(sec.integer("genus", 2))
        if key == "torus":
            return cc.Torus(sec.integer("n", 1))
        if key == "custom":
            form = _matrix(sec.get("intersection_form", ""))
            curves = _matrix(sec.get("curves", ""))
            names = [s.strip() for s in sec.get("curve_names", "").split(",") if s.strip()]
            return cc.Custom(form, curves, names, sec.integer("dim", 2))
    except (ValueError, KrfError) as exc:
        raise ConfigError(f"[certify] {exc}") from None
    raise ConfigError(f"[certify] unknown lattice {name!r}")


def _class(sec, key, lattice):
    try:
        return cc.CohomClass(_numbers(sec.get(key, "")), lattice)
    except KrfError as exc:
        raise ConfigError(f"[certify] {key}: {exc}") from None


def certify(cfg):
    sec = _Section(cfg.sections, "certify")
    lattice = _lattice_from(sec)
    omega0 = _class(sec, "omega0", lattice)
    if sec.get("canonical"):
        kclass = _class(sec, "canonical", lattice)
    else:
        try:
            kclass = cc.canonical_class(lattice)
        except ValueError as exc:
            raise ConfigError(f"[certify] {exc}; give 'canonical'") from None
    T = cc.maximal_time(omega0, kclass)
    limit_cls = cc.class_at_time(omega0, kclass, T)
    limit = cc.is_kahler(limit_cls)
    times = _numbers(sec.get("times", "0"))
    out = {
        "schema_version": SCHEMA_VERSION,
        "lattice": lattice.to_json(),
        "omega0": omega0.to_json(),
        "canonical": kclass.to_json(),
        "T": T,
        "K_nef": cc.is_nef(kclass),
        "limit": limit.status,
        "limit_class": "zero" if limit_cls.is_zero() else limit_cls.to_json(),
        "limit_witnesses": limit.to_json()["witnesses"],
        "verdicts": [
            {"t": t, **cc.is_kahler(cc.class_at_time(omega0, kclass, t)).to_json()} for t in times
        ],
    }
    T0 = sec.number("T0")
    if T0 is not None:
        bound = None
        C = sec.number("lower_bound_C")
        if sec.get("reference"):
            hat = _class(sec, "reference", lattice)
            if C is None:
                # ample constant max{2n / (kappa (n+1)), tr_0} with omega0 = f0 * omega_hat
                kappa = sec.number("kappa", 1.0)
                n = lattice.dim
                f0 = float(omega0.coords[0] / hat.coords[0])
                C = fe.ample_constant(n, kappa, n / f0)
            bound = (C, hat)
        verdict = cc.certify_limit(omega0, kclass, T0, bound)
        out["certify_limit"] = {"T0": T0, "C": bound[0] if bound else None, **verdict.to_json(),
                                "class": cc.class_at_time(omega0, kclass, T0).to_json()}
    os.makedirs(cfg.out, exist_ok=True)
    _write_json(os.path.join(cfg.out, "certify.json"), out)
    return EXIT_OK


def _sweep_one(args):
    cfg, index = args
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        try:
            status = run_flow(cfg)
        except KrfError as exc:
            return index, EXIT_CONFIG, {"error": str(exc)}
    with open(os.path.join(cfg.out, f"{cfg.prefix}_summary.json"), encoding="utf-8") as fh:
        return index, status, json.load(fh)


_SWEEP_FIELDS = {
    "initial.f0": "f0", "initial.amplitude": "amplitude",
    "initial.amplitude_fraction": "amplitude_fraction", "flow.dt": "dt", "flow.t_end": "t_end",
}


def sweep(cfg):
    sec = _Section(cfg.sections, "sweep")
    param = (sec.get("parameter") or "").strip()
    if param not in _SWEEP_FIELDS:
        raise ConfigError(f"[sweep] parameter must be one of {sorted(_SWEEP_FIELDS)}")
    values = _numbers(sec.get("values", ""))
    if not values:
        raise ConfigError("[sweep] values is empty")
    workers = sec.integer("workers", 1)
    if cfg.model is None:
        raise ConfigError("missing [model] section")
    jobs = []
    for i, v in enumerate(values):
        sub = replace(cfg, out=os.path.join(cfg.out, f"exp_{i:03d}"), **{_SWEEP_FIELDS[param]: v})
        if not (sub.dt > 0 and sub.t_end > 0):
            raise ConfigError("swept dt and t_end must be > 0")
        jobs.append((sub, i))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_one, jobs))
    else:
        results = [_sweep_one(j) for j in jobs]
    results.sort(key=lambda r: r[0])
    os.makedirs(cfg.out, exist_ok=True)
    rows = []
    for (index, status, summ), v in zip(results, values):
        rows.append((index, v, status, summ.get("termination", "error"),
                     summ.get("T"), summ.get("all_pass")))
    with open(os.path.join(cfg.out, "sweep.csv"), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("index", param, "exit", "termination", "T", "all_pass"))
        for index, v, status, term, T, ok in rows:
            w.writerow((index, _fmt(v), status, term, "" if T is None else _fmt(T),
                        "" if ok is None else _fmt(bool(ok))))
    _write_json(os.path.join(cfg.out, "sweep_summary.json"), {
        "schema_version": SCHEMA_VERSION,
        "parameter": param,
        "experiments": [{"index": i, "value": v, "exit": s, "summary": summ}
                        for (i, s, summ), v in zip(results, values)],
    })
    return max(status for _, status, _ in results)


COMMANDS = {"run-flow": run_flow, "check-royden": check_royden, "certify": certify, "sweep": sweep}


def build_parser():
    p = argparse.ArgumentParser(prog="krflab", description="Kahler-Ricci flow experiments")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="INI experiment file")
        sp.add_argument("--mode", choices=(fe.TEST, fe.EXPLORE), default=None)
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--out", default=None, help="output directory")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, mode=args.mode, seed=args.seed, out=args.out)
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except KrfError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
