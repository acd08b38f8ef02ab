"""Batch experiments: INI configs, artifact writing and run manifests.

Every artifact is a pure function of the resolved config (thread count
excluded), so identical configs produce byte-identical files.  Timing
information lives only in ``manifest.json``, which is not itself inventoried.
"""

from __future__ import annotations

import configparser
import csv
import enum
import hashlib
import io
import json
import math
import time
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__
from ._parallel import ordered_map, resolve_threads
from .fluctuation import (
    DegenerateFit,
    Direction,
    estimate_chi,
    estimate_xi,
    median_curve,
    sample_fluctuations,
    variance_scan,
)
from .oriented import (
    Initial,
    OrientedField,
    break_points,
    estimate_alpha,
    planar_speed,
    simulate_right_edge,
    theta_endpoints,
)
from .shape import Side, curvature_exponent, estimate_shape_boundary, flat_segment_detect
from .weights import DistributionSpec, InvalidDistribution, Kind


class ConfigError(ValueError):
    """Invalid or incomplete experiment configuration (exit code 2)."""


class StageError(RuntimeError):
    """A compute stage failed (exit code 1)."""

    def __init__(self, stage, cause):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause


class ExperimentKind(str, enum.Enum):
    XI_SCAN = "xi"
    CHI_SCAN = "chi"
    SHAPE = "shape"
    CURVATURE = "curvature"
    ALPHA_CURVE = "alpha"
    BREAKPOINTS = "breakpoints"
    FLAT_SEGMENT = "flatseg"


def _floats(text):
    return [float(x) for x in str(text).replace(" ", "").split(",") if x]


def _ints(text):
    return [int(x) for x in str(text).replace(" ", "").split(",") if x]


def _join(values):
    return ",".join(repr(float(v)) if isinstance(v, float) else str(v) for v in values)


@dataclass
class ExperimentConfig:
    kind: ExperimentKind
    spec: DistributionSpec = field(default_factory=lambda: DistributionSpec.durrett_liggett(0.8))
    seed: int = 0
    threads: int = 1
    out: str = "out"
    # rays and grids
    theta: float = math.pi / 4
    r: float = 1.0
    theta_grid: list = field(default_factory=list)
    n_list: list = field(default_factory=lambda: [128, 256, 512])
    replicates: int = 10
    # oriented percolation
    p_list: list = field(default_factory=list)
    horizon_n: int = 2000
    alpha_replicates: int = 50
    horizon_h: int = 100
    traces: int = 20
    # curvature
    theta0: str = "auto"
    below_width: float = 0.2
    below_count: int = 12
    above_width: float = 0.2
    above_count: int = 6

    _SECTIONS = {
        "experiment": ("seed", "threads", "out"),
        "grid": ("theta", "r", "theta_grid", "n_list", "replicates"),
        "oriented": ("p_list", "horizon_n", "alpha_replicates", "horizon_h", "traces"),
        "curvature": ("theta0", "below_width", "below_count", "above_width", "above_count"),
    }

    def validate(self):
        if self.replicates < 1:
            raise ConfigError("replicates must be at least 1")
        if self.kind in (ExperimentKind.XI_SCAN, ExperimentKind.CHI_SCAN, ExperimentKind.SHAPE,
                         ExperimentKind.CURVATURE, ExperimentKind.FLAT_SEGMENT):
            if len(self.n_list) < 3 or sorted(set(self.n_list)) != list(self.n_list) or min(self.n_list) < 1:
                raise ConfigError("n_list needs at least 3 ascending distinct positive integers")
        if self.kind == ExperimentKind.CHI_SCAN and self.replicates < 30:
            raise ConfigError("chi scans need at least 30 replicates")
        if not 0.0 <= self.theta <= math.pi / 2:
            raise ConfigError("theta must lie in [0, pi/2]")
        if self.kind == ExperimentKind.SHAPE and len(self.theta_grid) < 8:
            raise ConfigError("shape runs need a theta_grid of at least 8 angles")
        needs_dl = self.kind in (ExperimentKind.CURVATURE, ExperimentKind.FLAT_SEGMENT)
        if needs_dl and self.spec.kind != Kind.DURRETT_LIGGETT:
            raise ConfigError(f"{self.kind.value} runs need a durrett_liggett distribution")
        if self.kind in (ExperimentKind.ALPHA_CURVE, ExperimentKind.BREAKPOINTS) and not self.oriented_ps():
            raise ConfigError("set p_list or use a durrett_liggett distribution")
        if self.theta0 != "auto":
            try:
                float(self.theta0)
            except ValueError as exc:
                raise ConfigError(f"theta0 must be 'auto' or a number, got {self.theta0!r}") from exc
        if self.horizon_n < 1 or self.horizon_h < 1 or self.traces < 1 or self.alpha_replicates < 2:
            raise ConfigError("oriented horizons, traces and alpha_replicates must be positive")
        return self

    def oriented_ps(self):
        if self.p_list:
            return list(self.p_list)
        return [self.spec.p] if self.spec.kind == Kind.DURRETT_LIGGETT else []

    # -- INI round trip ----------------------------------------------------

    def to_ini(self, portable=False) -> str:
        """INI text; ``portable`` drops ``out`` and ``threads``, which never affect results."""
        cp = configparser.ConfigParser(interpolation=None)
        cp["experiment"] = {"kind": self.kind.value}
        cp["distribution"] = self.spec.to_items()
        for section, keys in self._SECTIONS.items():
            if section not in cp:
                cp[section] = {}
            for k in keys:
                if portable and k in ("out", "threads"):
                    continue
                v = getattr(self, k)
                if isinstance(v, list):
                    cp[section][k] = _join(v)
                elif isinstance(v, float):
                    cp[section][k] = repr(v)
                else:
                    cp[section][k] = str(v)
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    @classmethod
    def from_ini(cls, text: str) -> "ExperimentConfig":
        cp = configparser.ConfigParser(interpolation=None)
        try:
            cp.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(f"unreadable config: {exc}") from exc
        if not cp.has_option("experiment", "kind"):
            raise ConfigError("missing [experiment] kind")
        try:
            kind = ExperimentKind(cp["experiment"]["kind"].strip().lower())
        except ValueError as exc:
            raise ConfigError(f"unknown experiment kind {cp['experiment']['kind']!r}") from exc
        kwargs = {"kind": kind}
        if cp.has_section("distribution"):
            try:
                kwargs["spec"] = DistributionSpec.from_items(dict(cp["distribution"]))
            except InvalidDistribution as exc:
                raise ConfigError(str(exc)) from exc
        types = {f.name: f for f in fields(cls)}
        defaults = cls(kind)
        for section, keys in cls._SECTIONS.items():
            if not cp.has_section(section):
                continue
            for k in keys:
                if k not in cp[section]:
                    continue
                raw = cp[section][k]
                default = getattr(defaults, k)
                try:
                    if k == "n_list":
                        kwargs[k] = _ints(raw)
                    elif isinstance(default, list):
                        kwargs[k] = _floats(raw)
                    elif isinstance(default, bool):
                        kwargs[k] = raw.strip().lower() in ("1", "true", "yes")
                    elif isinstance(default, int):
                        kwargs[k] = int(raw)
                    elif isinstance(default, float):
                        kwargs[k] = float(raw)
                    else:
                        kwargs[k] = raw.strip()
                except ValueError as exc:
                    raise ConfigError(f"[{section}] {k}: {exc}") from exc
            unknown = set(cp[section]) - set(keys) - ({"kind"} if section == "experiment" else set())
            if unknown:
                raise ConfigError(f"unknown keys in [{section}]: {sorted(unknown)}")
        assert set(kwargs) <= set(types)
        return cls(**kwargs).validate()

    def echo(self) -> dict:
        cp = configparser.ConfigParser(interpolation=None)
        cp.read_string(self.to_ini())
        return {s: dict(cp[s]) for s in cp.sections()}


@dataclass
class RunManifest:
    config: dict
    version: str
    wall_time: float
    stages: dict
    files: list

    def to_dict(self):
        return {
            "config": self.config,
            "toolkitVersion": self.version,
            "wallTime": self.wall_time,
            "stageTimings": self.stages,
            "files": self.files,
        }

    def digests(self):
        return {f["path"]: f["sha256"] for f in self.files}


# ---------------------------------------------------------------------------
# artifact writers


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def write_json(path, obj):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(_clean(obj), fh, sort_keys=True, indent=2)
        fh.write("\n")


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


# ---------------------------------------------------------------------------
# stages


class _Runner:
    def __init__(self, config: ExperimentConfig, threads: int):
        self.cfg = config
        self.threads = threads
        self.out = Path(config.out)
        self.stages = {}
        self.written = []

    def stage(self, name, fn, *args, **kwargs):
        t0 = time.perf_counter()
        try:
            result = fn(*args, **kwargs)
        except (StageError, KeyboardInterrupt):
            raise
        except Exception as exc:  # noqa: BLE001 - every failure is reported with its stage
            raise StageError(name, exc) from exc
        self.stages[name] = round(time.perf_counter() - t0, 6)
        return result

    def path(self, name):
        self.written.append(name)
        return self.out / name

    # -- oriented pieces -------------------------------------------------

    def alpha(self, p):
        cfg = self.cfg
        a, se = self.stage(f"alpha[p={p!r}]", estimate_alpha, p, cfg.horizon_n, cfg.alpha_replicates, cfg.seed, self.threads)
        return {"p": p, "N": cfg.horizon_n, "replicates": cfg.alpha_replicates, "alphaHat": a, "stderr": se,
                "planarSpeed": planar_speed(a)}

    def cone(self, p):
        info = self.alpha(p)
        write_json(self.path("alpha.json"), info)
        if not info["alphaHat"] > 2 * info["stderr"]:
            raise StageError("alpha", f"alphaHat={info['alphaHat']:.4g} is not above 2 stderr; no cone to analyse")
        return info, theta_endpoints(info["planarSpeed"])

    # -- kinds -------------------------------------------------------------

    def run_xi(self):
        cfg = self.cfg
        d = Direction(cfg.r, cfg.theta)
        samples = self.stage("sample_fluctuations", sample_fluctuations, cfg.spec, d, cfg.n_list, cfg.replicates, cfg.seed, self.threads)
        write_csv(self.path("xi_samples.csv"), ["n", "replicateId", "hn"], [(s.n, s.replicate_id, s.hn) for s in samples])
        try:
            fit = estimate_xi(samples).to_dict()
            fit["degenerate"] = False
        except DegenerateFit as exc:
            fit = {"degenerate": True, "reason": str(exc)}
        write_json(self.path("xi_fit.json"), fit)

    def run_chi(self):
        cfg = self.cfg
        d = Direction(cfg.r, cfg.theta)
        scan = self.stage("variance_scan", variance_scan, cfg.spec, d, cfg.n_list, cfg.replicates, cfg.seed, self.threads)
        write_csv(self.path("chi_variance.csv"), ["n", "varT", "stderr"], scan)
        try:
            fit = estimate_chi(scan).to_dict()
            fit["degenerate"] = False
        except DegenerateFit as exc:
            fit = {"degenerate": True, "reason": str(exc)}
        write_json(self.path("chi_fit.json"), fit)

    def boundary(self, grid, min_angles=8):
        cfg = self.cfg
        b = self.stage("shape_boundary", estimate_shape_boundary, cfg.spec, grid, cfg.n_list, cfg.replicates,
                       cfg.seed, self.threads, min_angles)
        b.to_csv(self.path("boundary.csv"))
        return b

    def run_shape(self):
        self.boundary(self.cfg.theta_grid)

    def run_flatseg(self):
        cfg = self.cfg
        info, (lo, hi) = self.cone(cfg.spec.p)
        grid = cfg.theta_grid or list(np.linspace(0.0, math.pi / 2, 17))
        b = self.boundary(grid)
        seg = self.stage("flat_segment", flat_segment_detect, b, info["planarSpeed"])
        write_json(self.path("endpoints.json"), {
            "thetaMinus": seg.theta_minus, "thetaPlus": seg.theta_plus,
            "maxDeviation": seg.max_deviation, "anglesInside": seg.angles_inside,
            "radius": math.sqrt(0.5 + info["planarSpeed"] ** 2),
        })

    def run_curvature(self):
        cfg = self.cfg
        if cfg.theta0 == "auto":
            _, (theta0, _) = self.cone(cfg.spec.p)
        else:
            theta0 = float(cfg.theta0)
        below = np.linspace(theta0 - cfg.below_width, theta0, cfg.below_count)
        above = theta0 + np.linspace(0.0, cfg.above_width, cfg.above_count + 1)[1:]
        grid = np.clip(np.concatenate([below, above]), 0.0, math.pi / 2)
        grid = np.unique(grid)
        b = self.boundary(grid, min_angles=min(8, len(grid)))
        anchor = float(b.theta[int(np.argmin(np.abs(b.theta - theta0)))])
        result = {"requestedTheta0": theta0}
        for side in (Side.PLUS, Side.MINUS):
            est = self.stage(f"curvature[{side.value}]", curvature_exponent, b, anchor, side)
            result[side.value] = est.to_dict()
        write_json(self.path("curvature.json"), result)

    def run_alpha(self):
        rows = [self.alpha(p) for p in self.cfg.oriented_ps()]
        write_csv(self.path("alpha_curve.csv"), ["p", "N", "alphaHat", "stderr"],
                  [(r["p"], r["N"], r["alphaHat"], r["stderr"]) for r in rows])
        if len(rows) == 1:
            write_json(self.path("alpha.json"), rows[0])

    def run_breakpoints(self):
        cfg = self.cfg
        p = cfg.oriented_ps()[0]
        info = self.alpha(p)
        write_json(self.path("alpha.json"), info)

        def one(k):
            tr = simulate_right_edge(OrientedField(p, cfg.seed, k), cfg.horizon_n, Initial.ORIGIN_CONDITIONED)
            return break_points(tr, cfg.horizon_h)

        seqs = self.stage("break_points", ordered_map, one, range(cfg.traces), self.threads)
        rows = [(k, i + 1, t, tau, x) for k, s in enumerate(seqs) for i, (t, tau, x) in enumerate(s.entries())]
        write_csv(self.path("breakpoints.csv"), ["trace", "i", "T_i", "tau_i", "X_i"], rows)
        write_json(self.path("breakpoints_summary.json"), kuczek_summary(seqs, info["alphaHat"], info["stderr"]))


def kuczek_summary(seqs, alpha_hat, alpha_se=0.0):
    """Checks of the i.i.d. break-point structure pooled over traces."""
    tau = np.concatenate([s.tau for s in seqs]).astype(float)
    X = np.concatenate([s.X for s in seqs]).astype(float)
    resid = X - alpha_hat * tau
    k = len(resid)
    mean = float(resid.mean())
    se_sample = float(resid.std(ddof=1) / math.sqrt(k)) if k > 1 else 0.0
    se = math.hypot(se_sample, alpha_se * float(tau.mean()))
    # lag-1 autocorrelation within traces, pooled
    pairs = [(s.X[:-1].astype(float), s.X[1:].astype(float)) for s in seqs if len(s) > 2]
    a = np.concatenate([p[0] for p in pairs]) if pairs else np.zeros(0)
    b = np.concatenate([p[1] for p in pairs]) if pairs else np.zeros(0)
    m = X.mean()
    denom = float(((X - m) ** 2).mean())
    rho = float(((a - m) * (b - m)).mean() / denom) if len(a) and denom > 0 else 0.0
    rho_se = 1.0 / math.sqrt(len(a)) if len(a) else float("inf")
    return {
        "entries": k,
        "maxAbsXMinusTau": float(np.max(np.abs(X) - tau)) if k else 0.0,
        "boundHolds": bool(np.all(np.abs(X) <= tau)),
        "meanResidual": mean,
        "meanResidualStderr": se,
        "lag1Autocorr": rho,
        "lag1Stderr": rho_se,
        "meanTau": float(tau.mean()),
        "meanX": float(X.mean()),
    }


_DISPATCH = {
    ExperimentKind.XI_SCAN: _Runner.run_xi,
    ExperimentKind.CHI_SCAN: _Runner.run_chi,
    ExperimentKind.SHAPE: _Runner.run_shape,
    ExperimentKind.CURVATURE: _Runner.run_curvature,
    ExperimentKind.ALPHA_CURVE: _Runner.run_alpha,
    ExperimentKind.BREAKPOINTS: _Runner.run_breakpoints,
    ExperimentKind.FLAT_SEGMENT: _Runner.run_flatseg,
}


def run(config: ExperimentConfig, threads=None) -> RunManifest:
    """Run one experiment, write its artifacts and ``manifest.json`` into ``config.out``."""
    config.validate()
    threads = resolve_threads(config.threads if threads is None else threads)
    out = Path(config.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {out}: {exc}") from exc
    t0 = time.perf_counter()
    runner = _Runner(config, threads)
    (out / "config.ini").write_text(config.to_ini(portable=True), encoding="utf-8", newline="\n")
    runner.written.append("config.ini")
    _DISPATCH[config.kind](runner)
    files = [
        {"path": name, "sha256": sha256_file(out / name), "bytes": (out / name).stat().st_size}
        for name in sorted(set(runner.written))
    ]
    manifest = RunManifest(config.echo(), __version__, round(time.perf_counter() - t0, 6), runner.stages, files)
    write_json(out / "manifest.json", manifest.to_dict())
    return manifest


# ---------------------------------------------------------------------------
# plot data


def _read_csv(path):
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    return (rows[0], rows[1:]) if rows else ([], [])


def emit_plot_data(paths, out_path):
    """Long-format ``series,x,y,yerr`` rows from known artifact CSVs.

    Sample files from xi scans become a per-n median series plus the fitted
    power law evaluated on the same n grid.
    """
    rows = []
    for path in paths:
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"missing input {path}")
        header, body = _read_csv(path)
        if not body:
            continue
        if header == ["theta", "rB", "stderr"]:
            rows += [("rB", r[0], r[1], r[2]) for r in body]
        elif header == ["n", "replicateId", "hn"]:
            from .fluctuation import FluctuationSample

            samples = [FluctuationSample(int(r[0]), float(r[2]), int(r[1]), 0) for r in body]
            ns, med = median_curve(samples)
            rows += [("median_hn", n, m, "") for n, m in zip(ns, med)]
            try:
                fit = estimate_xi(samples)
            except ValueError:
                continue
            rows += [("fit_hn", n, math.exp(fit.intercept) * n**fit.exponent, "") for n in ns]
        elif header == ["n", "varT", "stderr"]:
            rows += [("varT", r[0], r[1], r[2]) for r in body]
        elif header == ["n", "rPrime"]:
            rows += [("rPrime", r[0], r[1], "") for r in body]
        elif header == ["p", "N", "alphaHat", "stderr"]:
            rows += [("alphaHat", r[0], r[2], r[3]) for r in body]
        elif header[:1] == ["trace"] and "X_i" in header:
            rows += [("X_vs_tau", r[3], r[4], "") for r in body]
        else:
            raise ValueError(f"unrecognised artifact layout in {path}: {header}")
    write_csv(out_path, ["series", "x", "y", "yerr"], [(r[0],) + tuple(_num(v) for v in r[1:]) for r in rows])
    return len(rows)


def _num(v):
    if isinstance(v, str):
        if v == "":
            return v
        try:
            return int(v)
        except ValueError:
            return float(v)
    return v
