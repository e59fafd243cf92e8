"""Scenario configuration, deterministic run orchestration and artifacts.

A scenario is one YAML document (see ``CONFIG_SCHEMA``); a run executes the
requested analyses and writes a manifest plus CSV/JSON/binary outputs into
the output directory.  Given the same config, runs are deterministic:
identical CSV bytes, identical manifests up to the recorded timings.
"""

from __future__ import annotations

import hashlib
import json
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml
import jsonschema

from . import __version__ as _pkg_version
from .catalog import build_field, valid_ids
from .conservation import conservation_report
from .deviation import integrate_deviation, pairwise_sweep, stability_indicator
from .dynamics import (DualGeodesicFlow, FlatHamiltonFlow, IntegratorConfig,
                       PhaseState, dual_equivalence, integrate,
                       lowered_velocity)
from .errors import ConfigError, ParseError, SchemaError, UnknownCatalogId
from .fields import Gauge3, Gauge5, ParticleParams, conformal_extended_metric
from .maxwell5d import (Grid4, fourier_modes, mode_residual, save_grid_field,
                        load_grid_field, stencil_symbol, spatial_stencil_symbol,
                        zero_mode_reduce)
from .errors import NonConvergentTail

__all__ = ["ScenarioConfig", "RunArtifact", "load_config", "run",
           "CONFIG_SCHEMA", "write_trajectory_csv"]

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["mode", "field", "particle", "initial", "span"],
    "properties": {
        "mode": {"enum": ["nr", "rel"]},
        "field": {
            "type": "object",
            "additionalProperties": False,
            "required": ["id"],
            "properties": {
                "id": {"type": "string"},
                "params": {"type": "object"},
            },
        },
        "particle": {
            "type": "object",
            "additionalProperties": False,
            "required": ["m"],
            "properties": {
                "m": {"type": "number", "exclusiveMinimum": 0},
                "e": {"type": "number"},
            },
        },
        "initial": {
            "type": "object",
            "additionalProperties": False,
            "required": ["x", "p"],
            "properties": {
                "x": {"type": "array", "items": {"type": "number"},
                      "minItems": 3, "maxItems": 4},
                "p": {"type": "array", "items": {"type": "number"},
                      "minItems": 3, "maxItems": 4},
            },
        },
        "span": {"type": "number", "exclusiveMinimum": 0,
                 "description": "span must be positive"},
        "integrator": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "method": {"enum": ["dopri45", "rk4"]},
                "rel_tol": {"type": "number", "exclusiveMinimum": 0},
                "abs_tol": {"type": "number", "exclusiveMinimum": 0},
                "max_step": {"type": "number", "exclusiveMinimum": 0},
                "max_steps": {"type": "integer", "exclusiveMinimum": 0},
            },
        },
        "analyses": {
            "type": "array",
            "items": {"enum": ["equivalence", "deviation", "conservation",
                               "fields"]},
        },
        "deviation": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "xi0": {"type": "array", "items": {"type": "number"}},
                "scales": {"type": "array", "items": {"type": "number"}},
                "span": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "fields_grid": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "shape": {"type": "array", "items": {"type": "integer"},
                          "minItems": 4, "maxItems": 4},
                "origin": {"type": "array", "items": {"type": "number"},
                           "minItems": 4, "maxItems": 4},
                "spacing": {"type": "array", "items": {"type": "number"},
                            "minItems": 4, "maxItems": 4},
                "ntau": {"type": "integer", "minimum": 4},
                "tau0": {"type": "number"},
                "dtau": {"type": "number", "exclusiveMinimum": 0},
                "sigma": {"enum": [1, -1]},
            },
        },
        "output_dir": {"type": "string"},
        "seed": {"type": "integer"},
    },
}

_DEFAULTS = {
    "particle": {"e": 0.0},
    "integrator": {"method": "dopri45", "rel_tol": 1e-10, "abs_tol": 1e-12,
                   "max_step": 0.05, "max_steps": 2_000_000},
    "analyses": ["equivalence"],
    "deviation": {"scales": [1.0, 0.5]},
    "fields_grid": {"shape": [8, 8, 8, 8], "origin": [-2.0] * 4,
                    "spacing": [0.5] * 4, "ntau": 16, "tau0": 0.0,
                    "dtau": 0.392699081698724, "sigma": 1},
    "seed": 20260809,
}


@dataclass
class ScenarioConfig:
    mode: str
    field_id: str
    field_params: dict
    particle: ParticleParams
    x0: np.ndarray
    p0: np.ndarray
    span: float
    integrator: IntegratorConfig
    analyses: list
    deviation: dict
    fields_grid: dict
    output_dir: str
    seed: int
    raw: dict = field(repr=False, default_factory=dict)

    @property
    def dim(self):
        return 3 if self.mode == "nr" else 4

    def build_field(self):
        return build_field(self.field_id, self.mode, self.field_params)

    def config_hash(self):
        canon = json.dumps(self.raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()


def load_config(path) -> ScenarioConfig:
    """Load and validate a scenario config, listing every schema violation."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(f"cannot read config {path}: {exc}") from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        pos = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        raise ParseError(f"config parse error{pos}: {exc}") from exc
    if not isinstance(data, dict):
        raise SchemaError([("<root>", "config must be a mapping")])

    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    violations = []
    for err in sorted(validator.iter_errors(data), key=lambda e: list(e.path)):
        loc = ".".join(str(p) for p in err.path) or "<root>"
        if list(err.path) == ["span"]:
            violations.append((loc, "span must be positive"))
        else:
            violations.append((loc, err.message))
    if violations:
        raise SchemaError(violations)

    merged = dict(data)
    for key, dflt in _DEFAULTS.items():
        if isinstance(dflt, dict):
            merged[key] = {**dflt, **merged.get(key, {})}
        else:
            merged.setdefault(key, dflt)

    mode = merged["mode"]
    dim = 3 if mode == "nr" else 4
    extra = []
    if len(merged["initial"]["x"]) != dim or len(merged["initial"]["p"]) != dim:
        extra.append(("initial", f"x and p must have {dim} components in mode {mode}"))
    if extra:
        raise SchemaError(extra)

    field_id = merged["field"]["id"]
    field_params = merged["field"].get("params", {})
    # raises UnknownCatalogId for unknown or mode-invalid ids
    build_field(field_id, mode, field_params)

    out_dir = merged.get("output_dir", f"runs/{path.stem}")
    particle = ParticleParams(m=float(merged["particle"]["m"]),
                              e=float(merged["particle"].get("e", 0.0)))
    integ = merged["integrator"]
    return ScenarioConfig(
        mode=mode,
        field_id=field_id,
        field_params=dict(field_params),
        particle=particle,
        x0=np.asarray(merged["initial"]["x"], dtype=float),
        p0=np.asarray(merged["initial"]["p"], dtype=float),
        span=float(merged["span"]),
        integrator=IntegratorConfig(method=integ["method"],
                                    rel_tol=float(integ["rel_tol"]),
                                    abs_tol=float(integ["abs_tol"]),
                                    max_step=float(integ["max_step"]),
                                    max_steps=int(integ["max_steps"])),
        analyses=list(merged["analyses"]),
        deviation=dict(merged["deviation"]),
        fields_grid=dict(merged["fields_grid"]),
        output_dir=out_dir,
        seed=int(merged["seed"]),
        raw=merged,
    )


def _fmt(v):
    if isinstance(v, float) and np.isnan(v):
        return "nan"
    return format(float(v), ".17g")


def write_trajectory_csv(path, traj, velocity_fn, k_arr, mp2_arr=None):
    """Trajectory CSV: header s,x0..x{d-1},v0..v{d-1},K,mp2, one row per
    accepted step; byte-deterministic float formatting."""
    d = len(velocity_fn(traj.t[0], traj.y[0]))
    header = ("s," + ",".join(f"x{i}" for i in range(d)) + ","
              + ",".join(f"v{i}" for i in range(d)) + ",K,mp2")
    lines = [header]
    for n, (t, y) in enumerate(zip(traj.t, traj.y)):
        x = y[:d]
        v = velocity_fn(t, y)
        k = k_arr[n] if k_arr is not None else float("nan")
        mp2 = mp2_arr[n] if mp2_arr is not None else float("nan")
        vals = [t, *x, *v, k, mp2]
        lines.append(",".join(_fmt(v_) for v_ in vals))
    Path(path).write_text("\n".join(lines) + "\n")


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


@dataclass
class RunArtifact:
    outdir: Path
    manifest: dict
    ok: bool


def _analysis_equivalence(cfg: ScenarioConfig, outdir: Path):
    fields = cfg.build_field()
    rep = dual_equivalence(cfg.particle, fields, cfg.x0, cfg.p0, cfg.span,
                           cfg.integrator, mode=cfg.mode)
    flow_h = rep.hamilton.flow
    write_trajectory_csv(outdir / "hamilton.csv", rep.hamilton,
                         lambda t, y: flow_h.kinetic_velocity(t, y),
                         rep.hamilton.diag.get("K"),
                         rep.hamilton.diag.get("mp2"))
    d = cfg.dim
    write_trajectory_csv(outdir / "dual.csv", rep.dual,
                         lambda t, y: y[d:2 * d],
                         rep.dual.diag.get("K"), rep.dual.diag.get("mp2"))
    report = {
        "max_position_error": rep.max_position_error,
        "max_velocity_error": rep.max_velocity_error,
        "span_covered": rep.span_covered,
        "energy": rep.energy,
        "samples": rep.samples,
        "passed": rep.max_position_error <= 1e-6,
    }
    _write_json(outdir / "equivalence.json", report)
    return report["passed"], report, ["hamilton.csv", "dual.csv", "equivalence.json"]


def _scenario_metric(cfg: ScenarioConfig, fields):
    flow_h = FlatHamiltonFlow(cfg.particle, fields, cfg.dim)
    energy = flow_h.energy(0.0, np.concatenate([cfg.x0, cfg.p0]))
    params_e = cfg.particle.with_energy(energy)
    return conformal_extended_metric(params_e, mode=cfg.mode, source=fields), params_e


def _analysis_deviation(cfg: ScenarioConfig, outdir: Path):
    fields = cfg.build_field()
    metric, params_e = _scenario_metric(cfg, fields)
    gauge_vec = metric.gauge
    from .dynamics import GeodesicState
    v0 = lowered_velocity(params_e, metric, gauge_vec,
                          PhaseState(cfg.x0, cfg.p0, 0.0))
    st0 = GeodesicState(cfg.x0, v0, 0.0)
    dev_cfg = cfg.deviation
    xi0 = np.asarray(dev_cfg.get("xi0", [1e-3] + [0.0] * (cfg.dim - 1)), dtype=float)
    span = float(dev_cfg.get("span", cfg.span))
    scales = list(dev_cfg.get("scales", [1.0, 0.5]))
    mms, results = pairwise_sweep(params_e, metric, st0, xi0, span,
                                  tuple(scales), cfg.integrator)
    ratios = [mms[i] / mms[i + 1] if mms[i + 1] > 0 else float("inf")
              for i in range(len(mms) - 1)]
    flow = DualGeodesicFlow(params_e, metric)
    base = integrate(flow, np.concatenate([st0.x, st0.v_low]), 0.0, span,
                     cfg.integrator)
    dev = integrate_deviation(params_e, metric, base, xi0, config=cfg.integrator)
    stab = stability_indicator(dev)
    header = ("s," + ",".join(f"xi{i}" for i in range(cfg.dim)) + ","
              + ",".join(f"dxi{i}" for i in range(cfg.dim)) + ",norm_xi")
    lines = [header]
    for n, s in enumerate(dev.s):
        vals = [s, *dev.xi[n], *dev.dxi[n], float(np.linalg.norm(dev.xi[n]))]
        lines.append(",".join(_fmt(v) for v in vals))
    (outdir / "deviation.csv").write_text("\n".join(lines) + "\n")
    _write_json(outdir / "stability.json", stab.to_dict())
    report = {"max_mismatches": mms, "scales": scales, "ratios": ratios,
              "stability": stab.to_dict()}
    _write_json(outdir / "pairwise.json", report)
    return True, report, ["deviation.csv", "stability.json", "pairwise.json"]


def _analysis_conservation(cfg: ScenarioConfig, outdir: Path):
    if cfg.mode != "rel":
        raise ConfigError("conservation analysis requires mode 'rel'")
    fields = cfg.build_field()
    if not isinstance(fields, Gauge5):
        raise ConfigError("conservation analysis requires a gauge-type field")
    flow = FlatHamiltonFlow(cfg.particle, fields, 4)
    traj = integrate(flow, np.concatenate([cfg.x0, cfg.p0]), 0.0, cfg.span,
                     cfg.integrator)
    metric, params_e = _scenario_metric(cfg, fields)
    rep = conservation_report(cfg.particle, fields, traj, metric=metric)
    write_trajectory_csv(outdir / "trajectory.csv", traj,
                         lambda t, y: flow.kinetic_velocity(t, y),
                         traj.diag.get("K"), traj.diag.get("mp2"))
    _write_json(outdir / "conservation.json", rep.to_dict())
    return rep.conserved, rep.to_dict(), ["trajectory.csv", "conservation.json"]


def _analysis_fields(cfg: ScenarioConfig, outdir: Path):
    if cfg.mode != "rel":
        raise ConfigError("fields analysis requires mode 'rel'")
    gauge = cfg.build_field()
    if not isinstance(gauge, Gauge5):
        raise ConfigError("fields analysis requires a gauge-type field")
    g = cfg.fields_grid
    grid = Grid4(shape=tuple(g["shape"]), origin=tuple(g["origin"]),
                 spacing=tuple(g["spacing"]), ntau=int(g["ntau"]),
                 tau0=float(g["tau0"]), dtau=float(g["dtau"]),
                 sigma=int(g["sigma"]))
    a = np.zeros(grid.full_shape + (5,))
    # sample the five components on the grid via the field callables
    axes = [grid.axis(i) for i in range(4)]
    taus = grid.axis(4)
    for idx in np.ndindex(*grid.shape):
        xv = np.array([axes[i][idx[i]] for i in range(4)])
        for it, tau in enumerate(taus):
            a[idx + (it,)][:4] = gauge.a.value(xv, tau)
            a[idx + (it, 4)] = gauge.a5.value(xv, tau)
    bin_path, meta_path = save_grid_field(outdir / "a_field", a, grid)
    back, _ = load_grid_field(outdir / "a_field")
    roundtrip_ok = bool(np.array_equal(back, a))

    modes = fourier_modes(a, grid)
    amps = [float(np.max(np.abs(m.amplitude))) for m in modes]
    k_dom = int(np.argmax(amps))
    dom = modes[k_dom]
    # residual of the dominant mode against its own discrete-symbol source
    kvec = np.asarray(cfg.field_params.get("k", [0.0, 1.0, 0.0, 0.0]), dtype=float)
    eig = grid.sigma * stencil_symbol(dom.s, grid.dtau) ** 2 \
        + spatial_stencil_symbol(kvec, grid)
    resid = mode_residual(dom, eig * dom.amplitude, grid)
    max_resid = float(np.max(np.abs(resid)))

    zero_mode = None
    try:
        A, J, cont = zero_mode_reduce(a, np.zeros_like(a), grid)
        zero_mode = {"max_A": float(np.max(np.abs(A))),
                     "continuity_residual": float(np.max(np.abs(cont)))}
    except NonConvergentTail as exc:
        zero_mode = {"skipped": str(exc)}

    report = {
        "dominant_mode_s": dom.s,
        "mode_residual_max": max_resid,
        "mode_amplitudes_top": sorted(amps, reverse=True)[:3],
        "zero_mode": zero_mode,
        "roundtrip_ok": roundtrip_ok,
        "passed": max_resid <= 1e-8 and roundtrip_ok,
    }
    _write_json(outdir / "fields.json", report)
    return report["passed"], report, ["a_field.f64", "a_field.json", "fields.json"]


_ANALYSES = {
    "equivalence": _analysis_equivalence,
    "deviation": _analysis_deviation,
    "conservation": _analysis_conservation,
    "fields": _analysis_fields,
}


def run(cfg: ScenarioConfig) -> RunArtifact:
    """Execute the requested analyses; deterministic given the config."""
    outdir = Path(os.environ.get("DUALGEO_OUT", cfg.output_dir))
    outdir.mkdir(parents=True, exist_ok=True)
    np.random.seed(cfg.seed % (2 ** 32))
    manifest = {
        "config_hash": cfg.config_hash(),
        "package_version": _pkg_version,
        "numpy_version": np.__version__,
        "seed": cfg.seed,
        "analyses": {},
        "files": [],
        "timings_s": {},
    }
    ok = True
    for name in cfg.analyses:
        t0 = time.perf_counter()
        entry = {}
        try:
            passed, report, files = _ANALYSES[name](cfg, outdir)
            entry = {"status": "ok" if passed else "failed", "report": report}
            manifest["files"].extend(files)
            ok = ok and passed
        except Exception as exc:  # recorded, run continues
            entry = {"status": "error", "error": f"{type(exc).__name__}: {exc}"}
            ok = False
        manifest["timings_s"][name] = round(time.perf_counter() - t0, 3)
        manifest["analyses"][name] = entry
    _write_json(outdir / "manifest.json", manifest)
    return RunArtifact(outdir=outdir, manifest=manifest, ok=ok)
