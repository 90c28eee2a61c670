"""Experiment configuration, validation, dispatch, and report emission.

A configuration is a flat JSON object with a ``probe`` discriminator.
``run`` resolves defaults, dispatches to the named probe, and returns a
``ReportEnvelope`` whose numeric payload is byte-stable: re-running the
echoed config reproduces the payload exactly, regardless of the thread
count (wall time lives outside the payload).
"""

from __future__ import annotations

import csv
import difflib
import io
import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import zoo
from .backend import NUMBA_ENABLED, default_threads
from .errors import ConfigError
from .flow import flow_deviation_report, integrate_flow
from .gradient import (feller_probe, finite_difference_gradient, get_f,
                       malliavin_gradient, pathwise_gradient)
from .hormander import build_hierarchy, local_constants, spanning_dimension
from .malliavin import inverse_moment_probe, malliavin_matrix, tail_probe
from .models import integrate_path, sample_noise
from .runners import map_paths

__all__ = ["ExperimentConfig", "ReportEnvelope", "validate_config", "run",
           "VERSION"]

VERSION = "0.1.0"

_PROBES = ("check", "constants", "simulate", "malliavin", "tail",
           "moments", "gradient", "feller", "zoo")

_NO_MODEL = ("zoo",)

# key -> (type tag, predicate, description)
_COMMON = {
    "probe": ("str", None, "probe name"),
    "model": ("str", None, "zoo model name"),
    "x0": ("floatlist", None, "start point"),
    "T": ("float", lambda v: v > 0, "must be > 0"),
    "dt": ("float", lambda v: v > 0, "must be > 0"),
    "n_paths": ("int", lambda v: v >= 1, "must be >= 1"),
    "seed": ("int", None, ""),
    "threads": ("int", lambda v: v >= 1, "must be >= 1"),
    "out": ("str", None, "output path"),
}

_PER_PROBE = {
    "check": {"point": ("floatlist", None, ""),
              "j0": ("int", lambda v: v >= 1, "must be >= 1"),
              "tol": ("float", lambda v: v > 0, "must be > 0")},
    "constants": {"R": ("float", lambda v: v > 0, "must be > 0"),
                  "samples": ("int", lambda v: v >= 8, "must be >= 8"),
                  "j0": ("int", lambda v: v >= 1, "must be >= 1")},
    "simulate": {},
    "malliavin": {},
    "tail": {"eps": ("floatlist", None, "descending positives"),
             "directions": ("int", lambda v: v >= 32, "must be >= 32")},
    "moments": {"p": ("floatlist", None, "positive exponents"),
                "schedule": ("intlist", None, "increasing sample sizes")},
    "gradient": {"f": ("str", None, "test function name"),
                 "xi": ("floatlist", None, "direction"),
                 "estimator": ("str", None,
                               "malliavin | pathwise | fd"),
                 "fd_h": ("float", lambda v: v > 0, "must be > 0")},
    "feller": {"f": ("str", None, "test function name"),
               "radii": ("floatlist", None, "descending positives"),
               "l": ("float", lambda v: v > 0, "must be > 0"),
               "direction": ("floatlist", None, "")},
    "zoo": {},
}

_DEFAULTS = {
    "T": 1.0, "dt": 1e-3, "n_paths": 1000, "seed": 0,
    "tol": 1e-8, "R": 1.0, "samples": 256,
    "directions": 64, "estimator": "malliavin", "fd_h": 1e-2,
    "f": "halfspace",
}


class ExperimentConfig(dict):
    """A validated experiment configuration (plain dict semantics)."""


def _type_ok(tag, value):
    if tag == "str":
        return isinstance(value, str)
    if tag == "int":
        return isinstance(value, int) and not isinstance(value, bool)
    if tag == "float":
        return isinstance(value, (int, float)) and not isinstance(value,
                                                                  bool)
    if tag == "floatlist":
        return (isinstance(value, (list, tuple))
                and all(isinstance(v, (int, float))
                        and not isinstance(v, bool) for v in value))
    if tag == "intlist":
        return (isinstance(value, (list, tuple))
                and all(isinstance(v, int) and not isinstance(v, bool)
                        for v in value))
    return False


def validate_config(config: dict) -> List[str]:
    """Schema check only: no computation.  Returns a list of diagnostics;
    empty means valid."""
    diags = []
    if not isinstance(config, dict):
        return ["config must be a JSON object"]
    probe = config.get("probe")
    if probe is None:
        return ["missing required key 'probe'"]
    if probe not in _PROBES:
        close = difflib.get_close_matches(str(probe), _PROBES, n=3)
        hint = f"; did you mean {', '.join(close)}?" if close else ""
        return [f"unknown probe '{probe}'{hint}"]

    allowed = dict(_COMMON)
    allowed.update(_PER_PROBE[probe])
    for key, value in config.items():
        if key not in allowed:
            close = difflib.get_close_matches(key, allowed, n=1)
            hint = f" (did you mean '{close[0]}'?)" if close else ""
            diags.append(f"unknown key '{key}'{hint}")
            continue
        tag, pred, desc = allowed[key]
        if not _type_ok(tag, value):
            diags.append(f"key '{key}' must be of type {tag}")
            continue
        if pred is not None and not pred(value):
            diags.append(f"key '{key}' out of range: {desc}")

    if probe not in _NO_MODEL:
        name = config.get("model")
        if name is None:
            diags.append("missing required key 'model'")
        elif isinstance(name, str) and name not in zoo.zoo_names():
            close = difflib.get_close_matches(name, zoo.zoo_names(), n=3)
            hint = f"; suggestions: {', '.join(close)}" if close \
                else f"; available: {', '.join(zoo.zoo_names())}"
            diags.append(f"unknown model '{name}'{hint}")

    if probe == "tail":
        eps = config.get("eps")
        if eps is None:
            diags.append("missing required key 'eps'")
        elif _type_ok("floatlist", eps):
            arr = list(eps)
            if any(v <= 0 for v in arr) or \
                    any(b >= a for a, b in zip(arr, arr[1:])):
                diags.append("key 'eps' must be positive and descending")
    if probe == "moments":
        for key, desc in (("p", "positive"), ("schedule", "increasing")):
            if config.get(key) is None:
                diags.append(f"missing required key '{key}'")
        p = config.get("p")
        if p is not None and _type_ok("floatlist", p) \
                and any(v <= 0 for v in p):
            diags.append("key 'p' out of range: positive exponents")
        sch = config.get("schedule")
        if sch is not None and _type_ok("intlist", sch) and (
                any(v < 1 for v in sch)
                or any(b <= a for a, b in zip(sch, sch[1:]))):
            diags.append("key 'schedule' must be increasing and >= 1")
    if probe == "feller" and config.get("radii") is None:
        diags.append("missing required key 'radii'")
    if probe == "gradient":
        est = config.get("estimator", _DEFAULTS["estimator"])
        if isinstance(est, str) and est not in ("malliavin", "pathwise",
                                                "fd"):
            diags.append("key 'estimator' must be malliavin, pathwise "
                         "or fd")
    return diags


@dataclass
class ReportEnvelope:
    """Probe output: config echo, byte-stable numeric payload, CSV
    sidecar paths, wall time, and exclusion counters."""

    config: dict
    version: str
    payload: dict
    csv_paths: List[str] = field(default_factory=list)
    wall_time_s: float = 0.0
    exclusions: dict = field(default_factory=dict)
    backend: str = "numba" if NUMBA_ENABLED else "python"

    def payload_json(self) -> str:
        """The byte-stable part (excludes wall time and file paths)."""
        return json.dumps(
            {"config": self.config, "version": self.version,
             "payload": self.payload, "exclusions": self.exclusions},
            sort_keys=True)

    def to_json(self) -> str:
        return json.dumps(
            {"config": self.config, "version": self.version,
             "payload": self.payload, "exclusions": self.exclusions,
             "csv_paths": self.csv_paths, "backend": self.backend,
             "wall_time_s": self.wall_time_s},
            sort_keys=True, indent=1)


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, float) and not np.isfinite(obj):
        return repr(obj)
    return obj


def _resolve(config: dict) -> dict:
    diags = validate_config(config)
    if diags:
        raise ConfigError("; ".join(diags))
    cfg = dict(config)
    probe = cfg["probe"]
    for key, val in _DEFAULTS.items():
        allowed = dict(_COMMON)
        allowed.update(_PER_PROBE[probe])
        if key in allowed and key not in cfg:
            cfg[key] = val
    if probe not in _NO_MODEL:
        entry = zoo.get_model(cfg["model"])
        if "x0" not in cfg or cfg["x0"] is None:
            cfg["x0"] = [float(v) for v in entry.x0()]
        if probe == "check" and "j0" not in cfg:
            cfg["j0"] = int(entry.expected["j0"])
        if probe == "constants" and "j0" not in cfg:
            cfg["j0"] = int(entry.expected["j0"])
        if probe == "check" and "point" not in cfg:
            cfg["point"] = list(cfg["x0"])
    if "threads" not in cfg:
        cfg["threads"] = default_threads()
    if probe == "gradient" and "xi" not in cfg:
        entry = zoo.get_model(cfg["model"])
        xi = [0.0] * entry.spec.dim
        xi[0] = 1.0
        cfg["xi"] = xi
    cfg.pop("out", None)
    return cfg


def _csv_table(rows: List[dict]) -> str:
    if not rows:
        return ""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    cols = list(rows[0])
    writer.writerow(cols)
    for row in rows:
        writer.writerow([repr(row[c]) if isinstance(row[c], float)
                         else row[c] for c in cols])
    return buf.getvalue()


def run(config: dict, out: Optional[str] = None) -> ReportEnvelope:
    """Validate, dispatch, and package the probe named by the config."""
    cfg = _resolve(config)
    probe = cfg["probe"]
    t0 = time.perf_counter()
    payload, tables, exclusions = _dispatch(probe, cfg)
    wall = time.perf_counter() - t0

    env = ReportEnvelope(config=_jsonable(cfg), version=VERSION,
                         payload=_jsonable(payload),
                         wall_time_s=wall,
                         exclusions=_jsonable(exclusions))
    if out:
        out_path = Path(out)
        out_path.parent.mkdir(parents=True, exist_ok=True)
        for tname, rows in tables.items():
            side = out_path.with_name(f"{out_path.stem}_{tname}.csv")
            side.write_text(_csv_table(_jsonable_rows(rows)))
            env.csv_paths.append(str(side))
        out_path.write_text(env.to_json())
    return env


def _jsonable_rows(rows):
    return [{k: _jsonable(v) for k, v in row.items()} for row in rows]


def _dispatch(probe: str, cfg: dict):
    tables = {}
    exclusions = {}

    if probe == "zoo":
        return {"models": zoo.zoo_table()}, tables, exclusions

    entry = zoo.get_model(cfg["model"])
    spec = entry.spec
    x0 = np.asarray(cfg["x0"], dtype=float)
    threads = cfg["threads"]

    if probe == "check":
        hier = build_hierarchy(spec, cfg["j0"])
        rep = spanning_dimension(hier, np.asarray(cfg["point"], float),
                                 cfg["tol"])
        payload = {
            "point": rep.point, "numerical_rank": rep.numerical_rank,
            "spans": rep.spans, "modulus": rep.modulus,
            "singular_values": rep.singular_values, "tol": rep.tol,
            "n_fields": rep.matrix.shape[1], "uses_fd": rep.uses_fd,
        }
        return payload, tables, exclusions

    if probe == "constants":
        hier = build_hierarchy(spec, cfg["j0"])
        lc = local_constants(spec, hier, cfg["R"], cfg["samples"])
        payload = {"R": lc.R, "c": lc.c, "R1": lc.R1, "R3": lc.R3,
                   "C0": lc.C0, "n_samples": lc.n_samples,
                   "modulus_inf": lc.modulus_inf,
                   "noise_inf": lc.noise_inf}
        return payload, tables, exclusions

    if probe == "simulate":
        n_steps = max(1, int(round(cfg["T"] / cfg["dt"])))

        def worker(i):
            grid = sample_noise(spec.d, cfg["T"], n_steps, cfg["seed"], i)
            path = integrate_path(spec, x0, grid)
            return path.final.copy(), path.exploded_step

        results = map_paths(worker, cfg["n_paths"], threads)
        finals = np.array([r[0] for r in results if r[1] is None])
        n_exploded = sum(1 for r in results if r[1] is not None)
        exclusions["exploded"] = n_exploded
        payload = {
            "n_steps": n_steps,
            "n_paths": cfg["n_paths"],
            "explosion_rate": n_exploded / cfg["n_paths"],
            "final_mean": finals.mean(axis=0) if finals.size else [],
            "final_std": finals.std(axis=0) if finals.size else [],
        }
        if cfg["n_paths"] == 1 and finals.size:
            payload["final_state"] = finals[0]
        return payload, tables, exclusions

    if probe == "malliavin":
        n_steps = max(1, int(round(cfg["T"] / cfg["dt"])))
        m = spec.m

        def worker(i):
            grid = sample_noise(spec.d, cfg["T"], n_steps, cfg["seed"], i)
            path = integrate_path(spec, x0, grid)
            if path.exploded:
                return None
            flow = integrate_flow(spec, path)
            if flow.exploded:
                return None
            rec = malliavin_matrix(spec, path, flow)
            dev = flow_deviation_report(flow)[-1]
            marg = float(np.linalg.eigvalsh(
                0.5 * (rec.M[m:, m:] + rec.M[m:, m:].T))[0])
            return rec, dev, marg

        results = map_paths(worker, cfg["n_paths"], threads)
        good = [r for r in results if r is not None]
        exclusions["exploded"] = len(results) - len(good)
        if not good:
            payload = {"n_valid": 0}
            return payload, tables, exclusions
        lam_min = np.array([r[0].eigenvalues[0] for r in good])
        dets = np.array([r[0].det_M for r in good])
        margs = np.array([r[2] for r in good])
        devs = np.array([r[1] for r in good])
        payload = {
            "n_valid": len(good),
            "lambda_min_max": float(lam_min.max()),
            "lambda_min_min": float(lam_min.min()),
            "noisy_marginal_lambda_min_min": float(margs.min()),
            "det_mean": float(dets.mean()),
            "flow_deviation_max": float(devs.max()),
        }
        if cfg["n_paths"] == 1:
            rec = good[0][0]
            payload.update({
                "M": rec.M, "M_tilde": rec.M_tilde,
                "eigenvalues": rec.eigenvalues, "det_M": rec.det_M,
                "det_M_tilde": rec.det_M_tilde,
                "factorization_residual": rec.factorization_residual,
            })
        return payload, tables, exclusions

    if probe == "tail":
        rep = tail_probe(spec, x0, cfg["T"], cfg["eps"], cfg["n_paths"],
                         cfg["directions"], cfg["seed"], dt=cfg["dt"],
                         threads=threads)
        exclusions["exploded"] = rep.n_excluded
        payload = {
            "eps": rep.eps_grid, "p_exact": rep.p_exact,
            "p_exact_isotonic": rep.p_exact_isotonic,
            "wilson_lo": rep.wilson_lo, "wilson_hi": rep.wilson_hi,
            "p_sampled": rep.p_sampled, "slope": rep.slope,
            "directions": rep.directions_sampled, "n_paths": rep.n_paths,
        }
        tables["tail"] = [
            {"eps": float(e), "value": float(pe), "stderr":
                float((hi - lo) / 3.92) if rep.n_paths else 0.0,
             "n": rep.n_paths, "sampled": float(ps)}
            for e, pe, lo, hi, ps in zip(
                rep.eps_grid, rep.p_exact, rep.wilson_lo, rep.wilson_hi,
                rep.p_sampled)]
        return payload, tables, exclusions

    if probe == "moments":
        rep = inverse_moment_probe(spec, x0, cfg["T"], cfg["p"],
                                   cfg["schedule"], cfg["seed"],
                                   dt=cfg["dt"], threads=threads)
        exclusions["exploded"] = rep.n_excluded
        exclusions["nonpositive_det"] = rep.n_nonpositive
        payload = {
            "p": rep.p_values, "schedule": rep.schedule,
            "estimates": rep.estimates,
            "log_estimates": rep.log_estimates,
            "stability_ratios": rep.stability_ratios,
            "n_valid": rep.n_valid,
        }
        rows = []
        for ip, p in enumerate(rep.p_values):
            for isch, nk in enumerate(rep.schedule):
                rows.append({"p": float(p), "n": int(nk),
                             "value": float(rep.estimates[ip, isch]),
                             "stderr": float("nan"),
                             "n_valid": int(rep.n_valid[isch])})
        tables["moments"] = rows
        return payload, tables, exclusions

    if probe == "gradient":
        f = get_f(cfg["f"])
        xi = np.asarray(cfg["xi"], dtype=float)
        est = cfg["estimator"]
        if est == "malliavin":
            g = malliavin_gradient(spec, x0, cfg["T"], f, xi,
                                   cfg["n_paths"], cfg["seed"],
                                   dt=cfg["dt"], threads=threads)
        elif est == "pathwise":
            g = pathwise_gradient(spec, x0, cfg["T"], f, xi,
                                  cfg["n_paths"], cfg["seed"],
                                  dt=cfg["dt"], threads=threads)
        else:
            g = finite_difference_gradient(spec, x0, cfg["T"], f, xi,
                                           cfg["n_paths"], cfg["seed"],
                                           dt=cfg["dt"],
                                           fd_h=cfg["fd_h"],
                                           threads=threads)
        exclusions["exploded"] = g.n_excluded
        exclusions["below_floor"] = g.n_below_floor
        payload = {"f": f.name, "xi": g.direction, "value": g.value,
                   "stderr": g.stderr, "n": g.n_paths,
                   "estimator": g.estimator}
        tables["gradient"] = [{"value": g.value, "stderr": g.stderr,
                               "n": g.n_paths}]
        return payload, tables, exclusions

    if probe == "feller":
        f = get_f(cfg["f"])
        rep = feller_probe(spec, x0, cfg["T"], f, cfg["radii"], cfg["l"],
                           cfg["n_paths"], cfg["seed"], dt=cfg["dt"],
                           direction=cfg.get("direction"),
                           threads=threads)
        payload = {
            "radii": rep.radii, "diffs": rep.diffs,
            "stderrs": rep.stderrs, "monotone": rep.monotone,
            "intercept": rep.intercept,
            "intercept_stderr": rep.intercept_stderr,
            "exit_freq": rep.exit_freq,
            "truncation_gap": rep.truncation_gap,
            "truncation_gap_stderr": rep.truncation_gap_stderr,
            "p_center": rep.p_center,
            "p_center_trunc": rep.p_center_trunc,
            "used_truncated": rep.used_truncated,
            "explosion_rate": rep.explosion_rate,
        }
        tables["feller"] = [
            {"radius": float(r), "value": float(dv),
             "stderr": float(se), "n": rep.n_paths}
            for r, dv, se in zip(rep.radii, rep.diffs, rep.stderrs)]
        return payload, tables, exclusions

    raise ConfigError(f"unknown probe '{probe}'")
