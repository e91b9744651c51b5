"""Config-driven command line runs with JSON summaries and CSV data.

Seven commands share one configuration format, a single JSON file whose
blocks (kernel, domain, density, drift, probe, barrier, eigen, eval) are
validated against a schema before anything is computed.  A malformed or
schema-violating config exits with status 2 and names the offending
field; a numerical failure inside the package exits with status 3 and
the raising error type; success exits 0.

Outputs are deterministic: for a fixed config file and seed the written
JSON and CSV files are byte-identical across runs.  Each JSON summary
carries a provenance block with the config digest and, per result key,
the fully qualified routine that produced it.

Environment: ``NONLOCAL_DV_LOG`` selects the log level (DEBUG .. ERROR).
``--threads`` caps the BLAS pool sizes by exporting the usual variables;
the orchestration itself is single-threaded.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import importlib.metadata
import json
import logging
import math
import os
import sys
from pathlib import Path
from typing import Callable

import jsonschema
import numpy as np

from .barriers import BarrierConfig, barrier_scan, flat_limit_reference
from .errors import ConfigError, NonlocalError
from .kernels import spec_from_config
from .lattice import LatticeDomain, assemble, kernel_form
from .operators import (
    SmoothFunction,
    bump,
    carre_du_champ,
    gaussian,
    interval_power,
    nonlocal_laplacian,
    scaled,
)
from .rate import (
    DensitySpec,
    I_closed_form_h0,
    I_decomposed,
    density_lattice,
    drift_pairing,
    first_order_residual,
)
from .recovery import (
    constancy_check,
    drift_probe,
    fourier_probe_oracle,
    recover_matrix,
)
from .spectral import dense_eigenpair, principal_eigenpair
from .verify import available_checks, run_suite

_log = logging.getLogger("nonlocal_dv.cli")

try:
    _VERSION = importlib.metadata.version("nonlocal-dv")
except importlib.metadata.PackageNotFoundError:
    _VERSION = "unknown"

COMMANDS = ("operator-eval", "eigen", "dv-functional", "recover-matrix",
            "recover-drift", "barrier-check", "verify")


# ---------------------------------------------------------------------------
# configuration schema

_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}
_BOOL = {"type": "boolean"}
_VEC = {"type": "array", "items": _NUM, "minItems": 1, "maxItems": 3}
_CELLS = {"type": "integer", "minimum": 4}

_FUNCTION = {
    "type": "object",
    "properties": {
        "kind": {"enum": ["gaussian", "bump", "constant", "tanh",
                          "power_profile"]},
        "width": _POS,
        "radius": _POS,
        "center": _VEC,
        "amplitude": _NUM,
        "value": _NUM,
        "slope": _POS,
        "alpha": _POS,
    },
    "required": ["kind"],
    "additionalProperties": False,
}

_TOP_PROPERTIES = {
    "seed": {"type": "integer", "minimum": 0},
    "kernel": {
        "type": "object",
        "properties": {
            "variant": {"enum": ["constant", "separable_sum",
                                 "separable_product"]},
            "matrix": {"type": "array", "minItems": 1, "maxItems": 3,
                       "items": {"type": "array", "items": _NUM,
                                 "minItems": 1, "maxItems": 3}},
            "s": {"type": "number", "exclusiveMinimum": 0,
                  "exclusiveMaximum": 1},
            "gamma": _POS,
            "Gamma": _POS,
            "normalized": _BOOL,
            "amplitude": _NUM,
        },
        "required": ["variant", "matrix", "s"],
        "additionalProperties": False,
    },
    "domain": {
        "type": "object",
        "properties": {
            "shape": {"enum": ["interval", "box", "ball"]},
            "lower": {"anyOf": [_NUM, _VEC]},
            "upper": {"anyOf": [_NUM, _VEC]},
            "cells": {"anyOf": [_CELLS, {"type": "array", "items": _CELLS,
                                         "minItems": 1, "maxItems": 3}]},
            "center": _VEC,
            "radius": _POS,
            "cells_across": _CELLS,
            "margin": {"type": "number", "minimum": 0},
        },
        "required": ["shape"],
        "additionalProperties": False,
    },
    "density": {
        "type": "object",
        "properties": {
            "profile": _FUNCTION,
            "cells": {"type": "integer", "minimum": 8},
            "normalize": _BOOL,
        },
        "required": ["profile"],
        "additionalProperties": False,
    },
    "drift": _FUNCTION,
    "probe": {
        "type": "object",
        "properties": {
            "x0": _VEC,
            "lambdas": {"type": "array", "minItems": 3,
                        "items": {"type": "number", "exclusiveMinimum": 0,
                                  "maximum": 1}},
            "cells": {"type": "integer", "minimum": 8},
            "second_width": _POS,
        },
        "additionalProperties": False,
    },
    "barrier": {
        "type": "object",
        "properties": {
            "domain": {"enum": ["interval", "ball"]},
            "alpha": _POS,
            "delta": _POS,
            "radius": _POS,
            "points": {"type": "integer", "minimum": 2},
            "mesh": _POS,
            "d_min": _POS,
        },
        "required": ["domain", "alpha", "delta"],
        "additionalProperties": False,
    },
    "eigen": {
        "type": "object",
        "properties": {
            "tol": _POS,
            "max_iter": {"type": "integer", "minimum": 1},
            "dense_check": _BOOL,
        },
        "additionalProperties": False,
    },
    "eval": {
        "type": "object",
        "properties": {
            "function": _FUNCTION,
            "points": {"type": "array", "minItems": 1, "items": _VEC},
        },
        "required": ["function", "points"],
        "additionalProperties": False,
    },
    "checks": {"type": "array", "items": {"type": "string"}},
    "output": {
        "type": "object",
        "properties": {
            "json": {"type": "string", "minLength": 1},
            "csv": {"type": "string", "minLength": 1},
        },
        "additionalProperties": False,
    },
}

_COMMAND_REQUIRED = {
    "operator-eval": ["kernel", "eval"],
    "eigen": ["kernel", "domain"],
    "dv-functional": ["kernel", "density"],
    "recover-matrix": ["kernel"],
    "recover-drift": ["kernel", "drift", "probe"],
    "barrier-check": ["kernel", "barrier"],
    "verify": [],
}


def _load_config(path: str) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}",
                          field_path="--config") from exc
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}",
                          field_path="--config") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config top level must be a JSON object",
                          field_path="(top level)")
    return cfg


def _validate_config(cfg: dict, command: str) -> None:
    schema = {
        "type": "object",
        "properties": _TOP_PROPERTIES,
        "required": _COMMAND_REQUIRED[command],
        "additionalProperties": False,
    }
    validator = jsonschema.Draft202012Validator(schema)
    best = jsonschema.exceptions.best_match(validator.iter_errors(cfg))
    if best is not None:
        path = ".".join(str(p) for p in best.absolute_path)
        raise ConfigError(best.message, field_path=path or "(top level)")


# ---------------------------------------------------------------------------
# block builders


def _kernel_from_config(block: dict):
    try:
        spec = spec_from_config(block)
    except ConfigError:
        raise
    except (NonlocalError, ValueError) as exc:
        raise ConfigError(str(exc), field_path="kernel") from exc
    return spec, len(block["matrix"])


def _function_from_config(block: dict, dim: int, field: str) -> SmoothFunction:
    kind = block["kind"]
    center = block.get("center")
    if center is not None and len(center) != dim:
        raise ConfigError(f"center must have {dim} entries",
                          field_path=f"{field}.center")
    if kind == "gaussian":
        return gaussian(dim, width=block.get("width", 1.0), center=center,
                        amplitude=block.get("amplitude", 1.0))
    if kind == "bump":
        return bump(dim, center=center, radius=block.get("radius", 1.0),
                    amplitude=block.get("amplitude", 1.0))
    if kind == "tanh":
        amp = block.get("amplitude", 0.3)
        slope = block.get("slope", 2.0)
        return SmoothFunction(
            lambda p, _a=amp, _k=slope: _a * np.tanh(_k * p[:, 0]),
            dim, osc_bound=2.0 * abs(amp), support_radius=40.0)
    if kind == "power_profile":
        return interval_power(block.get("alpha", 1.5), dim)
    value = block.get("value", 0.0)
    return SmoothFunction(
        lambda p, _v=value: np.full(p.shape[0], _v), dim,
        support_radius=0.5, bound=abs(value), osc_bound=0.0, far_value=value)


def _as_list(value, length: int, field: str) -> list[float]:
    out = [float(v) for v in value] if isinstance(value, list) else \
        [float(value)] * length
    if len(out) != length:
        raise ConfigError(f"expected {length} entries", field_path=field)
    return out


def _domain_from_config(block: dict, dim: int) -> LatticeDomain:
    shape = block["shape"]
    margin = float(block.get("margin", 1.0))

    def need(key):
        if key not in block:
            raise ConfigError(f"'{key}' is required for shape '{shape}'",
                              field_path=f"domain.{key}")
        return block[key]

    try:
        if shape == "interval":
            if dim != 1:
                raise ConfigError("interval domain needs a 1x1 kernel matrix",
                                  field_path="domain.shape")
            lo = _as_list(need("lower"), 1, "domain.lower")[0]
            hi = _as_list(need("upper"), 1, "domain.upper")[0]
            cells = need("cells")
            if isinstance(cells, list):
                cells = cells[0]
            return LatticeDomain.interval(lo, hi, int(cells), margin=margin)
        if shape == "box":
            lo = _as_list(need("lower"), dim, "domain.lower")
            hi = _as_list(need("upper"), dim, "domain.upper")
            cells = need("cells")
            counts = [int(c) for c in cells] if isinstance(cells, list) else \
                [int(cells)] * dim
            if len(counts) != dim:
                raise ConfigError(f"expected {dim} cell counts",
                                  field_path="domain.cells")
            return LatticeDomain.box(lo, hi, counts, margin=margin)
        center = _as_list(need("center"), dim, "domain.center")
        return LatticeDomain.ball(center, float(need("radius")),
                                  int(need("cells_across")), margin=margin)
    except ConfigError:
        raise
    except NonlocalError as exc:
        raise ConfigError(str(exc), field_path="domain") from exc


def _density_from_config(block: dict, dim: int) -> tuple[DensitySpec, LatticeDomain]:
    fn = _function_from_config(block["profile"], dim, "density.profile")
    cells = block.get("cells")
    if block.get("normalize", True):
        dom = density_lattice(DensitySpec(fn), cells=cells)
        mass = float(fn(dom.interior_points).sum() * dom.cell_volume)
        if mass <= 0.0:
            raise ConfigError("density profile has nonpositive mass",
                              field_path="density.profile")
        fn = scaled(fn, 1.0 / mass)
    dens = DensitySpec(fn)
    return dens, density_lattice(dens, cells=cells)


# ---------------------------------------------------------------------------
# deterministic serialization


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value.tolist()]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    return value


def _config_digest(cfg: dict) -> str:
    canonical = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _write_summary(path: Path, command: str, seed: int, results: dict,
                   sources: dict, digest: str) -> None:
    summary = {
        "command": command,
        "seed": seed,
        "results": _jsonable(results),
        "provenance": {
            "tool": "nonlocal-dv",
            "version": _VERSION,
            "config_sha256": digest,
            "sources": sources,
        },
    }
    with open(path, "w", newline="\n") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


def _csv_cell(value) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _rows_writer(header: tuple[str, ...], rows) -> Callable[[Path], None]:
    def write(path: Path) -> None:
        with open(path, "w", newline="\n") as fh:
            fh.write(",".join(header) + "\n")
            for row in rows:
                fh.write(",".join(_csv_cell(v) for v in row) + "\n")
    return write


# ---------------------------------------------------------------------------
# command handlers; each returns (exit code, results, sources, csv writer)


def _cmd_operator_eval(cfg: dict, seed: int):
    del seed
    spec, dim = _kernel_from_config(cfg["kernel"])
    u = _function_from_config(cfg["eval"]["function"], dim, "eval.function")
    h = (_function_from_config(cfg["drift"], dim, "drift")
         if "drift" in cfg else None)
    rows = []
    worst = 0.0
    for k, point in enumerate(cfg["eval"]["points"]):
        if len(point) != dim:
            raise ConfigError(f"point must have {dim} coordinates",
                              field_path=f"eval.points.{k}")
        x = np.asarray(point, dtype=float)
        lap = nonlocal_laplacian(u, spec, x)
        dr = carre_du_champ(u, h, spec, x) if h is not None else 0.0
        rows.append(tuple(x) + (lap, dr, lap + dr))
        worst = max(worst, abs(lap + dr))
    _log.info("evaluated operator at %d points", len(rows))
    results = {"points": len(rows), "max_abs_value": worst,
               "with_drift": h is not None}
    sources = {
        "laplacian": "nonlocal_dv.operators.nonlocal_laplacian",
        "drift_form": "nonlocal_dv.operators.carre_du_champ",
    }
    header = tuple(f"x{a}" for a in range(dim)) + ("laplacian", "drift_form",
                                                   "drifted")
    return 0, results, sources, _rows_writer(header, rows)


def _cmd_eigen(cfg: dict, seed: int):
    del seed
    spec, dim = _kernel_from_config(cfg["kernel"])
    dom = _domain_from_config(cfg["domain"], dim)
    h = (_function_from_config(cfg["drift"], dim, "drift")
         if "drift" in cfg else None)
    opts = cfg.get("eigen", {})
    op = assemble(dom, spec, drift=h)
    _log.info("assembled %d-node operator", op.n)
    pair = principal_eigenpair(op, tol=opts.get("tol", 1e-9),
                               max_iter=opts.get("max_iter", 200))
    results = {
        "lambda1": pair.lambda1,
        "residual": pair.residual,
        "iterations": pair.iterations,
        "principal_min": float(pair.phi1.values.min()),
        "positive": bool(pair.phi1.values.min() > 0.0),
        "nodes": op.n,
    }
    sources = {"lambda1": "nonlocal_dv.spectral.principal_eigenpair"}
    if h is not None:
        results["drift_oscillation"] = op.drift_oscillation()
    if opts.get("dense_check", True):
        dense = dense_eigenpair(op)
        results["dense_lambda1"] = dense.lambda1
        results["iteration_vs_dense"] = abs(pair.lambda1 - dense.lambda1)
        sources["dense_lambda1"] = "nonlocal_dv.spectral.dense_eigenpair"
    return 0, results, sources, pair.phi1.save


def _cmd_dv_functional(cfg: dict, seed: int):
    del seed
    spec, dim = _kernel_from_config(cfg["kernel"])
    dens, dom = _density_from_config(cfg["density"], dim)
    h = (_function_from_config(cfg["drift"], dim, "drift")
         if "drift" in cfg else None)
    op = assemble(dom, spec, drift=h)
    I_val, E_val, w_min = I_decomposed(dens, h, spec, domain=dom, op=op)
    fv = dens.values_on(dom)
    results = {
        "I_value": I_val,
        "error_form_value": E_val,
        "sqrt_density_energy": kernel_form(op, np.sqrt(fv)),
        "drift_pairing": drift_pairing(op, fv) if h is not None else 0.0,
        "first_order_residual": first_order_residual(op, fv),
        "exponent_field_max": float(np.abs(w_min.w.values).max()),
        "nodes": op.n,
    }
    sources = {
        "I_value": "nonlocal_dv.rate.I_decomposed",
        "sqrt_density_energy": "nonlocal_dv.lattice.kernel_form",
    }
    if h is None:
        results["closed_form_no_drift"] = I_closed_form_h0(dens, spec,
                                                           domain=dom)
        sources["closed_form_no_drift"] = "nonlocal_dv.rate.I_closed_form_h0"
    return 0, results, sources, w_min.w.save


def _cmd_recover_matrix(cfg: dict, seed: int):
    del seed
    block = cfg["kernel"]
    if block["variant"] != "constant":
        raise ConfigError("matrix recovery needs a constant-coefficient "
                          "kernel", field_path="kernel.variant")
    A = np.asarray(block["matrix"], dtype=float)
    s = float(block["s"])
    dim = A.shape[0]
    probe = cfg.get("probe", {})
    lam = tuple(probe.get("lambdas", (0.5, 0.25, 0.125)))
    kwargs = {}
    if "second_width" in probe:
        kwargs["second_width"] = probe["second_width"]
    _log.info("recovering a %dx%d matrix from probe energies", dim, dim)
    report = recover_matrix(fourier_probe_oracle(A, s), dim, s,
                            lambda_seq=lam, **kwargs)
    entry_err = float(np.abs(report.recovered_matrix - A).max()
                      / np.abs(A).max())
    results = {
        "true_matrix": A,
        "recovered_matrix": report.recovered_matrix,
        "rho": report.rho,
        "max_entry_error": entry_err,
        "per_entry_residuals": report.per_entry_residuals,
        "probes": len(report.probes),
    }
    sources = {
        "recovered_matrix": "nonlocal_dv.recovery.recover_matrix",
        "probe_energies": "nonlocal_dv.recovery.fourier_probe_oracle",
    }
    rows = [(p.transform_tag, p.lambda_, p.raw_energy, p.normalized_energy,
             p.error_estimate) for p in report.probes]
    header = ("transform_tag", "lambda", "raw_energy", "normalized_energy",
              "error_estimate")
    return 0, results, sources, _rows_writer(header, rows)


def _cmd_recover_drift(cfg: dict, seed: int):
    del seed
    spec, dim = _kernel_from_config(cfg["kernel"])
    h = _function_from_config(cfg["drift"], dim, "drift")
    probe = cfg["probe"]
    if "x0" not in probe:
        raise ConfigError("'x0' is required for drift recovery",
                          field_path="probe.x0")
    x0 = np.asarray(probe["x0"], dtype=float)
    if len(x0) != dim:
        raise ConfigError(f"x0 must have {dim} coordinates",
                          field_path="probe.x0")
    lam = tuple(probe.get("lambdas", (0.5, 0.25, 0.125)))
    res = drift_probe(h, spec, x0, lambda_seq=lam,
                      cells=probe.get("cells", 40))
    offsets = np.linspace(-0.8, 0.8, 9)
    grid = np.repeat(x0[None, :], len(offsets), axis=0)
    grid[:, 0] += offsets
    rep = constancy_check(h, spec, grid)
    results = {
        "limit": res.limit,
        "rate": res.rate,
        "pointwise_value": res.pointwise_value,
        "cross_difference": res.cross_difference,
        "constancy_max_operator_value": rep.max_operator_value,
        "constancy_oscillation": rep.oscillation,
        "drift_acts_as_constant": bool(rep.constant),
    }
    sources = {
        "limit": "nonlocal_dv.recovery.drift_probe",
        "constancy_max_operator_value": "nonlocal_dv.recovery.constancy_check",
    }
    rows = list(zip(res.lambdas, res.values, res.pair_values))
    header = ("lambda", "integrated_estimate", "pairing_estimate")
    return 0, results, sources, _rows_writer(header, rows)


def _cmd_barrier_check(cfg: dict, seed: int):
    del seed
    spec, dim = _kernel_from_config(cfg["kernel"])
    block = cfg["barrier"]
    h = (_function_from_config(cfg["drift"], dim, "drift")
         if "drift" in cfg else None)
    try:
        config = BarrierConfig(
            domain=block["domain"], alpha=float(block["alpha"]),
            delta=float(block["delta"]), spec=spec, h=h,
            radius=float(block.get("radius", 1.0)),
            points=int(block.get("points", 8)),
            mesh=float(block.get("mesh", 0.005)),
            d_min=block.get("d_min"))
    except NonlocalError as exc:
        raise ConfigError(str(exc), field_path="barrier") from exc
    _log.info("scanning %d boundary distances", config.points)
    rep = barrier_scan(config)
    flat = None
    try:
        flat = flat_limit_reference(spec, config.alpha)
    except NonlocalError:
        pass  # only defined for constant fields below the integrability edge
    results = {
        "alpha": rep.alpha,
        "min_normalized": rep.min_normalized,
        "max_normalized": rep.max_normalized,
        "drift_rate": rep.drift_rate,
        "d_min": rep.d_min,
        "flat_limit": flat,
        "sign_checks": [dataclasses.asdict(c) for c in rep.sign_checks],
    }
    sources = {
        "min_normalized": "nonlocal_dv.barriers.barrier_scan",
        "flat_limit": "nonlocal_dv.barriers.flat_limit_reference",
    }
    rows = list(zip(rep.distances, rep.normalized_values, rep.drift_values))
    header = ("d", "normalized_value", "drift_term")
    return 0, results, sources, _rows_writer(header, rows)


def _cmd_verify(cfg: dict, seed: int):
    ids = cfg.get("checks")
    if ids is not None:
        unknown = sorted(set(ids) - set(available_checks()))
        if unknown:
            raise ConfigError(f"unknown check ids: {', '.join(unknown)}",
                              field_path="checks")

    def progress(result):
        tag = "PASS" if result.passed else "FAIL"
        print(f"{tag} {result.check_id}: {result.detail}")

    checks = run_suite(seed=seed, check_ids=ids, progress=progress)
    all_passed = all(c.passed for c in checks)
    results = {
        "all_passed": all_passed,
        "checks": [dataclasses.asdict(c) for c in checks],
    }
    sources = {"checks": "nonlocal_dv.verify.run_suite"}
    rows = [(c.check_id, int(c.passed), c.measure, c.threshold)
            for c in checks]
    header = ("check_id", "passed", "measure", "threshold")
    return (0 if all_passed else 3), results, sources, _rows_writer(header,
                                                                    rows)


_HANDLERS = {
    "operator-eval": _cmd_operator_eval,
    "eigen": _cmd_eigen,
    "dv-functional": _cmd_dv_functional,
    "recover-matrix": _cmd_recover_matrix,
    "recover-drift": _cmd_recover_drift,
    "barrier-check": _cmd_barrier_check,
    "verify": _cmd_verify,
}


# ---------------------------------------------------------------------------
# entry point


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nonlocal-dv",
        description="Anisotropic nonlocal operators: evaluation, spectra, "
                    "rate functionals, coefficient recovery, boundary scans.")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", help="path to the JSON run configuration")
    parser.add_argument("--output-dir", default=".",
                        help="directory for the JSON and CSV outputs")
    parser.add_argument("--seed", type=int,
                        help="override the config seed")
    parser.add_argument("--threads", type=int,
                        help="cap BLAS thread pools at this count")
    return parser


def _configure_logging() -> None:
    name = os.environ.get("NONLOCAL_DV_LOG", "WARNING").upper()
    level = getattr(logging, name, None)
    if not isinstance(level, int):
        level = logging.WARNING
    logging.basicConfig(level=level, force=True,
                        format="%(levelname)s %(name)s: %(message)s")


def _output_paths(cfg: dict, command: str, out_dir: Path) -> tuple[Path, Path]:
    out = cfg.get("output", {})
    stem = command.replace("-", "_")
    return (out_dir / out.get("json", f"{stem}_summary.json"),
            out_dir / out.get("csv", f"{stem}_data.csv"))


def _run(args: argparse.Namespace) -> int:
    command = args.command
    if args.config is None:
        if command != "verify":
            raise ConfigError(f"--config is required for '{command}'",
                              field_path="--config")
        cfg: dict = {}
    else:
        cfg = _load_config(args.config)
    _validate_config(cfg, command)
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    if seed < 0:
        raise ConfigError("seed must be nonnegative", field_path="--seed")
    out_dir = Path(args.output_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory: {exc}",
                          field_path="--output-dir") from exc
    code, results, sources, write_csv = _HANDLERS[command](cfg, seed)
    json_path, csv_path = _output_paths(cfg, command, out_dir)
    _write_summary(json_path, command, seed, results, sources,
                   _config_digest(cfg))
    write_csv(csv_path)
    print(f"wrote {json_path} and {csv_path}")
    return code


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    _configure_logging()
    if args.threads is not None:
        if args.threads < 1:
            print("--threads must be at least 1", file=sys.stderr)
            return 2
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                    "MKL_NUM_THREADS"):
            os.environ[var] = str(args.threads)
    try:
        return _run(args)
    except ConfigError as exc:
        loc = f" at '{exc.field_path}'" if exc.field_path else ""
        print(f"config error{loc}: {exc}", file=sys.stderr)
        return 2
    except NonlocalError as exc:
        print(f"numerical failure ({type(exc).__name__}): {exc}",
              file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
