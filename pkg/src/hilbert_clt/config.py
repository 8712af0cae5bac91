"""Experiment configuration.

A config is a flat mapping from dotted keys (``process.kind``,
``process.coeffs.rho``, ...) to scalars or lists. Files may be JSON or
TOML and may nest tables; nesting is flattened on load. Serialization
writes canonical flat JSON, so parse, serialize and parse again gives the
same config.
"""
from __future__ import annotations

import hashlib
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import coeffs as cs
from . import innovations as inn
from .linalg import CovOperator
from .processes import (ArchSpec, LinearSpec, MDependentSpec, ProcessSpec,
                        TwoDependentSpec, WindowGenerator, arch_exp_kernel)

PROCESS_KINDS = ("iid", "linear", "arch", "m_dependent", "two_dependent")

# key -> default; None means "no value" and is allowed for optional keys
DEFAULTS: dict[str, Any] = {
    "process.kind": "iid",
    "process.innovation.kind": "gaussian",
    "process.innovation.scales": None,
    "process.innovation.profile": "flat",
    "process.innovation.minor_scale": 0.02,
    "process.innovation.tail_index": 5.0,
    "process.innovation.activity": 0.25,
    "process.innovation.moment_order": 3.0,
    "process.coeffs.family": "geometric",
    "process.coeffs.rho": 0.5,
    "process.coeffs.a": 2.0,
    "process.coeffs.window": None,
    "process.coeffs.side": "two",
    "process.coeffs.file": None,
    "process.coeffs.normalize": True,
    "process.m": 2,
    "process.lag_weights": None,
    "process.mix": 0.0,
    "process.tau": None,
    "process.output_scales": None,
    "process.kernel_scale": 0.3,
    "process.kernel_decay": 1.0,
    "process.mu_level": 1.0,
    "process.burnin": 512,
    "limit.source": "auto",
    "limit.k_lag": 4,
    "limit.reps": 200_000,
    "n_grid": [64, 128, 256, 512],
    "mu": 0.0,
    "p": 3.0,
    "reps": 10_000,
    "seeds": [1],
    "dim": 16,
    "delta": 0.05,
    "method": "auto",
    "output_dir": "results",
    "emit_plots": False,
    "eigencheck": True,
    "checks.delta_within_ci": False,
    "checks.slope_min": None,
    "checks.slope_max": None,
    "lowerbound.c_alpha": 0.1,
    "theta.k_max": 10,
    "theta.p": 4.5,
    "theta.reps": 20_000,
    "theta.r2_min": 0.9,
}

# keys that do not affect results and are left out of the config hash
_UNHASHED = {"output_dir", "emit_plots"}


@dataclass(frozen=True)
class ExperimentConfig:
    values: dict

    def __getitem__(self, key: str):
        return self.values[key]

    def with_overrides(self, **updates) -> "ExperimentConfig":
        v = dict(self.values)
        for k, x in updates.items():
            v[k.replace("__", ".")] = x
        return from_mapping(v)

    def to_json(self) -> str:
        return json.dumps(self.values, sort_keys=True, indent=1)

    def digest(self) -> str:
        core = {k: v for k, v in self.values.items() if k not in _UNHASHED}
        blob = json.dumps(core, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def build_process(self) -> ProcessSpec:
        return build_process(self.values)


def flatten(tree: dict, prefix: str = "") -> dict:
    out = {}
    for k, v in tree.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(flatten(v, key + "."))
        else:
            out[key] = v
    return out


def _fail(field_name: str, msg: str):
    raise ValueError(f"{field_name}: {msg}")


def _validate(v: dict) -> None:
    kind = v["process.kind"]
    if kind not in PROCESS_KINDS:
        _fail("process.kind", f"must be one of {PROCESS_KINDS}")
    grid = v["n_grid"]
    if not isinstance(grid, list) or not grid or not all(isinstance(n, int) and n >= 1 for n in grid):
        _fail("n_grid", "must be a non-empty list of positive integers")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError("n_grid not increasing")
    if v["reps"] < 1000:
        _fail("reps", "must be at least 1000")
    if not isinstance(v["seeds"], list) or not v["seeds"] or any(
            not isinstance(s, int) or s < 0 for s in v["seeds"]):
        _fail("seeds", "must be a non-empty list of non-negative integers")
    if len(set(v["seeds"])) != len(v["seeds"]):
        _fail("seeds", "contains duplicates")
    if not isinstance(v["dim"], int) or v["dim"] < 1:
        _fail("dim", "must be a positive integer")
    if v["eigencheck"] and v["dim"] < 13:
        _fail("dim", "must be at least 13 when eigencheck is enabled")
    if not 0 < v["delta"] < 1:
        _fail("delta", "must lie in (0, 1)")
    if v["method"] not in ("auto", "two_sample_ks", "vs_exact_cdf"):
        _fail("method", "must be auto, two_sample_ks or vs_exact_cdf")
    if not 2 < v["p"] <= 3:
        _fail("p", "must lie in (2, 3]")
    if v["process.innovation.kind"] not in inn.KINDS:
        _fail("process.innovation.kind", f"must be one of {inn.KINDS}")
    mu = v["mu"]
    if isinstance(mu, list) and len(mu) != v["dim"]:
        _fail("mu", "length must equal dim")
    if v["process.m"] < 1:
        _fail("process.m", "must be at least 1")


def from_mapping(raw: dict) -> ExperimentConfig:
    flat = flatten(raw)
    unknown = sorted(set(flat) - set(DEFAULTS))
    if unknown:
        raise ValueError("unknown config keys: " + ", ".join(unknown))
    v = dict(DEFAULTS)
    v.update(flat)
    for key in ("n_grid", "seeds", "process.innovation.scales", "process.lag_weights",
                "process.output_scales"):
        if isinstance(v[key], tuple):
            v[key] = list(v[key])
    _validate(v)
    return ExperimentConfig(v)


def parse_text(text: str, fmt: str = "json") -> ExperimentConfig:
    data = tomllib.loads(text) if fmt == "toml" else json.loads(text)
    if not isinstance(data, dict):
        raise ValueError("config must be a key-value mapping")
    return from_mapping(data)


def parse_config(path: str | Path) -> ExperimentConfig:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"config file not found: {p}")
    fmt = "toml" if p.suffix.lower() == ".toml" else "json"
    return parse_text(p.read_text(), fmt)


def serialize(cfg: ExperimentConfig) -> str:
    return cfg.to_json()


# building process specs

def _scales(v: dict, d: int) -> np.ndarray:
    s = v["process.innovation.scales"]
    if s is not None:
        s = np.asarray(s, dtype=float)
        if s.size != d:
            _fail("process.innovation.scales", "length must equal dim")
        return s
    prof = v["process.innovation.profile"]
    if prof == "flat":
        return np.ones(d)
    if prof == "harmonic":
        return 1.0 / np.sqrt(np.arange(1, d + 1))
    if prof == "dominant":
        s = np.full(d, float(v["process.innovation.minor_scale"]))
        s[0] = 1.0
        return s
    _fail("process.innovation.profile", "must be flat, harmonic or dominant")


def build_innovation(v: dict, d: int, activity: float | None = None) -> inn.InnovationDist:
    kind = v["process.innovation.kind"]
    s = _scales(v, d)
    if kind == "gaussian":
        return inn.gaussian(CovOperator.from_spectrum(s ** 2))
    if kind == "rademacher":
        return inn.rademacher_basis(s)
    if kind == "uniform":
        return inn.uniform_basis(s)
    if kind == "heavytail":
        return inn.heavytail(v["process.innovation.tail_index"], s,
                             v["process.innovation.moment_order"])
    return inn.sparse_rademacher(activity or v["process.innovation.activity"], s)


def default_window(family: str, rho: float) -> int:
    if family == "geometric":
        return int(math.ceil(64.0 / math.log2(1.0 / rho)))
    return 2 ** 12


def build_coeffs(v: dict, d: int) -> cs.CoeffSeq:
    fam = v["process.coeffs.family"]
    if fam == "finite":
        path = v["process.coeffs.file"]
        if not path:
            _fail("process.coeffs.file", "finite family needs a JSON file")
        return cs.load_family(path)
    rho = float(v["process.coeffs.rho"])
    window = v["process.coeffs.window"] or default_window(fam, rho)
    side = v["process.coeffs.side"]
    if fam == "geometric":
        return cs.geometric(rho, window, dim=d, side=side)
    if fam == "polynomial":
        return cs.polynomial(float(v["process.coeffs.a"]), window, dim=d, side=side)
    if fam == "slow_rate":
        return cs.slow_rate_coeffs(cs.SlowRateSpec(float(v["process.coeffs.a"]), window,
                                                   normalize=bool(v["process.coeffs.normalize"])))
    _fail("process.coeffs.family", "must be geometric, polynomial, finite or slow_rate")


def build_generator(v: dict, d: int, m: int) -> WindowGenerator:
    w = v["process.lag_weights"]
    w = np.ones(m) if w is None else np.asarray(w, dtype=float)
    if w.size != m:
        _fail("process.lag_weights", f"needs {m} entries")
    lags = np.stack([wi * np.eye(d) for wi in w])
    mix = float(v["process.mix"])
    if mix and d > 2:
        # cyclic coupling among coordinates 2..d for the lagged terms
        shift = np.zeros((d, d))
        idx = np.arange(1, d)
        shift[idx, np.roll(idx, -1)] = 1.0
        lags[1:] += mix * shift
    out = v["process.output_scales"]
    out = None if out is None else np.diag(np.asarray(out, dtype=float))
    return WindowGenerator(lags, v["process.tau"], out)


def build_process(v: dict) -> ProcessSpec:
    kind = v["process.kind"]
    d = int(v["dim"])
    if kind == "iid":
        return LinearSpec(cs.finite([np.eye(d)]), build_innovation(v, d))
    if kind == "linear":
        c = build_coeffs(v, d)
        return LinearSpec(c, build_innovation(v, c.dim))
    if kind == "arch":
        return ArchSpec(arch_exp_kernel(d, v["process.kernel_scale"], v["process.kernel_decay"]),
                        np.full(d, float(v["process.mu_level"])), build_innovation(v, d),
                        int(v["process.burnin"]))
    if kind == "m_dependent":
        m = int(v["process.m"])
        return MDependentSpec(m, build_generator(v, d, m), build_innovation(v, d))
    return TwoDependentSpec(build_generator(v, d, 2), build_innovation(v, d))


def shift_vector(v: dict, d: int) -> np.ndarray:
    """``mu`` as a vector: a list is used as is, a number is placed on ``e_1``."""
    mu = v["mu"]
    if isinstance(mu, list):
        return np.asarray(mu, dtype=float)
    out = np.zeros(d)
    out[0] = float(mu)
    return out
