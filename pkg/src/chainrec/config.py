"""INI run configuration.  Unknown sections and keys are rejected."""
from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

from chainrec.errors import ConfigError
from chainrec.systems import BUILTINS, SystemSpec

# system parameters passed through to the built-in constructors
_SYSTEM_PARAMS = {"alpha": float, "gamma": float, "depth": int, "path": str, "chart": str,
                  "low": float, "high": float, "angular_ratio": float}
_TOLERANCES = {"eps": float, "tol": float, "eps1": float, "rho": float, "m": int, "n_max": int,
               "budget_floor": float, "horizon": int, "fix_tol": float}

_SCHEMA = {
    "system": {"name", "eta", "cells", "cap", *_SYSTEM_PARAMS},
    "metric": {"beta", "lambda", "kappa", "reweight_iterations"},
    "tolerance": {"max_depth", *_TOLERANCES},
    "analysis": {"power_k", "dim_scales", "scaling_eps", "scaling_pairs"},
    "output": {"dir", "cache", "jobs"},
}


def _number(text: str) -> float:
    try:
        return float(Fraction(text.strip()))
    except (ValueError, ZeroDivisionError) as exc:
        raise ConfigError(f"not a number: {text!r}") from exc


def _list(text: str) -> list[float]:
    return [_number(t) for t in text.replace(";", ",").split(",") if t.strip()]


def _pairs(text: str) -> list[tuple[int, int]]:
    out = []
    for item in text.replace(";", ",").split(","):
        if not item.strip():
            continue
        try:
            a, b = item.split(":")
            out.append((int(a), int(b)))
        except ValueError as exc:
            raise ConfigError(f"pairs are written i:j, got {item!r}") from exc
    return out


@dataclass
class RunConfig:
    spec: SystemSpec
    eta: float
    cap: int | None = None
    lam: float = 1.0
    kappa: float = 0.25
    reweight_iterations: int = 0
    max_depth: int = 4
    power_k: int = 2
    dim_scales: list = field(default_factory=list)
    scaling_eps: list = field(default_factory=list)
    scaling_pairs: list = field(default_factory=list)
    out_dir: Path = Path("out")
    cache: bool = True
    jobs: int = 1
    seed: int = 0

    def record(self) -> dict:
        return {
            "system": self.spec.to_dict(), "eta": repr(self.eta), "cap": self.cap, "lambda": self.lam,
            "kappa": self.kappa, "reweight_iterations": self.reweight_iterations, "max_depth": self.max_depth,
            "power_k": self.power_k, "dim_scales": self.dim_scales, "scaling_eps": self.scaling_eps,
            "scaling_pairs": [list(p) for p in self.scaling_pairs],
        }


def parse_config(text: str, source: str = "<string>") -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    for sec in cp.sections():
        if sec not in _SCHEMA:
            raise ConfigError(f"unknown section [{sec}]")
        bad = sorted(set(cp[sec]) - _SCHEMA[sec])
        if bad:
            raise ConfigError(f"unknown key(s) in [{sec}]: {', '.join(bad)}")
    if not cp.has_section("system") or "name" not in cp["system"]:
        raise ConfigError("[system] name is required")
    sysc = cp["system"]
    name = sysc["name"].strip()
    if name not in BUILTINS:
        raise ConfigError(f"unknown system {name!r}")
    if ("eta" in sysc) == ("cells" in sysc):
        raise ConfigError("give exactly one of [system] eta or cells")
    eta = _number(sysc["eta"]) if "eta" in sysc else 1.0 / int(sysc["cells"])
    if not eta > 0:
        raise ConfigError("eta must be positive")
    params: dict = {}
    for k, conv in _SYSTEM_PARAMS.items():
        if k in sysc:
            params[k] = sysc[k].strip() if conv is str else conv(_number(sysc[k]))
    met = cp["metric"] if cp.has_section("metric") else {}
    if "beta" in met:
        if name not in ("f2", "f3"):
            raise ConfigError("metric beta applies to f2 and f3 only")
        params["beta"] = _number(met["beta"])
        if not 0 <= params["beta"] < 1:
            raise ConfigError("beta must lie in [0, 1)")
    tolc = cp["tolerance"] if cp.has_section("tolerance") else {}
    for k, conv in _TOLERANCES.items():
        if k in tolc:
            v = conv(_number(tolc[k]))
            if v <= 0:
                raise ConfigError(f"tolerance {k} must be positive")
            params[k] = v
    if "rho" in params and not params["rho"] < 1:
        raise ConfigError("rho must be below 1")
    ana = cp["analysis"] if cp.has_section("analysis") else {}
    outc = cp["output"] if cp.has_section("output") else {}
    try:
        cfg = RunConfig(
            spec=SystemSpec(name, params),
            eta=eta,
            cap=int(sysc["cap"]) if "cap" in sysc else None,
            lam=_number(met.get("lambda", "1")),
            kappa=_number(met.get("kappa", "0.25")),
            reweight_iterations=int(met.get("reweight_iterations", "0")),
            max_depth=int(tolc.get("max_depth", "4")),
            power_k=int(ana.get("power_k", "2")),
            dim_scales=_list(ana.get("dim_scales", "")),
            scaling_eps=_list(ana.get("scaling_eps", "")),
            scaling_pairs=_pairs(ana.get("scaling_pairs", "")),
            out_dir=Path(outc.get("dir", "out")),
            cache=cp.getboolean("output", "cache", fallback=True),
            jobs=int(outc.get("jobs", "1")),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if cfg.lam <= 0 or cfg.kappa <= 0:
        raise ConfigError("lambda and kappa must be positive")
    if cfg.max_depth < 1 or cfg.power_k < 2 or cfg.jobs < 1 or cfg.reweight_iterations < 0:
        raise ConfigError("max_depth >= 1, power_k >= 2, jobs >= 1, reweight_iterations >= 0")
    return cfg


def load_config(path: str | Path) -> RunConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    return parse_config(text, str(path))
