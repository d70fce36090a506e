"""File formats: dataset CSV, TOML config, model/metrics JSON, prediction CSVs."""

from __future__ import annotations

import csv
import io
import json
import math
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .calibration import (CalibrationOptions, CalibrationResult, Curve, ExperimentDataset,
                          LossSpec)
from .constitutive import (ARGUMENT, DEFAULT_SITES, FUNCTIONS, TERM_ORDER, AnsatzSpec,
                           EnergyModel, model_from_dict, model_to_dict, term_energies)
from .errors import ConfigError, DatasetError
from .kinematics import MODES, DeformationProgram, state_from_F

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

DATASET_HEADER = ("mode", "control", "stress")


# -- datasets -----------------------------------------------------------------


def parse_dataset(text: str, lambda_pre: float = 0.8, source: str = "<string>") -> ExperimentDataset:
    """Parse canonical dataset CSV text; rows are sorted by control per mode."""
    rows = {m: [] for m in MODES}
    seen = set()
    reader = csv.reader(io.StringIO(text))
    header = None
    for lineno, rec in enumerate(reader, start=1):
        if not rec or all(not f.strip() for f in rec):
            continue
        fields_ = [f.strip() for f in rec]
        if header is None:
            if tuple(f.lower() for f in fields_) != DATASET_HEADER:
                raise DatasetError(f"{source}:{lineno}: expected header 'mode,control,stress'")
            header = fields_
            continue
        if len(fields_) != 3:
            raise DatasetError(f"{source}:{lineno}: expected 3 fields, got {len(fields_)}")
        mode, ctrl_s, stress_s = fields_
        if mode not in MODES:
            raise DatasetError(f"{source}:{lineno}: unknown mode {mode!r} (expected UT, UC or SS)")
        try:
            ctrl, stress = float(ctrl_s), float(stress_s)
        except ValueError:
            raise DatasetError(f"{source}:{lineno}: non-numeric field") from None
        if not (math.isfinite(ctrl) and math.isfinite(stress)):
            raise DatasetError(f"{source}:{lineno}: non-finite value")
        if mode in ("UT", "UC") and ctrl <= 0:
            raise DatasetError(f"{source}:{lineno}: uniaxial stretch must be positive, got {ctrl_s}")
        if mode == "SS" and ctrl < 0:
            raise DatasetError(f"{source}:{lineno}: shear amount must be non-negative, got {ctrl_s}")
        if (mode, ctrl) in seen:
            raise DatasetError(f"{source}:{lineno}: duplicate {mode} control {ctrl_s}")
        seen.add((mode, ctrl))
        rows[mode].append((ctrl, stress))
    if header is None:
        raise DatasetError(f"{source}: empty dataset file")
    curves = []
    for mode in MODES:
        if not rows[mode]:
            continue
        pts = sorted(rows[mode])
        try:
            curves.append(Curve(DeformationProgram(mode, [c for c, _ in pts], lambda_pre),
                                [s for _, s in pts]))
        except ValueError as exc:
            raise DatasetError(f"{source}: {exc}") from None
    try:
        return ExperimentDataset(tuple(curves))
    except ValueError as exc:
        raise DatasetError(f"{source}: {exc}") from None


def load_dataset(path, lambda_pre: float = 0.8) -> ExperimentDataset:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise DatasetError(f"cannot read dataset {path}: {exc}") from None
    return parse_dataset(text, lambda_pre, str(path))


def format_dataset(dataset: ExperimentDataset) -> str:
    """Canonical CSV text: modes in UT, UC, SS order, controls ascending."""
    out = [",".join(DATASET_HEADER)]
    for c in dataset.curves:
        order = np.argsort(c.controls, kind="stable")
        for k in order:
            out.append(f"{c.mode},{_num(c.controls[k])},{_num(c.measured[k])}")
    return "\n".join(out) + "\n"


def save_dataset(dataset: ExperimentDataset, path) -> None:
    Path(path).write_text(format_dataset(dataset))


def _num(x) -> str:
    """Shortest repr that round-trips a float exactly."""
    return repr(float(x))


# -- config -------------------------------------------------------------------


@dataclass
class Config:
    """Run configuration; see ``CONFIG_KEYS`` for the accepted flat keys."""

    terms: tuple = ("u1", "u2", "uJ")
    sites: dict = field(default_factory=dict)
    positive_bounds: bool = False
    shear_weight: float = LossSpec().shear_weight
    lateral_penalty: bool = True
    ridge: float = CalibrationOptions().ridge
    epsilon: float = CalibrationOptions().epsilon
    n_max: int = CalibrationOptions().n_max
    seed: int = 0
    n_seeds: int = 8
    init_scale: float = 1.0
    success_threshold: float = CalibrationOptions().success_threshold
    lambda_pre: float = 0.8
    domain: dict = field(default_factory=dict)
    output_dir: str = "out"

    def ansatz(self) -> AnsatzSpec:
        return AnsatzSpec.from_terms(self.terms, self.site_counts())

    def site_counts(self) -> dict:
        return {fn: int(self.sites.get(fn, DEFAULT_SITES)) for fn in FUNCTIONS}

    def loss_spec(self) -> LossSpec:
        return LossSpec(self.shear_weight, self.lateral_penalty)

    def options(self, seed: int | None = None) -> CalibrationOptions:
        return CalibrationOptions(self.epsilon, self.n_max, self.seed if seed is None else seed,
                                  self.init_scale, self.ridge, self.success_threshold)


# key -> (type checker description, converter)
def _bool(v):
    if not isinstance(v, bool):
        raise TypeError("boolean")
    return v


def _int(v):
    if isinstance(v, bool) or not isinstance(v, int):
        raise TypeError("integer")
    return v


def _float(v):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise TypeError("number")
    return float(v)


def _str(v):
    if not isinstance(v, str):
        raise TypeError("string")
    return v


def _terms(v):
    if not isinstance(v, list) or not all(isinstance(t, str) for t in v):
        raise TypeError("list of term names")
    return tuple(v)


def _interval(v):
    if (not isinstance(v, list) or len(v) != 2
            or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in v)):
        raise TypeError("two-element list [lo, hi]")
    return (float(v[0]), float(v[1]))


CONFIG_KEYS = {
    "terms": _terms,
    "sites": _int,
    "positive_bounds": _bool,
    "shear_weight": _float,
    "lateral_penalty": _bool,
    "ridge": _float,
    "epsilon": _float,
    "n_max": _int,
    "seed": _int,
    "n_seeds": _int,
    "init_scale": _float,
    "success_threshold": _float,
    "lambda_pre": _float,
    "output_dir": _str,
    **{f"sites_{fn}": _int for fn in FUNCTIONS},
    **{f"domain_{arg}": _interval for arg in ("I1", "I2", "J")},
}


def parse_config(text: str, source: str = "<string>") -> Config:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{source}: {exc}") from None
    cfg = Config()
    sites = {}
    for key, value in raw.items():
        if key not in CONFIG_KEYS:
            raise ConfigError(f"{source}: unknown key {key!r}")
        try:
            value = CONFIG_KEYS[key](value)
        except TypeError as exc:
            raise ConfigError(f"{source}: key {key!r} expects {exc}") from None
        if key.startswith("sites_"):
            sites[key[len("sites_"):]] = value
        elif key.startswith("domain_"):
            cfg.domain[key[len("domain_"):]] = value
        elif key != "sites":
            setattr(cfg, key, value)
    # per-function counts override the global count regardless of key order
    if "sites" in raw:
        sites = {fn: sites.get(fn, raw["sites"]) for fn in FUNCTIONS}
    cfg.sites = sites
    _validate(cfg, source)
    return cfg


def _validate(cfg: Config, source: str) -> None:
    try:
        cfg.ansatz()
        cfg.loss_spec()
        cfg.options()
    except ValueError as exc:
        raise ConfigError(f"{source}: {exc}") from None
    if cfg.n_seeds < 2:
        raise ConfigError(f"{source}: key 'n_seeds' must be >= 2")
    if not cfg.lambda_pre > 0:
        raise ConfigError(f"{source}: key 'lambda_pre' must be positive")
    if not cfg.success_threshold > 0:
        raise ConfigError(f"{source}: key 'success_threshold' must be positive")
    for arg, (lo, hi) in cfg.domain.items():
        if not lo < hi:
            raise ConfigError(f"{source}: key 'domain_{arg}' needs lo < hi")


def load_config(path=None) -> Config:
    """Read a flat TOML config; ``None`` gives the defaults."""
    if path is None:
        return Config()
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, str(path))


# -- JSON ---------------------------------------------------------------------


def _fmt_float(x: float) -> str:
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    return format(x, ".17g") if x != int(x) or abs(x) >= 1e17 else repr(float(x))


def dumps(obj, indent: int = 2) -> str:
    """JSON with every float written to 17 significant digits.

    Keys keep insertion order, so equal inputs give identical text.
    """
    def enc(o, level):
        pad = " " * (indent * (level + 1))
        end = " " * (indent * level)
        if isinstance(o, dict):
            if not o:
                return "{}"
            items = [f"{pad}{json.dumps(str(k))}: {enc(v, level + 1)}" for k, v in o.items()]
            return "{\n" + ",\n".join(items) + "\n" + end + "}"
        if isinstance(o, (list, tuple, np.ndarray)):
            seq = list(o)
            if not seq:
                return "[]"
            if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in seq):
                return "[" + ", ".join(enc(v, level + 1) for v in seq) + "]"
            return "[\n" + ",\n".join(pad + enc(v, level + 1) for v in seq) + "\n" + end + "]"
        if isinstance(o, (bool, np.bool_)):
            return "true" if o else "false"
        if o is None:
            return "null"
        if isinstance(o, (int, np.integer)):
            return str(int(o))
        if isinstance(o, (float, np.floating)):
            return _fmt_float(float(o))
        if isinstance(o, str):
            return json.dumps(o)
        raise TypeError(f"cannot serialize {type(o).__name__}")

    return enc(obj, 0) + "\n"


def save_model(model: EnergyModel, theta, path) -> None:
    Path(path).write_text(dumps(model_to_dict(model, theta)))


def load_model(path):
    """Returns ``(model, theta)``."""
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DatasetError(f"cannot read model {path}: {exc}") from None
    try:
        return model_from_dict(data)
    except (KeyError, TypeError, ValueError) as exc:
        raise DatasetError(f"invalid model document {path}: {exc}") from None


def save_metrics(metrics: dict, path) -> None:
    Path(path).write_text(dumps(metrics))


# -- prediction and decomposition CSVs ----------------------------------------

PREDICTION_HEADER = ("mode", "control", "P11_pred", "P22_pred", "P12_pred")


def format_predictions(curves: dict) -> str:
    """``curves`` maps mode to arrays ``control, P11, P22, P12``."""
    out = [",".join(PREDICTION_HEADER)]
    for mode in MODES:
        if mode not in curves:
            continue
        c = curves[mode]
        for k in range(len(c["control"])):
            out.append(",".join([mode] + [_num(c[key][k]) for key in ("control", "P11", "P22", "P12")]))
    return "\n".join(out) + "\n"


def save_predictions(curves: dict, path) -> None:
    Path(path).write_text(format_predictions(curves))


def decomposition_table(model: EnergyModel, theta, n_points: int = 200) -> str:
    """Each active spline sampled on ``n_points`` uniform abscissae of its domain.

    Columns: function, argument name, abscissa, value, first derivative.
    """
    parts = model.split(theta)
    out = ["function,argument,x,value,derivative"]
    for fn in model.functions:
        space = model.spaces[fn]
        lo, hi = space.domain
        x = np.linspace(lo, hi, n_points)
        x[-1] = hi
        val = space.sensitivity(x, 0) @ parts[fn]
        der = space.sensitivity(x, 1) @ parts[fn]
        for k in range(n_points):
            out.append(f"{fn},{ARGUMENT[fn]},{_num(x[k])},{_num(val[k])},{_num(der[k])}")
    return "\n".join(out) + "\n"


def term_table(model: EnergyModel, theta, dataset: ExperimentDataset) -> str:
    """Energy of each active term at every data point (the decomposition panels)."""
    terms = [t for t in TERM_ORDER if t in model.ansatz.terms]
    out = ["mode,control," + ",".join(terms)]
    for c in dataset.curves:
        te = term_energies(model, theta, state_from_F(c.program.deformation_gradients()))
        for k in range(c.controls.size):
            out.append(",".join([c.mode, _num(c.controls[k])] + [_num(te[t][k]) for t in terms]))
    return "\n".join(out) + "\n"


def write_calibration_outputs(result: CalibrationResult, dataset: ExperimentDataset,
                              out_dir, config: Config | None = None) -> dict:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {
        "model": out_dir / "model.json",
        "metrics": out_dir / "metrics.json",
        "predictions": out_dir / "predictions.csv",
        "decomposition": out_dir / "decomposition.csv",
        "terms": out_dir / "terms.csv",
    }
    save_model(result.model, result.theta_star, paths["model"])
    metrics = result.metrics()
    if config is not None:
        metrics = {"config": config_dict(config), **metrics}
    save_metrics(metrics, paths["metrics"])
    save_predictions(result.predicted_curves, paths["predictions"])
    paths["decomposition"].write_text(decomposition_table(result.model, result.theta_star))
    paths["terms"].write_text(term_table(result.model, result.theta_star, dataset))
    return paths


def config_dict(cfg: Config) -> dict:
    out = {}
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        if isinstance(v, tuple):
            v = list(v)
        if isinstance(v, dict):
            v = {k: (list(x) if isinstance(x, tuple) else x) for k, x in sorted(v.items())}
        out[f.name] = v
    return out
