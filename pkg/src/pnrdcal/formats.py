"""JSON file formats: experiment/detector configs, click histograms, results.

Every parse failure raises :class:`ConfigError` naming the file, the
approximate line and the offending field.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from . import __version__
from .background import BackgroundModel
from .detector_model import DEFAULT_TRUNCATION, MultiplexConfig
from .errors import CalibrationError
from .estimation import CalibrationResult
from .forward_model import ClickHistogram
from .simulation import DetectorConfig, ExperimentConfig, SourceConfig

HISTOGRAM_FORMAT = "pnrdcal.click-histogram"
RESULT_FORMAT = "pnrdcal.calibration-result"
FORMAT_VERSION = 1


class ConfigError(CalibrationError, ValueError):
    def __init__(self, path, line: int | None, field_name: str, message: str):
        self.path = str(path)
        self.line = line
        self.field = field_name
        where = f"{self.path}:{line}" if line else self.path
        super().__init__(f"{where}: {field_name or '<document>'}: {message}")


class _Document:
    """A parsed JSON document that remembers its source for error messages."""

    def __init__(self, path):
        self.path = Path(path)
        try:
            self.text = self.path.read_text()
        except OSError as exc:
            raise ConfigError(path, None, "", f"cannot read file ({exc.strerror})") from exc
        try:
            self.data = json.loads(self.text)
        except json.JSONDecodeError as exc:
            raise ConfigError(path, exc.lineno, "", f"invalid JSON: {exc.msg}") from exc
        if not isinstance(self.data, dict):
            raise ConfigError(path, 1, "", "top level must be an object")

    def line_of(self, dotted: str) -> int | None:
        pos = 0
        for key in dotted.split("."):
            idx = self.text.find(f'"{key}"', pos)
            if idx < 0:
                break
            pos = idx
        return self.text.count("\n", 0, pos) + 1 if pos else None

    def fail(self, dotted: str, message: str):
        raise ConfigError(self.path, self.line_of(dotted), dotted, message)

    def get(self, mapping: dict, prefix: str, key: str, kind, default=..., check=None):
        name = f"{prefix}.{key}" if prefix else key
        if key not in mapping:
            if default is ...:
                self.fail(name, "required field is missing")
            return default
        value = mapping[key]
        if kind is float and isinstance(value, int) and not isinstance(value, bool):
            value = float(value)
        if kind is not None and not isinstance(value, kind) or isinstance(value, bool) and kind is not bool:
            self.fail(name, f"expected {getattr(kind, '__name__', kind)}, got {type(value).__name__}")
        if check is not None:
            msg = check(value)
            if msg:
                self.fail(name, msg)
        return value

    def section(self, key: str, required: bool = True) -> dict:
        value = self.data.get(key)
        if value is None:
            if required:
                self.fail(key, "required section is missing")
            return {}
        if not isinstance(value, dict):
            self.fail(key, "expected an object")
        return value


def _unit_interval(v):
    return None if 0.0 <= v <= 1.0 else "must lie in [0, 1]"


def _non_negative(v):
    return None if v >= 0 else "must be >= 0"


def _positive(v):
    return None if v >= 1 else "must be >= 1"


def _number_list(v):
    if not v or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in v):
        return "must be a non-empty list of numbers"
    return None


def _parse_multiplex(doc: _Document, sec: dict, prefix: str, truncation: int) -> MultiplexConfig:
    label = doc.get(sec, prefix, "label", str, "")
    if "bin_probabilities" in sec:
        probs = doc.get(sec, prefix, "bin_probabilities", list, check=_number_list)
    else:
        bins = doc.get(sec, prefix, "bins", int, 8, check=_positive)
        probs = [1.0 / bins] * bins
    try:
        return MultiplexConfig(tuple(probs), truncation - 1, label)
    except ValueError as exc:
        doc.fail(f"{prefix}.bin_probabilities", str(exc))


def _parse_detector(doc: _Document, key: str, truncation: int, need_efficiency: bool) -> DetectorConfig:
    sec = doc.section(key)
    multiplex = _parse_multiplex(doc, sec, key, truncation)
    eta = doc.get(sec, key, "efficiency", float, ... if need_efficiency else 1.0, check=_unit_interval)
    return DetectorConfig(multiplex, eta)


def _parse_background(doc: _Document, key: str, truncation: int) -> BackgroundModel:
    value = doc.data.get(key, 0.0)
    if isinstance(value, dict):
        alpha = doc.get(value, key, "mean_photons", float, 0.0, check=_non_negative)
    else:
        alpha = doc.get(doc.data, "", key, float, 0.0, check=_non_negative)
    return BackgroundModel(alpha, truncation)


def _parse_source(doc: _Document, truncation: int | None) -> SourceConfig:
    sec = doc.section("source")
    kind = doc.get(sec, "source", "kind", str, "tmsv")
    if kind not in ("tmsv", "poisson", "custom"):
        doc.fail("source.kind", "must be one of 'tmsv', 'poisson', 'custom'")
    if truncation is None:
        truncation = doc.get(sec, "source", "truncation", int, DEFAULT_TRUNCATION, check=_positive)
    kwargs: dict[str, Any] = {"kind": kind, "truncation": truncation}
    if "pump_power" in sec:
        kwargs["pump_power"] = doc.get(sec, "source", "pump_power", float, check=_non_negative)
        kwargs["pump_gain"] = doc.get(sec, "source", "pump_gain", float, 1.0, check=_non_negative)
    if kind == "tmsv":
        kwargs["squeezing"] = doc.get(
            sec, "source", "lambda", float, 0.0 if "pump_power" in sec else ...,
            check=lambda v: None if abs(v) < 1 else "must satisfy |lambda| < 1",
        )
    elif kind == "poisson":
        kwargs["mean_pairs"] = doc.get(
            sec, "source", "mean_pairs", float, 0.0 if "pump_power" in sec else ..., check=_non_negative
        )
    else:
        kwargs["diagonal"] = tuple(doc.get(sec, "source", "diagonal", list, check=_number_list))
    try:
        return SourceConfig(**kwargs)
    except ValueError as exc:
        doc.fail("source", str(exc))


def load_experiment_config(path, seed: int | None = None, truncation: int | None = None,
                           trials: int | None = None) -> ExperimentConfig:
    """Read an experiment description; keyword arguments override file values."""
    doc = _Document(path)
    source = _parse_source(doc, truncation)
    N = source.truncation
    cfg = ExperimentConfig(
        source=source,
        detector1=_parse_detector(doc, "detector1", N, True),
        detector2=_parse_detector(doc, "detector2", N, True),
        background1=_parse_background(doc, "background1", N),
        background2=_parse_background(doc, "background2", N),
        trials=trials if trials is not None else doc.get(doc.data, "", "trials", int, 1, check=_positive),
        rng_seed=seed if seed is not None else doc.get(doc.data, "", "seed", int, 0, check=_non_negative),
    )
    return cfg


def load_detector_config(path, truncation: int | None = None) -> tuple[MultiplexConfig, MultiplexConfig]:
    """Read the two detectors' multiplexing geometry (efficiencies are ignored)."""
    doc = _Document(path)
    if truncation is None:
        truncation = doc.get(doc.data, "", "truncation", int, None, check=_positive)
        if truncation is None and "source" in doc.data and isinstance(doc.data["source"], dict):
            truncation = doc.get(doc.data["source"], "source", "truncation", int, None, check=_positive)
    N = truncation or DEFAULT_TRUNCATION
    return (
        _parse_multiplex(doc, doc.section("detector1"), "detector1", N),
        _parse_multiplex(doc, doc.section("detector2"), "detector2", N),
    )


def multiplex_to_dict(m: MultiplexConfig) -> dict:
    out: dict[str, Any] = {"bin_probabilities": list(m.bin_probabilities)}
    if m.label:
        out["label"] = m.label
    return out


def experiment_to_dict(cfg: ExperimentConfig) -> dict:
    s = cfg.source
    source: dict[str, Any] = {"kind": s.kind, "truncation": s.truncation}
    if s.kind == "tmsv":
        source["lambda"] = s.lam
    elif s.kind == "poisson":
        source["mean_pairs"] = s.mu
    else:
        source["diagonal"] = list(s.diagonal)
    if s.pump_power is not None:
        source.update(pump_power=s.pump_power, pump_gain=s.pump_gain)
    return {
        "source": source,
        "detector1": {**multiplex_to_dict(cfg.detector1.multiplex), "efficiency": cfg.detector1.efficiency},
        "detector2": {**multiplex_to_dict(cfg.detector2.multiplex), "efficiency": cfg.detector2.efficiency},
        "background1": {"mean_photons": cfg.background1.mean_photons},
        "background2": {"mean_photons": cfg.background2.mean_photons},
        "trials": cfg.trials,
        "seed": cfg.rng_seed,
    }


# --------------------------------------------------------------------------
# Click histograms
# --------------------------------------------------------------------------


@dataclass
class HistogramFile:
    """Contents of a click-histogram file.

    ``data`` is a :class:`ClickHistogram` for counts or a float array for
    probabilities.  ``detectors`` is present when the writer recorded the
    detector geometry.
    """

    data: ClickHistogram | np.ndarray
    detectors: tuple[MultiplexConfig, MultiplexConfig] | None = None
    label: str = ""
    metadata: dict = field(default_factory=dict)

    @property
    def matrix(self) -> np.ndarray:
        return self.data.counts if isinstance(self.data, ClickHistogram) else self.data


def write_histogram(path, data, detectors=None, label: str = "", metadata: dict | None = None) -> None:
    if isinstance(data, ClickHistogram):
        kind, matrix, trials = "counts", data.counts.tolist(), int(data.trials)
        metadata = {**data.metadata, **(metadata or {})}
    else:
        arr = np.asarray(data, dtype=float)
        kind, matrix, trials = "probabilities", arr.tolist(), None
    doc: dict[str, Any] = {
        "format": HISTOGRAM_FORMAT,
        "version": FORMAT_VERSION,
        "tool_version": __version__,
        "label": label,
        "kind": kind,
        "shape": [len(matrix), len(matrix[0])],
        "trials": trials,
        "matrix": matrix,
    }
    if detectors is not None:
        d1, d2 = detectors
        doc["detectors"] = {
            "truncation": d1.dim,
            "detector1": multiplex_to_dict(d1),
            "detector2": multiplex_to_dict(d2),
        }
    doc["metadata"] = metadata or {}
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")


def read_histogram(path) -> HistogramFile:
    doc = _Document(path)
    d = doc.data
    if d.get("format") != HISTOGRAM_FORMAT:
        doc.fail("format", f"expected {HISTOGRAM_FORMAT!r}")
    kind = doc.get(d, "", "kind", str)
    if kind not in ("counts", "probabilities"):
        doc.fail("kind", "must be 'counts' or 'probabilities'")
    rows = doc.get(d, "", "matrix", list)
    if not rows or not all(isinstance(r, list) and r and len(r) == len(rows[0]) for r in rows):
        doc.fail("matrix", "must be a non-empty rectangular list of rows")
    if not all(isinstance(v, (int, float)) and not isinstance(v, bool) for r in rows for v in r):
        doc.fail("matrix", "entries must be numbers")
    matrix = np.array(rows, dtype=float)
    shape = doc.get(d, "", "shape", list, list(matrix.shape))
    if list(shape) != list(matrix.shape):
        doc.fail("shape", f"declared {shape} but matrix is {list(matrix.shape)}")
    if np.any(matrix < 0):
        doc.fail("matrix", "entries must be non-negative")

    detectors = None
    if isinstance(d.get("detectors"), dict):
        sec = d["detectors"]
        N = doc.get(sec, "detectors", "truncation", int, DEFAULT_TRUNCATION, check=_positive)
        detectors = tuple(
            _parse_multiplex(doc, doc.get(sec, "detectors", k, dict), f"detectors.{k}", N)
            for k in ("detector1", "detector2")
        )
        expected = [detectors[0].bins + 1, detectors[1].bins + 1]
        if list(matrix.shape) != expected:
            doc.fail("shape", f"matrix shape {list(matrix.shape)} does not match detector bins {expected}")

    if kind == "counts":
        if not np.all(matrix == np.round(matrix)):
            doc.fail("matrix", "counts must be integers")
        trials = doc.get(d, "", "trials", int, check=_positive)
        if int(matrix.sum()) != trials:
            doc.fail("trials", f"counts sum to {int(matrix.sum())}, declared {trials}")
        data = ClickHistogram(matrix.astype(np.int64), trials, dict(d.get("metadata") or {}))
    else:
        if abs(matrix.sum() - 1.0) > 1e-9:
            doc.fail("matrix", f"probabilities sum to {matrix.sum()!r}")
        data = matrix
    return HistogramFile(data, detectors, d.get("label", ""), dict(d.get("metadata") or {}))


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# --------------------------------------------------------------------------
# Results and CSV
# --------------------------------------------------------------------------


def result_to_dict(result: CalibrationResult, detectors, inputs: dict, timing: float | None = None) -> dict:
    d1, d2 = detectors
    out = {
        "format": RESULT_FORMAT,
        "version": FORMAT_VERSION,
        "tool_version": __version__,
        "eta1": result.eta1,
        "eta2": result.eta2,
        "weights": result.weights.tolist(),
        "state": result.state.tolist(),
        "residual": result.residual,
        "converged": result.converged,
        "ambiguous": result.ambiguous,
        "unidentifiable": list(result.unidentifiable),
        "evaluations": result.evaluations,
        "iterations": result.iterations,
        "settings": {**result.settings, "truncation": d1.dim},
        "detectors": {
            "truncation": d1.dim,
            "detector1": multiplex_to_dict(d1),
            "detector2": multiplex_to_dict(d2),
        },
        "inputs": inputs,
    }
    if timing is not None:
        out["timing_s"] = timing
    return out


def write_json(path, doc: dict) -> None:
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def parse_range(spec: str, name: str = "range") -> np.ndarray:
    """``"start:stop:num"`` (inclusive linspace) or a single point count on [0, 1]."""
    try:
        parts = [p for p in spec.split(":")]
        if len(parts) == 1:
            return np.linspace(0.0, 1.0, int(parts[0]))
        if len(parts) == 3:
            start, stop, num = float(parts[0]), float(parts[1]), int(parts[2])
            if num < 1:
                raise ValueError
            return np.linspace(start, stop, num)
    except ValueError:
        pass
    raise ValueError(f"malformed {name} {spec!r}; use 'start:stop:num' or 'num'")
