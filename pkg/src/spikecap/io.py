"""Readers and writers for the JSON and CSV artifacts.

Layouts are documented in ``docs/formats.md``. Output is deterministic:
keys keep insertion order and floats are written with 17 significant
digits, so the same computation always produces byte-identical files.
"""
from __future__ import annotations

import csv
import io as _io
import json
import math
from pathlib import Path

import numpy as np

from . import __version__
from .capacity_solver import (
    CapacitySolution,
    Coding,
    InputEnsemble,
    KKTReport,
    _bps,
)
from .core_it import ChannelMatrix, DiscretePMF, JointPMF
from .errors import ValidationError
from .neuron_channel import DEFAULT_TAIL_TOL, CountChannelConfig, GammaChannel


# Deterministic JSON -------------------------------------------------------

def _fmt_float(x: float) -> str:
    if math.isnan(x):
        return '"nan"'
    if math.isinf(x):
        return '"inf"' if x > 0 else '"-inf"'
    return format(x, ".17g")


def _encode(obj, indent: int, level: int) -> str:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _fmt_float(float(obj))
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_encode(v, indent, level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in obj):
            return "[" + ", ".join(_encode(v, indent, level + 1) for v in obj) + "]"
        items = [pad + _encode(v, indent, level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    if isinstance(obj, Coding):
        return json.dumps(obj.value)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj, indent: int = 2) -> str:
    return _encode(obj, indent, 0) + "\n"


def provenance(config: dict, seed=None) -> dict:
    return {"tool": "spikecap", "version": __version__, "config": config, "seed": seed}


def write_json(path, obj) -> None:
    Path(path).write_text(dumps(obj))


def write_csv(path, header, rows, prov: dict | None = None) -> None:
    """CSV with an optional ``#``-prefixed provenance block on top."""
    buf = _io.StringIO()
    if prov is not None:
        for line in dumps(prov).splitlines():
            buf.write(f"# {line}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt_float(float(v)) if isinstance(v, (float, np.floating)) else v
                         for v in row])
    Path(path).write_text(buf.getvalue())


def read_csv_rows(path) -> list[list[str]]:
    lines = [ln for ln in Path(path).read_text().splitlines()
             if ln.strip() and not ln.lstrip().startswith("#")]
    return list(csv.reader(lines))


# PMFs and channels ----------------------------------------------------------

def _load(path):
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"{path}: no such file")
    if path.suffix.lower() == ".json":
        try:
            return json.loads(path.read_text()), "json"
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: invalid JSON ({exc.msg})") from None
    return read_csv_rows(path), "csv"


def _field(d, name, path):
    if name not in d:
        raise ValidationError(f"{path}: missing field '{name}'")
    return d[name]


def _floats(values, name, path):
    try:
        return [float(v) for v in values]
    except (TypeError, ValueError):
        raise ValidationError(f"{path}: field '{name}' must hold numbers") from None


def read_pmf(path, renormalize: bool = False) -> DiscretePMF:
    """JSON ``{"labels": [...], "probs": [...]}`` or a CSV header row + one row."""
    data, kind = _load(path)
    if kind == "json":
        labels = _field(data, "labels", path)
        probs = _floats(_field(data, "probs", path), "probs", path)
    else:
        if len(data) != 2:
            raise ValidationError(f"{path}: PMF CSV needs a header row and one probability row")
        labels, probs = data[0], _floats(data[1], "probs", path)
    try:
        return DiscretePMF(tuple(labels), probs, renormalize=renormalize)
    except ValidationError as exc:
        raise ValidationError(f"{path}: field 'probs': {exc}") from None


def _matrix_csv(data, path):
    if len(data) < 2:
        raise ValidationError(f"{path}: matrix CSV needs a header and at least one row")
    cols = data[0][1:]
    row_labels, rows = [], []
    for line in data[1:]:
        row_labels.append(line[0])
        rows.append(_floats(line[1:], "rows", path))
    return row_labels, cols, rows


def read_joint(path, renormalize: bool = False) -> JointPMF:
    data, kind = _load(path)
    if kind == "json":
        rl = _field(data, "row_labels", path)
        cl = _field(data, "col_labels", path)
        probs = [_floats(r, "probs", path) for r in _field(data, "probs", path)]
    else:
        rl, cl, probs = _matrix_csv(data, path)
    try:
        return JointPMF(tuple(rl), tuple(cl), probs, renormalize=renormalize)
    except ValidationError as exc:
        raise ValidationError(f"{path}: field 'probs': {exc}") from None


def read_channel(path) -> ChannelMatrix:
    data, kind = _load(path)
    if kind == "json":
        il = _field(data, "input_labels", path)
        ol = _field(data, "output_labels", path)
        rows = [_floats(r, "rows", path) for r in _field(data, "rows", path)]
    else:
        il, ol, rows = _matrix_csv(data, path)
    try:
        return ChannelMatrix(tuple(il), tuple(ol), rows)
    except ValidationError as exc:
        raise ValidationError(f"{path}: field 'rows': {exc}") from None


def pmf_to_dict(p: DiscretePMF) -> dict:
    return {"labels": list(p.labels), "probs": p.probs.tolist()}


def channel_to_dict(ch: ChannelMatrix) -> dict:
    return {"input_labels": list(ch.input_labels), "output_labels": list(ch.output_labels),
            "rows": ch.rows.tolist()}


# Channel configs and solutions -------------------------------------------

def channel_config_to_dict(channel) -> dict:
    if isinstance(channel, CountChannelConfig):
        return channel.to_dict()
    return {**channel.to_dict(), "delta": None, "tail_tol": None}


def channel_from_dict(d: dict, coding) -> GammaChannel | CountChannelConfig:
    try:
        base = GammaChannel(d["kappa"], d["a0"], d["b0"])
    except KeyError as exc:
        raise ValidationError(f"channel config: missing field '{exc.args[0]}'") from None
    if Coding(coding) is Coding.RATE or d.get("delta") is not None:
        if d.get("delta") is None:
            raise ValidationError("channel config: field 'delta' is required for rate coding")
        return CountChannelConfig(base, d["delta"], d.get("tail_tol") or DEFAULT_TAIL_TOL)
    return base


def solution_to_dict(sol: CapacitySolution, prov: dict | None = None) -> dict:
    base = sol.channel.base if isinstance(sol.channel, CountChannelConfig) else sol.channel
    cert = sol.certificate
    out = {
        "coding": sol.coding.value,
        "kappa": base.kappa,
        "a0": base.a0,
        "b0": base.b0,
        "delta": sol.channel.delta if isinstance(sol.channel, CountChannelConfig) else None,
        "points": sol.ensemble.points.tolist(),
        "weights": sol.ensemble.weights.tolist(),
        "capacity_per_use_bits": sol.capacity_per_use,
        "capacity_bps": sol.capacity_bps,
        "certificate": None if cert is None else {
            "max_violation": cert.max_violation,
            "at_support_gap": cert.at_support_gap,
            "passed": cert.passed,
            "slack_tol": cert.slack_tol,
        },
    }
    if isinstance(sol.channel, CountChannelConfig):
        out["tail_tol"] = sol.channel.tail_tol
    if prov is not None:
        out["provenance"] = prov
    return out


def solution_from_dict(d: dict) -> CapacitySolution:
    for name in ("coding", "kappa", "a0", "b0", "points", "weights", "capacity_per_use_bits"):
        if name not in d:
            raise ValidationError(f"solution JSON: missing field '{name}'")
    coding = Coding(d["coding"])
    channel = channel_from_dict(d, coding)
    ens = InputEnsemble(d["points"], d["weights"], renormalize=True)
    cert = d.get("certificate")
    report = None
    if cert is not None:
        report = KKTReport(
            grid=np.empty(0), info_density=np.empty(0),
            capacity_ref=float(d["capacity_per_use_bits"]),
            max_violation=float(cert["max_violation"]),
            at_support_gap=float(cert["at_support_gap"]),
            passed=bool(cert["passed"]),
            slack_tol=float(cert["slack_tol"]),
        )
    per_use = float(d["capacity_per_use_bits"])
    return CapacitySolution(
        ensemble=ens, coding=coding, capacity_per_use=per_use,
        capacity_bps=_bps(per_use, ens, channel, coding),
        certificate=report, channel=channel,
    )


def read_solution(path) -> CapacitySolution:
    data, kind = _load(path)
    if kind != "json":
        raise ValidationError(f"{path}: a capacity solution must be a JSON file")
    return solution_from_dict(data)


def write_kkt_csv(path, report: KKTReport, prov: dict | None = None) -> None:
    write_csv(path, ["theta", "info_density_bits"],
              zip(map(float, report.grid), map(float, report.info_density)), prov)
