"""Readers and writers for every on-disk artifact.

CSV files start with a block of ``# key=value`` lines (tool, version,
config hash, seeds, unit). JSON files carry the same block under
``"header"``. Floats are written with ``repr`` so every value round-trips
exactly.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from pathlib import Path
from typing import Any, Iterable, Optional, Sequence

import numpy as np
import yaml

from . import __version__
from .errors import ConfigError, SchemaError
from .harness import METHODS, MethodResult, SummaryStats, TrialRecord, build_source
from .prob import Diagnostics, Encoder, JointPMF, SampleSet, joint_from_matrix
from .selection import CandidateEvaluation, SelectionOutcome
from .solvers import HyperparameterPoint

TRIAL_COLUMNS = (
    "trial",
    "method",
    "abstained",
    "chosen_index",
    "chosen_variant",
    "chosen_values",
    "exact_i_ty",
    "exact_i_xt",
    "violated",
)


def config_hash(config: Any) -> str:
    blob = json.dumps(config, sort_keys=True, default=str, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def make_header(kind: str, config: Any, seeds: dict, unit: str, **extra) -> dict:
    head = {
        "tool": "ibmht",
        "version": __version__,
        "kind": kind,
        "config_hash": config_hash(config),
        "seeds": seeds,
        "unit": unit,
    }
    head.update(extra)
    return head


def _fmt(x: Optional[float]) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    return repr(float(x))


def _jsonable(x):
    if isinstance(x, float) and not math.isfinite(x):
        return None
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.generic):
        return _jsonable(x.item())
    return x


def _header_lines(header: dict) -> str:
    lines = []
    for k, v in header.items():
        val = json.dumps(v, sort_keys=True) if isinstance(v, (dict, list)) else str(v)
        lines.append(f"# {k}={val}\n")
    return "".join(lines)


def _split_header(text: str) -> tuple[dict, list[str]]:
    header, body = {}, []
    for line in text.splitlines():
        if line.startswith("#"):
            key, _, val = line[1:].strip().partition("=")
            header[key.strip()] = val
        elif line.strip():
            body.append(line)
    return header, body


def _write_text(path, text: str) -> None:
    Path(path).write_text(text, encoding="utf-8", newline="")


def write_json(path, doc: dict) -> None:
    _write_text(path, json.dumps(_jsonable(doc), indent=1, sort_keys=False, allow_nan=False) + "\n")


def read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not valid JSON ({exc})") from exc


# ----------------------------------------------------------------------------
# Sources
# ----------------------------------------------------------------------------


def write_pmf_csv(path, joint: JointPMF, header: dict) -> None:
    body = "".join(",".join(repr(float(x)) for x in row) + "\n" for row in joint.mass)
    _write_text(path, _header_lines(header) + body)


def read_pmf_csv(path) -> JointPMF:
    _, body = _split_header(Path(path).read_text(encoding="utf-8"))
    try:
        rows = [[float(x) for x in line.split(",")] for line in body]
    except ValueError as exc:
        raise SchemaError(f"{path}: non-numeric entry ({exc})") from exc
    if not rows or len({len(r) for r in rows}) != 1:
        raise SchemaError(f"{path}: PMF matrix must be rectangular and nonempty")
    return joint_from_matrix(rows)


def load_config_doc(path) -> dict:
    """Parse a YAML or JSON document (JSON is valid YAML)."""
    try:
        doc = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: cannot parse ({exc})") from exc
    if doc is None:
        return {}
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: expected a mapping at the top level")
    return doc


def read_source(path) -> JointPMF:
    """A PMF CSV matrix, or a descriptor ``{kind: dsbs|dirichlet|matrix, ...}``."""
    if str(path).endswith(".csv"):
        return read_pmf_csv(path)
    doc = load_config_doc(path)
    doc = doc.get("source", doc)
    return build_source(doc)


# ----------------------------------------------------------------------------
# Samples
# ----------------------------------------------------------------------------


def write_samples_csv(path, samples: SampleSet, header: dict) -> None:
    head = dict(header)
    head["sizes"] = f"{samples.sizes[0]},{samples.sizes[1]}"
    buf = io.StringIO()
    buf.write(_header_lines(head))
    buf.write("u,v\n")
    np.savetxt(buf, np.column_stack([samples.u, samples.v]), fmt="%d", delimiter=",")
    _write_text(path, buf.getvalue())


def read_samples_csv(path, sizes: Optional[tuple[int, int]] = None) -> SampleSet:
    header, body = _split_header(Path(path).read_text(encoding="utf-8"))
    if not body or body[0].replace(" ", "") != "u,v":
        raise SchemaError(f"{path}: expected a 'u,v' header line")
    try:
        arr = np.array([[int(a) for a in line.split(",")] for line in body[1:]], dtype=np.int64)
    except ValueError as exc:
        raise SchemaError(f"{path}: non-integer symbol ({exc})") from exc
    if arr.ndim != 2 or arr.shape[1] != 2 or arr.shape[0] == 0:
        raise SchemaError(f"{path}: expected at least one 'u,v' row")
    if sizes is None:
        if "sizes" in header:
            sizes = tuple(int(s) for s in header["sizes"].split(","))
        else:
            sizes = (max(2, int(arr[:, 0].max()) + 1), max(2, int(arr[:, 1].max()) + 1))
    seed = header.get("seed")
    return SampleSet(arr[:, 0], arr[:, 1], sizes, int(seed) if seed not in (None, "", "None") else None)


# ----------------------------------------------------------------------------
# Encoder grids
# ----------------------------------------------------------------------------


def _hp_dict(hp: Optional[HyperparameterPoint]) -> Optional[dict]:
    return None if hp is None else {"variant": hp.variant, "values": list(hp.values)}


def _hp_from(d: Optional[dict]) -> Optional[HyperparameterPoint]:
    return None if d is None else HyperparameterPoint(d["variant"], tuple(d["values"]))


def write_encoder_grid(path, encoders: Sequence[Encoder], header: dict) -> None:
    doc = {
        "header": header,
        "x_size": encoders[0].x_size,
        "t_size": encoders[0].t_size,
        "encoders": [
            {
                "index": i,
                **_hp_dict(e.hp),
                "rows": e.rows.tolist(),
                "diagnostics": {
                    "iterations": int(e.diagnostics.iterations),
                    "final_objective": float(e.diagnostics.final_objective),
                    "restart_index": int(e.diagnostics.restart_index),
                    "converged": bool(e.diagnostics.converged),
                },
            }
            for i, e in enumerate(encoders)
        ],
    }
    write_json(path, doc)


def read_encoder_grid(path) -> list[Encoder]:
    doc = read_json(path)
    try:
        out = []
        for item in doc["encoders"]:
            diag = Diagnostics(**item["diagnostics"])
            hp = HyperparameterPoint(item["variant"], tuple(item["values"]))
            out.append(Encoder(np.array(item["rows"], dtype=float), hp, diag))
    except (KeyError, TypeError) as exc:
        raise SchemaError(f"{path}: malformed encoder grid ({exc})") from exc
    if not out:
        raise SchemaError(f"{path}: encoder grid is empty")
    return out


# ----------------------------------------------------------------------------
# Selection outcomes
# ----------------------------------------------------------------------------


def _eval_dict(e: CandidateEvaluation, rejected: bool, chosen: bool) -> dict:
    return {
        "index": e.index,
        "hp": _hp_dict(e.hp),
        "i_ty_opt": e.i_ty_opt,
        "i_xt_opt": e.i_xt_opt,
        "i_ty_mht": e.i_ty_mht,
        "i_xt_mht": e.i_xt_mht,
        "p_value": e.p_value,
        "i_ty_true": e.i_ty_true,
        "i_xt_true": e.i_xt_true,
        "rejected": rejected,
        "chosen": chosen,
    }


def outcome_doc(outcome: SelectionOutcome, header: dict, conventional: Optional[dict] = None) -> dict:
    rejected = {e.index for e in outcome.rejected}
    chosen = None if outcome.chosen is None else outcome.chosen.index
    doc = {
        "header": header,
        "audit": outcome.audit,
        "ordered_front": [_eval_dict(e, e.index in rejected, e.index == chosen) for e in outcome.ordered_front],
        "rejected": [e.index for e in outcome.rejected],
        "abstained": outcome.abstained,
        "chosen": None if outcome.chosen is None else {"index": chosen, "hp": _hp_dict(outcome.chosen.hp)},
        "lambda_star": "∅" if outcome.abstained else outcome.chosen.hp.label(),
    }
    if conventional is not None:
        doc["conventional"] = conventional
    return doc


def write_candidates_csv(path, outcome: SelectionOutcome, header: dict) -> None:
    rejected = {e.index for e in outcome.rejected}
    chosen = None if outcome.chosen is None else outcome.chosen.index
    buf = io.StringIO()
    buf.write(_header_lines(header))
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(
        ["position", "index", "variant", "values", "i_ty_opt", "i_xt_opt", "i_ty_mht", "i_xt_mht",
         "p_value", "rejected", "chosen", "i_ty_true", "i_xt_true"]
    )
    for pos, e in enumerate(outcome.ordered_front):
        w.writerow(
            [pos, e.index, e.hp.variant if e.hp else "", ";".join(repr(v) for v in e.hp.values) if e.hp else "",
             _fmt(e.i_ty_opt), _fmt(e.i_xt_opt), _fmt(e.i_ty_mht), _fmt(e.i_xt_mht), _fmt(e.p_value),
             int(e.index in rejected), int(e.index == chosen), _fmt(e.i_ty_true), _fmt(e.i_xt_true)]
        )
    _write_text(path, buf.getvalue())


# ----------------------------------------------------------------------------
# Experiment outputs
# ----------------------------------------------------------------------------


def trials_csv_text(records: Iterable[TrialRecord], header: dict) -> str:
    buf = io.StringIO()
    buf.write(_header_lines(header))
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRIAL_COLUMNS)
    for rec in records:
        for r in rec.results:
            w.writerow(
                [
                    rec.trial,
                    r.method,
                    int(r.abstained),
                    "" if r.abstained else r.chosen_index,
                    "" if r.hp is None else r.hp.variant,
                    "" if r.hp is None else ";".join(repr(v) for v in r.hp.values),
                    _fmt(r.exact_i_ty),
                    _fmt(r.exact_i_xt),
                    "" if r.violated is None else int(r.violated),
                ]
            )
    return buf.getvalue()


def write_trials_csv(path, records: Sequence[TrialRecord], header: dict) -> None:
    _write_text(path, trials_csv_text(records, header))


def _row_error(path, lineno: int, msg: str) -> SchemaError:
    return SchemaError(f"{path}: row {lineno}: {msg}")


def read_trials_csv(path) -> tuple[dict, list[TrialRecord]]:
    """Parse a trials CSV back into records; raises SchemaError naming the bad row."""
    text = Path(path).read_text(encoding="utf-8")
    header, body = _split_header(text)
    if not body:
        raise SchemaError(f"{path}: no column header")
    rows = list(csv.reader(body))
    if tuple(rows[0]) != TRIAL_COLUMNS:
        raise SchemaError(f"{path}: expected columns {','.join(TRIAL_COLUMNS)}")
    grouped: dict[int, list[MethodResult]] = {}
    for k, row in enumerate(rows[1:], start=2):
        if len(row) != len(TRIAL_COLUMNS):
            raise _row_error(path, k, f"expected {len(TRIAL_COLUMNS)} fields, got {len(row)}")
        rec = dict(zip(TRIAL_COLUMNS, row))
        if not rec["method"]:
            raise _row_error(path, k, "empty method")
        if rec["method"] not in METHODS:
            raise _row_error(path, k, f"unknown method {rec['method']!r}")
        try:
            trial = int(rec["trial"])
            if rec["abstained"] not in ("0", "1"):
                raise ValueError("abstained must be 0 or 1")
            if rec["abstained"] == "1":
                res = MethodResult(rec["method"], None, None, None, None, None)
            else:
                hp = HyperparameterPoint(
                    rec["chosen_variant"], tuple(float(v) for v in rec["chosen_values"].split(";"))
                )
                res = MethodResult(
                    rec["method"],
                    int(rec["chosen_index"]),
                    hp,
                    float(rec["exact_i_ty"]),
                    float(rec["exact_i_xt"]),
                    bool(int(rec["violated"])),
                )
        except (ValueError, KeyError) as exc:
            raise _row_error(path, k, str(exc)) from exc
        grouped.setdefault(trial, []).append(res)
    records = []
    for trial in sorted(grouped):
        got = {r.method for r in grouped[trial]}
        if got != set(METHODS) or len(grouped[trial]) != len(METHODS):
            raise SchemaError(f"{path}: trial {trial} does not have exactly one row per method (truncated?)")
        records.append(TrialRecord(trial, tuple(sorted(grouped[trial], key=lambda r: METHODS.index(r.method))), {}))
    if not records:
        raise SchemaError(f"{path}: no trial rows")
    if "trials" in header:
        try:
            expected = int(header["trials"])
        except ValueError as exc:
            raise SchemaError(f"{path}: bad trials header {header['trials']!r}") from exc
        if [r.trial for r in records] != list(range(expected)):
            raise SchemaError(f"{path}: expected trials 0..{expected - 1}, found {len(records)} (truncated?)")
    return header, records


def summary_doc(summary: SummaryStats, header: dict) -> dict:
    return {
        "header": header,
        "alpha": summary.alpha,
        "delta": summary.delta,
        "methods": {
            m.method: {k: getattr(m, k) for k in m.__dataclass_fields__ if k != "method"} for m in summary.methods
        },
    }


def write_scatter_csv(path, records: Sequence[TrialRecord], header: dict) -> None:
    buf = io.StringIO()
    buf.write(_header_lines(header))
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["trial", "method", "exact_i_ty", "exact_i_xt"])
    for rec in records:
        for r in rec.results:
            if not r.abstained:
                w.writerow([rec.trial, r.method, _fmt(r.exact_i_ty), _fmt(r.exact_i_xt)])
    _write_text(path, buf.getvalue())
