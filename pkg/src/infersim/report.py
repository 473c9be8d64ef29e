"""CSV persistence for run outputs and reconstruction of the metrics report
from persisted files. Floats are written as their shortest round-tripping
repr, so a reloaded report is identical to the in-run one."""
from __future__ import annotations

import csv
import io
import os

import yaml

from .metrics import MetricsReport, compute_metrics

TRACE_COLUMNS = ("time", "event", "gpu", "model", "batch", "request", "detail")
REQUEST_COLUMNS = (
    "request", "model", "priority", "arrival", "deadline_abs",
    "batch", "completion", "latency", "dropped", "violated",
)
DECISION_COLUMNS = ("time", "pass_id", "model", "size", "gpu", "est_latency", "intf_pred")
FEEDBACK_COLUMNS = (
    "time", "batch", "predicted", "actual", "residual",
    "predicted_at_schedule", "skipped", "saturated",
)
CAP_COLUMNS = ("time", "gpu", "cap_pct")
BATCH_COLUMNS = (
    "batch", "model", "priority", "size", "gpu", "front_enqueue", "sched_time",
    "transfer_start", "kernel_start", "kernel_end", "completion",
    "isolated_kernel", "measured_kernel", "intf_pred", "intf_actual",
    "est_latency", "actual_latency", "segments",
)

_FLOAT_FIELDS = {
    "time", "arrival", "deadline_abs", "completion", "latency", "est_latency",
    "intf_pred", "intf_actual", "cap_pct", "predicted", "actual", "residual",
    "predicted_at_schedule", "front_enqueue", "sched_time", "transfer_start",
    "kernel_start", "kernel_end", "isolated_kernel", "measured_kernel",
    "actual_latency",
}
_INT_FIELDS = {"pass_id", "size", "gpu", "dropped", "violated", "skipped", "saturated"}

RUN_FILES = {
    "trace": ("trace.csv", TRACE_COLUMNS),
    "requests": ("requests.csv", REQUEST_COLUMNS),
    "decisions": ("decisions.csv", DECISION_COLUMNS),
    "feedback": ("feedback.csv", FEEDBACK_COLUMNS),
    "caps": ("cap_timeline.csv", CAP_COLUMNS),
    "batches": ("batches.csv", BATCH_COLUMNS),
}


def _cell(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def rows_to_csv_text(rows: list[dict], columns: tuple[str, ...]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_cell(row.get(c, "")) for c in columns])
    return buf.getvalue()


def write_rows(path, rows: list[dict], columns: tuple[str, ...]) -> None:
    with open(path, "w", newline="") as f:
        f.write(rows_to_csv_text(rows, columns))


def read_rows(path, columns: tuple[str, ...]) -> list[dict]:
    rows: list[dict] = []
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        if tuple(reader.fieldnames or ()) != columns:
            raise ValueError(f"{path}: unexpected columns {reader.fieldnames}")
        for raw in reader:
            row = {}
            for key, text in raw.items():
                if text == "":
                    row[key] = ""
                elif key in _FLOAT_FIELDS:
                    row[key] = float(text)
                elif key in _INT_FIELDS:
                    row[key] = int(text)
                else:
                    row[key] = text
            rows.append(row)
    return rows


def write_run_dir(result, out_dir) -> None:
    os.makedirs(out_dir, exist_ok=True)
    payload = {
        "trace": result.trace_rows,
        "requests": result.request_rows,
        "decisions": result.decision_rows,
        "feedback": result.feedback_rows,
        "caps": result.cap_rows,
        "batches": result.batch_rows,
    }
    for key, (filename, columns) in RUN_FILES.items():
        write_rows(os.path.join(out_dir, filename), payload[key], columns)
    summary = summary_dict(result)
    with open(os.path.join(out_dir, "summary.yaml"), "w") as f:
        yaml.safe_dump(summary, f, sort_keys=False)


def summary_dict(result) -> dict:
    return {
        "policy": result.policy,
        "policy_variant": result.policy_variant,
        "seed": result.seed,
        "trace_hash": result.trace_hash(),
        "metrics": result.metrics.to_dict(),
    }


def report_from_run_dir(run_dir, window_ms: float = 1000.0) -> MetricsReport:
    """Rebuild the metrics report from the persisted CSVs; equals the in-run
    report exactly because cells round-trip bit-for-bit."""
    requests = read_rows(os.path.join(run_dir, "requests.csv"), REQUEST_COLUMNS)
    batches = read_rows(os.path.join(run_dir, "batches.csv"), BATCH_COLUMNS)
    feedback = read_rows(os.path.join(run_dir, "feedback.csv"), FEEDBACK_COLUMNS)
    caps = read_rows(os.path.join(run_dir, "cap_timeline.csv"), CAP_COLUMNS)
    return compute_metrics(requests, batches, feedback, caps, window_ms=window_ms)
