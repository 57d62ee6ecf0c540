"""Stream reports as CSV.

One row per online instance, in the order the stream was processed. The
column order is fixed so downstream tooling can rely on it:

    instance_idx, ade, fde, rr, loss, grad_norm, health,
    e_1..e_L, alpha_1..alpha_L

Cells that do not apply (no base metrics, plain strategy) are written as
empty strings. Floats are rendered with ``repr`` so a write/read round trip
reproduces the exact values.
"""

from __future__ import annotations

import csv

from .errors import ParseError
from .runtime import StreamRecord

FIXED_COLUMNS = ("instance_idx", "ade", "fde", "rr", "loss", "grad_norm", "health")


def stream_header(layers: int) -> list[str]:
    head = list(FIXED_COLUMNS)
    head += [f"e_{i}" for i in range(1, layers + 1)]
    head += [f"alpha_{i}" for i in range(1, layers + 1)]
    return head


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _vector_cells(values, layers: int) -> list[str]:
    if values is None:
        return [""] * layers
    cells = [_cell(float(v)) for v in values]
    if len(cells) != layers:
        raise ParseError(f"expected {layers} expert values, got {len(cells)}")
    return cells


def write_stream_csv(records: list[StreamRecord], path: str, layers: int | None = None) -> None:
    if layers is None:
        layers = max((len(r.expert) for r in records if r.expert is not None), default=0)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(stream_header(layers))
        for rec in records:
            row = [str(rec.instance_idx), _cell(rec.ade), _cell(rec.fde), _cell(rec.rr),
                   _cell(rec.loss), _cell(rec.grad_norm), rec.health]
            row += _vector_cells(rec.expert, layers)
            row += _vector_cells(rec.alpha, layers)
            writer.writerow(row)


def _parse_float(cell: str, row: int, column: str) -> float:
    try:
        return float(cell)
    except ValueError:
        raise ParseError(f"row {row}: column {column!r} is not a number: {cell!r}") from None


def read_stream_csv(path: str) -> list[StreamRecord]:
    """Read a stream report back into records; raises ParseError with row numbers."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ParseError(f"{path}: empty report, expected a header row")
    header = rows[0]
    if tuple(header[: len(FIXED_COLUMNS)]) != FIXED_COLUMNS:
        raise ParseError(f"{path}: unexpected header {header[:len(FIXED_COLUMNS)]}")
    extra = header[len(FIXED_COLUMNS):]
    if len(extra) % 2 != 0:
        raise ParseError(f"{path}: expert and alpha column counts differ")
    layers = len(extra) // 2
    expected = stream_header(layers)
    if header != expected:
        raise ParseError(f"{path}: header does not match the fixed layout")

    records = []
    for idx, row in enumerate(rows[1:], start=2):
        if len(row) != len(expected):
            raise ParseError(f"row {idx}: expected {len(expected)} cells, got {len(row)}")
        cells = dict(zip(expected, row))
        expert_cells = [cells[f"e_{i}"] for i in range(1, layers + 1)]
        alpha_cells = [cells[f"alpha_{i}"] for i in range(1, layers + 1)]

        def vector(parts, names):
            if all(c == "" for c in parts):
                return None
            return tuple(_parse_float(c, idx, n) for c, n in zip(parts, names))

        records.append(StreamRecord(
            instance_idx=int(_parse_float(cells["instance_idx"], idx, "instance_idx")),
            ade=_parse_float(cells["ade"], idx, "ade"),
            fde=_parse_float(cells["fde"], idx, "fde"),
            rr=None if cells["rr"] == "" else _parse_float(cells["rr"], idx, "rr"),
            loss=_parse_float(cells["loss"], idx, "loss"),
            grad_norm=_parse_float(cells["grad_norm"], idx, "grad_norm"),
            health=cells["health"],
            expert=vector(expert_cells, [f"e_{i}" for i in range(1, layers + 1)]),
            alpha=vector(alpha_cells, [f"alpha_{i}" for i in range(1, layers + 1)]),
        ))
    return records


def write_loss_csv(loss_log: list[float], path: str) -> None:
    """One row per epoch: epoch index and the mean training loss."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "loss"])
        for epoch, loss in enumerate(loss_log):
            writer.writerow([str(epoch), repr(float(loss))])
