"""Text file formats: edge-list graphs, headerless signal CSVs, label CSVs and selection JSON."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .graph import Graph, GraphError, SamplingPlan, build_graph


class ParseError(ValueError):
    """Malformed input file; ``line`` is 1-based (0 when the problem is not tied to a line)."""

    def __init__(self, path, line: int, message: str):
        self.path = str(path)
        self.line = line
        where = f"{path}:{line}" if line else str(path)
        super().__init__(f"{where}: {message}")


def _fmt(v: float) -> str:
    return repr(float(v))


def save_graph(g: Graph, path):
    """``#vertices N`` then one ``u<TAB>v<TAB>w`` line per undirected edge with ``u < v``."""
    lines = [f"#vertices {g.n}"]
    lines += [f"{u}\t{v}\t{_fmt(w)}" for u, v, w in g.edges()]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_graph(path) -> Graph:
    text = Path(path).read_text(encoding="utf-8").splitlines()
    if not text:
        raise ParseError(path, 1, "empty file; expected '#vertices <N>'")
    head = text[0].split()
    if len(head) != 2 or head[0] != "#vertices":
        raise ParseError(path, 1, "first line must be '#vertices <N>'")
    try:
        n = int(head[1])
    except ValueError:
        raise ParseError(path, 1, f"vertex count {head[1]!r} is not an integer") from None
    if n < 0:
        raise ParseError(path, 1, "vertex count must be nonnegative")
    edges = []
    seen: dict[tuple[int, int], int] = {}
    for lineno, raw in enumerate(text[1:], start=2):
        if not raw.strip():
            continue
        parts = raw.split("\t")
        if len(parts) != 3:
            raise ParseError(path, lineno, "expected 'u<TAB>v<TAB>w'")
        try:
            u, v, w = int(parts[0]), int(parts[1]), float(parts[2])
        except ValueError:
            raise ParseError(path, lineno, "vertex ids must be integers and the weight a decimal") from None
        if not (0 <= u < n and 0 <= v < n):
            raise ParseError(path, lineno, f"edge {u}-{v} out of range for {n} vertices")
        if u == v:
            raise ParseError(path, lineno, f"self-loop at vertex {u}")
        if not (w > 0 and np.isfinite(w)):
            raise ParseError(path, lineno, f"edge weight {parts[2]!r} must be positive and finite")
        key = (min(u, v), max(u, v))
        if key in seen:
            raise ParseError(path, lineno, f"duplicate edge {u}-{v} (first on line {seen[key]})")
        seen[key] = lineno
        edges.append((u, v, w))
    try:
        return build_graph(n, edges)
    except GraphError as exc:
        raise ParseError(path, 0, str(exc)) from exc


def save_signals(x, path):
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for row in arr:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def load_signals(path, n: int | None = None) -> np.ndarray:
    """``(rows, columns)`` float matrix; ``n`` checks the row count against a graph."""
    rows = []
    width = None
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            try:
                row = [float(v) for v in raw.strip().split(",")]
            except ValueError:
                raise ParseError(path, lineno, "non-numeric entry") from None
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise ParseError(path, lineno, f"expected {width} columns, found {len(row)}")
            rows.append(row)
    if not rows:
        raise ParseError(path, 0, "no signal rows")
    arr = np.asarray(rows, dtype=np.float64)
    if n is not None and arr.shape[0] != n:
        raise GraphError(f"{path}: {arr.shape[0]} signal rows for a graph with {n} vertices")
    return arr


def save_labels(labels, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["vertex", "label"])
        for v, lab in enumerate(np.asarray(labels, dtype=int)):
            w.writerow([v, int(lab)])


def load_labels(path, n: int | None = None) -> np.ndarray:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["vertex", "label"]:
            raise ParseError(path, 1, "header must be 'vertex,label'")
        pairs = {}
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                v, lab = int(row[0]), int(row[1])
            except (ValueError, IndexError):
                raise ParseError(path, lineno, "expected 'vertex,label' integers") from None
            if v in pairs:
                raise ParseError(path, lineno, f"vertex {v} labeled twice")
            pairs[v] = lab
    size = n if n is not None else len(pairs)
    if sorted(pairs) != list(range(size)):
        raise GraphError(f"{path}: labels must cover vertices 0..{size - 1} exactly once")
    return np.array([pairs[v] for v in range(size)], dtype=int)


def selection_json(plan: SamplingPlan, criterion_trace=()) -> dict:
    return {
        "indices": [int(i) for i in plan.indices],
        "attention": [float(a) for a in plan.attention],
        "criterion_trace": [float(c) for c in criterion_trace],
    }


def save_selection(plan: SamplingPlan, path, criterion_trace=()):
    write_json(selection_json(plan, criterion_trace), path)


def load_selection(path) -> tuple[SamplingPlan, list[float]]:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    try:
        plan = SamplingPlan(tuple(int(i) for i in data["indices"]), np.asarray(data["attention"], dtype=float))
    except (KeyError, TypeError) as exc:
        raise ParseError(path, 0, f"selection JSON needs 'indices' and 'attention': {exc}") from exc
    return plan, [float(c) for c in data.get("criterion_trace", [])]


def write_json(obj, path):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def write_csv(path, header, rows):
    """Write rows with floats in shortest round-trip form so reruns are byte-identical."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])
