"""Attributed-graph data model and the on-disk dataset format.

A dataset directory holds ``edges.tsv`` (two tab-separated 0-based node ids
per line, ``#`` comments allowed), ``nodes.csv`` (header
``id,s,y,x_0,...,x_{d-1}``; ``y`` empty when labels are absent) and
``meta.json``.  Floats are written with ``repr`` so a save/load round trip
is exact.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .autodiff import Tensor
from .sparse import SparseMatrix, build_csr

__all__ = ["AttributedGraph", "DatasetError", "matrix_std", "load_dataset", "save_dataset", "check_graph"]


class DatasetError(ValueError):
    """Malformed or inconsistent dataset files."""


@dataclass
class AttributedGraph:
    n_nodes: int
    adjacency: SparseMatrix
    attributes: Tensor
    sensitive: np.ndarray
    labels: np.ndarray | None = None
    meta: dict | None = None

    def __post_init__(self):
        self.sensitive = np.asarray(self.sensitive, dtype=np.int64)
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
        check_graph(self)

    @property
    def n_attrs(self) -> int:
        return self.attributes.shape[1]

    @property
    def n_edges(self) -> int:
        return self.adjacency.nnz // 2

    def __eq__(self, other) -> bool:
        if not isinstance(other, AttributedGraph):
            return NotImplemented
        same_labels = (
            (self.labels is None and other.labels is None)
            or (self.labels is not None and other.labels is not None
                and np.array_equal(self.labels, other.labels))
        )
        return (
            self.n_nodes == other.n_nodes
            and self.adjacency == other.adjacency
            and np.array_equal(self.attributes.data, other.attributes.data)
            and np.array_equal(self.sensitive, other.sensitive)
            and same_labels
        )


def check_graph(g: AttributedGraph) -> AttributedGraph:
    """Validate the structural invariants; raises DatasetError on violation."""
    n = g.n_nodes
    if g.adjacency.shape != (n, n):
        raise DatasetError(f"adjacency shape {g.adjacency.shape} does not match n_nodes={n}")
    if g.attributes.ndim != 2 or g.attributes.shape[0] != n:
        raise DatasetError(f"attribute matrix shape {g.attributes.shape} does not match n_nodes={n}")
    if g.sensitive.shape != (n,):
        raise DatasetError("sensitive vector length must equal n_nodes")
    if not np.isin(g.sensitive, (0, 1)).all():
        raise DatasetError("sensitive attribute must be binary")
    if g.labels is not None:
        if g.labels.shape != (n,):
            raise DatasetError("label vector length must equal n_nodes")
        if not np.isin(g.labels, (0, 1)).all():
            raise DatasetError("labels must be binary")
    a = g.adjacency.to_scipy()
    if (a != a.T).nnz != 0:
        raise DatasetError("adjacency must be symmetric")
    if a.diagonal().any():
        raise DatasetError("adjacency must have a zero diagonal")
    return g


def matrix_std(values) -> float:
    """Population standard deviation over all entries of a dense matrix."""
    arr = np.asarray(values, dtype=np.float64).ravel()
    if arr.size == 0:
        raise ValueError("matrix_std of an empty matrix")
    return float(np.std(arr))


def save_dataset(g: AttributedGraph, path) -> None:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)

    lines = []
    for i, j, _ in g.adjacency.entries():
        if i < j:
            lines.append(f"{i}\t{j}\n")
    _atomic_write(path / "edges.tsv", "".join(lines))

    d = g.n_attrs
    header = ["id", "s", "y"] + [f"x_{k}" for k in range(d)]
    rows = [",".join(header) + "\n"]
    x = g.attributes.data
    for i in range(g.n_nodes):
        y = "" if g.labels is None else str(int(g.labels[i]))
        cells = [str(i), str(int(g.sensitive[i])), y] + [repr(float(v)) for v in x[i]]
        rows.append(",".join(cells) + "\n")
    _atomic_write(path / "nodes.csv", "".join(rows))

    meta = dict(g.meta or {})
    meta.setdefault("seed", None)
    meta.setdefault("generator_config", {})
    meta["n_nodes"] = g.n_nodes
    meta["n_attrs"] = d
    _atomic_write(path / "meta.json", json.dumps(meta, indent=2, sort_keys=True) + "\n")


def load_dataset(path) -> AttributedGraph:
    path = Path(path)
    meta_path = path / "meta.json"
    nodes_path = path / "nodes.csv"
    edges_path = path / "edges.tsv"
    for p in (meta_path, nodes_path, edges_path):
        if not p.exists():
            raise DatasetError(f"missing dataset file: {p}")

    meta = json.loads(meta_path.read_text(encoding="utf-8"))
    for key in ("n_nodes", "n_attrs"):
        if key not in meta:
            raise DatasetError(f"meta.json missing key {key!r}")
    n, d = int(meta["n_nodes"]), int(meta["n_attrs"])

    edges = []
    with edges_path.open(encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise DatasetError(f"edges.tsv line {lineno}: expected two columns")
            try:
                i, j = int(parts[0]), int(parts[1])
            except ValueError as err:
                raise DatasetError(f"edges.tsv line {lineno}: non-integer node id") from err
            if not (0 <= i < n and 0 <= j < n):
                raise DatasetError(f"edges.tsv line {lineno}: node id out of range for N={n}")
            edges.append((i, j))

    header_expected = ["id", "s", "y"] + [f"x_{k}" for k in range(d)]
    x = np.zeros((n, d), dtype=np.float64)
    s = np.zeros(n, dtype=np.int64)
    y = np.zeros(n, dtype=np.int64)
    seen = np.zeros(n, dtype=bool)
    any_label, all_label = False, True
    with nodes_path.open(encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetError("nodes.csv is empty") from None
        if header != header_expected:
            raise DatasetError(
                f"nodes.csv header mismatch: expected {','.join(header_expected)}"
            )
        for rowno, row in enumerate(reader, start=2):
            if len(row) != 3 + d:
                raise DatasetError(f"nodes.csv row {rowno}: expected {3 + d} columns, got {len(row)}")
            try:
                i = int(row[0])
            except ValueError as err:
                raise DatasetError(f"nodes.csv row {rowno}: bad node id") from err
            if not (0 <= i < n):
                raise DatasetError(f"nodes.csv row {rowno}: node id {i} out of range for N={n}")
            if seen[i]:
                raise DatasetError(f"nodes.csv row {rowno}: duplicate node id {i}")
            seen[i] = True
            if row[1] not in ("0", "1"):
                raise DatasetError(f"nodes.csv row {rowno}: sensitive value must be 0 or 1, got {row[1]!r}")
            s[i] = int(row[1])
            if row[2] == "":
                all_label = False
            else:
                if row[2] not in ("0", "1"):
                    raise DatasetError(f"nodes.csv row {rowno}: label must be 0, 1 or empty, got {row[2]!r}")
                any_label = True
                y[i] = int(row[2])
            try:
                x[i] = [float(v) for v in row[3:]]
            except ValueError as err:
                raise DatasetError(f"nodes.csv row {rowno}: non-numeric attribute") from err
    if not seen.all():
        raise DatasetError(f"nodes.csv lists {int(seen.sum())} nodes but meta.json declares {n}")
    if any_label and not all_label:
        raise DatasetError("nodes.csv mixes labeled and unlabeled rows")

    return AttributedGraph(
        n_nodes=n,
        adjacency=build_csr(edges, n),
        attributes=Tensor(x),
        sensitive=s,
        labels=y if any_label else None,
        meta=meta,
    )


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8", newline="\n")
    os.replace(tmp, path)
