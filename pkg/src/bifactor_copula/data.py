"""Ordinal dataset container and CSV ingestion."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np


class DataError(ValueError):
    """Malformed or inconsistent input data; carries a location when known."""

    def __init__(self, message: str, row: int | None = None, column: str | None = None):
        loc = []
        if row is not None:
            loc.append(f"row {row}")
        if column is not None:
            loc.append(f"column {column!r}")
        super().__init__(f"{message} ({', '.join(loc)})" if loc else message)
        self.row = row
        self.column = column


@dataclass(frozen=True)
class OrdinalDataset:
    """n x d matrix of 0-based ordinal codes with items ordered group by group."""

    codes: np.ndarray
    item_names: tuple[str, ...] = ()
    n_categories: tuple[int, ...] = ()
    group_labels: tuple[str, ...] = ()
    group_sizes: tuple[int, ...] = ()

    def __post_init__(self):
        codes = np.array(self.codes, dtype=np.int64, copy=True)
        if codes.ndim != 2 or codes.shape[0] < 1:
            raise DataError("codes must be a non-empty n x d matrix")
        codes.setflags(write=False)
        object.__setattr__(self, "codes", codes)
        d = codes.shape[1]
        names = tuple(self.item_names) or tuple(f"y{j + 1}" for j in range(d))
        if len(names) != d:
            raise DataError(f"{len(names)} item names for {d} columns")
        object.__setattr__(self, "item_names", names)
        K = tuple(int(k) for k in self.n_categories) or tuple(int(k) for k in codes.max(axis=0) + 1)
        if len(K) != d:
            raise DataError("one category count per item required")
        object.__setattr__(self, "n_categories", K)
        if np.any(codes < 0) or np.any(codes >= np.array(K)[None, :]):
            bad = np.argwhere((codes < 0) | (codes >= np.array(K)[None, :]))[0]
            raise DataError("code out of range", row=int(bad[0]) + 1, column=names[bad[1]])
        sizes = tuple(int(s) for s in self.group_sizes) or (d,)
        if sum(sizes) != d:
            raise DataError(f"group sizes {sizes} do not cover {d} items")
        object.__setattr__(self, "group_sizes", sizes)
        labels = tuple(self.group_labels) or tuple(f"g{g + 1}" for g in range(len(sizes)))
        if len(labels) != len(sizes):
            raise DataError("one label per group required")
        object.__setattr__(self, "group_labels", labels)

    @property
    def n(self) -> int:
        return self.codes.shape[0]

    @property
    def d(self) -> int:
        return self.codes.shape[1]

    @property
    def G(self) -> int:
        return len(self.group_sizes)

    def to_csv(self, path: str | Path, code_offset: int = 0) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.item_names)
            w.writerows((self.codes + code_offset).tolist())

    def __eq__(self, other):
        if not isinstance(other, OrdinalDataset):
            return NotImplemented
        return (np.array_equal(self.codes, other.codes) and self.item_names == other.item_names
                and self.n_categories == other.n_categories and self.group_sizes == other.group_sizes)

    __hash__ = None


def ingest_csv(path: str | Path, groups: Mapping[str, Sequence[str]] | None = None,
               code_offset: int = 0, n_categories: Mapping[str, int] | int | None = None) -> OrdinalDataset:
    """Read a header + integer-cell CSV into an OrdinalDataset.

    ``groups`` maps group labels to ordered item names; columns are reordered
    group by group. Without groups all columns form a single group.
    """
    path = Path(path)
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path} is empty") from None
        if len(set(header)) != len(header):
            raise DataError("duplicate column names in header", row=1)
        rows, line_no = [], []
        for r, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataError(f"expected {len(header)} cells, found {len(row)}", row=r)
            vals = []
            for c, cell in enumerate(row):
                cell = cell.strip()
                if cell == "":
                    raise DataError("missing value", row=r, column=header[c])
                try:
                    vals.append(int(cell))
                except ValueError:
                    raise DataError(f"non-integer cell {cell!r}", row=r, column=header[c]) from None
            rows.append(vals)
            line_no.append(r)
    if not rows:
        raise DataError(f"{path} has no data rows")
    raw = np.array(rows, dtype=np.int64) - int(code_offset)

    if groups:
        order, sizes, labels = [], [], []
        seen = set()
        for label, items in groups.items():
            items = list(items)
            for it in items:
                if it not in header:
                    raise DataError(f"group {label!r} names unknown item {it!r}")
                if it in seen:
                    raise DataError(f"item {it!r} assigned to more than one group")
                seen.add(it)
            order.extend(header.index(it) for it in items)
            sizes.append(len(items))
            labels.append(label)
        missing = [h for h in header if h not in seen]
        if missing:
            raise DataError(f"items not assigned to any group: {', '.join(missing)}")
    else:
        order, sizes, labels = list(range(len(header))), [len(header)], ["g1"]
    codes = raw[:, order]
    names = [header[i] for i in order]

    neg = np.argwhere(codes < 0)
    if len(neg):
        r, c = neg[0]
        raise DataError(f"code below 0 after offset {code_offset}", row=line_no[r], column=names[c])
    if n_categories is None:
        K = codes.max(axis=0) + 1
    elif isinstance(n_categories, int):
        K = np.full(len(names), n_categories)
    else:
        K = np.array([int(n_categories.get(nm, codes[:, j].max() + 1)) for j, nm in enumerate(names)])
    over = np.argwhere(codes >= K[None, :])
    if len(over):
        r, c = over[0]
        raise DataError(f"code exceeds {K[c] - 1}", row=line_no[r], column=names[c])
    return OrdinalDataset(codes, tuple(names), tuple(int(k) for k in K), tuple(labels), tuple(sizes))
