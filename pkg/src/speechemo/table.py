"""Feature tables: token metadata plus a numeric matrix, stored as CSV."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .features.vector import Group, block_slices, variable_names

META_COLUMNS = ("token_id", "session_id", "speaker_id", "emotion")


class TableError(ValueError):
    pass


@dataclass
class FeatureTable:
    token_ids: list[str]
    session_ids: list[str]
    speaker_ids: list[str]
    emotions: list[str]
    names: list[str]
    values: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).reshape(len(self.token_ids), len(self.names))
        n = len(self.token_ids)
        if not (len(self.session_ids) == len(self.speaker_ids) == len(self.emotions) == n):
            raise TableError("metadata columns differ in length")

    def __len__(self):
        return len(self.token_ids)

    @property
    def n_frames(self) -> int:
        return int(self.meta.get("n_frames", 12))

    def columns(self, names) -> np.ndarray:
        pos = {n: i for i, n in enumerate(self.names)}
        missing = [n for n in names if n not in pos]
        if missing:
            raise TableError(f"table lacks {len(missing)} variables, e.g. {missing[:3]}")
        return self.values[:, [pos[n] for n in names]]

    def group_names(self, group) -> list[str]:
        return variable_names(Group(group), self.n_frames)

    def select(self, group) -> "FeatureTable":
        names = self.group_names(group)
        meta = dict(self.meta, group=Group(group).value)
        return replace(self, names=names, values=self.columns(names), meta=meta)

    def take(self, rows) -> "FeatureTable":
        rows = np.asarray(rows)
        if rows.dtype == bool:
            rows = np.flatnonzero(rows)
        pick = lambda seq: [seq[i] for i in rows]  # noqa: E731
        return FeatureTable(
            pick(self.token_ids), pick(self.session_ids), pick(self.speaker_ids),
            pick(self.emotions), list(self.names), self.values[rows], dict(self.meta),
        )

    def fb_names(self) -> list[str]:
        wanted = set(variable_names(Group.FB, self.n_frames))
        return [n for n in self.names if n in wanted]


def format_value(v: float) -> str:
    return format(float(v), ".9g")


def sidecar_path(path) -> Path:
    return Path(str(path) + ".json")


def write_table(table: FeatureTable, path) -> None:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([*META_COLUMNS, *table.names])
        for i in range(len(table)):
            w.writerow([
                table.token_ids[i], table.session_ids[i], table.speaker_ids[i], table.emotions[i],
                *(format_value(v) for v in table.values[i]),
            ])
    sidecar_path(path).write_text(json.dumps(table.meta, indent=2, sort_keys=True) + "\n")


def read_table(path) -> FeatureTable:
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        r = csv.reader(fh)
        try:
            header = next(r)
        except StopIteration:
            raise TableError(f"{path}: empty feature file") from None
        if tuple(header[:4]) != META_COLUMNS:
            raise TableError(f"{path}: header must start with {','.join(META_COLUMNS)}")
        names = header[4:]
        meta_cols = [[], [], [], []]
        rows = []
        for lineno, row in enumerate(r, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise TableError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            for col, v in zip(meta_cols, row[:4]):
                col.append(v)
            try:
                rows.append([float(v) for v in row[4:]])
            except ValueError as exc:
                raise TableError(f"{path}:{lineno}: {exc}") from None
    side = sidecar_path(path)
    meta = json.loads(side.read_text()) if side.exists() else {}
    if "n_frames" not in meta:
        meta["n_frames"] = _infer_frames(names)
    values = np.array(rows, dtype=float).reshape(len(rows), len(names))
    return FeatureTable(*meta_cols, names=names, values=values, meta=meta)


def _infer_frames(names) -> int:
    for nf in range(1, 200):
        if len(names) == block_slices(nf)["ALL"].stop or len(names) in (16 * nf, 4 * nf):
            return nf
    return 12
