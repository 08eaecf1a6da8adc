"""Top-k lists and rank agreement between two score vectors."""
from __future__ import annotations

import csv
import os
from dataclasses import dataclass

import numpy as np

from .ranking import ScoreVector


class UniverseMismatch(ValueError):
    pass


@dataclass(frozen=True)
class RankList:
    """(external_id, score) pairs, best first; ties go to the smaller id."""

    entries: tuple[tuple[int, float], ...]

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    @property
    def ids(self) -> list[int]:
        return [i for i, _ in self.entries]


def _order(s: ScoreVector) -> np.ndarray:
    # lexsort's last key is primary: descending score, then ascending id
    return np.lexsort((s.ids, -s.values))


def top_k(s: ScoreVector, k: int) -> RankList:
    if k < 0:
        raise ValueError("k must be non-negative")
    idx = _order(s)[:k]
    return RankList(tuple((int(s.ids[i]), float(s.values[i])) for i in idx))


def write_rank_list(path: str | os.PathLike, ranks: RankList) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["rank", "external_id", "score"])
        for pos, (i, x) in enumerate(ranks, 1):
            w.writerow([pos, i, format(x, ".17g")])


def kendall_tau(x: np.ndarray, y: np.ndarray) -> float:
    """Kendall's tau-b by explicit pair counting (O(n^2) memory and time).

    Returns 1.0 for fewer than two items and nan when either side is
    constant.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = len(x)
    if n < 2:
        return 1.0
    iu = np.triu_indices(n, 1)
    dx = np.sign(x[:, None] - x[None, :])[iu]
    dy = np.sign(y[:, None] - y[None, :])[iu]
    s = float((dx * dy).sum())
    nx = float(np.count_nonzero(dx))
    ny = float(np.count_nonzero(dy))
    if nx == 0 or ny == 0:
        return float("nan")
    # tau-b denominator; equals the pair count when there are no ties
    return s / np.sqrt(nx * ny)


@dataclass(frozen=True)
class Agreement:
    k: int
    overlap: float
    kendall_tau: float
    union_size: int


def rank_agreement(a: ScoreVector, b: ScoreVector, k: int) -> Agreement:
    """Top-k overlap fraction, and Kendall tau over the union of both top-k sets."""
    if not np.array_equal(np.sort(a.ids), np.sort(b.ids)):
        raise UniverseMismatch("score vectors cover different nodes")
    ta, tb = set(top_k(a, k).ids), set(top_k(b, k).ids)
    kk = min(k, len(a))
    overlap = len(ta & tb) / kk if kk else 1.0
    ids = np.array(sorted(ta | tb), dtype=np.int64)
    xa = np.array([a[i] for i in ids])
    xb = np.array([b[i] for i in ids])
    return Agreement(k, overlap, kendall_tau(xa, xb), len(ids))
