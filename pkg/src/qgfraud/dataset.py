"""Transaction CSV ingestion, class balancing, and stratified splits.

The expected CSV layout is the usual credit-card fraud format: a header of
``Time,V1,...,V28,Amount,Class`` followed by numeric rows, ``Class`` being 0
(non-fraud) or 1 (fraud). Quoted label cells are accepted.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .rng import make_rng

N_FEATURES = 28
HEADER = ("Time", *[f"V{i}" for i in range(1, N_FEATURES + 1)], "Amount", "Class")


class DatasetError(ValueError):
    """Malformed input file or an invalid sampling/split request."""


@dataclass(frozen=True)
class Transaction:
    """One row: elapsed seconds, 28 PCA features, amount, binary label."""

    time: float
    v: tuple[float, ...]
    amount: float
    label: int

    def __post_init__(self) -> None:
        if len(self.v) != N_FEATURES:
            raise DatasetError(f"expected {N_FEATURES} V features, got {len(self.v)}")
        if self.label not in (0, 1):
            raise DatasetError(f"label must be 0 or 1, got {self.label!r}")


@dataclass
class TransactionSet:
    """Ordered transactions plus the seed of whatever sampling produced them."""

    rows: list[Transaction]
    seed: int | None = None

    def __len__(self) -> int:
        return len(self.rows)

    def labels(self) -> np.ndarray:
        return np.array([t.label for t in self.rows], dtype=int)

    def class_counts(self) -> tuple[int, int]:
        """(non-fraud count, fraud count)."""
        labels = self.labels()
        return int(np.sum(labels == 0)), int(np.sum(labels == 1))


@dataclass(frozen=True)
class SplitSpec:
    train_frac: float = 0.65
    val_frac: float = 0.05
    test_frac: float = 0.30

    def __post_init__(self) -> None:
        fracs = (self.train_frac, self.val_frac, self.test_frac)
        for f in fracs:
            if not 0.0 < f < 1.0:
                raise DatasetError(f"split fractions must lie in (0, 1), got {f!r}")
        if abs(sum(fracs) - 1.0) > 1e-12:
            raise DatasetError(f"split fractions must sum to 1, got {sum(fracs)!r}")


def load_transactions(path) -> TransactionSet:
    """Parse the CSV at ``path``; errors carry the offending row number."""
    p = Path(path)
    if not p.exists():
        raise DatasetError(f"dataset file not found: {p}")
    rows: list[Transaction] = []
    with open(p, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DatasetError(f"{p}: empty file, expected header {','.join(HEADER)}")
        if tuple(h.strip().strip("'\"") for h in header) != HEADER:
            raise DatasetError(f"{p}: malformed header {header!r}")
        for lineno, cells in enumerate(reader, start=2):
            if not cells:
                continue
            if len(cells) != len(HEADER):
                raise DatasetError(
                    f"{p}: row {lineno}: expected {len(HEADER)} columns, got {len(cells)}"
                )
            try:
                time = float(cells[0])
                v = tuple(float(c) for c in cells[1 : N_FEATURES + 1])
                amount = float(cells[N_FEATURES + 1])
            except ValueError as exc:
                raise DatasetError(f"{p}: row {lineno}: non-numeric value ({exc})") from None
            label_cell = cells[N_FEATURES + 2].strip().strip("'\"")
            if label_cell not in ("0", "1"):
                raise DatasetError(
                    f"{p}: row {lineno}: label must be 0 or 1, got {cells[N_FEATURES + 2]!r}"
                )
            rows.append(Transaction(time, v, amount, int(label_cell)))
    return TransactionSet(rows)


def save_transactions(ts: TransactionSet, path) -> None:
    """Write the same CSV dialect; floats use shortest round-trip repr."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(HEADER)
        for t in ts.rows:
            writer.writerow([repr(t.time), *(repr(x) for x in t.v), repr(t.amount), t.label])


def undersample(ts: TransactionSet, seed: int) -> TransactionSet:
    """Keep all fraud rows, sample non-fraud down to the fraud count, shuffle.

    Sampling is without replacement; the result order is a seeded permutation,
    so identical inputs and seed reproduce the exact row order.
    """
    labels = ts.labels()
    fraud = np.flatnonzero(labels == 1)
    clean = np.flatnonzero(labels == 0)
    if fraud.size == 0 or clean.size == 0:
        raise DatasetError("undersample requires at least one row of each class")
    rng = make_rng(seed)
    if clean.size > fraud.size:
        clean = rng.choice(clean, size=fraud.size, replace=False)
    kept = np.sort(np.concatenate([fraud, clean]))
    order = rng.permutation(kept.size)
    return TransactionSet([ts.rows[i] for i in kept[order]], seed=seed)


def _largest_remainder(class_sizes: list[int], total: int, n: int) -> list[int]:
    # Proportional allocation of `total` slots among classes; exact total,
    # each class within one row of its quota. Ties go to the lower class.
    quotas = [size * total / n for size in class_sizes]
    alloc = [math.floor(q) for q in quotas]
    order = sorted(range(len(class_sizes)), key=lambda c: (alloc[c] - quotas[c], c))
    for c in order[: total - sum(alloc)]:
        alloc[c] += 1
    return alloc


def split_indices(labels, spec: SplitSpec, seed: int):
    """Stratified (train, val, test) row indices, each sorted ascending.

    Val and test get floor(frac * n) rows; the remainder goes to train. Within
    each part the per-class counts stay within one row of proportional.
    """
    labels = np.asarray(labels, dtype=int)
    n = labels.size
    if n == 0:
        raise DatasetError("cannot split an empty set")
    n_val = math.floor(spec.val_frac * n)
    n_test = math.floor(spec.test_frac * n)
    classes = [int(c) for c in np.unique(labels)]
    sizes = [int(np.sum(labels == c)) for c in classes]
    val_alloc = _largest_remainder(sizes, n_val, n)
    test_alloc = _largest_remainder(sizes, n_test, n)

    # Degenerate covers can overdraw a tiny class; push the excess test rows
    # to the lowest class with spare capacity so totals stay exact.
    spill = 0
    for i, size in enumerate(sizes):
        over = val_alloc[i] + test_alloc[i] - size
        if over > 0:
            test_alloc[i] -= over
            spill += over
    i = 0
    while spill > 0:
        room = sizes[i] - val_alloc[i] - test_alloc[i]
        if room > 0:
            take = min(room, spill)
            test_alloc[i] += take
            spill -= take
        i += 1

    rng = make_rng(seed)
    parts: dict[str, list[np.ndarray]] = {"train": [], "val": [], "test": []}
    for c, size, nv, nt in zip(classes, sizes, val_alloc, test_alloc):
        members = np.flatnonzero(labels == c)
        members = members[rng.permutation(size)]
        parts["val"].append(members[:nv])
        parts["test"].append(members[nv : nv + nt])
        parts["train"].append(members[nv + nt :])
    return tuple(
        np.sort(np.concatenate(parts[name])).astype(int) for name in ("train", "val", "test")
    )


def split(ts: TransactionSet, spec: SplitSpec, seed: int):
    """Partition into (train, val, test) TransactionSets per ``split_indices``."""
    idx_train, idx_val, idx_test = split_indices(ts.labels(), spec, seed)
    return tuple(
        TransactionSet([ts.rows[i] for i in idx], seed=seed)
        for idx in (idx_train, idx_val, idx_test)
    )


@dataclass(frozen=True)
class TimeAmountScaler:
    """Min-max ranges for time and amount, fit on training rows only.

    V1..V28 are already PCA-standardized and pass through unscaled; time and
    amount are mapped onto [0, 1] so no single axis dominates the projection
    used for graph construction. A constant column maps to 0.
    """

    time_min: float
    time_max: float
    amount_min: float
    amount_max: float

    @classmethod
    def fit(cls, ts: TransactionSet) -> "TimeAmountScaler":
        if not ts.rows:
            raise DatasetError("cannot fit a scaler on an empty set")
        times = [t.time for t in ts.rows]
        amounts = [t.amount for t in ts.rows]
        return cls(min(times), max(times), min(amounts), max(amounts))

    @staticmethod
    def _scale(x: float, lo: float, hi: float) -> float:
        return 0.0 if hi == lo else (x - lo) / (hi - lo)

    def transform(self, t: Transaction) -> Transaction:
        return replace(
            t,
            time=self._scale(t.time, self.time_min, self.time_max),
            amount=self._scale(t.amount, self.amount_min, self.amount_max),
        )

    def apply(self, ts: TransactionSet) -> TransactionSet:
        return TransactionSet([self.transform(t) for t in ts.rows], seed=ts.seed)

    def to_dict(self) -> dict:
        return {
            "time_min": self.time_min,
            "time_max": self.time_max,
            "amount_min": self.amount_min,
            "amount_max": self.amount_max,
        }


def write_split_manifest(path, seed: int, spec: SplitSpec, idx_train, idx_val, idx_test) -> None:
    """Key-value record of the split: seed, fractions, and row indices."""
    with open(path, "w") as fh:
        fh.write(f"seed: {seed}\n")
        fh.write(f"train_frac: {spec.train_frac!r}\n")
        fh.write(f"val_frac: {spec.val_frac!r}\n")
        fh.write(f"test_frac: {spec.test_frac!r}\n")
        for name, idx in (("train", idx_train), ("val", idx_val), ("test", idx_test)):
            fh.write(f"{name}_indices: {','.join(str(int(i)) for i in idx)}\n")
