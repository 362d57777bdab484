"""Patient-level, stratified, rotated k-fold plans (60/20/20 for k=5)."""
from __future__ import annotations

import csv
import io as _io
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Sequence

from .core import FeatureBag
from .rng import Xoshiro256

TRAIN, VAL, TEST = "T", "V", "E"


class SplitError(ValueError):
    pass


@dataclass(frozen=True)
class SplitPlan:
    """``base_folds[j]`` holds the patients dealt into base fold j. Fold i
    tests on base fold i, validates on base fold (i+1) mod k and trains on
    the rest."""

    k: int
    base_folds: tuple[tuple[str, ...], ...]

    @property
    def patients(self) -> list[str]:
        return [p for fold in self.base_folds for p in fold]

    def roles(self, fold_index: int) -> tuple[frozenset, frozenset, frozenset]:
        if not 0 <= fold_index < self.k:
            raise SplitError(f"fold index {fold_index} out of range for k={self.k}")
        test = frozenset(self.base_folds[fold_index])
        val = frozenset(self.base_folds[(fold_index + 1) % self.k])
        train = frozenset(p for j, fold in enumerate(self.base_folds)
                          if j not in (fold_index, (fold_index + 1) % self.k) for p in fold)
        return train, val, test

    def role_of(self, patient_id: str, fold_index: int) -> str:
        train, val, test = self.roles(fold_index)
        if patient_id in test:
            return TEST
        if patient_id in val:
            return VAL
        if patient_id in train:
            return TRAIN
        raise SplitError(f"unknown patient_id {patient_id!r}")

    def to_csv(self) -> str:
        buf = _io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["patient_id"] + [f"fold{i}" for i in range(self.k)])
        base_of = {p: j for j, fold in enumerate(self.base_folds) for p in fold}
        for p in sorted(base_of):
            j = base_of[p]
            row = []
            for i in range(self.k):
                row.append(TEST if j == i else VAL if j == (i + 1) % self.k else TRAIN)
            writer.writerow([p] + row)
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "SplitPlan":
        reader = csv.reader(_io.StringIO(text))
        header = next(reader, None)
        if not header or header[0] != "patient_id" or len(header) < 3:
            raise SplitError("split plan CSV must start with patient_id,fold0,...")
        k = len(header) - 1
        if header[1:] != [f"fold{i}" for i in range(k)]:
            raise SplitError(f"unexpected fold columns {header[1:]}")
        folds: list[list[str]] = [[] for _ in range(k)]
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != k + 1:
                raise SplitError(f"line {line_no}: expected {k + 1} fields")
            roles = row[1:]
            if roles.count(TEST) != 1:
                raise SplitError(f"line {line_no}: patient {row[0]} must be test in exactly one fold")
            j = roles.index(TEST)
            expected = [TEST if j == i else VAL if j == (i + 1) % k else TRAIN for i in range(k)]
            if roles != expected:
                raise SplitError(f"line {line_no}: roles {roles} are not a rotation of base fold {j}")
            folds[j].append(row[0])
        return cls(k, tuple(tuple(f) for f in folds))


def stratified_kfold(patients: Iterable[tuple[str, str]], k: int = 5, seed: int = 0) -> SplitPlan:
    """Deal each stratum's shuffled patients round-robin into k base folds.

    Strata are processed in sorted order and the dealing position carries
    over from one stratum to the next, which keeps both the per-stratum and
    the overall base-fold sizes within one of each other.
    """
    if k < 3:
        raise SplitError(f"k must be >= 3 for train/val/test rotation, got {k}")
    by_stratum: dict[str, list[str]] = defaultdict(list)
    seen = set()
    for pid, stratum in patients:
        if pid in seen:
            continue
        seen.add(pid)
        by_stratum[stratum].append(pid)
    if len(seen) < k:
        raise SplitError(f"need at least k={k} patients, got {len(seen)}")
    rng = Xoshiro256(seed)
    folds: list[list[str]] = [[] for _ in range(k)]
    pos = 0
    for stratum in sorted(by_stratum):
        members = sorted(by_stratum[stratum])
        rng.shuffle(members)
        for pid in members:
            folds[pos % k].append(pid)
            pos += 1
    return SplitPlan(k, tuple(tuple(f) for f in folds))


def patients_of(bags: Sequence[FeatureBag]) -> list[tuple[str, str]]:
    """(patient_id, stratum) pairs in first-seen order; a patient's stratum
    is taken from their first slide."""
    out, seen = [], set()
    for bag in bags:
        if bag.patient_id not in seen:
            seen.add(bag.patient_id)
            out.append((bag.patient_id, bag.stratum))
    return out


def materialize(plan: SplitPlan, fold_index: int, bags: Sequence[FeatureBag]):
    """Route bags to (train, val, test) by their patient's role in the fold."""
    train_ids, val_ids, test_ids = plan.roles(fold_index)
    known = train_ids | val_ids | test_ids
    unknown = sorted({b.patient_id for b in bags if b.patient_id not in known})
    if unknown:
        raise SplitError(f"unknown patient_id(s) not in plan: {', '.join(unknown)}")
    train = [b for b in bags if b.patient_id in train_ids]
    val = [b for b in bags if b.patient_id in val_ids]
    test = [b for b in bags if b.patient_id in test_ids]
    for role, items in (("train", train), ("val", val), ("test", test)):
        if not items:
            raise SplitError(f"empty split role: {role} in fold {fold_index}")
    return train, val, test
