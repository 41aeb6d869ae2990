"""Corpus ingestion, label schemes and stratified k-fold planning.

Expected layout is ``root/<RawClass>/*.{png,ppm,pgm}`` with one directory
per raw category.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ClassTooSmall, DuplicatePath, EmptyClass, MissingClassDir

IMAGE_SUFFIXES = (".png", ".ppm", ".pgm")


class RawClass(str, enum.Enum):
    Normal = "Normal"
    COVID19 = "COVID19"
    MI = "MI"
    AHB = "AHB"
    RecoveredMI = "RecoveredMI"


class LabelScheme(str, enum.Enum):
    TwoClass = "two"
    ThreeClass = "three"
    FiveClass = "five"

    @classmethod
    def parse(cls, value) -> LabelScheme:
        if isinstance(value, LabelScheme):
            return value
        key = str(value).lower().replace("-", "").replace("_", "").replace("class", "")
        aliases = {"two": cls.TwoClass, "2": cls.TwoClass, "three": cls.ThreeClass,
                   "3": cls.ThreeClass, "five": cls.FiveClass, "5": cls.FiveClass}
        if key not in aliases:
            raise ValueError(f"unknown label scheme {value!r} (use two, three or five)")
        return aliases[key]

    @property
    def class_names(self) -> list[str]:
        return list(_SCHEMES[self][0])

    def index_of(self, raw: RawClass) -> int | None:
        """Class index for ``raw`` or ``None`` when the scheme drops it."""
        return _SCHEMES[self][1][RawClass(raw)]


_SCHEMES = {
    LabelScheme.TwoClass: (
        ("Normal", "COVID19"),
        {RawClass.Normal: 0, RawClass.COVID19: 1, RawClass.MI: None,
         RawClass.AHB: None, RawClass.RecoveredMI: None},
    ),
    LabelScheme.ThreeClass: (
        ("Normal", "COVID19", "Abnormal"),
        {RawClass.Normal: 0, RawClass.COVID19: 1, RawClass.MI: 2,
         RawClass.AHB: 2, RawClass.RecoveredMI: 2},
    ),
    LabelScheme.FiveClass: (
        tuple(c.value for c in RawClass),
        {c: i for i, c in enumerate(RawClass)},
    ),
}


@dataclass(frozen=True)
class Record:
    id: str
    path: str
    raw_class: RawClass


@dataclass(frozen=True)
class Manifest:
    root: str
    records: tuple[Record, ...]

    def __post_init__(self):
        seen = set()
        for r in self.records:
            if r.path in seen:
                raise DuplicatePath(f"duplicate path in manifest: {r.path}")
            seen.add(r.path)

    @property
    def counts(self) -> dict[str, int]:
        out = {c.value: 0 for c in RawClass}
        for r in self.records:
            out[r.raw_class.value] += 1
        return out

    def to_dict(self) -> dict:
        return {
            "root": self.root,
            "counts": self.counts,
            "records": [{"id": r.id, "path": r.path, "raw_class": r.raw_class.value} for r in self.records],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def from_dict(cls, d: dict) -> Manifest:
        records = tuple(Record(r["id"], r["path"], RawClass(r["raw_class"])) for r in d["records"])
        m = cls(d.get("root", ""), records)
        if "counts" in d and d["counts"] != m.counts:
            raise ValueError("manifest counts disagree with its record list")
        return m

    @classmethod
    def from_json(cls, text: str) -> Manifest:
        return cls.from_dict(json.loads(text))

    def resolve(self, record: Record) -> Path:
        return Path(self.root) / record.path


def ingest(root) -> Manifest:
    root = Path(root)
    if not root.is_dir():
        raise MissingClassDir(f"dataset root {root} is not a directory")
    records = []
    for raw in RawClass:
        class_dir = root / raw.value
        if not class_dir.is_dir():
            raise MissingClassDir(f"missing class directory {raw.value!r} under {root}")
        files = sorted(
            p for p in class_dir.iterdir() if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES
        )
        if not files:
            raise EmptyClass(f"class directory {raw.value!r} contains no images")
        for p in files:
            rel = p.relative_to(root).as_posix()
            records.append(Record(id=rel, path=rel, raw_class=raw))
    records.sort(key=lambda r: r.path)
    lowered = [r.path.lower() for r in records]
    if len(set(lowered)) != len(lowered):
        raise DuplicatePath("paths differ only by case; ids would collide")
    return Manifest(root.as_posix(), tuple(records))


@dataclass(frozen=True)
class LabeledSet:
    ids: tuple[str, ...]
    paths: tuple[str, ...]
    labels: np.ndarray
    class_names: tuple[str, ...]

    def __len__(self):
        return len(self.ids)

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    def class_counts(self) -> dict[str, int]:
        bins = np.bincount(self.labels, minlength=self.num_classes)
        return {name: int(n) for name, n in zip(self.class_names, bins)}


def map_labels(m: Manifest, scheme) -> LabeledSet:
    scheme = LabelScheme.parse(scheme)
    ids, paths, labels = [], [], []
    for r in m.records:
        idx = scheme.index_of(r.raw_class)
        if idx is None:
            continue
        ids.append(r.id)
        paths.append(r.path)
        labels.append(idx)
    return LabeledSet(tuple(ids), tuple(paths), np.asarray(labels, dtype=np.int64), tuple(scheme.class_names))


@dataclass(frozen=True)
class Fold:
    train: tuple[int, ...]
    val: tuple[int, ...]
    test: tuple[int, ...]


@dataclass(frozen=True)
class FoldPlan:
    """Train/validation/test indices per fold, plus the labels they index."""

    k: int
    seed: int
    val_frac: float
    folds: tuple[Fold, ...]
    ids: tuple[str, ...]
    labels: tuple[int, ...]
    class_names: tuple[str, ...]

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "seed": self.seed,
            "val_frac": self.val_frac,
            "class_names": list(self.class_names),
            "samples": [{"id": i, "label": int(y)} for i, y in zip(self.ids, self.labels)],
            "folds": [{"train": list(f.train), "val": list(f.val), "test": list(f.test)} for f in self.folds],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def from_dict(cls, d: dict) -> FoldPlan:
        folds = tuple(Fold(tuple(f["train"]), tuple(f["val"]), tuple(f["test"])) for f in d["folds"])
        return cls(
            k=d["k"], seed=d["seed"], val_frac=d["val_frac"], folds=folds,
            ids=tuple(s["id"] for s in d["samples"]),
            labels=tuple(int(s["label"]) for s in d["samples"]),
            class_names=tuple(d["class_names"]),
        )

    @classmethod
    def from_json(cls, text: str) -> FoldPlan:
        return cls.from_dict(json.loads(text))


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def split_kfold(data: LabeledSet, k: int = 5, val_frac: float = 0.10, seed: int = 0) -> FoldPlan:
    """Stratified k-fold plan.

    Per class the indices are shuffled, cut into ``k`` near-equal chunks (the
    first ``n % k`` chunks get the extra sample), and for fold ``f`` chunk ``f``
    is the test set. The first ``round(val_frac * |pool|)`` entries of the
    remaining shuffled pool become validation; the rest is training.
    """
    if k < 2:
        raise ValueError("k must be at least 2")
    labels = np.asarray(data.labels)
    per_fold = [([], [], []) for _ in range(k)]
    for c in range(data.num_classes):
        members = np.flatnonzero(labels == c)
        n = members.size
        if n < k:
            raise ClassTooSmall(f"class {data.class_names[c]!r} has {n} samples, fewer than k={k}")
        rng = np.random.default_rng([seed, c])
        shuffled = members[rng.permutation(n)]
        sizes = [n // k + (1 if f < n % k else 0) for f in range(k)]
        bounds = np.cumsum([0] + sizes)
        for f in range(k):
            test = shuffled[bounds[f]:bounds[f + 1]]
            pool = np.concatenate([shuffled[:bounds[f]], shuffled[bounds[f + 1]:]])
            n_val = _round_half_up(val_frac * pool.size)
            per_fold[f][0].extend(pool[n_val:].tolist())
            per_fold[f][1].extend(pool[:n_val].tolist())
            per_fold[f][2].extend(test.tolist())
    folds = tuple(Fold(tuple(sorted(tr)), tuple(sorted(va)), tuple(sorted(te))) for tr, va, te in per_fold)
    return FoldPlan(k, seed, val_frac, folds, tuple(data.ids), tuple(int(y) for y in labels),
                    tuple(data.class_names))


def counts(plan: FoldPlan, data: LabeledSet | None = None) -> list[dict]:
    """Per-fold, per-class train/val/test counts. Rows are checked to sum to the class total."""
    labels = np.asarray(plan.labels if data is None else data.labels)
    names = plan.class_names if data is None else data.class_names
    totals = np.bincount(labels, minlength=len(names))
    rows = []
    for f, fold in enumerate(plan.folds):
        tr = np.bincount(labels[list(fold.train)], minlength=len(names))
        va = np.bincount(labels[list(fold.val)], minlength=len(names))
        te = np.bincount(labels[list(fold.test)], minlength=len(names))
        for c, name in enumerate(names):
            if tr[c] + va[c] + te[c] != totals[c]:
                raise AssertionError(f"fold {f} class {name}: split counts do not sum to {totals[c]}")
            rows.append({"fold": f, "class": name, "total": int(totals[c]),
                         "train": int(tr[c]), "val": int(va[c]), "test": int(te[c])})
    return rows
