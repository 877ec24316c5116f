"""Synthetic vertically-partitioned data, CSV ingestion, and batching."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

SPLITS = ("train", "attack", "eval")


class DataError(ValueError):
    pass


@dataclass
class Dataset:
    """Rows are stored grouped by split, in ``SPLITS`` order."""

    x_passive: np.ndarray
    labels: np.ndarray
    sizes: Tuple[int, int, int]
    x_active: Optional[np.ndarray] = None
    passive_names: List[str] = field(default_factory=list)
    active_names: List[str] = field(default_factory=list)

    def __post_init__(self):
        n = self.x_passive.shape[0]
        if self.labels.shape != (n,):
            raise DataError(f"labels shape {self.labels.shape} does not match {n} rows")
        if self.x_active is not None and self.x_active.shape[0] != n:
            raise DataError("active features and passive features disagree on row count")
        if sum(self.sizes) != n or min(self.sizes) < 0:
            raise DataError(f"split sizes {self.sizes} do not cover {n} rows")
        if not self.passive_names:
            self.passive_names = [f"p{i}" for i in range(self.x_passive.shape[1])]
        if self.x_active is not None and not self.active_names:
            self.active_names = [f"a{i}" for i in range(self.x_active.shape[1])]

    @property
    def n_rows(self) -> int:
        return self.x_passive.shape[0]

    @property
    def n_passive(self) -> int:
        return self.x_passive.shape[1]

    @property
    def n_active(self) -> int:
        return 0 if self.x_active is None else self.x_active.shape[1]

    def bounds(self, split: str) -> slice:
        if split not in SPLITS:
            raise KeyError(f"unknown split {split!r}")
        i = SPLITS.index(split)
        start = sum(self.sizes[:i])
        return slice(start, start + self.sizes[i])

    def split(self, name: str):
        s = self.bounds(name)
        xa = None if self.x_active is None else self.x_active[s]
        return self.x_passive[s], xa, self.labels[s]

    def check_classes(self):
        for name in SPLITS:
            if self.sizes[SPLITS.index(name)] == 0:
                continue
            y = self.split(name)[2]
            if len(np.unique(y)) < 2:
                raise DataError(f"split {name!r} contains a single class")


@dataclass
class SyntheticSpec:
    n_samples: int = 20000
    n_passive: int = 16
    n_active: int = 0
    informative_dims: int = 4
    latent_dims: int = 4
    latent_strength: float = 1.0
    coef: Optional[List[float]] = None
    coef_scale: float = 2.0
    intercept: float = 0.0
    noise_std: float = 1.0
    seed: int = 0

    def validate(self):
        if self.n_samples < 100:
            raise DataError("n_samples must be >= 100")
        if not 1 <= self.informative_dims <= self.n_passive:
            raise DataError("informative_dims must lie in [1, n_passive]")
        if self.latent_dims < 1:
            raise DataError("latent_dims must be >= 1")
        if self.n_active < 0 or self.noise_std < 0:
            raise DataError("n_active and noise_std must be >= 0")
        if self.coef is not None and len(self.coef) != self.informative_dims:
            raise DataError("coef must have informative_dims entries")


def _split_sizes(n: int, fractions: Sequence[float]) -> Tuple[int, int, int]:
    if len(fractions) != 3 or any(f < 0 for f in fractions) or abs(sum(fractions) - 1.0) > 1e-9:
        raise DataError(f"split fractions must be three non-negative numbers summing to 1, got {fractions}")
    n_train = int(round(fractions[0] * n))
    n_attack = int(round(fractions[1] * n))
    return n_train, n_attack, n - n_train - n_attack


def _correlated_gaussian(rng, z, dims, strength):
    """Unit-variance columns that share the latent factors ``z``."""
    k = z.shape[1]
    mix = rng.normal(size=(k, dims)) * strength / np.sqrt(k)
    scale = np.sqrt((mix ** 2).sum(axis=0) + 1.0)
    return (z @ mix + rng.normal(size=(z.shape[0], dims))) / scale


def generate_synthetic(spec: SyntheticSpec, splits: Sequence[float] = (0.6, 0.2, 0.2)) -> Dataset:
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    n = spec.n_samples
    z = rng.normal(size=(n, spec.latent_dims))
    xp = _correlated_gaussian(rng, z, spec.n_passive, spec.latent_strength)
    xa = _correlated_gaussian(rng, z, spec.n_active, spec.latent_strength) if spec.n_active else None
    if spec.coef is not None:
        w = np.asarray(spec.coef, dtype=np.float64)
    else:
        w = rng.normal(size=spec.informative_dims)
        w *= spec.coef_scale / np.linalg.norm(w)
    logit = xp[:, : spec.informative_dims] @ w + spec.intercept + spec.noise_std * rng.normal(size=n)
    y = (rng.random(n) < 0.5 * (1.0 + np.tanh(0.5 * logit))).astype(np.float64)
    ds = Dataset(xp, y, _split_sizes(n, splits), x_active=xa)
    ds.check_classes()
    return ds


# ---------------------------------------------------------------------------
# csv


@dataclass
class CsvSchema:
    label: str
    ownership: Dict[str, str]
    splits: Tuple[float, float, float] = (0.6, 0.2, 0.2)
    seed: int = 0
    split_column: Optional[str] = None


def load_csv(path, schema: CsvSchema) -> Dataset:
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: no such file")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        rows = list(reader)
    header = [h.strip() for h in header]
    index = {name: i for i, name in enumerate(header)}
    for owner in schema.ownership.values():
        if owner not in ("passive", "active"):
            raise DataError(f"ownership must be 'passive' or 'active', got {owner!r}")
    needed = [schema.label, *schema.ownership]
    if schema.split_column:
        needed.append(schema.split_column)
    for col in needed:
        if col not in index:
            raise DataError(f"{path}: missing column {col!r}")
    passive = [c for c in header if schema.ownership.get(c) == "passive"]
    active = [c for c in header if schema.ownership.get(c) == "active"]
    if not passive:
        raise DataError("ownership map assigns no features to the passive party")

    numeric_cols = passive + active + [schema.label]
    values = np.empty((len(rows), len(numeric_cols)))
    split_tags = []
    for r, row in enumerate(rows, start=1):
        if len(row) != len(header):
            raise DataError(f"{path}: row {r} has {len(row)} fields, expected {len(header)}")
        for c, col in enumerate(numeric_cols):
            cell = row[index[col]].strip()
            try:
                values[r - 1, c] = float(cell)
            except ValueError:
                raise DataError(f"{path}: non-numeric value {cell!r} at row {r}, column {col!r}") from None
        if schema.split_column:
            split_tags.append(row[index[schema.split_column]].strip())
    if not np.all(np.isfinite(values)):
        r, c = map(int, np.argwhere(~np.isfinite(values))[0])
        raise DataError(f"{path}: non-finite value at row {r + 1}, column {numeric_cols[c]!r}")

    y = values[:, -1]
    bad = np.flatnonzero((y != 0) & (y != 1))
    if bad.size:
        raise DataError(f"{path}: label must be 0 or 1 at row {bad[0] + 1}, column {schema.label!r}")

    if schema.split_column:
        tags = np.array(split_tags)
        unknown = sorted(set(split_tags) - set(SPLITS))
        if unknown:
            raise DataError(f"{path}: unknown split tag {unknown[0]!r} in column {schema.split_column!r}")
        order = np.concatenate([np.flatnonzero(tags == s) for s in SPLITS])
        sizes = tuple(int((tags == s).sum()) for s in SPLITS)
    else:
        order = np.random.default_rng(schema.seed).permutation(len(rows))
        sizes = _split_sizes(len(rows), schema.splits)
    values = values[order]
    n_p = len(passive)
    ds = Dataset(
        x_passive=values[:, :n_p].copy(),
        labels=values[:, -1].copy(),
        sizes=sizes,
        x_active=values[:, n_p:n_p + len(active)].copy() if active else None,
        passive_names=passive,
        active_names=active,
    )
    ds.check_classes()
    return ds


def write_csv(d: Dataset, path, label: str = "label", split_column: str = "split") -> None:
    tags = [s for s, k in zip(SPLITS, d.sizes) for _ in range(k)]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([*d.passive_names, *d.active_names, label, split_column])
        for i in range(d.n_rows):
            feats = list(d.x_passive[i])
            if d.x_active is not None:
                feats += list(d.x_active[i])
            w.writerow([repr(float(v)) for v in feats] + [int(d.labels[i]), tags[i]])


def csv_schema_for(d: Dataset, label: str = "label", split_column: str = "split") -> CsvSchema:
    owners = {n: "passive" for n in d.passive_names}
    owners.update({n: "active" for n in d.active_names})
    return CsvSchema(label=label, ownership=owners, split_column=split_column)


# ---------------------------------------------------------------------------
# preprocessing


@dataclass
class Standardizer:
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, x: np.ndarray, tol: float = 1e-9) -> "Standardizer":
        mean = x.mean(axis=0)
        std = x.std(axis=0)
        # near-constant columns are shifted only, by a sample so exact constants land on 0
        flat = std < tol
        mean = np.where(flat, x[0], mean) if len(x) else mean
        std = np.where(flat, 1.0, std)
        return cls(mean, std)

    def transform(self, x: np.ndarray) -> np.ndarray:
        return (x - self.mean) / self.std


def standardize(d: Dataset):
    """Scale every split with statistics from the train split only.

    Returns ``(dataset, {"passive": Standardizer, "active": Standardizer|None})``.
    """
    s = d.bounds("train")
    sp = Standardizer.fit(d.x_passive[s])
    sa = Standardizer.fit(d.x_active[s]) if d.x_active is not None else None
    out = replace(
        d,
        x_passive=sp.transform(d.x_passive),
        x_active=None if sa is None else sa.transform(d.x_active),
        passive_names=list(d.passive_names),
        active_names=list(d.active_names),
    )
    return out, {"passive": sp, "active": sa}


def batch_iterator(d: Dataset, split: str, batch_size: int, seed=0,
                   epochs: Optional[int] = None) -> Iterator[tuple]:
    """Yield ``(x_passive, x_active_or_None, labels)`` batches.

    Rows are reshuffled every epoch from one seeded stream; the short
    remainder of each epoch is dropped.  ``epochs=None`` streams forever.
    """
    xp, xa, y = d.split(split)
    n = xp.shape[0]
    if batch_size < 1 or batch_size > n:
        raise DataError(f"batch_size {batch_size} must lie in [1, {n}] for split {split!r}")
    rng = np.random.default_rng(seed)
    per_epoch = n // batch_size
    epoch = 0
    while epochs is None or epoch < epochs:
        perm = rng.permutation(n)
        for b in range(per_epoch):
            idx = perm[b * batch_size:(b + 1) * batch_size]
            yield xp[idx], (None if xa is None else xa[idx]), y[idx]
        epoch += 1
