"""Structured-table cleaning and a calibrated synthetic cohort generator.

The cleaning chain is filter -> impute -> zscore -> one-hot -> aggregate;
each step is a pure function on :class:`RawTable`.  The generator produces
an EHR-like :class:`FeatureMatrix` with a sensitive group column and
nested binary mortality labels at four horizons, calibrated by default to
a 44/56 two-group cohort whose per-horizon death rates rise
monotonically with the horizon.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .numcore import Rng

MISSING_TOKENS = ("", "NA")
COLUMN_KINDS = ("numeric", "categorical", "id")
HORIZONS = ("30d", "60d", "90d", "365d")

# Default cohort calibration: a 44/56 split between the two groups and
# nested per-horizon death rates derived from a 15,350 / 20,001 cohort.
DEFAULT_GROUPS = {"female": 0.44, "male": 0.56}
DEFAULT_MORTALITY = {
    "female": (2552 / 15350, 2963 / 15350, 3242 / 15350, 4585 / 15350),
    "male": (3088 / 20001, 3597 / 20001, 3981 / 20001, 5613 / 20001),
}


class EmptyResult(ValueError):
    """A filter removed every feature column."""


class AllMissingColumn(ValueError):
    """A numeric column has no present values to impute from."""


class InvalidConfig(ValueError):
    """Malformed synthetic-generator configuration."""


class InvalidFractions(ValueError):
    """Split fractions are negative or do not sum to 1."""


# ---------------------------------------------------------------------------
# RawTable
# ---------------------------------------------------------------------------

@dataclass
class RawTable:
    """A rectangular table with declared column kinds.

    ``frame`` holds numeric columns as float64 (NaN = missing) and
    categorical/id columns as object (None/NaN = missing).  Exactly one
    column must be declared ``id``.
    """

    frame: pd.DataFrame
    kinds: dict[str, str]

    def __post_init__(self):
        cols = list(self.frame.columns)
        if set(cols) != set(self.kinds):
            raise ValueError("schema does not cover exactly the table columns")
        bad = {k: v for k, v in self.kinds.items() if v not in COLUMN_KINDS}
        if bad:
            raise ValueError(f"unknown column kinds: {bad}")
        ids = [c for c, k in self.kinds.items() if k == "id"]
        if len(ids) != 1:
            raise ValueError(f"expected exactly one id column, got {ids}")
        self.id_column = ids[0]

    @property
    def feature_columns(self) -> list[str]:
        return [c for c in self.frame.columns if c != self.id_column]

    def replace(self, frame: pd.DataFrame, kinds: dict[str, str] | None = None) -> "RawTable":
        return RawTable(frame, dict(self.kinds) if kinds is None else kinds)

    @classmethod
    def from_csv(cls, csv_path, schema_path) -> "RawTable":
        """Read a CSV (empty cell or literal NA = missing) plus its sidecar schema."""
        with open(schema_path) as fh:
            kinds = json.load(fh)
        raw = pd.read_csv(csv_path, dtype=str, keep_default_na=False)
        frame = pd.DataFrame(index=raw.index)
        for col in raw.columns:
            kind = kinds.get(col)
            if kind is None:
                raise ValueError(f"column {col!r} missing from schema")
            missing = raw[col].isin(MISSING_TOKENS)
            if kind == "numeric":
                frame[col] = pd.to_numeric(raw[col].mask(missing), errors="raise")
            else:
                frame[col] = raw[col].mask(missing).astype(object)
        return cls(frame, kinds)


def filter_missingness(table: RawTable, threshold: float = 0.70) -> RawTable:
    """Drop feature columns whose present fraction is below ``threshold``.

    A column present in exactly ``threshold`` of the rows is kept.  The id
    column is always retained.
    """
    if not 0.0 < threshold <= 1.0:
        raise ValueError(f"threshold must lie in (0, 1], got {threshold}")
    keep = [table.id_column]
    for col in table.feature_columns:
        present = table.frame[col].notna().mean()
        if present >= threshold:
            keep.append(col)
    if len(keep) == 1:
        raise EmptyResult(f"no feature column has >= {threshold:.0%} present values")
    kinds = {c: table.kinds[c] for c in keep}
    return RawTable(table.frame[keep].copy(), kinds)


def impute_median(table: RawTable) -> RawTable:
    """Fill missing numeric cells with the column median.

    Even-count medians are the mean of the two middle values.  Categorical
    cells are left untouched (they are mode-imputed by one_hot_encode).
    """
    frame = table.frame.copy()
    for col in table.feature_columns:
        if table.kinds[col] != "numeric":
            continue
        values = frame[col]
        if values.notna().sum() == 0:
            raise AllMissingColumn(f"numeric column {col!r} has no present values")
        frame[col] = values.fillna(values.median())
    return table.replace(frame)


def zscore_normalize(table: RawTable) -> tuple[RawTable, dict[str, dict[str, float]]]:
    """Standardize numeric columns to mean 0 and unit population std.

    Uses the population std (divide by N).  Constant columns map to
    all-zeros.  Returns the fitted per-column stats for reuse on held-out
    rows via :func:`zscore_apply`.
    """
    stats: dict[str, dict[str, float]] = {}
    frame = table.frame.copy()
    for col in table.feature_columns:
        if table.kinds[col] != "numeric":
            continue
        values = frame[col].to_numpy(dtype=np.float64)
        if np.isnan(values).any():
            raise ValueError(f"column {col!r} still has missing values; impute first")
        mean = float(values.mean())
        std = float(values.std(ddof=0))
        stats[col] = {"mean": mean, "std": std}
        frame[col] = (values - mean) / std if std > 0.0 else np.zeros_like(values)
    return table.replace(frame), stats


def zscore_apply(table: RawTable, stats: dict[str, dict[str, float]]) -> RawTable:
    """Standardize with previously fitted stats (for held-out rows)."""
    frame = table.frame.copy()
    for col, st in stats.items():
        if col not in frame.columns:
            raise ValueError(f"fitted column {col!r} absent from table")
        values = frame[col].to_numpy(dtype=np.float64)
        std = st["std"]
        frame[col] = (values - st["mean"]) / std if std > 0.0 else np.zeros_like(values)
    return table.replace(frame)


def one_hot_encode(table: RawTable) -> RawTable:
    """Expand each categorical column into one binary column per value.

    Missing categorical cells are first imputed with the column mode
    (lexicographically smallest on ties).  New columns are named
    ``<col>=<value>`` in lexicographic value order and become numeric.
    """
    frame = pd.DataFrame(index=table.frame.index)
    kinds: dict[str, str] = {}
    for col in table.frame.columns:
        kind = table.kinds[col]
        if kind != "categorical":
            frame[col] = table.frame[col]
            kinds[col] = kind
            continue
        values = table.frame[col]
        if values.isna().any():
            present = values.dropna()
            if present.empty:
                raise AllMissingColumn(f"categorical column {col!r} has no present values")
            mode = sorted(present.mode())[0]
            values = values.fillna(mode)
        for val in sorted(values.unique()):
            name = f"{col}={val}"
            frame[name] = (values == val).astype(np.float64)
            kinds[name] = "numeric"
    return RawTable(frame, kinds)


def aggregate_encounters(table: RawTable) -> RawTable:
    """Collapse encounter rows to one row per patient by feature means."""
    non_numeric = [c for c in table.feature_columns if table.kinds[c] != "numeric"]
    if non_numeric:
        raise ValueError(f"aggregate requires numeric features only; offending: {non_numeric}")
    grouped = table.frame.groupby(table.id_column, sort=False, as_index=False).mean()
    grouped = grouped[list(table.frame.columns)]
    return table.replace(grouped.reset_index(drop=True))


# ---------------------------------------------------------------------------
# FeatureMatrix
# ---------------------------------------------------------------------------

@dataclass
class FeatureMatrix:
    """Patients x features plus group labels and per-horizon outcomes."""

    ids: list[str]
    feature_names: list[str]
    values: np.ndarray  # (n_patients, n_features) float64
    group: np.ndarray  # (n_patients,) object
    labels: dict[str, np.ndarray]  # horizon -> (n_patients,) int64 in {0, 1}

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.group = np.asarray(self.group, dtype=object)
        n = len(self.ids)
        if self.values.shape != (n, len(self.feature_names)):
            raise ValueError("values shape does not match ids x feature_names")
        if self.group.shape != (n,):
            raise ValueError("group length does not match ids")
        for horizon, y in self.labels.items():
            y = np.asarray(y, dtype=np.int64)
            if y.shape != (n,) or not np.isin(y, (0, 1)).all():
                raise ValueError(f"labels[{horizon!r}] must be binary with one entry per patient")
            self.labels[horizon] = y

    @property
    def n_patients(self) -> int:
        return len(self.ids)

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    def take(self, indices) -> "FeatureMatrix":
        indices = np.asarray(indices, dtype=np.int64)
        return FeatureMatrix(
            ids=[self.ids[i] for i in indices],
            feature_names=list(self.feature_names),
            values=self.values[indices],
            group=self.group[indices],
            labels={h: y[indices] for h, y in self.labels.items()},
        )

    def save(self, csv_path, extra_sidecar: dict | None = None) -> None:
        """Write the matrix CSV and its JSON sidecar (same stem, .json)."""
        csv_path = Path(csv_path)
        frame = pd.DataFrame({"patient_id": self.ids})
        for j, name in enumerate(self.feature_names):
            frame[name] = self.values[:, j]
        frame["group"] = self.group
        for horizon in self.labels:
            frame[f"y_{horizon}"] = self.labels[horizon]
        frame.to_csv(csv_path, index=False)
        sidecar = {
            "schema_version": 1,
            "id_column": "patient_id",
            "group_column": "group",
            "label_columns": {h: f"y_{h}" for h in self.labels},
            "feature_columns": list(self.feature_names),
        }
        if extra_sidecar:
            sidecar.update(extra_sidecar)
        with open(csv_path.with_suffix(".json"), "w") as fh:
            json.dump(sidecar, fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, csv_path) -> "FeatureMatrix":
        csv_path = Path(csv_path)
        with open(csv_path.with_suffix(".json")) as fh:
            sidecar = json.load(fh)
        frame = pd.read_csv(csv_path, float_precision="round_trip")
        feature_names = sidecar["feature_columns"]
        labels = {
            horizon: frame[col].to_numpy(dtype=np.int64)
            for horizon, col in sidecar["label_columns"].items()
        }
        return cls(
            ids=[str(v) for v in frame[sidecar["id_column"]]],
            feature_names=feature_names,
            values=frame[feature_names].to_numpy(dtype=np.float64),
            group=frame[sidecar["group_column"]].to_numpy(dtype=object),
            labels=labels,
        )


def table_to_feature_matrix(
    table: RawTable, group_column: str, label_columns: dict[str, str]
) -> FeatureMatrix:
    """Assemble a FeatureMatrix from an aggregated, fully numeric table.

    ``group_column`` and the label columns are carried through as
    patient-level attributes, not features.
    """
    reserved = {table.id_column, group_column, *label_columns.values()}
    feature_names = [c for c in table.frame.columns if c not in reserved]
    values = table.frame[feature_names].to_numpy(dtype=np.float64)
    labels = {
        h: table.frame[col].to_numpy(dtype=np.int64) for h, col in label_columns.items()
    }
    return FeatureMatrix(
        ids=[str(v) for v in table.frame[table.id_column]],
        feature_names=feature_names,
        values=values,
        group=table.frame[group_column].to_numpy(dtype=object),
        labels=labels,
    )


# ---------------------------------------------------------------------------
# Synthetic cohort generator
# ---------------------------------------------------------------------------

@dataclass
class SynthConfig:
    """Settings for the synthetic EHR-like cohort.

    Numeric feature j is N(mu_ij, 1) where the per-patient mean shifts by
    group and by the 30d label.  Features cycle through five roles:
    group-shifted, label-shifted for everyone, label-shifted only within
    each group (one role per group), and pure noise.  The group-specific
    roles are what give the groups partially disjoint outcome signal, so
    a representation that under-serves the minority group measurably
    hurts downstream fairness.
    """

    n_patients: int = 20000
    groups: dict[str, float] = field(default_factory=lambda: dict(DEFAULT_GROUPS))
    mortality: dict[str, tuple] = field(default_factory=lambda: dict(DEFAULT_MORTALITY))
    n_numeric: int = 60
    n_categorical: int = 4
    categorical_levels: int = 3
    group_effect: float = 1.0
    label_effect: float = 1.0
    seed: int = 0

    def validate(self) -> None:
        if self.n_patients < 1:
            raise InvalidConfig(f"n_patients must be >= 1, got {self.n_patients}")
        props = list(self.groups.values())
        if len(self.groups) < 1 or any(p < 0 for p in props) or abs(sum(props) - 1.0) > 1e-9:
            raise InvalidConfig(f"group proportions must be nonnegative and sum to 1: {self.groups}")
        if set(self.mortality) != set(self.groups):
            raise InvalidConfig("mortality must give rates for exactly the configured groups")
        for g, rates in self.mortality.items():
            if len(rates) != len(HORIZONS):
                raise InvalidConfig(f"mortality[{g!r}] must have {len(HORIZONS)} rates")
            if any(not 0.0 <= r <= 1.0 for r in rates):
                raise InvalidConfig(f"mortality[{g!r}] rates must lie in [0, 1]")
            if any(b < a for a, b in zip(rates, rates[1:])):
                raise InvalidConfig(f"mortality[{g!r}] rates must be nondecreasing across horizons")
        if self.n_numeric < 0 or self.n_categorical < 0:
            raise InvalidConfig("feature counts must be nonnegative")
        if self.n_categorical > 0 and self.categorical_levels < 2:
            raise InvalidConfig("categorical_levels must be >= 2")
        for name, value in (("group_effect", self.group_effect), ("label_effect", self.label_effect)):
            if not np.isfinite(value):
                raise InvalidConfig(f"{name} must be finite")


def _numeric_roles(n_numeric: int, n_groups: int) -> list[str]:
    cycle = ["group", "label"] + [f"label_g{i}" for i in range(n_groups)] + ["noise"]
    return [cycle[j % len(cycle)] for j in range(n_numeric)]


def synth_generate(cfg: SynthConfig) -> FeatureMatrix:
    """Sample a cohort; deterministic given ``cfg.seed``.

    Labels are nested by construction: a single uniform per patient is
    compared against that patient's nondecreasing horizon rates, so death
    at a short horizon implies death at every longer one.
    """
    cfg.validate()
    rng = Rng(cfg.seed)
    n = cfg.n_patients
    group_names = list(cfg.groups)
    n_groups = len(group_names)

    cum_props = np.cumsum([cfg.groups[g] for g in group_names])
    group_idx = np.searchsorted(cum_props, rng.uniform(n), side="right")
    group_idx = np.minimum(group_idx, n_groups - 1)

    rate_table = np.array([cfg.mortality[g] for g in group_names])  # (G, H)
    u_label = rng.uniform(n)
    labels = {}
    for h, horizon in enumerate(HORIZONS):
        labels[horizon] = (u_label < rate_table[group_idx, h]).astype(np.int64)
    y30 = labels["30d"].astype(np.float64)

    feature_names: list[str] = []
    blocks: list[np.ndarray] = []

    if cfg.n_numeric > 0:
        roles = _numeric_roles(cfg.n_numeric, n_groups)
        numeric = rng.normal((n, cfg.n_numeric))
        centered = group_idx - (n_groups - 1) / 2.0
        for j, role in enumerate(roles):
            if role == "group":
                numeric[:, j] += cfg.group_effect * centered
            elif role == "label":
                numeric[:, j] += cfg.label_effect * y30
            elif role.startswith("label_g"):
                g = int(role[len("label_g"):])
                numeric[:, j] += cfg.label_effect * y30 * (group_idx == g)
        tags = {"group": "grp", "label": "lab", "noise": "nse"}
        feature_names.extend(
            f"num{j:03d}_{tags.get(role, role)}" for j, role in enumerate(roles)
        )
        blocks.append(numeric)

    if cfg.n_categorical > 0:
        levels = cfg.categorical_levels
        u_cat = rng.uniform((n, cfg.n_categorical))
        for c in range(cfg.n_categorical):
            # Each group leans toward one level; lean strength follows group_effect.
            probs = np.ones((n_groups, levels))
            for g in range(n_groups):
                probs[g, (g + c) % levels] += abs(cfg.group_effect)
            probs /= probs.sum(axis=1, keepdims=True)
            cum = np.cumsum(probs, axis=1)
            level_idx = (u_cat[:, [c]] < cum[group_idx]).argmax(axis=1)
            onehot = np.zeros((n, levels))
            onehot[np.arange(n), level_idx] = 1.0
            feature_names.extend(f"cat{c:02d}=l{v}" for v in range(levels))
            blocks.append(onehot)

    values = np.hstack(blocks) if blocks else np.zeros((n, 0))
    return FeatureMatrix(
        ids=[f"P{i:06d}" for i in range(n)],
        feature_names=feature_names,
        values=values,
        group=np.array([group_names[g] for g in group_idx], dtype=object),
        labels=labels,
    )


# ---------------------------------------------------------------------------
# Splitting
# ---------------------------------------------------------------------------

def _largest_remainder(total: int, fractions) -> list[int]:
    ideal = [total * f for f in fractions]
    counts = [int(np.floor(x)) for x in ideal]
    remainders = [x - c for x, c in zip(ideal, counts)]
    leftover = total - sum(counts)
    order = sorted(range(len(fractions)), key=lambda i: (-remainders[i], i))
    for i in order[:leftover]:
        counts[i] += 1
    return counts


def split(
    fm: FeatureMatrix,
    fractions=(0.7, 0.15, 0.15),
    seed: int = 0,
    stratify: bool = True,
    label_horizon: str = "30d",
) -> tuple[FeatureMatrix, FeatureMatrix, FeatureMatrix]:
    """Partition into train/val/test, stratified on group x label.

    Global part sizes follow exact largest-remainder rounding of the
    fractions; within each (group, label) cell the allocation deviates
    from the cell's ideal share by less than one patient.  Deterministic
    given ``seed``; each part preserves the original row order.
    """
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 3 or any(f < 0 for f in fractions) or abs(sum(fractions) - 1.0) > 1e-9:
        raise InvalidFractions(f"fractions must be 3 nonnegative values summing to 1: {fractions}")
    n = fm.n_patients
    rng = Rng(seed)
    targets = _largest_remainder(n, fractions)

    if stratify and n > 0:
        y = fm.labels[label_horizon]
        keys = [(str(fm.group[i]), int(y[i])) for i in range(n)]
        cells = {}
        for i, key in enumerate(keys):
            cells.setdefault(key, []).append(i)
        cell_order = sorted(cells)
    else:
        cells = {None: list(range(n))}
        cell_order = [None]

    assigned = [0, 0, 0]
    floors_by_cell = {}
    remainders_by_cell = {}
    for key in cell_order:
        size = len(cells[key])
        ideal = [size * f for f in fractions]
        floors = [int(np.floor(x)) for x in ideal]
        floors_by_cell[key] = floors
        remainders_by_cell[key] = [x - c for x, c in zip(ideal, floors)]
        for p in range(3):
            assigned[p] += floors[p]
    deficits = [t - a for t, a in zip(targets, assigned)]

    part_indices: list[list[int]] = [[], [], []]
    for key in cell_order:
        members = cells[key]
        perm = rng.permutation(len(members))
        shuffled = [members[i] for i in perm]
        counts = list(floors_by_cell[key])
        slots = len(members) - sum(counts)
        pref = sorted(range(3), key=lambda p: (-remainders_by_cell[key][p], p))
        used = set()
        for _ in range(slots):
            pick = next((p for p in pref if deficits[p] > 0 and p not in used), None)
            if pick is None:
                pick = next(p for p in pref if deficits[p] > 0)
            counts[pick] += 1
            deficits[pick] -= 1
            used.add(pick)
        pos = 0
        for p in range(3):
            part_indices[p].extend(shuffled[pos : pos + counts[p]])
            pos += counts[p]

    parts = tuple(fm.take(sorted(idx)) for idx in part_indices)
    return parts
