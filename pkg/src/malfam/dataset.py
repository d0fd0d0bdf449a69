"""Feature-space schema, labeled feature datasets, and on-disk formats.

A corpus is a set of conditions (``unobfuscated`` plus one per obfuscation
strategy), each stored as a CSV with header ``<feature names...>,label``,
bound together by a JSON manifest. Datasets are immutable after load and
safe to share across threads.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import IOFailure, ParseError, SchemaError, ValidationError
from .fileio import read_json, write_json_atomic, write_text_atomic

KIND_OPCODE = "opcode-count"
KIND_API = "api-flag"
KIND_PERMISSION = "permission-flag"
FEATURE_KINDS = (KIND_OPCODE, KIND_API, KIND_PERMISSION)

#: kinds whose values are app-level booleans rather than per-method counts
FLAG_KINDS = (KIND_API, KIND_PERMISSION)

UNOBFUSCATED = "unobfuscated"


@dataclass(frozen=True)
class FeatureSchema:
    """Ordered feature names plus the kind of each feature.

    The default profile is 747 features (235 opcode counts, 426 API flags,
    86 permission flags); synthetic corpora use smaller profiles with the
    same three kinds.
    """

    names: tuple[str, ...]
    kinds: tuple[str, ...]

    def __post_init__(self):
        if len(self.names) != len(self.kinds):
            raise SchemaError(
                f"{len(self.names)} names but {len(self.kinds)} kinds"
            )
        if len(set(self.names)) != len(self.names):
            raise SchemaError("feature names are not unique")
        for k in self.kinds:
            if k not in FEATURE_KINDS:
                raise SchemaError(f"unknown feature kind {k!r}")

    @property
    def dimension(self) -> int:
        return len(self.names)

    def is_flag(self, index: int) -> bool:
        return self.kinds[index] in FLAG_KINDS

    def flag_columns(self) -> list[int]:
        return [i for i, k in enumerate(self.kinds) if k in FLAG_KINDS]

    def columns_of_kind(self, kind: str) -> list[int]:
        return [i for i, k in enumerate(self.kinds) if k == kind]

    def to_json(self) -> list[dict]:
        return [{"name": n, "kind": k} for n, k in zip(self.names, self.kinds)]

    @classmethod
    def from_json(cls, items: list[dict]) -> "FeatureSchema":
        try:
            names = tuple(it["name"] for it in items)
            kinds = tuple(it["kind"] for it in items)
        except (TypeError, KeyError) as exc:
            raise SchemaError(f"malformed schema entry: {exc}") from exc
        return cls(names, kinds)


@dataclass(frozen=True)
class FamilyLabelMap:
    """Dense id -> family-name table (ids 0..C-1)."""

    names: tuple[str, ...]

    def __post_init__(self):
        if len(set(self.names)) != len(self.names):
            raise SchemaError("family names are not unique")
        if not self.names:
            raise SchemaError("family map is empty")

    @property
    def n_classes(self) -> int:
        return len(self.names)

    def name_of(self, label: int) -> str:
        return self.names[label]

    def to_json(self) -> dict:
        return {str(i): n for i, n in enumerate(self.names)}

    @classmethod
    def from_json(cls, obj: dict) -> "FamilyLabelMap":
        try:
            ids = sorted(int(k) for k in obj)
        except ValueError as exc:
            raise SchemaError(f"family map keys must be ints: {exc}") from exc
        if ids != list(range(len(ids))):
            raise SchemaError(f"family ids are not dense 0..C-1: {ids}")
        return cls(tuple(obj[str(i)] for i in ids))


@dataclass(frozen=True)
class SplitSpec:
    """Reproducible train/test split parameters."""

    train_fraction: float = 0.7
    seed: int = 0
    stratified: bool = True

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ValidationError(
                f"train_fraction must be in (0,1), got {self.train_fraction}"
            )


@dataclass(frozen=True)
class Finding:
    """One invariant violation located by (row, col); col -1 = row-level."""

    row: int
    col: int
    message: str


@dataclass
class ValidationReport:
    findings: list[Finding] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.findings

    def add(self, row: int, col: int, message: str) -> None:
        self.findings.append(Finding(row, col, message))


@dataclass(frozen=True)
class LabeledFeatureDataset:
    """Feature matrix X plus family labels y for one corpus condition."""

    schema: FeatureSchema
    X: np.ndarray
    y: np.ndarray
    condition: str = UNOBFUSCATED

    def __post_init__(self):
        object.__setattr__(self, "X", np.asarray(self.X, dtype=np.float64))
        object.__setattr__(self, "y", np.asarray(self.y, dtype=np.int64))
        if self.X.ndim != 2:
            raise ValidationError(f"X must be 2-D, got shape {self.X.shape}")
        if self.X.shape[0] != self.y.shape[0]:
            raise ValidationError(
                f"{self.X.shape[0]} rows but {self.y.shape[0]} labels"
            )
        if self.X.shape[1] != self.schema.dimension:
            raise ValidationError(
                f"X has {self.X.shape[1]} columns, schema expects "
                f"{self.schema.dimension}"
            )
        self.X.setflags(write=False)
        self.y.setflags(write=False)

    @property
    def n_rows(self) -> int:
        return self.X.shape[0]

    def subset(self, rows: np.ndarray) -> "LabeledFeatureDataset":
        return LabeledFeatureDataset(
            self.schema, self.X[rows], self.y[rows], self.condition
        )


def validate_dataset(ds: LabeledFeatureDataset) -> ValidationReport:
    """List every invariant violation with row/col coordinates.

    Violations are data, not errors: the report is empty iff the dataset
    satisfies all invariants (finite, non-negative, flags binary).
    """
    report = ValidationReport()
    X = ds.X
    bad = ~np.isfinite(X)
    for r, c in zip(*np.nonzero(bad)):
        report.add(int(r), int(c), "non-finite value")
    neg = np.isfinite(X) & (X < 0)
    for r, c in zip(*np.nonzero(neg)):
        report.add(int(r), int(c), f"negative value {X[r, c]!r}")
    for c in ds.schema.flag_columns():
        col = X[:, c]
        bad_rows = np.nonzero(np.isfinite(col) & (col != 0) & (col != 1))[0]
        for r in bad_rows:
            report.add(
                int(r),
                int(c),
                f"{ds.schema.kinds[c]} column has non-binary value {col[r]!r}",
            )
    report.findings.sort(key=lambda f: (f.row, f.col))
    return report


def _parse_cell(text: str, row: int, col: int) -> float:
    try:
        return float(text)
    except ValueError:
        raise ParseError(
            f"non-numeric cell {text!r} at row {row}, col {col}"
        ) from None


def load_feature_dataset(
    path: Path | str,
    schema: FeatureSchema | None = None,
    families: FamilyLabelMap | None = None,
    condition: str = UNOBFUSCATED,
) -> LabeledFeatureDataset:
    """Load a feature CSV (header ``name,...,label``) and validate it.

    When ``schema`` is given, the header must match its names in order.
    Without one, all columns are treated as opcode counts. When
    ``families`` is given, labels outside 0..C-1 are rejected.
    """
    path = Path(path)
    if not path.exists():
        raise IOFailure(f"feature CSV not found: {path}")
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file, expected a header") from None
        if len(header) < 2 or header[-1] != "label":
            raise SchemaError(
                f"{path}: header must end with a 'label' column, got {header!r}"
            )
        names = header[:-1]
        if schema is None:
            schema = FeatureSchema(tuple(names), (KIND_OPCODE,) * len(names))
        elif tuple(names) != schema.names:
            raise SchemaError(
                f"{path}: header does not match schema "
                f"(got {len(names)} columns, first mismatch at "
                f"{_first_mismatch(names, schema.names)})"
            )
        rows: list[list[float]] = []
        labels: list[int] = []
        for r, record in enumerate(reader):
            if len(record) != len(header):
                raise ParseError(
                    f"{path}: row {r} has {len(record)} fields, "
                    f"expected {len(header)}"
                )
            rows.append(
                [_parse_cell(cell, r, c) for c, cell in enumerate(record[:-1])]
            )
            lab = _parse_cell(record[-1], r, len(header) - 1)
            if lab != int(lab):
                raise ParseError(f"{path}: non-integer label {lab!r} at row {r}")
            labels.append(int(lab))

    X = np.array(rows, dtype=np.float64).reshape(len(rows), schema.dimension)
    y = np.array(labels, dtype=np.int64)
    ds = LabeledFeatureDataset(schema, X, y, condition)
    report = validate_dataset(ds)
    if not report.ok:
        f = report.findings[0]
        raise ValidationError(
            f"{path}: {len(report.findings)} invalid cell(s); first: "
            f"row {f.row}, col {f.col}: {f.message}"
        )
    if families is not None:
        bad = np.nonzero((y < 0) | (y >= families.n_classes))[0]
        if bad.size:
            raise ValidationError(
                f"{path}: label {int(y[bad[0]])} at row {int(bad[0])} outside "
                f"family ids 0..{families.n_classes - 1}"
            )
    return ds


def _first_mismatch(a, b) -> str:
    for i, (x, y) in enumerate(zip(a, b)):
        if x != y:
            return f"column {i}: {x!r} != {y!r}"
    return f"length {len(a)} vs {len(b)}"


def format_value(v: float) -> str:
    """Canonical cell formatting: integral values as ints, rest as repr."""
    if math.isfinite(v) and v == int(v) and abs(v) < 2**53:
        return str(int(v))
    return repr(float(v))


def save_feature_dataset(ds: LabeledFeatureDataset, path: Path | str) -> None:
    """Write the canonical CSV form; save(load(f)) is byte-identical."""
    lines = [",".join(list(ds.schema.names) + ["label"])]
    for i in range(ds.n_rows):
        cells = [format_value(float(v)) for v in ds.X[i]]
        cells.append(str(int(ds.y[i])))
        lines.append(",".join(cells))
    write_text_atomic(path, "\n".join(lines) + "\n")


def split_dataset(
    ds: LabeledFeatureDataset, spec: SplitSpec
) -> tuple[LabeledFeatureDataset, LabeledFeatureDataset]:
    """Deterministically split into (train, test).

    Stratified splits keep each class's train fraction within one sample
    of ``train_fraction`` and require at least two rows per class so both
    halves are populated. Row order within each half follows the source.
    """
    n = ds.n_rows
    if n < 2:
        raise ValidationError(f"cannot split a dataset with {n} row(s)")
    rng = np.random.default_rng(spec.seed)
    if spec.stratified:
        train_idx: list[int] = []
        test_idx: list[int] = []
        for cls in np.unique(ds.y):
            idx = np.nonzero(ds.y == cls)[0]
            if idx.size < 2:
                raise ValidationError(
                    f"class {int(cls)} has {idx.size} row(s); stratified "
                    "split needs at least 2"
                )
            k = int(round(spec.train_fraction * idx.size))
            k = min(max(k, 1), idx.size - 1)
            perm = rng.permutation(idx.size)
            train_idx.extend(idx[perm[:k]])
            test_idx.extend(idx[perm[k:]])
        train_rows = np.sort(np.array(train_idx, dtype=np.int64))
        test_rows = np.sort(np.array(test_idx, dtype=np.int64))
    else:
        k = int(round(spec.train_fraction * n))
        k = min(max(k, 1), n - 1)
        perm = rng.permutation(n)
        train_rows = np.sort(perm[:k])
        test_rows = np.sort(perm[k:])
    return ds.subset(train_rows), ds.subset(test_rows)


@dataclass
class CorpusManifest:
    """Binding of conditions to CSV files plus schema and families.

    ``graphs`` maps each condition to its call-graph JSON files and
    ``sensitive_apis`` points at the sensitive-API pattern list; both are
    optional extensions used by the graph half of the pipeline.
    """

    schema: FeatureSchema
    families: FamilyLabelMap
    conditions: dict[str, Path]
    graphs: dict[str, list[Path]] = field(default_factory=dict)
    sensitive_apis: Path | None = None
    base_dir: Path = Path(".")

    def condition_names(self) -> list[str]:
        return sorted(self.conditions)

    def obfuscated_conditions(self) -> list[str]:
        return sorted(c for c in self.conditions if c != UNOBFUSCATED)

    def load_condition(self, name: str) -> LabeledFeatureDataset:
        if name not in self.conditions:
            raise ValidationError(f"manifest has no condition {name!r}")
        return load_feature_dataset(
            self.conditions[name], self.schema, self.families, condition=name
        )

    def to_json(self) -> dict:
        obj: dict = {
            "schema": self.schema.to_json(),
            "families": self.families.to_json(),
            "conditions": {
                name: _relpath(p, self.base_dir)
                for name, p in sorted(self.conditions.items())
            },
        }
        if self.graphs:
            obj["graphs"] = {
                name: [_relpath(p, self.base_dir) for p in paths]
                for name, paths in sorted(self.graphs.items())
            }
        if self.sensitive_apis is not None:
            obj["sensitive_apis"] = _relpath(self.sensitive_apis, self.base_dir)
        return obj


def _relpath(p: Path, base: Path) -> str:
    try:
        return Path(p).relative_to(base).as_posix()
    except ValueError:
        return Path(p).as_posix()


def save_manifest(manifest: CorpusManifest, path: Path | str) -> None:
    manifest.base_dir = Path(path).parent
    write_json_atomic(path, manifest.to_json())


def load_manifest(path: Path | str) -> CorpusManifest:
    path = Path(path)
    obj = read_json(path)
    if not isinstance(obj, dict):
        raise SchemaError(f"{path}: manifest must be a JSON object")
    for key in ("schema", "families", "conditions"):
        if key not in obj:
            raise SchemaError(f"{path}: manifest missing {key!r}")
    base = path.parent
    schema = FeatureSchema.from_json(obj["schema"])
    families = FamilyLabelMap.from_json(obj["families"])
    conditions = {name: base / rel for name, rel in obj["conditions"].items()}
    graphs = {
        name: [base / rel for rel in rels]
        for name, rels in obj.get("graphs", {}).items()
    }
    sens = obj.get("sensitive_apis")
    return CorpusManifest(
        schema=schema,
        families=families,
        conditions=conditions,
        graphs=graphs,
        sensitive_apis=(base / sens) if sens else None,
        base_dir=base,
    )
