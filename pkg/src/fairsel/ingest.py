"""CSV ingestion: categorical coding, binning, and empirical joints.

A schema spec is a JSON document::

    {"schema_version": 1,
     "columns": [
        {"name": "sex", "role": "feature", "kind": "categorical", "levels": ["Male", "Female"]},
        {"name": "age", "role": "feature", "kind": "binned", "cuts": [25, 45],
         "boundary": ["upper", "lower"]}]}

For a binned column, ``boundary`` says which side a value equal to a cut
falls on: ``"lower"`` puts it in the bin below the cut, ``"upper"`` in the
bin above. A single string applies to every cut. Records with an empty or
unparseable cell in any declared column are dropped and counted.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ArgumentError, LevelError, SchemaError
from .prob import ROLES, JointDistribution, Variable, VariableSchema

SCHEMA_VERSION = 1
MISSING = {"", "na", "nan", "null", "none"}
BOUNDARIES = ("lower", "upper")


@dataclass(frozen=True)
class ColumnSpec:
    name: str
    role: str = "feature"
    kind: str = "categorical"
    levels: tuple[str, ...] = ()
    cuts: tuple[float, ...] = ()
    boundary: tuple[str, ...] = ()

    def __post_init__(self):
        if self.role not in ROLES:
            raise SchemaError(f"column {self.name!r}: role must be one of {ROLES}")
        object.__setattr__(self, "levels", tuple(str(v) for v in self.levels))
        object.__setattr__(self, "cuts", tuple(float(c) for c in self.cuts))
        if self.kind == "categorical":
            if len(self.levels) < 2:
                raise SchemaError(f"column {self.name!r}: need at least 2 levels")
            if len(set(self.levels)) != len(self.levels):
                raise SchemaError(f"column {self.name!r}: duplicate levels")
        elif self.kind == "binned":
            if not self.cuts:
                raise SchemaError(f"column {self.name!r}: binned columns need at least one cut")
            if any(b <= a for a, b in zip(self.cuts, self.cuts[1:])):
                raise SchemaError(f"column {self.name!r}: cuts must be strictly increasing")
            boundary = self.boundary or ("lower",)
            if isinstance(boundary, str):
                boundary = (boundary,)
            boundary = tuple(boundary)
            if len(boundary) == 1:
                boundary = boundary * len(self.cuts)
            if len(boundary) != len(self.cuts) or any(b not in BOUNDARIES for b in boundary):
                raise SchemaError(f"column {self.name!r}: boundary must be 'lower'/'upper' per cut")
            object.__setattr__(self, "boundary", boundary)
        else:
            raise SchemaError(f"column {self.name!r}: kind must be 'categorical' or 'binned'")

    @property
    def cardinality(self) -> int:
        return len(self.levels) if self.kind == "categorical" else len(self.cuts) + 1

    def bin(self, x: float) -> int:
        return sum(x > c if side == "lower" else x >= c for c, side in zip(self.cuts, self.boundary))

    def to_json(self) -> dict:
        doc = {"name": self.name, "role": self.role, "kind": self.kind}
        if self.kind == "categorical":
            doc["levels"] = list(self.levels)
        else:
            doc["cuts"] = list(self.cuts)
            doc["boundary"] = list(self.boundary)
        return doc


@dataclass(frozen=True)
class SchemaSpec:
    columns: tuple[ColumnSpec, ...]
    missing_policy: str = "drop_record"

    def __post_init__(self):
        object.__setattr__(self, "columns", tuple(self.columns))
        if self.missing_policy != "drop_record":
            raise SchemaError("only the 'drop_record' missing policy is supported")
        self.variables().check_roles()

    def variables(self) -> VariableSchema:
        return VariableSchema(Variable(c.name, c.cardinality, c.role) for c in self.columns)

    def to_json(self) -> dict:
        return {"schema_version": SCHEMA_VERSION, "missing_policy": self.missing_policy,
                "columns": [c.to_json() for c in self.columns]}

    @classmethod
    def from_json(cls, doc: Mapping) -> "SchemaSpec":
        if not isinstance(doc, Mapping):
            raise SchemaError("schema spec must be a JSON object")
        version = doc.get("schema_version")
        if version != SCHEMA_VERSION:
            raise SchemaError(f"unsupported schema_version {version!r}; expected {SCHEMA_VERSION}")
        try:
            cols = [ColumnSpec(c["name"], c.get("role", "feature"), c.get("kind", "categorical"),
                               c.get("levels", ()), c.get("cuts", ()), c.get("boundary", ()))
                    for c in doc["columns"]]
        except (KeyError, TypeError) as exc:
            raise SchemaError(f"malformed column entry: {exc}") from exc
        return cls(cols, doc.get("missing_policy", "drop_record"))

    @classmethod
    def load(cls, path) -> "SchemaSpec":
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path}: not valid JSON ({exc})") from exc
        return cls.from_json(doc)

    @classmethod
    def coded(cls, schema: VariableSchema) -> "SchemaSpec":
        """Spec for a CSV that already holds integer codes."""
        return cls([ColumnSpec(v.name, v.role, "categorical", [str(k) for k in range(v.cardinality)])
                    for v in schema])


@dataclass(frozen=True)
class Dataset:
    schema: VariableSchema
    rows: np.ndarray
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.int64).reshape(-1, len(self.schema))
        if rows.size and (np.any(rows < 0) or np.any(rows >= np.array(self.schema.shape))):
            raise ArgumentError("dataset holds codes outside the variable cardinalities")
        rows.setflags(write=False)
        object.__setattr__(self, "rows", rows)

    def __len__(self):
        return self.rows.shape[0]

    def column(self, name: str) -> np.ndarray:
        return self.rows[:, self.schema.index(name)]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.schema.names)
            w.writerows(self.rows.tolist())


def _read_table(path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="", encoding="utf-8-sig") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise SchemaError(f"{path}: file is empty (no header row)")
        return [h.strip() for h in header], list(reader)


def _parse_number(cell: str) -> float | None:
    try:
        x = float(cell)
    except ValueError:
        return None
    return x if math.isfinite(x) else None


def encode_records(header: Sequence[str], records: Iterable[Sequence[str]], spec: SchemaSpec,
                   source: str = "", first_line: int = 2) -> Dataset:
    """Code string records per ``spec``; ``first_line`` numbers rows in errors."""
    # first occurrence wins when a header repeats a name
    where = {}
    for i, h in enumerate(header):
        where.setdefault(h, i)
    missing = [c.name for c in spec.columns if c.name not in where]
    if missing:
        raise SchemaError(f"{source or 'input'}: missing declared column(s) {missing}")
    idx = [where[c.name] for c in spec.columns]
    lookup = [{lvl: k for k, lvl in enumerate(c.levels)} for c in spec.columns]
    out, read, dropped = [], 0, 0
    dropped_by: dict[str, int] = {}
    for line, rec in enumerate(records, start=first_line):
        read += 1
        coded = []
        for col, i, levels in zip(spec.columns, idx, lookup):
            cell = rec[i].strip() if i < len(rec) else ""
            if cell.lower() in MISSING:
                coded = None
            elif col.kind == "categorical":
                if cell not in levels:
                    raise LevelError(f"{source or 'input'} line {line}: column {col.name!r} has undeclared "
                                     f"level {cell!r} (declared {list(col.levels)})", line, col.name, cell)
                coded.append(levels[cell])
                continue
            else:
                x = _parse_number(cell)
                if x is not None:
                    coded.append(col.bin(x))
                    continue
                coded = None
            dropped += 1
            dropped_by[col.name] = dropped_by.get(col.name, 0) + 1
            break
        if coded is not None:
            out.append(coded)
    rows = np.array(out, dtype=np.int64).reshape(-1, len(spec.columns))
    provenance = {"source": str(source), "rows_read": read, "rows_dropped": dropped,
                  "dropped_by_column": dropped_by}
    return Dataset(spec.variables(), rows, provenance)


def load_csv(path, spec: SchemaSpec) -> Dataset:
    header, records = _read_table(path)
    return encode_records(header, records, spec, source=str(path))


def empirical_joint(data: Dataset, smoothing: float = 0.0) -> JointDistribution:
    """Relative frequencies, optionally with additive smoothing on every cell."""
    if len(data) == 0:
        raise ArgumentError("cannot estimate a joint distribution from an empty dataset")
    if not smoothing >= 0:
        raise ArgumentError("smoothing must be non-negative")
    shape = data.schema.shape
    flat = np.ravel_multi_index(tuple(data.rows.T), shape)
    counts = np.bincount(flat, minlength=math.prod(shape)).astype(float)
    probs = (counts + smoothing) / (len(data) + smoothing * counts.size)
    return JointDistribution(data.schema, probs.reshape(shape))


# --- COMPAS ---------------------------------------------------------------

COMPAS_TARGET = {"records": 5334, "African-American": 3247, "Caucasian": 2087}
COMPAS_GROUPS = ("African-American", "Caucasian")

COMPAS_SPEC = SchemaSpec([
    ColumnSpec("race", "protected", "categorical", COMPAS_GROUPS),
    ColumnSpec("age", "feature", "binned", cuts=(25, 45), boundary=("upper", "lower")),
    ColumnSpec("c_charge_degree", "feature", "categorical", ("M", "F")),
    ColumnSpec("sex", "feature", "categorical", ("Male", "Female")),
    ColumnSpec("priors_count", "feature", "binned", cuts=(0, 3), boundary=("lower", "lower")),
    ColumnSpec("length_of_stay", "feature", "binned", cuts=(7, 90), boundary=("lower", "lower")),
    ColumnSpec("two_year_recid", "label", "categorical", ("0", "1")),
])

COMPAS_LABELS = {
    "age": ("<25", "25-45", ">45"),
    "c_charge_degree": ("Misdemeanor", "Felony"),
    "sex": ("Male", "Female"),
    "priors_count": ("0", "1-3", ">3"),
    "length_of_stay": ("<=7d", "8-90d", ">90d"),
}

_DATE_FORMATS = ("%Y-%m-%d %H:%M:%S", "%Y-%m-%d")


def _parse_date(cell: str) -> datetime | None:
    for fmt in _DATE_FORMATS:
        try:
            return datetime.strptime(cell.strip(), fmt)
        except ValueError:
            continue
    return None


def length_of_stay_days(jail_in: str, jail_out: str) -> str:
    """Whole days between intake and release, or '' if either date is missing."""
    a, b = _parse_date(jail_in), _parse_date(jail_out)
    if a is None or b is None:
        return ""
    return str((b - a).days)


def _passes_screening(rec: Sequence[str], where: Mapping[str, int]) -> bool:
    # the usual quality filter applied to this file by its publishers
    try:
        days = float(rec[where["days_b_screening_arrest"]])
    except ValueError:
        return False
    return (-30 <= days <= 30 and rec[where["is_recid"]].strip() != "-1"
            and rec[where["c_charge_degree"]].strip() != "O"
            and rec[where["score_text"]].strip() != "N/A")


def compas_preprocess(path, screening_filter: bool = False) -> Dataset:
    """Restrict to the two race groups, derive length of stay, bin and code.

    A file that already holds the coded output columns is re-read as codes,
    so running the recipe twice is the identity.
    """
    header, records = _read_table(path)
    names = [c.name for c in COMPAS_SPEC.columns]
    if header == names:
        data = encode_records(header, records, SchemaSpec.coded(COMPAS_SPEC.variables()), str(path))
        data.provenance.update(recipe="compas", already_processed=True)
        return data

    where = {}
    for i, h in enumerate(header):
        where.setdefault(h, i)
    need = {"race", "age", "c_charge_degree", "sex", "priors_count", "two_year_recid"}
    derive_stay = "length_of_stay" not in where
    if derive_stay:
        need |= {"c_jail_in", "c_jail_out"}
    if screening_filter:
        need |= {"days_b_screening_arrest", "is_recid", "score_text"}
    missing = sorted(need - set(where))
    if missing:
        raise SchemaError(f"{path}: raw COMPAS file lacks column(s) {missing}")

    race = where["race"]
    counts = {"rows_read": len(records), "race_excluded": 0, "screening_excluded": 0}
    kept = []
    for rec in records:
        if race >= len(rec) or rec[race].strip() not in COMPAS_GROUPS:
            counts["race_excluded"] += 1
            continue
        if screening_filter and not _passes_screening(rec, where):
            counts["screening_excluded"] += 1
            continue
        stay = (length_of_stay_days(rec[where["c_jail_in"]], rec[where["c_jail_out"]])
                if derive_stay else rec[where["length_of_stay"]])
        kept.append([rec[where[n]] if n != "length_of_stay" else stay for n in names])

    data = encode_records(names, kept, COMPAS_SPEC, str(path))
    groups = np.bincount(data.column("race"), minlength=2)
    observed = {"records": len(data), "African-American": int(groups[0]), "Caucasian": int(groups[1])}
    data.provenance.update(
        recipe="compas",
        already_processed=False,
        rows_read=counts["rows_read"],
        race_excluded=counts["race_excluded"],
        screening_filter=screening_filter,
        screening_excluded=counts["screening_excluded"],
        missing_dropped=data.provenance["rows_dropped"],
        rows_dropped=counts["rows_read"] - len(data),
        length_of_stay="derived from c_jail_out - c_jail_in, whole days" if derive_stay else "raw column",
        group_counts=observed,
        target_counts=dict(COMPAS_TARGET),
        count_diff={k: observed[k] - COMPAS_TARGET[k] for k in COMPAS_TARGET},
    )
    return data
