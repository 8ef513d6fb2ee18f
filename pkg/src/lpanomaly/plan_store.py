"""Plan-case data model and long-format table ingestion.

Every observation is one row ``(case_id, category, site, material, attribute,
value)``.  A missing cell is an absent row; a zero is a real observation.
Cases are ordered by ``(period, case_id)`` so training is deterministic.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    BadNumeric,
    BadRow,
    DuplicateObservation,
    MissingFile,
    UnknownVariable,
)

KEY_SEP = "|"

CANONICAL_COLUMNS = ("case_id", "period", "category", "site", "material", "attribute", "value")


class Category(str, enum.Enum):
    Sales = "Sales"
    Purchase = "Purchase"
    Capacity = "Capacity"
    Proclim = "Proclim"
    Bounds = "Bounds"
    Transfer = "Transfer"
    Blending = "Blending"
    Inventory = "Inventory"
    MaterialBalance = "MaterialBalance"

    @classmethod
    def parse(cls, text: str) -> "Category":
        try:
            return cls(text.strip())
        except ValueError:
            raise BadRow(f"unknown category {text!r}") from None


@dataclass(frozen=True)
class VariableKey:
    category: Category
    site: str
    material: str
    attribute: str = "value"

    def __post_init__(self):
        object.__setattr__(self, "category", Category(self.category))
        for part in (self.site, self.material, self.attribute):
            if KEY_SEP in part or "\n" in part:
                raise BadRow(f"key component {part!r} contains a reserved character")

    def __str__(self) -> str:
        return KEY_SEP.join((self.category.value, self.site, self.material, self.attribute))

    def __lt__(self, other: "VariableKey") -> bool:
        return str(self) < str(other)

    @classmethod
    def parse(cls, text: str) -> "VariableKey":
        parts = text.split(KEY_SEP)
        if len(parts) != 4:
            raise BadRow(f"malformed variable key {text!r}")
        return cls(Category.parse(parts[0]), parts[1], parts[2], parts[3])


@dataclass
class PlanCase:
    case_id: str
    period: str = ""
    observations: dict[VariableKey, float] = field(default_factory=dict)

    def add(self, key: VariableKey, value: float) -> None:
        if key in self.observations:
            raise DuplicateObservation(self.case_id, key)
        self.observations[key] = float(value)

    def get(self, key: VariableKey) -> float | None:
        return self.observations.get(key)


class HistoryMatrix:
    """Immutable variables x cases table with explicit missingness."""

    def __init__(
        self,
        variables: Sequence[VariableKey],
        cases: Sequence[str],
        periods: Sequence[str],
        values: np.ndarray,
        present: np.ndarray,
    ):
        self.variables = tuple(variables)
        self.cases = tuple(cases)
        self.periods = tuple(periods)
        values = np.array(values, dtype=float)
        present = np.array(present, dtype=bool)
        if values.shape != (len(self.variables), len(self.cases)) or present.shape != values.shape:
            raise ValueError("values/present shape does not match variables x cases")
        values[~present] = np.nan
        values.setflags(write=False)
        present.setflags(write=False)
        self.values = values
        self.present_mask = present
        self._var_index = {v: i for i, v in enumerate(self.variables)}
        self._case_index = {c: j for j, c in enumerate(self.cases)}

    @property
    def n_cases(self) -> int:
        return len(self.cases)

    def __contains__(self, v: VariableKey) -> bool:
        return v in self._var_index

    def index(self, v: VariableKey) -> int:
        try:
            return self._var_index[v]
        except KeyError:
            raise UnknownVariable(str(v)) from None

    def present(self, v: VariableKey, case_id: str) -> bool:
        return bool(self.present_mask[self.index(v), self._case_index[case_id]])

    def value(self, v: VariableKey, case_id: str) -> float | None:
        i, j = self.index(v), self._case_index[case_id]
        return float(self.values[i, j]) if self.present_mask[i, j] else None

    def row(self, v: VariableKey) -> tuple[np.ndarray, np.ndarray]:
        """Full-length (values, present) arrays for ``v``; missing values are NaN."""
        i = self.index(v)
        return self.values[i], self.present_mask[i]

    def case(self, case_id: str) -> PlanCase:
        j = self._case_index[case_id]
        pc = PlanCase(case_id, self.periods[j])
        for i, v in enumerate(self.variables):
            if self.present_mask[i, j]:
                pc.observations[v] = float(self.values[i, j])
        return pc

    def iter_cases(self) -> Iterable[PlanCase]:
        for c in self.cases:
            yield self.case(c)

    def __eq__(self, other) -> bool:
        if not isinstance(other, HistoryMatrix):
            return NotImplemented
        return (
            self.variables == other.variables
            and self.cases == other.cases
            and self.periods == other.periods
            and np.array_equal(self.present_mask, other.present_mask)
            and np.array_equal(self.values[self.present_mask], other.values[other.present_mask])
        )

    def __repr__(self) -> str:
        return (
            f"HistoryMatrix({len(self.variables)} variables x {self.n_cases} cases, "
            f"{int(self.present_mask.sum())} present)"
        )

    @classmethod
    def from_cases(cls, cases: Iterable[PlanCase], variables: Iterable[VariableKey] = ()) -> "HistoryMatrix":
        """Assemble cases; ``variables`` adds keys that may be absent everywhere."""
        cases = list(cases)
        seen = set()
        for pc in cases:
            if pc.case_id in seen:
                raise DuplicateObservation(pc.case_id, "<case>")
            seen.add(pc.case_id)
        cases.sort(key=lambda pc: (pc.period, pc.case_id))
        variables = sorted({k for pc in cases for k in pc.observations} | set(variables), key=str)
        vi = {v: i for i, v in enumerate(variables)}
        values = np.full((len(variables), len(cases)), np.nan)
        present = np.zeros_like(values, dtype=bool)
        for j, pc in enumerate(cases):
            for k, x in pc.observations.items():
                values[vi[k], j] = x
                present[vi[k], j] = True
        return cls(variables, [pc.case_id for pc in cases], [pc.period for pc in cases], values, present)

    def restrict(self, variables: Iterable[VariableKey] | None = None, cases: Iterable[str] | None = None) -> "HistoryMatrix":
        """Sub-matrix on the given variables and/or cases (original order kept)."""
        keep_vars = None if variables is None else set(variables)
        vs = [v for v in self.variables if keep_vars is None or v in keep_vars]
        keep_cases = None if cases is None else set(cases)
        cs = [j for j, c in enumerate(self.cases) if keep_cases is None or c in keep_cases]
        rows = [self.index(v) for v in vs]
        return HistoryMatrix(
            vs,
            [self.cases[j] for j in cs],
            [self.periods[j] for j in cs],
            self.values[np.ix_(rows, cs)],
            self.present_mask[np.ix_(rows, cs)],
        )


def column_view(h: HistoryMatrix, v: VariableKey) -> list[float]:
    """Present values of ``v`` in case order."""
    vals, mask = h.row(v)
    return [float(x) for x in vals[mask]]


# -- ingestion --------------------------------------------------------------


@dataclass
class TableSource:
    """One delimited file.

    ``columns`` maps canonical column names onto the file's header names; a
    canonical name absent from the mapping is read from the identically named
    column if the file has one.  ``category`` fixes the category for every row
    of a per-category file; leave it ``None`` for a combined file carrying a
    category column.
    """

    path: Path
    category: Category | None = None
    columns: Mapping[str, str] = field(default_factory=dict)
    default_attribute: str = "value"


@dataclass
class IngestConfig:
    sources: list[TableSource]
    join_keys: tuple[str, ...] = ("case_id", "site", "material", "attribute")
    delimiter: str = ","

    def __post_init__(self):
        allowed = {"case_id", "category", "site", "material", "attribute"}
        bad = [k for k in self.join_keys if k not in allowed]
        if bad:
            raise BadRow(f"join keys {bad} are not VariableKey/case columns")
        if "case_id" not in self.join_keys:
            raise BadRow("join keys must include case_id")


def parse_real(text: str) -> float:
    """Parse a '.'-decimal real; scientific notation allowed, no locale forms."""
    t = text.strip()
    if not t or "," in t or "_" in t:
        raise ValueError(text)
    x = float(t)
    if math.isnan(x):
        raise ValueError(text)
    return x


def _read_source(src: TableSource, cfg: IngestConfig, diagnostics: list | None):
    path = Path(src.path)
    if not path.is_file():
        raise MissingFile(str(path))
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader((ln for ln in fh if not ln.startswith("#")), delimiter=cfg.delimiter)
        header = reader.fieldnames or []

        def col(name):
            return src.columns.get(name, name)

        needed = ["case_id", "site", "material", "value"]
        if src.category is None:
            needed.append("category")
        missing = [n for n in needed if col(n) not in header]
        if missing:
            raise BadRow(f"{path}: missing columns {missing}")
        has_attr = col("attribute") in header
        has_period = col("period") in header
        # data rows start after the header line; comments are not counted
        for lineno, rec in enumerate(reader, start=2):
            try:
                value = parse_real(rec[col("value")] or "")
            except ValueError:
                err = BadNumeric(str(path), lineno, rec[col("value")])
                if diagnostics is None:
                    raise err from None
                diagnostics.append(err)
                continue
            cat = src.category if src.category is not None else Category.parse(rec[col("category")])
            key_parts = {
                "category": cat,
                "site": rec[col("site")].strip(),
                "material": rec[col("material")].strip(),
                "attribute": rec[col("attribute")].strip() if has_attr else src.default_attribute,
            }
            # non-join parts collapse to a wildcard so tables join on the configured keys only
            for part in ("site", "material", "attribute"):
                if part not in cfg.join_keys:
                    key_parts[part] = "*"
            rows.append(
                (
                    rec[col("case_id")].strip(),
                    rec[col("period")].strip() if has_period else "",
                    VariableKey(**key_parts),
                    value,
                )
            )
    return rows


def ingest_tables(config: IngestConfig, diagnostics: list | None = None) -> HistoryMatrix:
    """Read every source, join on (case_id, VariableKey) and build the matrix.

    Unparseable values raise :class:`BadNumeric` unless a ``diagnostics`` list
    is passed, in which case bad rows are rejected and recorded there.
    Duplicate (case, key) rows always raise.
    """
    cases: dict[str, PlanCase] = {}
    for src in config.sources:
        for case_id, period, key, value in _read_source(src, config, diagnostics):
            pc = cases.get(case_id)
            if pc is None:
                pc = cases[case_id] = PlanCase(case_id, period)
            elif period and pc.period and period != pc.period:
                raise BadRow(f"case {case_id!r} has conflicting periods {pc.period!r}/{period!r}")
            elif period and not pc.period:
                pc.period = period
            pc.add(key, value)
    return HistoryMatrix.from_cases(cases.values())


def read_history_dir(directory: str | Path, diagnostics: list | None = None) -> HistoryMatrix:
    """Ingest every ``*.csv`` in ``directory`` as a combined-format table."""
    d = Path(directory)
    if not d.is_dir():
        raise MissingFile(str(d))
    files = sorted(d.glob("*.csv"))
    if not files:
        raise MissingFile(f"no *.csv tables in {d}")
    return ingest_tables(IngestConfig([TableSource(f) for f in files]), diagnostics)


def read_case(path: str | Path) -> PlanCase:
    """Read a single plan case from a combined-format file."""
    h = ingest_tables(IngestConfig([TableSource(Path(path))]))
    if h.n_cases != 1:
        raise BadRow(f"{path}: expected exactly one case, found {h.n_cases}")
    return h.case(h.cases[0])


def _fmt(x: float) -> str:
    return repr(float(x))


def write_cases(cases: Iterable[PlanCase], path: str | Path) -> None:
    """Write cases in the combined long format (lossless)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CANONICAL_COLUMNS)
        for pc in cases:
            for key in sorted(pc.observations, key=str):
                w.writerow(
                    (pc.case_id, pc.period, key.category.value, key.site, key.material,
                     key.attribute, _fmt(pc.observations[key]))
                )


def export_history(h: HistoryMatrix, path: str | Path) -> None:
    write_cases(h.iter_cases(), path)
