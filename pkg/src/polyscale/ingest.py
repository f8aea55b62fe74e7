"""Loading, recoding, and screening of categorical survey data.

Raw survey files arrive as integer-coded CSV columns.  A coding scheme maps
each raw code to an analysis category (or to missing), and the recoded data
are held in a :class:`ResponseMatrix` together with survey weights and
grouping labels.  Missing responses are represented by ``None`` at the cell
level and by an ``observed`` mask inside the matrix; no integer code is
reserved for missingness.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from numpy.typing import NDArray


@dataclass(frozen=True)
class ColumnSpec:
    """Names the roles of the columns in a raw survey file.

    Attributes
    ----------
    items : sequence of str
        Columns holding integer-coded item responses.
    weight : str, optional
        Column holding positive survey weights.  If absent every person
        gets weight 1.0.
    groups : sequence of str
        Columns holding grouping labels (kept as text).
    person_id : str, optional
        Column holding a person identifier; defaults to the 0-based row
        position.
    """

    items: tuple[str, ...]
    weight: str | None = None
    groups: tuple[str, ...] = ()
    person_id: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "items", tuple(self.items))
        object.__setattr__(self, "groups", tuple(self.groups))
        if not self.items:
            raise ValueError("ColumnSpec needs at least one item column")
        referenced = list(self.items) + list(self.groups)
        if self.weight is not None:
            referenced.append(self.weight)
        if self.person_id is not None:
            referenced.append(self.person_id)
        if len(set(referenced)) != len(referenced):
            raise ValueError("column roles overlap; every column may have one role")


@dataclass
class RawTable:
    """Parsed survey file: one dict per row, integer item codes, absent cells omitted."""

    columns: list[str]
    rows: list[dict]
    spec: ColumnSpec

    def __post_init__(self):
        if len(set(self.columns)) != len(self.columns):
            raise ValueError("duplicate column names in table")
        present = set(self.columns)
        referenced = list(self.spec.items) + list(self.spec.groups)
        if self.spec.weight is not None:
            referenced.append(self.spec.weight)
        if self.spec.person_id is not None:
            referenced.append(self.spec.person_id)
        missing = [c for c in referenced if c not in present]
        if missing:
            raise ValueError(f"referenced columns not in table: {missing}")

    @property
    def n_rows(self) -> int:
        return len(self.rows)


def load_csv(path, spec: ColumnSpec) -> RawTable:
    """Read a UTF-8, comma-separated survey file with a header row.

    Leading lines starting with ``#`` (provenance comments in files this
    tool writes) are skipped.  Item cells must be integers; blank cells
    become absent.  The weight column, when named, must parse as a positive
    float.  Rows whose field count differs from the header are an error.
    """
    with open(path, encoding="utf-8", newline="") as fh:
        lines = fh.readlines()
    offset = 0
    while offset < len(lines) and lines[offset].startswith("#"):
        offset += 1
    reader = csv.reader(lines[offset:])
    try:
        header = next(reader)
    except StopIteration:
        raise ValueError(f"{path}: empty file, header row required") from None
    rows: list[dict] = []
    for lineno, fields in enumerate(reader, start=offset + 2):
        if not fields:
            continue
        if len(fields) != len(header):
            raise ValueError(
                f"{path}:{lineno}: expected {len(header)} fields, got {len(fields)}"
            )
        record: dict = {}
        for col, cell in zip(header, fields):
            cell = cell.strip()
            if cell == "":
                continue
            if col in spec.items:
                try:
                    record[col] = int(cell)
                except ValueError:
                    raise ValueError(
                        f"{path}:{lineno}: non-integer code {cell!r} in item column {col!r}"
                    ) from None
            elif spec.weight is not None and col == spec.weight:
                record[col] = float(cell)
            else:
                record[col] = cell
        rows.append(record)
    return RawTable(columns=header, rows=rows, spec=spec)


@dataclass(frozen=True)
class CodingScheme:
    """Recode rule for one item: raw code -> analysis category, or missing.

    Targets must be nonnegative integers and distinct within the item, so
    the map is invertible and the recoded category list can be rebuilt from
    the scheme alone.  Raw codes listed as missing may not also be mapped.
    """

    item: str
    mapping: Mapping[int, int]
    missing: frozenset[int] = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "mapping", dict(self.mapping))
        object.__setattr__(self, "missing", frozenset(self.missing))
        if not self.mapping:
            raise ValueError(f"{self.item}: empty recode map")
        targets = list(self.mapping.values())
        if any(t < 0 for t in targets):
            raise ValueError(f"{self.item}: recode targets must be nonnegative")
        if len(set(targets)) != len(targets):
            raise ValueError(f"{self.item}: duplicate recode target within item")
        if self.missing & set(self.mapping):
            raise ValueError(f"{self.item}: raw code both mapped and declared missing")
        if self.missing & set(targets):
            raise ValueError(f"{self.item}: missing codes overlap recode targets")

    @property
    def categories(self) -> tuple[int, ...]:
        """Recoded category codes in ascending numeric order."""
        return tuple(sorted(self.mapping.values()))

    def inverse(self) -> dict[int, int]:
        return {v: k for k, v in self.mapping.items()}


def load_schemes(path) -> dict[str, CodingScheme]:
    """Read coding schemes from JSON: ``{item: {"map": {raw: target}, "missing": [raw, ...]}}``."""
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    schemes = {}
    for item, entry in payload.items():
        try:
            mapping = {int(k): int(v) for k, v in entry["map"].items()}
        except KeyError:
            raise ValueError(f"{path}: scheme for {item!r} lacks a 'map' object") from None
        missing = frozenset(int(c) for c in entry.get("missing", []))
        schemes[item] = CodingScheme(item=item, mapping=mapping, missing=missing)
    return schemes


def save_schemes(schemes: Mapping[str, CodingScheme], path) -> None:
    payload = {
        item: {
            "map": {str(k): v for k, v in sorted(s.mapping.items())},
            "missing": sorted(s.missing),
        }
        for item, s in schemes.items()
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


@dataclass
class ResponseMatrix:
    """Recoded responses for N persons on I items, plus weights and groups.

    ``codes[n, i]`` is meaningful only where ``observed[n, i]`` is True;
    unobserved cells hold a zero filler.  ``categories[i]`` lists the item's
    possible recoded codes in ascending order, derived from the coding
    scheme rather than from the observed data so that unobserved categories
    stay in the model space.
    """

    items: list[str]
    codes: NDArray[np.int_]
    observed: NDArray[np.bool_]
    categories: list[tuple[int, ...]]
    weights: NDArray[np.float64]
    groups: dict[str, np.ndarray] = field(default_factory=dict)
    person_ids: np.ndarray | None = None

    def __post_init__(self):
        self.codes = np.asarray(self.codes, dtype=np.int64)
        self.observed = np.asarray(self.observed, dtype=bool)
        self.weights = np.asarray(self.weights, dtype=np.float64)
        n, i = self.codes.shape
        if n == 0:
            raise ValueError("ResponseMatrix needs at least one person")
        if i != len(self.items) or len(self.categories) != i:
            raise ValueError("items, categories, and code columns disagree")
        if self.observed.shape != (n, i):
            raise ValueError("observed mask shape differs from codes")
        if self.weights.shape != (n,):
            raise ValueError("weights must be one per person")
        if np.any(self.weights <= 0):
            raise ValueError("weights must be positive")
        if self.person_ids is None:
            self.person_ids = np.array([str(k) for k in range(n)], dtype=object)
        else:
            self.person_ids = np.asarray(self.person_ids, dtype=object)
            if self.person_ids.shape != (n,):
                raise ValueError("person_ids must be one per person")
        for j, cats in enumerate(self.categories):
            self.categories[j] = tuple(sorted(cats))
            col = self.codes[self.observed[:, j], j]
            bad = set(col.tolist()) - set(self.categories[j])
            if bad:
                raise ValueError(
                    f"item {self.items[j]!r}: observed codes {sorted(bad)} outside category list"
                )
        for name, labels in self.groups.items():
            labels = np.asarray(labels, dtype=object)
            if labels.shape != (n,):
                raise ValueError(f"group column {name!r} must be one label per person")
            self.groups[name] = labels

    @property
    def n_persons(self) -> int:
        return self.codes.shape[0]

    @property
    def n_items(self) -> int:
        return self.codes.shape[1]

    def item_index(self, item: str) -> int:
        try:
            return self.items.index(item)
        except ValueError:
            raise ValueError(f"unknown item {item!r}") from None

    def category_indices(self) -> tuple[NDArray[np.int_], NDArray[np.bool_]]:
        """Map codes to 0-based positions in each item's category list.

        Returns ``(idx, observed)`` where ``idx[n, i]`` is the category
        index for observed cells and a zero filler elsewhere.
        """
        idx = np.zeros_like(self.codes)
        for j, cats in enumerate(self.categories):
            lookup = {c: k for k, c in enumerate(cats)}
            col = self.codes[:, j]
            obs = self.observed[:, j]
            idx[obs, j] = np.array([lookup[c] for c in col[obs].tolist()], dtype=np.int64)
        return idx, self.observed.copy()

    def select_persons(self, keep: NDArray[np.bool_]) -> "ResponseMatrix":
        """New matrix restricted to the persons where ``keep`` is True."""
        keep = np.asarray(keep, dtype=bool)
        return ResponseMatrix(
            items=list(self.items),
            codes=self.codes[keep],
            observed=self.observed[keep],
            categories=list(self.categories),
            weights=self.weights[keep],
            groups={k: v[keep] for k, v in self.groups.items()},
            person_ids=self.person_ids[keep],
        )

    def response_row(self, n: int) -> list[int | None]:
        """Row ``n`` as codes with ``None`` marking missing cells."""
        return [
            int(self.codes[n, j]) if self.observed[n, j] else None
            for j in range(self.n_items)
        ]


def apply_coding(raw: RawTable, schemes: Mapping[str, CodingScheme]) -> ResponseMatrix:
    """Recode a raw table into a :class:`ResponseMatrix`.

    Every scheme item must be a column of ``raw``.  A raw code that is
    neither mapped nor declared missing is an error (reported with item,
    row, and code) rather than silently treated as missing, so scheme/data
    drift cannot pass unnoticed.  Absent cells and missing-coded cells both
    become unobserved.
    """
    items = [it for it in raw.spec.items if it in schemes]
    if set(schemes) - set(raw.spec.items):
        extra = sorted(set(schemes) - set(raw.spec.items))
        raise ValueError(f"schemes refer to non-item columns: {extra}")
    if not items:
        raise ValueError("no scheme covers any item column")
    n = raw.n_rows
    codes = np.zeros((n, len(items)), dtype=np.int64)
    observed = np.zeros((n, len(items)), dtype=bool)
    for j, item in enumerate(items):
        scheme = schemes[item]
        for r, record in enumerate(raw.rows):
            if item not in record:
                continue
            code = record[item]
            if code in scheme.missing:
                continue
            try:
                codes[r, j] = scheme.mapping[code]
            except KeyError:
                raise ValueError(
                    f"item {item!r}, row {r}: unmapped raw code {code}"
                ) from None
            observed[r, j] = True

    if raw.spec.weight is not None:
        weights = np.array(
            [float(record.get(raw.spec.weight, 1.0)) for record in raw.rows]
        )
    else:
        weights = np.ones(n)
    groups = {
        g: np.array([record.get(g, "") for record in raw.rows], dtype=object)
        for g in raw.spec.groups
    }
    if raw.spec.person_id is not None:
        person_ids = np.array(
            [str(record.get(raw.spec.person_id, r)) for r, record in enumerate(raw.rows)],
            dtype=object,
        )
    else:
        person_ids = None
    return ResponseMatrix(
        items=items,
        codes=codes,
        observed=observed,
        categories=[schemes[it].categories for it in items],
        weights=weights,
        groups=groups,
        person_ids=person_ids,
    )


def matrix_from_table(
    raw: RawTable, categories: Mapping[str, Sequence[int]]
) -> ResponseMatrix:
    """Build a matrix from already-recoded data, without recoding.

    ``categories`` supplies each item's full category list (recoded codes),
    since it cannot be recovered from observed data alone.  Cells absent
    from the table are unobserved.
    """
    items = [it for it in raw.spec.items if it in categories]
    if not items:
        raise ValueError("categories cover none of the table's item columns")
    n = raw.n_rows
    codes = np.zeros((n, len(items)), dtype=np.int64)
    observed = np.zeros((n, len(items)), dtype=bool)
    for j, item in enumerate(items):
        for r, record in enumerate(raw.rows):
            if item in record:
                codes[r, j] = record[item]
                observed[r, j] = True
    if raw.spec.weight is not None:
        weights = np.array(
            [float(record.get(raw.spec.weight, 1.0)) for record in raw.rows]
        )
    else:
        weights = np.ones(n)
    groups = {
        g: np.array([record.get(g, "") for record in raw.rows], dtype=object)
        for g in raw.spec.groups
    }
    if raw.spec.person_id is not None:
        person_ids = np.array(
            [str(record.get(raw.spec.person_id, r)) for r, record in enumerate(raw.rows)],
            dtype=object,
        )
    else:
        person_ids = None
    return ResponseMatrix(
        items=items,
        codes=codes,
        observed=observed,
        categories=[tuple(categories[it]) for it in items],
        weights=weights,
        groups=groups,
        person_ids=person_ids,
    )


def exclude_all_missing(
    matrix: ResponseMatrix, required_items: Sequence[str]
) -> ResponseMatrix:
    """Drop persons missing on every one of ``required_items``.

    Persons with at least one observed required item are retained, so
    partial missingness survives this screen.  Raises if nobody remains.
    """
    cols = [matrix.item_index(it) for it in required_items]
    if not cols:
        raise ValueError("required_items must not be empty")
    keep = matrix.observed[:, cols].any(axis=1)
    if not keep.any():
        raise ValueError("exclusion removed every person")
    return matrix.select_persons(keep)
