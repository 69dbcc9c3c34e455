"""Enrollee ingestion, cohort exclusions, and diagnosis-code grouping.

Loads person-level claims summaries from CSV, applies the standard cohort
exclusions (missing region, missing claims, negative claims), and maps each
person's ICD codes to HCC flags (partial map, hierarchy-filtered) and CCS
categories (total map). Group membership is defined over CCS categories so
it is independent of which HCCs any payment formula happens to include.
"""

from __future__ import annotations

import csv
import graphlib
import io
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

ENROLLEE_HEADER = ["person_id", "age", "sex", "region", "diagnosis_codes", "spend_total"]
CODE_DELIMITER = ";"

SEXES = ("F", "M")


class CohortError(ValueError):
    """Base class for cohort-layer failures."""


class IngestionError(CohortError):
    """Malformed input row; carries the 1-based row number and field name."""

    def __init__(self, row: int, field_name: str, message: str):
        super().__init__(f"row {row}, field '{field_name}': {message}")
        self.row = row
        self.field_name = field_name


class UnmappedCodeError(CohortError):
    """An ICD code has no CCS mapping (stale or truncated map file)."""

    def __init__(self, code: str):
        super().__init__(f"ICD code '{code}' has no CCS mapping")
        self.code = code


@dataclass(frozen=True)
class EnrolleeRecord:
    """One person: demographics, diagnosis codes, and annual total spending.

    spend_total is None when the source row had no claims information; such
    records survive loading and are dropped by apply_exclusions.
    """

    person_id: str
    age: int
    sex: str
    region: str | None
    diagnosis_codes: frozenset[str]
    spend_total: float | None

    def __post_init__(self):
        if not 0 <= self.age <= 120:
            raise CohortError(f"age {self.age} outside [0, 120] for '{self.person_id}'")
        if self.sex not in SEXES:
            raise CohortError(f"sex must be one of {SEXES}, got '{self.sex}'")


@dataclass(frozen=True)
class HierarchyRule:
    """When the dominant HCC is present, every suppressed HCC is removed."""

    dominant: str
    suppressed: frozenset[str]

    def __post_init__(self):
        if self.dominant in self.suppressed:
            raise CohortError(f"hierarchy rule for '{self.dominant}' suppresses itself")


@dataclass(frozen=True)
class GroupDefinition:
    """A population group defined by a non-empty set of CCS categories."""

    group_id: str
    ccs_categories: frozenset[str]

    def __post_init__(self):
        if not self.ccs_categories:
            raise CohortError(f"group '{self.group_id}' has no CCS categories")


@dataclass(frozen=True)
class CodeMaps:
    """ICD-to-HCC (partial, hierarchical) and ICD-to-CCS (total) mappings.

    payment_hccs is the ordered list of HCC ids eligible to appear in a
    payment formula. Validation is eager: a bad map file fails at load, not
    mid-analysis.
    """

    icd_to_hcc: Mapping[str, str]
    icd_to_ccs: Mapping[str, str]
    hierarchies: tuple[HierarchyRule, ...] = ()
    payment_hccs: tuple[str, ...] = ()

    def __post_init__(self):
        missing = [icd for icd in self.icd_to_hcc if icd not in self.icd_to_ccs]
        if missing:
            raise CohortError(
                f"{len(missing)} HCC-mapped ICD code(s) missing from the CCS map, "
                f"e.g. '{missing[0]}'"
            )
        codespace = self.hcc_codespace()
        for rule in self.hierarchies:
            for hcc in {rule.dominant, *rule.suppressed}:
                if hcc not in codespace:
                    raise CohortError(f"hierarchy references unknown HCC '{hcc}'")
        _check_acyclic(self.hierarchies)

    def hcc_codespace(self) -> frozenset[str]:
        return frozenset(self.icd_to_hcc.values()) | frozenset(self.payment_hccs)

    def ccs_codespace(self) -> frozenset[str]:
        return frozenset(self.icd_to_ccs.values())


def _check_acyclic(rules: Sequence[HierarchyRule]) -> None:
    graph: dict[str, set[str]] = {}
    for rule in rules:
        graph.setdefault(rule.dominant, set()).update(rule.suppressed)
    try:
        tuple(graphlib.TopologicalSorter(graph).static_order())
    except graphlib.CycleError as exc:
        raise CohortError(f"hierarchy rules contain a cycle: {exc.args[1]}") from exc


def load_enrollees(source) -> list[EnrolleeRecord]:
    """Parse enrollee records from a CSV path, file object, or text.

    The header must match the declared schema; the region column may be
    absent entirely (records then carry region=None and the missing-region
    exclusion is skipped downstream). Any field parse failure aborts with
    the offending row and field.
    """
    rows = _read_csv(source)
    try:
        header = next(rows)
    except StopIteration:
        raise IngestionError(1, "header", "empty input") from None
    header = [h.strip() for h in header]
    if header == ENROLLEE_HEADER:
        has_region = True
    elif header == [h for h in ENROLLEE_HEADER if h != "region"]:
        has_region = False
    else:
        raise IngestionError(1, "header", f"expected {ENROLLEE_HEADER}, got {header}")

    records: list[EnrolleeRecord] = []
    seen: set[str] = set()
    for lineno, row in enumerate(rows, start=2):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) != len(header):
            raise IngestionError(lineno, "row", f"expected {len(header)} fields, got {len(row)}")
        values = dict(zip(header, row))
        person_id = values["person_id"].strip()
        if not person_id:
            raise IngestionError(lineno, "person_id", "empty")
        if person_id in seen:
            raise IngestionError(lineno, "person_id", f"duplicate '{person_id}'")
        seen.add(person_id)

        age = _parse_int(values["age"], lineno, "age")
        sex = values["sex"].strip()
        if sex not in SEXES:
            raise IngestionError(lineno, "sex", f"expected F or M, got '{values['sex']}'")
        region = values["region"].strip() or None if has_region else None
        codes = _parse_codes(values["diagnosis_codes"])
        spend_raw = values["spend_total"].strip()
        spend = _parse_float(spend_raw, lineno, "spend_total") if spend_raw else None

        try:
            records.append(
                EnrolleeRecord(person_id, age, sex, region, codes, spend)
            )
        except CohortError as exc:
            field_name = "age" if "age" in str(exc) else "sex"
            raise IngestionError(lineno, field_name, str(exc)) from exc
    return records


def write_enrollees(records: Sequence[EnrolleeRecord], dest) -> None:
    """Write records in the ingestion CSV schema (codes sorted, ; delimited).

    Numbers use repr so a write/load round trip reproduces records exactly.
    """
    own = isinstance(dest, str)
    fh = open(dest, "w", newline="", encoding="utf-8") if own else dest
    try:
        writer = csv.writer(fh)
        writer.writerow(ENROLLEE_HEADER)
        for r in records:
            writer.writerow(
                [
                    r.person_id,
                    r.age,
                    r.sex,
                    r.region or "",
                    CODE_DELIMITER.join(sorted(r.diagnosis_codes)),
                    "" if r.spend_total is None else repr(r.spend_total),
                ]
            )
    finally:
        if own:
            fh.close()


def _read_csv(source) -> Iterable[list[str]]:
    if isinstance(source, str) and "\n" not in source:
        with open(source, newline="", encoding="utf-8") as fh:
            yield from csv.reader(fh)
    elif isinstance(source, str):
        yield from csv.reader(io.StringIO(source))
    else:
        yield from csv.reader(source)


def _parse_int(text: str, row: int, field_name: str) -> int:
    try:
        return int(text.strip())
    except ValueError:
        raise IngestionError(row, field_name, f"not an integer: '{text}'") from None


def _parse_float(text: str, row: int, field_name: str) -> float:
    try:
        return float(text.strip())
    except ValueError:
        raise IngestionError(row, field_name, f"not a number: '{text}'") from None


def _parse_codes(cell: str) -> frozenset[str]:
    return frozenset(c.strip() for c in cell.split(CODE_DELIMITER) if c.strip())


# Exclusion reason keys, applied in this order; a record is counted once
# under the first reason that matches.
REASON_MISSING_REGION = "missing_region"
REASON_MISSING_CLAIMS = "missing_claims"
REASON_NEGATIVE_CLAIMS = "negative_claims"


@dataclass(frozen=True)
class ExclusionReport:
    counts: Mapping[str, int] = field(default_factory=dict)

    @property
    def total(self) -> int:
        return sum(self.counts.values())


def apply_exclusions(
    records: Sequence[EnrolleeRecord], *, region_declared: bool = True
) -> tuple[list[EnrolleeRecord], ExclusionReport]:
    """Drop records with missing region, missing spend, or negative spend.

    region_declared=False disables the missing-region rule for datasets
    whose schema carries no region column. Relative order is preserved and
    the operation is idempotent.
    """
    kept: list[EnrolleeRecord] = []
    counts: dict[str, int] = {}
    for record in records:
        if region_declared and record.region is None:
            reason = REASON_MISSING_REGION
        elif record.spend_total is None:
            reason = REASON_MISSING_CLAIMS
        elif record.spend_total < 0:
            reason = REASON_NEGATIVE_CLAIMS
        else:
            kept.append(record)
            continue
        counts[reason] = counts.get(reason, 0) + 1
    return kept, ExclusionReport(counts)


def assign_hccs(record: EnrolleeRecord, maps: CodeMaps) -> frozenset[str]:
    """Map a record's ICD codes to HCCs and apply hierarchy filtering.

    Codes without an HCC mapping contribute nothing. Each filtering pass
    evaluates every rule's dominant against the set at the start of the
    pass, removes all suppressed members, and repeats to a fixed point;
    acyclicity (validated at map load) guarantees termination.
    """
    current = {
        maps.icd_to_hcc[code] for code in record.diagnosis_codes if code in maps.icd_to_hcc
    }
    while True:
        doomed = set()
        for rule in maps.hierarchies:
            if rule.dominant in current:
                doomed |= rule.suppressed & current
        if not doomed:
            return frozenset(current)
        current -= doomed


def assign_ccs(record: EnrolleeRecord, maps: CodeMaps) -> frozenset[str]:
    """Map a record's ICD codes to CCS categories (total map, no hierarchy)."""
    out = set()
    for code in record.diagnosis_codes:
        try:
            out.add(maps.icd_to_ccs[code])
        except KeyError:
            raise UnmappedCodeError(code) from None
    return frozenset(out)


def group_membership(
    records: Sequence[EnrolleeRecord], definition: GroupDefinition, maps: CodeMaps
) -> np.ndarray:
    """Boolean vector: entry i is True iff record i has any CCS in the group.

    Membership depends only on the CCS grouping, never on which HCCs a
    payment formula includes.
    """
    if not records:
        raise CohortError("group_membership requires a non-empty cohort")
    targets = definition.ccs_categories
    return np.fromiter(
        (not assign_ccs(r, maps).isdisjoint(targets) for r in records),
        dtype=bool,
        count=len(records),
    )


def load_code_maps(
    hcc_csv,
    ccs_csv,
    hierarchy_csv=None,
    payment_hccs: Sequence[str] | None = None,
) -> CodeMaps:
    """Build CodeMaps from the three mapping CSVs.

    Schemas: HCC map `icd,hcc`; CCS map `icd,ccs`; hierarchy
    `dominant_hcc,suppressed_hcc` (one pair per row, pairs with the same
    dominant are merged into one rule). payment_hccs defaults to every HCC
    appearing in the HCC map, in first-appearance order.
    """
    icd_to_hcc = _load_pair_csv(hcc_csv, ("icd", "hcc"))
    icd_to_ccs = _load_pair_csv(ccs_csv, ("icd", "ccs"))
    rules: tuple[HierarchyRule, ...] = ()
    if hierarchy_csv is not None:
        pairs = _load_pair_csv(hierarchy_csv, ("dominant_hcc", "suppressed_hcc"), multi=True)
        rules = tuple(
            HierarchyRule(dom, frozenset(sups)) for dom, sups in pairs.items()
        )
    if payment_hccs is None:
        payment_hccs = list(dict.fromkeys(icd_to_hcc.values()))
    return CodeMaps(icd_to_hcc, icd_to_ccs, rules, tuple(payment_hccs))


def _load_pair_csv(source, expected_header: tuple[str, str], multi: bool = False):
    rows = _read_csv(source)
    try:
        header = [h.strip() for h in next(rows)]
    except StopIteration:
        raise IngestionError(1, "header", "empty map file") from None
    if header != list(expected_header):
        raise IngestionError(1, "header", f"expected {list(expected_header)}, got {header}")
    out: dict = {}
    for lineno, row in enumerate(rows, start=2):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) != 2:
            raise IngestionError(lineno, "row", f"expected 2 fields, got {len(row)}")
        key, value = row[0].strip(), row[1].strip()
        if not key or not value:
            raise IngestionError(lineno, expected_header[0], "empty field")
        if multi:
            out.setdefault(key, []).append(value)
        else:
            if key in out and out[key] != value:
                raise IngestionError(lineno, expected_header[0], f"conflicting entry for '{key}'")
            out[key] = value
    return out
