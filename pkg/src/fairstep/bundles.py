"""Cohort bundles and the JSON documents the CLI and service share.

A bundle is a directory holding a validated, exclusion-applied cohort:
normalized enrollee CSV, the three code-map CSVs, and a manifest recording
counts and exclusions. Formula, candidate-pool, group, and policy documents
are small JSON files with the schemas parsed here; the CLI reads them from
disk and the HTTP service accepts the same shapes inline.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass

from .cohort import (
    CodeMaps,
    EnrolleeRecord,
    ExclusionReport,
    GroupDefinition,
    load_enrollees,
    write_enrollees,
)
from .design import DEFAULT_BANDING, AgeBanding, Formula, VariableId
from .stepwise import (
    CandidateBlock,
    EvaluationMode,
    SelectionPolicy,
    gated_r2_policy,
    max_r2_policy,
    net_comp_policy,
)

BUNDLE_FORMAT = "fairstep-bundle"
BUNDLE_VERSION = 1
MANIFEST_NAME = "manifest.json"


class BundleError(ValueError):
    pass


@dataclass(frozen=True)
class Bundle:
    path: str
    records: list[EnrolleeRecord]
    maps: CodeMaps
    manifest: dict


def _write_pair_csv(path: str, header: tuple[str, str], rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def write_bundle(
    out_dir: str,
    records: list[EnrolleeRecord],
    maps: CodeMaps,
    exclusions: ExclusionReport,
    region_declared: bool = True,
) -> dict:
    """Write a cohort bundle directory; returns the manifest written."""
    os.makedirs(out_dir, exist_ok=True)
    write_enrollees(records, os.path.join(out_dir, "enrollees.csv"))
    _write_pair_csv(
        os.path.join(out_dir, "hcc_map.csv"), ("icd", "hcc"), sorted(maps.icd_to_hcc.items())
    )
    _write_pair_csv(
        os.path.join(out_dir, "ccs_map.csv"), ("icd", "ccs"), sorted(maps.icd_to_ccs.items())
    )
    hierarchy_rows = sorted(
        (rule.dominant, sup) for rule in maps.hierarchies for sup in rule.suppressed
    )
    _write_pair_csv(
        os.path.join(out_dir, "hierarchy.csv"),
        ("dominant_hcc", "suppressed_hcc"),
        hierarchy_rows,
    )
    manifest = {
        "format": BUNDLE_FORMAT,
        "version": BUNDLE_VERSION,
        "rows": len(records),
        "excluded": dict(sorted(exclusions.counts.items())),
        "payment_hccs": list(maps.payment_hccs),
        "region_declared": region_declared,
        "files": {
            "enrollees": "enrollees.csv",
            "hcc_map": "hcc_map.csv",
            "ccs_map": "ccs_map.csv",
            "hierarchy": "hierarchy.csv",
        },
    }
    with open(os.path.join(out_dir, MANIFEST_NAME), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    return manifest


def load_bundle(path: str) -> Bundle:
    """Load and revalidate a bundle directory written by write_bundle."""
    manifest_path = os.path.join(path, MANIFEST_NAME)
    try:
        with open(manifest_path, encoding="utf-8") as fh:
            manifest = json.load(fh)
    except FileNotFoundError:
        raise BundleError(f"no {MANIFEST_NAME} in {path!r}; not a bundle directory") from None
    except json.JSONDecodeError as exc:
        raise BundleError(f"unreadable manifest {manifest_path!r}: {exc}") from None
    if manifest.get("format") != BUNDLE_FORMAT:
        raise BundleError(f"{manifest_path!r} is not a {BUNDLE_FORMAT} manifest")
    if manifest.get("version") != BUNDLE_VERSION:
        raise BundleError(f"unsupported bundle version {manifest.get('version')!r}")
    files = manifest["files"]

    def member(key: str) -> str:
        return os.path.join(path, files[key])

    records = load_enrollees(member("enrollees"))
    if len(records) != manifest["rows"]:
        raise BundleError(
            f"bundle row count {len(records)} does not match manifest {manifest['rows']}"
        )
    from .cohort import load_code_maps  # local to keep module import cheap

    maps = load_code_maps(
        member("hcc_map"),
        member("ccs_map"),
        member("hierarchy"),
        payment_hccs=manifest.get("payment_hccs") or None,
    )
    return Bundle(path=path, records=records, maps=maps, manifest=manifest)


# --- JSON document schemas ---------------------------------------------------


def banding_from_doc(doc) -> AgeBanding:
    if doc is None:
        return DEFAULT_BANDING
    try:
        bands = tuple((int(lo), None if hi is None else int(hi)) for lo, hi in doc)
    except (TypeError, ValueError) as exc:
        raise BundleError(f"malformed banding document: {exc}") from None
    return AgeBanding(bands)


def banding_to_doc(banding: AgeBanding) -> list:
    return [[lo, hi] for lo, hi in banding.bands]


def _variable_from_doc(obj) -> VariableId:
    try:
        return VariableId.from_json_dict(obj)
    except (KeyError, TypeError, ValueError) as exc:
        raise BundleError(f"malformed variable entry {obj!r}: {exc}") from None


def formula_from_doc(doc: dict) -> tuple[Formula, AgeBanding]:
    """Parse {"banding": [[lo, hi|null], ...]?, "variables": [{kind, key}, ...]}."""
    if not isinstance(doc, dict) or "variables" not in doc:
        raise BundleError("formula document needs a 'variables' list")
    banding = banding_from_doc(doc.get("banding"))
    variables = tuple(_variable_from_doc(v) for v in doc["variables"])
    return Formula(variables), banding


def formula_to_doc(formula: Formula, banding: AgeBanding) -> dict:
    return {
        "banding": banding_to_doc(banding),
        "variables": [v.to_json_dict() for v in formula.variables],
    }


def pool_from_doc(doc: dict) -> tuple[CandidateBlock, ...]:
    """Parse {"blocks": [{"block_id": ..., "variables": [{kind, key}, ...]}]}."""
    if not isinstance(doc, dict) or "blocks" not in doc:
        raise BundleError("pool document needs a 'blocks' list")
    blocks = []
    for entry in doc["blocks"]:
        variables = tuple(_variable_from_doc(v) for v in entry["variables"])
        blocks.append(CandidateBlock(entry["block_id"], variables))
    return tuple(blocks)


def pool_to_doc(pool) -> dict:
    return {
        "blocks": [
            {"block_id": b.block_id, "variables": [v.to_json_dict() for v in b.variables]}
            for b in pool
        ]
    }


def groups_from_doc(doc: dict) -> tuple[GroupDefinition, ...]:
    """Parse {"groups": [{"group_id": ..., "ccs_categories": [...]}]}."""
    if not isinstance(doc, dict) or "groups" not in doc:
        raise BundleError("groups document needs a 'groups' list")
    return tuple(
        GroupDefinition(entry["group_id"], frozenset(entry["ccs_categories"]))
        for entry in doc["groups"]
    )


def groups_to_doc(groups) -> dict:
    return {
        "groups": [
            {"group_id": g.group_id, "ccs_categories": sorted(g.ccs_categories)} for g in groups
        ]
    }


def evaluation_from_doc(doc) -> EvaluationMode:
    if doc is None:
        return EvaluationMode.in_sample()
    mode = doc.get("mode", "in_sample")
    if mode == "cross_validated":
        return EvaluationMode.cross_validated(
            folds=int(doc.get("folds", 5)), seed=int(doc.get("seed", 0))
        )
    return EvaluationMode(mode)


def policy_from_doc(doc: dict) -> SelectionPolicy:
    """Parse a policy document; 'kind' picks the objective stack.

    max_r2: min_gain, parsimony_tiebreak. net_comp_toward_zero: group_id,
    require_nonpositive_start. gated_r2: alpha plus the max_r2 fields.
    Optional: name, evaluation {mode, folds, seed}.
    """
    if not isinstance(doc, dict) or "kind" not in doc:
        raise BundleError("policy document needs a 'kind'")
    kind = doc["kind"]
    evaluation = evaluation_from_doc(doc.get("evaluation"))
    name = doc.get("name")
    if kind == "max_r2":
        return max_r2_policy(
            min_gain=float(doc.get("min_gain", 0.0)),
            parsimony_tiebreak=bool(doc.get("parsimony_tiebreak", True)),
            evaluation=evaluation,
            name=name,
        )
    if kind == "net_comp_toward_zero":
        if "group_id" not in doc:
            raise BundleError("net_comp_toward_zero policy needs a 'group_id'")
        return net_comp_policy(
            doc["group_id"],
            require_nonpositive_start=bool(doc.get("require_nonpositive_start", True)),
            evaluation=evaluation,
            name=name,
        )
    if kind == "gated_r2":
        return gated_r2_policy(
            alpha=float(doc.get("alpha", 0.05)),
            min_gain=float(doc.get("min_gain", 0.0)),
            parsimony_tiebreak=bool(doc.get("parsimony_tiebreak", True)),
            evaluation=evaluation,
            name=name,
        )
    raise BundleError(f"unknown policy kind {kind!r}")


def load_json(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise BundleError(f"no such file: {path!r}") from None
    except json.JSONDecodeError as exc:
        raise BundleError(f"unreadable JSON in {path!r}: {exc}") from None


def dump_json(doc, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")
