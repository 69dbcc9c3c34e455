"""Command-line workbench: ingest cohorts, simulate populations, fit and
report formulas, run stepwise searches, compare policies, and serve the
HTTP API.

Every command is a thin wrapper over the engine modules; nothing numeric
is reimplemented here. Exit codes: 0 success, 1 engine error (message
verbatim on stderr), 2 usage or ingest schema errors. --json swaps the
human tables for structured output on stdout.
"""

from __future__ import annotations

import dataclasses
import functools
import json
import os
import sys

import click
import numpy as np

from . import __version__
from .bundles import (
    BundleError,
    dump_json,
    formula_from_doc,
    formula_to_doc,
    groups_from_doc,
    groups_to_doc,
    load_bundle,
    load_json,
    policy_from_doc,
    pool_from_doc,
    pool_to_doc,
    write_bundle,
)
from .cohort import (
    CohortError,
    apply_exclusions,
    group_membership,
    load_code_maps,
    load_enrollees,
)
from .design import DesignError, build_design
from .metrics import MetricsError, cross_validated_report, in_sample_report
from .ols import OlsError, fit
from .scenario import MIN_GAIN, figure1_default
from .stepwise import StepwiseError, build_problem, compare_policies, run_stepwise
from .synthpop import SynthError, SyntheticSpec, calibration_report, generate

ENGINE_ERRORS = (
    BundleError,
    CohortError,
    DesignError,
    OlsError,
    MetricsError,
    StepwiseError,
    SynthError,
)


def engine_boundary(fn):
    """Engine errors exit 1 with the engine's message verbatim."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ENGINE_ERRORS as exc:
            click.echo(str(exc), err=True)
            sys.exit(1)

    return wrapper


@click.group()
@click.version_option(__version__, prog_name="fairstep")
def main():
    """Risk-adjustment formula workbench."""


def _spends(records) -> np.ndarray:
    for r in records:
        if r.spend_total is None:
            raise BundleError(
                f"record {r.person_id} has no spending; ingest with exclusions first"
            )
    return np.asarray([r.spend_total for r in records], dtype=np.float64)


def _group_masks(records, groups, maps) -> dict[str, np.ndarray]:
    return {g.group_id: group_membership(records, g, maps) for g in groups}


def _echo_group_table(report) -> None:
    click.echo(
        f"{'group':<16}{'n':>9}{'mean_spend':>14}{'net_comp':>14}{'pred_ratio':>12}"
    )
    for gid in sorted(report.group_metrics):
        gm = report.group_metrics[gid]
        click.echo(
            f"{gid:<16}{gm.n_g:>9}{gm.group_mean_spend:>14.2f}"
            f"{gm.net_compensation:>14.2f}{gm.predictive_ratio:>12.4f}"
        )


@main.command()
@click.option("--enrollees", "enrollees_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--hcc-map", "hcc_map_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--ccs-map", "ccs_map_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--hierarchy", "hierarchy_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--payment-hccs", help="comma-separated HCC ids eligible for payment formulas")
@click.option("--no-region", is_flag=True, help="schema carries no region column")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--json", "as_json", is_flag=True)
def ingest(enrollees_path, hcc_map_path, ccs_map_path, hierarchy_path, payment_hccs, no_region, out_dir, as_json):
    """Validate a cohort and cache it as a bundle directory."""
    try:
        maps = load_code_maps(
            hcc_map_path,
            ccs_map_path,
            hierarchy_path,
            payment_hccs=payment_hccs.split(",") if payment_hccs else None,
        )
        records = load_enrollees(enrollees_path)
    except CohortError as exc:
        click.echo(str(exc), err=True)
        sys.exit(2)
    region_declared = not no_region
    kept, exclusions = apply_exclusions(records, region_declared=region_declared)
    manifest = write_bundle(out_dir, kept, maps, exclusions, region_declared=region_declared)
    if as_json:
        click.echo(json.dumps(manifest, indent=2))
        return
    for reason, count in sorted(exclusions.counts.items()):
        click.echo(f"excluded {reason}: {count}")
    click.echo(f"excluded total: {exclusions.total}")
    click.echo(f"kept rows: {len(kept)}")
    click.echo(f"bundle written to {out_dir}")


@main.command()
@click.option("--spec", "spec_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--json", "as_json", is_flag=True)
@engine_boundary
def simulate(spec_path, out_path, as_json):
    """Generate a synthetic cohort CSV from a population spec."""
    with open(spec_path, encoding="utf-8") as fh:
        spec = SyntheticSpec.from_json(fh.read())
    records = generate(spec)
    from .cohort import write_enrollees

    write_enrollees(records, out_path)
    if as_json:
        click.echo(json.dumps({"rows": len(records), "out": out_path, "seed": spec.seed}))
    else:
        click.echo(f"wrote {len(records)} records to {out_path}")


@main.command()
@click.option("--bundle", "bundle_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--formula", "formula_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--groups", "groups_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--cv", "folds", type=int, help="cross-validate with this many folds")
@click.option("--seed", type=int, default=0, show_default=True, help="fold assignment seed")
@click.option("--json", "as_json", is_flag=True)
@engine_boundary
def report(bundle_dir, formula_path, groups_path, folds, seed, as_json):
    """Fit a formula on a bundle and report fit and group metrics."""
    bundle = load_bundle(bundle_dir)
    formula, banding = formula_from_doc(load_json(formula_path))
    groups = groups_from_doc(load_json(groups_path))
    X = build_design(bundle.records, formula, bundle.maps, banding)
    y = _spends(bundle.records)
    masks = _group_masks(bundle.records, groups, bundle.maps)
    if folds:
        rep = cross_validated_report(X, y, masks, folds=folds, seed=seed)
    else:
        rep = in_sample_report(fit(X, y), X, y, masks)
    if as_json:
        click.echo(json.dumps(rep.to_json_dict(), indent=2))
        return
    adj = "n/a" if rep.adj_r2 is None else f"{rep.adj_r2:.6f}"
    click.echo(f"mode: {rep.mode}   r2: {rep.r2:.6f}   adj_r2: {adj}")
    if rep.naive_p_values:
        click.echo("note: p-values are full-data, not out-of-fold")
    _echo_group_table(rep)


@main.command()
@click.option("--bundle", "bundle_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--baseline", "baseline_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--pool", "pool_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--groups", "groups_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--policy", "policy_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out-trace", "trace_path", required=True, type=click.Path(dir_okay=False))
@click.option("--json", "as_json", is_flag=True)
@engine_boundary
def stepwise(bundle_dir, baseline_path, pool_path, groups_path, policy_path, trace_path, as_json):
    """Run a stepwise search under one policy; write the decision trace."""
    bundle = load_bundle(bundle_dir)
    baseline, banding = formula_from_doc(load_json(baseline_path))
    pool = pool_from_doc(load_json(pool_path))
    groups = groups_from_doc(load_json(groups_path))
    policy = policy_from_doc(load_json(policy_path))
    problem = build_problem(bundle.records, baseline, pool, bundle.maps, groups, banding)
    result = run_stepwise(problem, policy)
    dump_json(result.trace.to_json_dict(), trace_path)
    accepted = [e.action.label() for e in result.trace.entries if e.accepted]
    if as_json:
        click.echo(
            json.dumps(
                {
                    "policy": policy.label(),
                    "evaluations": len(result.trace.entries),
                    "accepted": accepted,
                    "final_report": result.final_report.to_json_dict(),
                    "trace": trace_path,
                },
                indent=2,
            )
        )
        return
    click.echo(f"policy: {policy.label()}")
    click.echo(f"evaluated {len(result.trace.entries)} candidates, accepted {len(accepted)}")
    click.echo(f"accepted: {' '.join(accepted) if accepted else '(none)'}")
    adj = "n/a" if result.final_report.adj_r2 is None else f"{result.final_report.adj_r2:.6f}"
    click.echo(f"final r2: {result.final_report.r2:.6f}   adj_r2: {adj}")
    _echo_group_table(result.final_report)
    click.echo(f"trace written to {trace_path}")


@main.command()
@click.option("--bundle", "bundle_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--baseline", "baseline_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--pool", "pool_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--groups", "groups_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--policies", "policy_paths", required=True, multiple=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", type=click.Path(dir_okay=False), help="write full comparison JSON here")
@click.option("--json", "as_json", is_flag=True)
@engine_boundary
def compare(bundle_dir, baseline_path, pool_path, groups_path, policy_paths, out_path, as_json):
    """Run several policies on one problem and report where they diverge."""
    if len(policy_paths) < 2:
        raise click.UsageError("--policies must be given at least twice")
    bundle = load_bundle(bundle_dir)
    baseline, banding = formula_from_doc(load_json(baseline_path))
    pool = pool_from_doc(load_json(pool_path))
    groups = groups_from_doc(load_json(groups_path))
    policies = [policy_from_doc(load_json(p)) for p in policy_paths]
    problem = build_problem(bundle.records, baseline, pool, bundle.maps, groups, banding)
    comparison = compare_policies(problem, policies)
    if out_path:
        dump_json(comparison.to_json_dict(), out_path)
    if as_json:
        click.echo(json.dumps(comparison.to_json_dict(), indent=2))
    else:
        click.echo(comparison.to_text())
        if out_path:
            click.echo(f"comparison written to {out_path}")


@main.command()
@click.option("--bundle", "bundle_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--port", type=int, default=8640, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@engine_boundary
def serve(bundle_dir, port, host):
    """Serve the session API for the browser workbench."""
    import uvicorn

    from .service import create_app

    app = create_app(default_bundle=bundle_dir)
    click.echo(f"serving bundle {bundle_dir} on http://{host}:{port}")
    uvicorn.run(app, host=host, port=port, log_level="warning")


@main.command()
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--n", "n_override", type=int, help="population size override")
@click.option("--seed", "seed_override", type=int, help="seed override")
@click.option("--check", is_flag=True, help="also run the calibration report")
@click.option("--json", "as_json", is_flag=True)
@engine_boundary
def scenario(out_dir, n_override, seed_override, check, as_json):
    """Materialize the built-in demonstration scenario as CLI inputs.

    Writes a ready bundle plus baseline.json, pool.json, groups.json, the
    two policy documents, and the population spec.
    """
    sc = figure1_default()
    spec = sc.spec
    if n_override is not None:
        spec = dataclasses.replace(spec, n=n_override)
    if seed_override is not None:
        spec = dataclasses.replace(spec, seed=seed_override)
    records = generate(spec, sc.maps)
    kept, exclusions = apply_exclusions(records)
    os.makedirs(out_dir, exist_ok=True)
    manifest = write_bundle(os.path.join(out_dir, "bundle"), kept, sc.maps, exclusions)
    dump_json(formula_to_doc(sc.baseline, sc.banding), os.path.join(out_dir, "baseline.json"))
    dump_json(pool_to_doc(sc.pool), os.path.join(out_dir, "pool.json"))
    dump_json(groups_to_doc(sc.groups), os.path.join(out_dir, "groups.json"))
    dump_json(
        {
            "name": "max_r2",
            "kind": "max_r2",
            "min_gain": MIN_GAIN,
            "parsimony_tiebreak": True,
            "evaluation": {"mode": "in_sample"},
        },
        os.path.join(out_dir, "policy_max_r2.json"),
    )
    dump_json(
        {
            "name": "net_comp_toward_zero",
            "kind": "net_comp_toward_zero",
            "group_id": sc.target_group_id,
            "require_nonpositive_start": True,
            "evaluation": {"mode": "in_sample"},
        },
        os.path.join(out_dir, "policy_net_comp.json"),
    )
    with open(os.path.join(out_dir, "spec.json"), "w", encoding="utf-8") as fh:
        fh.write(spec.to_json())
        fh.write("\n")
    summary = {
        "scenario": sc.name,
        "rows": manifest["rows"],
        "seed": spec.seed,
        "out": out_dir,
    }
    if check:
        calibration = calibration_report(
            kept, sc.maps, sc.groups, sc.baseline, sc.banding, sc.target_group_id
        )
        summary["calibration"] = calibration.to_json_dict()
    if as_json:
        click.echo(json.dumps(summary, indent=2))
        return
    click.echo(f"scenario {sc.name}: {manifest['rows']} rows -> {out_dir}")
    if check:
        click.echo(calibration.to_text())


if __name__ == "__main__":
    main()
