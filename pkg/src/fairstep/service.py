"""Local HTTP session API for the browser workbench.

POST /sessions opens an analysis session over a cohort bundle; reads serve
the current formula, candidate previews, and the decision trace; commits
and undo mutate the session under a per-session lock guarded by an
optimistic-concurrency revision number. Sessions live in process memory;
this is a desk-scale single-user service, not a deployment target.

Every response carries the API version header `fairstep-api: 1`. Numbers
are serialized at full precision straight from the engine; nothing numeric
is computed here.
"""

from __future__ import annotations

import os
import threading
import uuid
from dataclasses import dataclass, field

from fastapi import FastAPI, HTTPException, Request
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel

from . import __version__
from .bundles import (
    Bundle,
    BundleError,
    formula_from_doc,
    formula_to_doc,
    groups_from_doc,
    load_bundle,
    load_json,
    policy_from_doc,
    pool_from_doc,
)
from .cohort import CohortError
from .design import AgeBanding, DesignError, Formula, VariableId, VariableKind, hcc_variable
from .metrics import MetricsError
from .ols import OlsError
from .stepwise import (
    CandidateBlock,
    DecisionTrace,
    SelectionPolicy,
    StepAction,
    StepKind,
    StepwiseError,
    StepwiseProblem,
    TraceEntry,
    apply_action,
    build_problem,
    make_evaluator,
    propose_steps,
)

API_VERSION = "1"

ENGINE_ERRORS = (
    BundleError,
    CohortError,
    DesignError,
    OlsError,
    MetricsError,
    StepwiseError,
)

DEFAULT_DOC_NAMES = {
    "baseline": "baseline.json",
    "pool": "pool.json",
    "groups": "groups.json",
}


class SessionRequest(BaseModel):
    bundle: str | None = None
    baseline: dict | str | None = None
    groups: dict | str | None = None
    policy: dict | str | None = None
    pool: dict | str | None = None


class StepRequest(BaseModel):
    action: dict
    revision: int


class UndoRequest(BaseModel):
    revision: int


@dataclass
class Session:
    session_id: str
    problem: StepwiseProblem
    banding: AgeBanding
    policy: SelectionPolicy
    evaluator: object
    formula: Formula
    revision: int = 0
    entries: list[TraceEntry] = field(default_factory=list)
    undo_stack: list = field(default_factory=list)
    evaluations: int = 0
    accepted: int = 0
    lock: threading.Lock = field(default_factory=threading.Lock)


def default_pool(maps) -> tuple[CandidateBlock, ...]:
    """One single-variable block per payment HCC when no pool is given."""
    return tuple(CandidateBlock(h, (hcc_variable(h),)) for h in maps.payment_hccs)


def _discover_defaults(bundle_dir: str) -> dict:
    """Sibling documents next to the bundle (the scenario export layout)."""
    parent = os.path.dirname(os.path.abspath(bundle_dir))
    found: dict = {}
    for key, name in DEFAULT_DOC_NAMES.items():
        path = os.path.join(parent, name)
        if os.path.isfile(path):
            found[key] = load_json(path)
    policies = {}
    for name in sorted(os.listdir(parent)):
        if name.startswith("policy_") and name.endswith(".json"):
            policies[name[len("policy_") : -len(".json")]] = load_json(
                os.path.join(parent, name)
            )
    if policies:
        found["policies"] = policies
    return found


def create_app(default_bundle: str | None = None) -> FastAPI:
    app = FastAPI(title="fairstep", version=__version__)
    bundles: dict[str, Bundle] = {}
    sessions: dict[str, Session] = {}
    registry_lock = threading.Lock()
    defaults = _discover_defaults(default_bundle) if default_bundle else {}

    # Local desk tool without auth: let a browser UI served from any origin
    # (including file://) talk to it. Registered before version_header so
    # the version middleware wraps preflight responses too.
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    @app.middleware("http")
    async def version_header(request: Request, call_next):
        response = await call_next(request)
        response.headers["fairstep-api"] = API_VERSION
        return response

    def fail(status: int, detail: str):
        raise HTTPException(status_code=status, detail=detail)

    def get_bundle(path: str | None) -> Bundle:
        if path is None:
            path = default_bundle
        if path is None:
            fail(422, "no bundle given and the service has no default bundle")
        resolved = os.path.abspath(path)
        with registry_lock:
            if resolved not in bundles:
                bundles[resolved] = load_bundle(resolved)
            return bundles[resolved]

    def get_session(session_id: str) -> Session:
        try:
            return sessions[session_id]
        except KeyError:
            fail(404, f"unknown session {session_id!r}")

    def resolve_doc(value, fallback_key: str | None = None):
        if value is None and fallback_key is not None:
            value = defaults.get(fallback_key)
        if isinstance(value, str):
            return load_json(value)
        return value

    def resolve_policy_doc(value):
        if value is not None:
            return load_json(value) if isinstance(value, str) else value
        policies = defaults.get("policies", {})
        if len(policies) == 1:
            return next(iter(policies.values()))
        fail(422, "no policy given; pass one or pick from GET /defaults")

    def formula_doc(session: Session) -> dict:
        return formula_to_doc(session.formula, session.banding)

    def resolve_action(session: Session, doc: dict) -> StepAction:
        try:
            kind = StepKind(doc.get("kind"))
        except ValueError:
            fail(422, f"unknown step kind {doc.get('kind')!r}")
        block_id = doc.get("block_id")
        variables: tuple[VariableId, ...] = ()
        if block_id is not None:
            block = next((b for b in session.problem.pool if b.block_id == block_id), None)
            if block is not None:
                variables = block.variables
        if not variables and doc.get("variables"):
            try:
                variables = tuple(VariableId.from_label(t) for t in doc["variables"])
            except DesignError as exc:
                fail(422, str(exc))
        if not variables:
            fail(422, "action needs a known block_id or a variables list")
        present = set(session.formula)
        columns = set(session.problem.design.columns)
        for v in variables:
            if v.kind is VariableKind.INTERCEPT:
                fail(422, "the intercept cannot be stepped")
            if v not in columns:
                fail(422, f"variable {v.label()} is not in the candidate design")
            if kind is StepKind.ADD and v in present:
                fail(422, f"variable {v.label()} is already in the formula")
            if kind is StepKind.REMOVE and v not in present:
                fail(422, f"variable {v.label()} is not in the formula")
        return StepAction(kind, variables, block_id)

    @app.get("/")
    def meta():
        return {
            "name": "fairstep",
            "version": __version__,
            "api": int(API_VERSION),
            "default_bundle": default_bundle,
            "sessions": sorted(sessions),
        }

    @app.get("/defaults")
    def get_defaults():
        return {"bundle": default_bundle, **defaults}

    @app.post("/sessions")
    def create_session(body: SessionRequest):
        try:
            bundle = get_bundle(body.bundle)
            baseline_doc = resolve_doc(body.baseline, "baseline")
            groups_doc = resolve_doc(body.groups, "groups")
            pool_doc = resolve_doc(body.pool, "pool")
            policy_doc = resolve_policy_doc(body.policy)
            if baseline_doc is None:
                fail(422, "no baseline given and none discovered next to the bundle")
            if groups_doc is None:
                fail(422, "no groups given and none discovered next to the bundle")
            baseline, banding = formula_from_doc(baseline_doc)
            groups = groups_from_doc(groups_doc)
            policy = policy_from_doc(policy_doc)
            pool = pool_from_doc(pool_doc) if pool_doc else default_pool(bundle.maps)
            problem = build_problem(
                bundle.records, baseline, pool, bundle.maps, groups, banding
            )
            evaluator = make_evaluator(problem, policy.evaluation)
        except ENGINE_ERRORS as exc:
            fail(422, str(exc))
        session = Session(
            session_id=uuid.uuid4().hex[:12],
            problem=problem,
            banding=banding,
            policy=policy,
            evaluator=evaluator,
            formula=baseline,
        )
        with registry_lock:
            sessions[session.session_id] = session
        return {
            "session_id": session.session_id,
            "revision": session.revision,
            "policy": policy.label(),
            "mode": policy.evaluation.mode,
            "formula": formula_doc(session),
            "report": session.evaluator.report.to_json_dict(),
        }

    @app.get("/sessions/{session_id}/formula")
    def get_formula(session_id: str):
        session = get_session(session_id)
        return {
            "revision": session.revision,
            "formula": formula_doc(session),
            "report": session.evaluator.report.to_json_dict(),
        }

    @app.get("/sessions/{session_id}/candidates")
    def get_candidates(session_id: str):
        session = get_session(session_id)
        with session.lock:
            actions = propose_steps(session.formula, session.problem.pool)
            before = session.evaluator.report
            cards = []
            for action in actions:
                try:
                    report, deltas, _ = session.evaluator.evaluate(action)
                except ENGINE_ERRORS as exc:
                    fail(422, str(exc))
                session.evaluations += 1
                accept, reason = session.policy.decide(action, deltas, before, report)
                cards.append(
                    {
                        "action": action.to_json_dict(),
                        "label": action.label(),
                        "deltas": deltas.to_json_dict(),
                        "report_after": report.to_json_dict(),
                        "policy_hint": {"accept": accept, "reason": reason},
                    }
                )
            return {
                "revision": session.revision,
                "policy": session.policy.label(),
                "candidates": cards,
            }

    @app.post("/sessions/{session_id}/steps")
    def commit_step(session_id: str, body: StepRequest):
        session = get_session(session_id)
        with session.lock:
            if body.revision != session.revision:
                fail(
                    409,
                    f"stale revision {body.revision}; session is at {session.revision}",
                )
            action = resolve_action(session, body.action)
            before = session.evaluator.report
            try:
                report, deltas, handle = session.evaluator.evaluate(action)
            except ENGINE_ERRORS as exc:
                fail(422, str(exc))
            snapshot = session.evaluator.snapshot()
            entry = TraceEntry(
                index=len(session.entries),
                action=action,
                report_before=before,
                report_after=report,
                accepted=True,
                reason="committed by client",
                evaluations_before=session.evaluations,
                accepted_before=session.accepted,
            )
            session.evaluator.commit(handle, report)
            session.undo_stack.append((snapshot, session.formula))
            session.formula = apply_action(session.formula, action)
            session.entries.append(entry)
            session.evaluations += 1
            session.accepted += 1
            session.revision += 1
            return {
                "revision": session.revision,
                "committed": entry.to_json_dict(),
                "deltas": deltas.to_json_dict(),
                "formula": formula_doc(session),
                "report": report.to_json_dict(),
            }

    @app.post("/sessions/{session_id}/undo")
    def undo_step(session_id: str, body: UndoRequest):
        session = get_session(session_id)
        with session.lock:
            if body.revision != session.revision:
                fail(
                    409,
                    f"stale revision {body.revision}; session is at {session.revision}",
                )
            if not session.undo_stack:
                fail(422, "nothing to undo")
            snapshot, formula = session.undo_stack.pop()
            entry = session.entries.pop()
            session.evaluator.restore(snapshot)
            session.formula = formula
            session.accepted -= 1
            session.revision += 1
            return {
                "revision": session.revision,
                "undone": entry.action.to_json_dict(),
                "formula": formula_doc(session),
                "report": session.evaluator.report.to_json_dict(),
            }

    @app.get("/sessions/{session_id}/trace")
    def get_trace(session_id: str):
        session = get_session(session_id)
        trace = DecisionTrace(session.problem.baseline, tuple(session.entries))
        return {"revision": session.revision, "trace": trace.to_json_dict()}

    return app
