"""Record live HTTP fixtures for the workbench UI tests.

Builds the 20k seed-7 demo scenario, starts a real `fairstep serve`
process, walks the session flow the UI exercises (create, preview,
commit the three demo steps, trace, undo, error cases), and stores every
raw response body verbatim in tests/fixtures/session_flow.json. The UI
test suite replays these bytes through a fake fetch, so "equal to the
API payload" assertions compare against what the server actually sent.

Also runs `fairstep stepwise` with the fairness policy and keeps its
trace as tests/fixtures/cli_trace.json for the UI/CLI parity test.

Rerun after any engine change that moves the numbers:

    python3 scripts/record_fixtures.py
"""

import json
import os
import subprocess
import sys
import tempfile
import time
import urllib.error
import urllib.request

PORT = 8652
BASE = f"http://127.0.0.1:{PORT}"
HERE = os.path.dirname(os.path.abspath(__file__))
FIXTURE_DIR = os.path.join(HERE, "..", "tests", "fixtures")


def call(method: str, path: str, body=None):
    data = None if body is None else json.dumps(body).encode()
    req = urllib.request.Request(
        BASE + path,
        data=data,
        method=method,
        headers={"content-type": "application/json"},
    )
    try:
        with urllib.request.urlopen(req) as resp:
            return resp.status, resp.read().decode()
    except urllib.error.HTTPError as err:
        return err.code, err.read().decode()


def wait_for_server(deadline: float = 30.0):
    start = time.time()
    while time.time() - start < deadline:
        try:
            status, _ = call("GET", "/")
            if status == 200:
                return
        except urllib.error.URLError:
            time.sleep(0.3)
    raise RuntimeError("server did not come up")


def main():
    workdir = tempfile.mkdtemp(prefix="uifixtures")
    subprocess.run(
        ["fairstep", "scenario", "--out", "demo", "--n", "20000", "--seed", "7"],
        cwd=workdir,
        check=True,
    )
    subprocess.run(
        [
            "fairstep", "stepwise",
            "--bundle", "demo/bundle",
            "--baseline", "demo/baseline.json",
            "--pool", "demo/pool.json",
            "--groups", "demo/groups.json",
            "--policy", "demo/policy_net_comp.json",
            "--out-trace", "cli_trace.json",
        ],
        cwd=workdir,
        check=True,
        stdout=subprocess.DEVNULL,
    )

    policy_nc = os.path.join(workdir, "demo", "policy_net_comp.json")
    policy_r2 = os.path.join(workdir, "demo", "policy_max_r2.json")

    server = subprocess.Popen(
        ["fairstep", "serve", "--bundle", "demo/bundle", "--port", str(PORT)],
        cwd=workdir,
        stdout=subprocess.DEVNULL,
        stderr=subprocess.DEVNULL,
    )
    fixtures = {}
    try:
        wait_for_server()

        def rec(name, method, path, body=None):
            status, text = call(method, path, body)
            fixtures[name] = {
                "method": method,
                "path": path,
                "status": status,
                "body": text,
            }
            print(f"{name}: {method} {path} -> {status} ({len(text)} bytes)")
            return json.loads(text) if text else None

        rec("meta", "GET", "/")
        rec("defaults", "GET", "/defaults")

        created = rec("create", "POST", "/sessions", {"policy": policy_nc})
        sid = created["session_id"]
        s = f"/sessions/{sid}"

        rec("formula_r0", "GET", f"{s}/formula")
        rec("candidates_r0", "GET", f"{s}/candidates")
        rec("trace_r0", "GET", f"{s}/trace")
        rec("commit_mh", "POST", f"{s}/steps",
            {"action": {"kind": "add", "block_id": "mh_pair"}, "revision": 0})
        rec("candidates_r1", "GET", f"{s}/candidates")
        rec("trace_r1", "GET", f"{s}/trace")
        rec("commit_sud", "POST", f"{s}/steps",
            {"action": {"kind": "add", "block_id": "sud_pair"}, "revision": 1})
        rec("formula_r2", "GET", f"{s}/formula")
        rec("candidates_r2", "GET", f"{s}/candidates")
        rec("trace_r2", "GET", f"{s}/trace")
        rec("commit_kidney", "POST", f"{s}/steps",
            {"action": {"kind": "remove", "block_id": "kidney_block"}, "revision": 2})
        rec("candidates_r3", "GET", f"{s}/candidates")
        rec("trace_r3", "GET", f"{s}/trace")
        rec("undo_r3", "POST", f"{s}/undo", {"revision": 3})
        rec("formula_r4", "GET", f"{s}/formula")
        rec("candidates_r4", "GET", f"{s}/candidates")
        rec("trace_r4", "GET", f"{s}/trace")

        # error shapes the UI has to handle
        rec("stale_409", "POST", f"{s}/steps",
            {"action": {"kind": "add", "block_id": "mh_pair"}, "revision": 0})
        rec("invalid_422", "POST", f"{s}/steps",
            {"action": {"kind": "add", "block_id": "mh_pair"}, "revision": 4})
        rec("unknown_404", "GET", "/sessions/nope/formula")

        # same bundle under the fit-first policy, for hint contrast and sorting
        created_r2 = rec("create_maxr2", "POST", "/sessions", {"policy": policy_r2})
        rec("candidates_maxr2_r0", "GET",
            f"/sessions/{created_r2['session_id']}/candidates")

        # empty candidate pool -> empty-state panel
        created_empty = rec("create_empty", "POST", "/sessions",
                            {"policy": policy_nc, "pool": {"blocks": []}})
        rec("candidates_empty", "GET",
            f"/sessions/{created_empty['session_id']}/candidates")
    finally:
        server.terminate()
        server.wait(timeout=10)

    os.makedirs(FIXTURE_DIR, exist_ok=True)
    out = os.path.join(FIXTURE_DIR, "session_flow.json")
    with open(out, "w") as fh:
        json.dump(fixtures, fh, indent=1)
    print(f"wrote {out}")

    with open(os.path.join(workdir, "cli_trace.json")) as fh:
        cli_trace = fh.read()
    with open(os.path.join(FIXTURE_DIR, "cli_trace.json"), "w") as fh:
        fh.write(cli_trace)
    print("wrote cli_trace.json")


if __name__ == "__main__":
    sys.exit(main())
