"""Local HTTP endpoint for human trajectory ranking.

Serves one ranking session at a time: GET /api/session hands the client the
subsampled trajectories as 2-D drawing data (never any reward or return),
POST /api/ranking validates the submitted order (permutation of the session
ids, matching dataset hash) and writes ranking.json. A second submission
after success is rejected with 409. GET / serves the built UI assets.
"""
from __future__ import annotations

import json
import mimetypes
from http.server import BaseHTTPRequestHandler, HTTPServer
from pathlib import Path

import numpy as np

from .dataset import OfflineDataset, dataset_hash, split_trajectories
from .ranking import RankedSet, save_ranking, subsample_trajectories

MAX_POINTS = 100


def downsample(points):
    """At most MAX_POINTS rows, first and last always kept."""
    n = len(points)
    if n <= MAX_POINTS:
        return points
    idx = np.round(np.linspace(0, n - 1, MAX_POINTS)).astype(int)
    return points[idx]


def trajectory_card(env_name, traj):
    """Drawing payload for one trajectory; carries no reward information."""
    states = traj.states()
    if env_name == "pointmass2d":
        kind = "path"
        points = downsample(states[:, 0:2])
        goal = (states[0, 0:2] + states[0, 4:6]).tolist()
    else:
        kind = "timeseries"
        steps = np.arange(len(states))[:, None].astype(float)
        points = downsample(np.concatenate([steps, states[:, 0:1]], axis=1))
        goal = 1.0
    return {
        "id": traj.episode_id,
        "kind": kind,
        "points": [[round(float(x), 5) for x in row] for row in points],
        "goal": goal,
        "length": len(traj),
    }


class RankingSession:
    """State shared by the handler: what to rank and where the result goes."""

    def __init__(self, dataset: OfflineDataset, fraction, seed, out_path):
        self.dataset = dataset
        self.hash = dataset_hash(dataset)
        self.trajectories = subsample_trajectories(dataset, fraction, seed)
        self.ids = [t.episode_id for t in self.trajectories]
        self.out_path = Path(out_path)
        self.completed = False

    def payload(self):
        return {
            "env": self.dataset.env_name,
            "dataset_hash": self.hash,
            "trajectories": [trajectory_card(self.dataset.env_name, t)
                             for t in self.trajectories],
        }

    def validate(self, order):
        """Returns an error message naming the offender, or None."""
        seen = set()
        known = set(self.ids)
        for eid in order:
            if eid in seen:
                return f"duplicate episode id {eid}"
            if eid not in known:
                return f"unknown episode id {eid}"
            seen.add(eid)
        if len(seen) != len(known):
            missing = sorted(known - seen)
            return f"missing episode ids {missing}"
        return None

    def accept(self, blob):
        """(status, body) for a POST /api/ranking body."""
        if self.completed:
            return 409, {"error": "ranking already submitted for this session"}
        if blob.get("dataset_hash") != self.hash:
            return 422, {"error": "stale session: dataset hash mismatch"}
        order = blob.get("order")
        if not isinstance(order, list):
            return 422, {"error": "order must be a list of episode ids"}
        try:
            order = [int(e) for e in order]
        except (TypeError, ValueError):
            return 422, {"error": "order must contain integer episode ids"}
        problem = self.validate(order)
        if problem:
            return 422, {"error": problem}
        ranked = RankedSet(order, "human", self.dataset.env_name, self.hash)
        save_ranking(ranked, self.out_path)
        self.completed = True
        return 200, {"ok": True, "path": str(self.out_path)}


def make_handler(session: RankingSession, ui_dir=None):
    ui_root = Path(ui_dir).resolve() if ui_dir else None

    class Handler(BaseHTTPRequestHandler):
        def log_message(self, fmt, *args):
            pass

        def _send_json(self, status, obj):
            body = json.dumps(obj).encode()
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def do_GET(self):
            if self.path == "/api/session":
                self._send_json(200, session.payload())
                return
            self._serve_static()

        def do_POST(self):
            if self.path != "/api/ranking":
                self._send_json(404, {"error": "unknown endpoint"})
                return
            length = int(self.headers.get("Content-Length", 0))
            try:
                blob = json.loads(self.rfile.read(length) or b"{}")
            except json.JSONDecodeError:
                self._send_json(422, {"error": "body is not valid JSON"})
                return
            status, body = session.accept(blob)
            self._send_json(status, body)

        def _serve_static(self):
            if ui_root is None:
                self._send_json(404, {"error": "no UI assets configured; "
                                               "use the API endpoints"})
                return
            rel = self.path.lstrip("/") or "index.html"
            target = (ui_root / rel).resolve()
            if not str(target).startswith(str(ui_root)) or not target.is_file():
                self._send_json(404, {"error": f"no such asset {self.path}"})
                return
            ctype = mimetypes.guess_type(str(target))[0] or "application/octet-stream"
            data = target.read_bytes()
            self.send_response(200)
            self.send_header("Content-Type", ctype)
            self.send_header("Content-Length", str(len(data)))
            self.end_headers()
            self.wfile.write(data)

    return Handler


def serve(dataset: OfflineDataset, out_path, fraction=1.0, seed=0,
          port=8712, ui_dir=None, host="127.0.0.1"):
    """Blocking server; returns once a ranking has been accepted (or forever
    if the client never submits and the process is interrupted)."""
    session = RankingSession(dataset, fraction, seed, out_path)
    httpd = HTTPServer((host, port), make_handler(session, ui_dir))
    return run_until_complete(httpd, session)


def run_until_complete(httpd, session):
    try:
        while not session.completed:
            httpd.handle_request()
    finally:
        httpd.server_close()
    return session.out_path
