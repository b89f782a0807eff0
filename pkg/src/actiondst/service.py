"""HTTP/WebSocket service exposing dialogue sessions for the chat UI.

Sessions live in memory while open; every turn is appended to a per-session
JSONL file and flushed, so a crash loses at most the in-flight turn.  Error
flags arrive either as the literal ``<error>`` user message or through the
flag endpoint; a closing questionnaire (five 6-point agreement items plus a
tasks-completed count) finishes the session.
"""

from __future__ import annotations

import asyncio
import json
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException, WebSocket, WebSocketDisconnect
from fastapi.responses import HTMLResponse, StreamingResponse
from pydantic import BaseModel

from .manager import ERROR_MARKER, Session
from .ontology import Ontology, VenueDb
from .simulator import sample_scenario
from .text import slot_phrase

LIKERT_ITEMS = [
    "The system understood me well",
    "The systems' responses were appropriate",
    "I was able to retrieve the information about the venues",
    "The system understood my references to the venues",
    "I would recommend this system to my friend",
]
TASKS_ITEM = "How many of the 5 tasks were you able to complete?"
N_TASKS = 5


class CreateSessionRequest(BaseModel):
    model_id: str = "default"


class UtteranceRequest(BaseModel):
    text: str


class ErrorFlagRequest(BaseModel):
    turn_idx: int


class QuestionnaireRequest(BaseModel):
    answers: list[int]


@dataclass
class ActiveSession:
    session: Session
    model_id: str
    tasks: list[dict]
    created_at: float
    lock: asyncio.Lock = field(default_factory=asyncio.Lock)
    subscribers: list[asyncio.Queue] = field(default_factory=list)
    questionnaire: list[int] | None = None
    speakers: list[str] = field(default_factory=list)  # persisted transcript speakers, by position


def render_task(scenario, idx: int) -> dict:
    """Human-readable task card derived from a sampled scenario."""
    first = ", ".join(f"{slot_phrase(s)}: {v}" for s, v in scenario.initial_constraints.items())
    changes = "; then ".join(
        f"change the {slot_phrase(s)} to {v}" for s, v in scenario.goal_changes
    )
    asks = "; ".join(
        f"ask for the {slot_phrase(f.req_slot)} of venue {f.stage + 1}"
        for f in scenario.followups
    )
    text = (
        f"Task {idx + 1}: Find a restaurant ({first}). "
        f"Then {changes}, collecting a recommendation each time. "
        f"Finally {asks}."
    )
    return {
        "task_id": idx + 1,
        "constraints": dict(scenario.initial_constraints),
        "goal_changes": list(scenario.goal_changes),
        "followups": [
            {"slot": f.req_slot, "venue_stage": f.stage} for f in scenario.followups
        ],
        "text": text,
    }


class SessionStore:
    """File-backed persistence: one append-only JSONL file per session."""

    def __init__(self, data_dir: str | Path):
        self.dir = Path(data_dir) / "sessions"
        self.dir.mkdir(parents=True, exist_ok=True)

    def path(self, session_id: str) -> Path:
        return self.dir / f"{session_id}.jsonl"

    def append(self, session_id: str, event: dict) -> None:
        event = {"ts": time.time(), **event}
        with self.path(session_id).open("a", encoding="utf-8") as f:
            f.write(json.dumps(event) + "\n")
            f.flush()

    def session_ids(self) -> list[str]:
        return sorted(p.stem for p in self.dir.glob("*.jsonl"))

    def record(self, session_id: str) -> dict | None:
        path = self.path(session_id)
        if not path.exists():
            return None
        record: dict = {
            "session_id": session_id,
            "model_id": None,
            "tasks": [],
            "created_at": None,
            "closed_at": None,
            "transcript": [],
            "questionnaire": None,
        }
        with path.open("r", encoding="utf-8") as f:
            for line in f:
                line = line.strip()
                if not line:
                    continue
                event = json.loads(line)
                kind = event.get("type")
                if kind == "meta":
                    record["model_id"] = event.get("model_id")
                    record["tasks"] = event.get("tasks", [])
                    record["created_at"] = event.get("ts")
                elif kind == "turn":
                    record["transcript"].append(
                        {
                            "pos": len(record["transcript"]),
                            "speaker": event["speaker"],
                            "text": event["text"],
                            "turn_idx": event["turn_idx"],
                            "error_flag": bool(event.get("error_flag", False)),
                            "debug": event.get("debug"),
                            "ts": event.get("ts"),
                        }
                    )
                elif kind == "error_flag":
                    pos = event.get("pos")
                    transcript = record["transcript"]
                    if pos is not None and 0 <= pos < len(transcript):
                        if transcript[pos]["speaker"] == "system":
                            transcript[pos]["error_flag"] = True
                elif kind == "questionnaire":
                    record["questionnaire"] = event.get("answers")
                    record["closed_at"] = event.get("ts")
        return record

    def summary(self) -> dict:
        ids = self.session_ids()
        total_turns = 0
        flagged = 0
        user_turns: list[int] = []
        for sid in ids:
            record = self.record(sid)
            if record is None:
                continue
            entries = record["transcript"]
            total_turns += len(entries)
            flagged += sum(1 for e in entries if e["error_flag"])
            user_turns.append(sum(1 for e in entries if e["speaker"] == "user"))
        return {
            "n_sessions": len(ids),
            "total_turns": total_turns,
            "flagged_turns": flagged,
            "error_rate": flagged / total_turns if total_turns else 0.0,
            "avg_user_turns_per_session": (
                sum(user_turns) / len(user_turns) if user_turns else 0.0
            ),
        }


def create_app(
    scorers: dict,
    ontology: Ontology,
    db: VenueDb,
    data_dir: str | Path,
    debug_scores: bool = False,
    ui_dir: str | Path | None = None,
) -> FastAPI:
    app = FastAPI(title="actiondst service")
    store = SessionStore(data_dir)
    active: dict[str, ActiveSession] = {}

    def get_active(session_id: str) -> ActiveSession:
        entry = active.get(session_id)
        if entry is None:
            raise HTTPException(status_code=404, detail="unknown session")
        return entry

    def broadcast(entry: ActiveSession, event: dict) -> None:
        for queue in list(entry.subscribers):
            queue.put_nowait(event)

    @app.post("/sessions")
    async def create_session(req: CreateSessionRequest):
        scorer = scorers.get(req.model_id)
        if scorer is None:
            raise HTTPException(status_code=400, detail=f"unknown model id {req.model_id!r}")
        session = Session(scorer, ontology, db)
        rng = np.random.Generator(np.random.PCG64(int(uuid.uuid4().int & 0x7FFFFFFF)))
        tasks = [render_task(sample_scenario(ontology, db, rng), i) for i in range(N_TASKS)]
        entry = ActiveSession(
            session=session, model_id=req.model_id, tasks=tasks, created_at=time.time()
        )
        active[session.session_id] = entry
        store.append(
            session.session_id,
            {"type": "meta", "session_id": session.session_id, "model_id": req.model_id, "tasks": tasks},
        )
        store.append(
            session.session_id,
            {"type": "turn", "speaker": "system", "text": session.greeting, "turn_idx": 0},
        )
        entry.speakers.append("system")
        return {
            "session_id": session.session_id,
            "greeting": session.greeting,
            "tasks": tasks,
        }

    @app.post("/sessions/{session_id}/utterances")
    async def post_utterance(session_id: str, req: UtteranceRequest):
        entry = get_active(session_id)
        if entry.session.closed:
            raise HTTPException(status_code=409, detail="session is closed")
        if entry.lock.locked():
            raise HTTPException(status_code=409, detail="session is busy with another utterance")
        async with entry.lock:
            flagged_error = req.text.strip() == ERROR_MARKER
            result = entry.session.step(req.text)
            debug = None
            if debug_scores and result.update is not None:
                debug = {
                    "executed": [a.to_json() for a in result.update.executed],
                    "top_scores": [
                        {"action": sa.action.to_json(), "score": sa.score}
                        for sa in sorted(result.update.scored, key=lambda s: -s.score)[:5]
                    ],
                }
            turn_idx = entry.session.state.turn_index
            flagged_pos = None
            if flagged_error:
                for pos in range(len(entry.speakers) - 1, -1, -1):
                    if entry.speakers[pos] == "system":
                        flagged_pos = pos
                        break
                if flagged_pos is not None:
                    store.append(session_id, {"type": "error_flag", "pos": flagged_pos})
            user_pos = len(entry.speakers)
            store.append(
                session_id,
                {"type": "turn", "speaker": "user", "text": req.text, "turn_idx": turn_idx,
                 "debug": debug},
            )
            entry.speakers.append("user")
            reply_pos = len(entry.speakers)
            store.append(
                session_id,
                {"type": "turn", "speaker": "system", "text": result.text, "turn_idx": turn_idx},
            )
            entry.speakers.append("system")
            payload = {
                "reply": result.text,
                "turn_idx": turn_idx,
                "reply_pos": reply_pos,
                "flagged_previous": flagged_error,
                "debug": debug,
            }
            broadcast(entry, {"type": "turn", "pos": user_pos, "speaker": "user",
                              "text": req.text, "turn_idx": turn_idx})
            broadcast(entry, {"type": "turn", "pos": reply_pos, "speaker": "system",
                              "text": result.text, "turn_idx": turn_idx})
            if flagged_pos is not None:
                broadcast(entry, {"type": "error_flag", "pos": flagged_pos})
            return payload

    @app.post("/sessions/{session_id}/error-flags")
    async def flag_error(session_id: str, req: ErrorFlagRequest):
        entry = get_active(session_id)
        pos = req.turn_idx  # transcript position of the system turn to flag
        if not (0 <= pos < len(entry.speakers)) or entry.speakers[pos] != "system":
            raise HTTPException(status_code=404, detail="no system turn at that position")
        store.append(session_id, {"type": "error_flag", "pos": pos})
        broadcast(entry, {"type": "error_flag", "pos": pos})
        return {"ok": True, "pos": pos}

    @app.post("/sessions/{session_id}/questionnaire")
    async def post_questionnaire(session_id: str, req: QuestionnaireRequest):
        entry = get_active(session_id)
        if entry.questionnaire is not None:
            raise HTTPException(status_code=409, detail="questionnaire already submitted")
        answers = req.answers
        if len(answers) != 6:
            raise HTTPException(status_code=400, detail="expected 6 answers")
        for value in answers[:5]:
            if not 1 <= value <= 6:
                raise HTTPException(status_code=400, detail="agreement answers must be in 1..6")
        if not 0 <= answers[5] <= N_TASKS:
            raise HTTPException(status_code=400, detail=f"task count must be in 0..{N_TASKS}")
        entry.questionnaire = list(answers)
        entry.session.close()
        store.append(session_id, {"type": "questionnaire", "answers": list(answers)})
        broadcast(entry, {"type": "questionnaire", "answers": list(answers)})
        return {"ok": True, "answers": list(answers)}

    @app.get("/sessions/{session_id}")
    async def get_session(session_id: str):
        record = store.record(session_id)
        if record is None:
            raise HTTPException(status_code=404, detail="unknown session")
        record["questionnaire_items"] = LIKERT_ITEMS + [TASKS_ITEM]
        return record

    @app.get("/export")
    async def export_sessions():
        def stream():
            for sid in store.session_ids():
                record = store.record(sid)
                if record is not None:
                    yield json.dumps(record) + "\n"

        return StreamingResponse(stream(), media_type="application/x-ndjson")

    @app.get("/export/summary")
    async def export_summary():
        return store.summary()

    @app.websocket("/sessions/{session_id}/stream")
    async def stream_session(websocket: WebSocket, session_id: str):
        entry = active.get(session_id)
        if entry is None:
            await websocket.close(code=4404)
            return
        await websocket.accept()
        record = store.record(session_id) or {"transcript": []}
        await websocket.send_json({"type": "transcript", "entries": record["transcript"]})
        queue: asyncio.Queue = asyncio.Queue()
        entry.subscribers.append(queue)
        try:
            while True:
                event = await queue.get()
                await websocket.send_json(event)
        except WebSocketDisconnect:
            pass
        finally:
            if queue in entry.subscribers:
                entry.subscribers.remove(queue)

    if ui_dir is not None and Path(ui_dir).exists():
        from fastapi.staticfiles import StaticFiles

        index = Path(ui_dir) / "index.html"
        if index.exists():

            @app.get("/", response_class=HTMLResponse)
            async def root():
                return index.read_text(encoding="utf-8")

        app.mount("/ui", StaticFiles(directory=str(ui_dir)), name="ui")

    return app
