"""Networked session host: WebSocket endpoint (default) or raw TCP line protocol.

One session is one single-writer state machine; frames from both clients are
serialized through a per-session lock. The transport layer only parses frames,
routes outbound messages, and appends to the event log.
"""

from __future__ import annotations

import asyncio
import json
from dataclasses import dataclass, field
from pathlib import Path

from fastapi import FastAPI, WebSocket, WebSocketDisconnect
from fastapi.responses import Response
from fastapi.staticfiles import StaticFiles

from ..engine import GameConfig
from ..stimulus import ColorPoint, patch_png_bytes
from .eventlog import EventLogWriter, persist_exchange
from .protocol import WireMessage, create_session, handle_message, header_record

__all__ = ["SessionHost", "build_app", "serve_tcp"]


@dataclass
class _Runtime:
    state: object
    writer: EventLogWriter | None
    connections: dict = field(default_factory=dict)  # participant_id -> send coroutine
    _lock: asyncio.Lock | None = None

    @property
    def lock(self) -> asyncio.Lock:
        # created lazily so it binds to the serving event loop, not the one
        # (if any) running when the session was registered
        if self._lock is None:
            self._lock = asyncio.Lock()
        return self._lock


class SessionHost:
    """Registry of live sessions; one event log per session."""

    def __init__(self, log_dir=None):
        self.log_dir = Path(log_dir) if log_dir else None
        self._sessions: dict[str, _Runtime] = {}

    def create(self, session_id: str, config: GameConfig, manifests: dict) -> str:
        if session_id in self._sessions:
            raise ValueError(f"session {session_id!r} already exists")
        state = create_session(session_id, config, manifests)
        writer = None
        if self.log_dir:
            self.log_dir.mkdir(parents=True, exist_ok=True)
            writer = EventLogWriter(self.log_dir / f"{session_id}.jsonl", session_id)
            header = header_record(state)
            writer.append(header["type"], header["body"])
        self._sessions[session_id] = _Runtime(state=state, writer=writer)
        return session_id

    def get(self, session_id: str) -> _Runtime | None:
        return self._sessions.get(session_id)

    def close(self) -> None:
        for runtime in self._sessions.values():
            if runtime.writer:
                runtime.writer.close()

    async def process(self, session_id: str, raw: str, send, register) -> None:
        """Handle one inbound frame: parse, apply, persist, route outbound.

        `send` delivers a reply to the submitting connection; `register` binds
        the connection to a participant id after a successful join.
        """
        runtime = self._sessions.get(session_id)
        if runtime is None:
            await send(_error_frame(session_id, "unknown session"))
            return
        try:
            doc = json.loads(raw)
            msg = WireMessage.from_dict(doc)
        except (ValueError, KeyError, TypeError):
            await send(_error_frame(session_id, "malformed frame"))
            return
        async with runtime.lock:
            if (
                msg.type == "join"
                and msg.sender in runtime.state.participants
                and msg.sender not in runtime.connections
            ):
                # transport-level reconnect: re-bind the connection and send a
                # state snapshot; no session transition, nothing logged
                register(msg.sender)
                await send(json.dumps(_resume_frame(runtime.state, msg.sender).to_dict()))
                return
            new_state, outbound, events = handle_message(runtime.state, msg)
            rejected = new_state is runtime.state
            if not rejected:
                runtime.state = new_state
                persist_exchange(runtime.writer, msg, outbound, events)
                if msg.type == "join":
                    register(msg.sender)
            for reply in outbound:
                raw_reply = json.dumps(reply.to_dict())
                conn = runtime.connections.get(reply.to)
                if reply.to == msg.sender or conn is None:
                    await send(raw_reply)
                else:
                    await conn(raw_reply)


def _error_frame(session_id: str, reason: str) -> str:
    return json.dumps(
        WireMessage(
            type="protocol_error",
            body={"reason": reason},
            sender="server",
            session_id=session_id,
            sequence=-1,
        ).to_dict()
    )


def _resume_frame(state, pid: str) -> WireMessage:
    """Snapshot for a reconnecting participant: their own view only."""
    in_play = state.phase not in ("lobby",)
    ds = state.current_dataset if in_play else None
    current = None
    if state.current is not None:
        role = "speaker" if state.current["speaker"] == pid else "listener"
        current = {
            "stimulus_index": state.current["stimulus_index"],
            "round": state.current["round"],
            "role": role,
            "proposal": state.current["proposal"],
            "decided": state.phase == "await_edit",
        }
    body = {
        "phase": state.phase,
        "participants": list(state.participants),
        "server_seq": state.server_seq,
        "dataset_id": ds,
        "manifest": state.manifests.get(ds) if ds else None,
        "categorization": state.categorizations.get(pid, {}).get(ds),
        "initialized": pid in state.initialized,
        "current": current,
    }
    return WireMessage(
        type="resume", body=body, sender="server", to=pid,
        session_id=state.session_id, sequence=state.server_seq,
    )


def build_app(host: SessionHost, static_dir=None) -> FastAPI:
    """FastAPI app exposing the WebSocket endpoint, stimulus PNGs, and optional
    static assets for the participant client."""
    app = FastAPI(title="naming-game session service")
    app.state.host = host

    @app.websocket("/ws/{session_id}")
    async def ws_endpoint(websocket: WebSocket, session_id: str):
        await websocket.accept()
        runtime = host.get(session_id)
        bound_pid: list[str | None] = [None]

        async def send(text: str):
            await websocket.send_text(text)

        def register(pid: str):
            bound_pid[0] = pid
            if runtime is not None:
                runtime.connections[pid] = send

        try:
            while True:
                raw = await websocket.receive_text()
                await host.process(session_id, raw, send, register)
        except WebSocketDisconnect:
            if runtime is not None and bound_pid[0] in runtime.connections:
                del runtime.connections[bound_pid[0]]

    @app.get("/sessions/{session_id}/stimuli/{dataset_id}/{index}.png")
    async def stimulus_png(session_id: str, dataset_id: str, index: int, size: int = 128):
        runtime = host.get(session_id)
        if runtime is None:
            return Response(status_code=404)
        manifest = runtime.state.manifests.get(dataset_id)
        if manifest is None or not 0 <= index < len(manifest["stimuli"]):
            return Response(status_code=404)
        s = manifest["stimuli"][index]
        png = patch_png_bytes(ColorPoint(s["l"], s["u"], s["v"]), size)
        return Response(content=png, media_type="image/png")

    @app.get("/healthz")
    async def health():
        return {"sessions": len(host._sessions)}

    if static_dir:
        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="app")
    return app


async def serve_tcp(host: SessionHost, bind: str, port: int):
    """Raw TCP fallback: newline-delimited JSON frames, same schema as WebSocket."""

    async def on_connection(reader: asyncio.StreamReader, writer: asyncio.StreamWriter):
        bound: list[str | None] = [None]
        current_session: list[str | None] = [None]

        async def send(text: str):
            writer.write(text.encode() + b"\n")
            await writer.drain()

        def register(pid: str):
            bound[0] = pid
            runtime = host.get(current_session[0]) if current_session[0] else None
            if runtime is not None:
                runtime.connections[pid] = send

        try:
            while True:
                line = await reader.readline()
                if not line:
                    break
                raw = line.decode().strip()
                if not raw:
                    continue
                try:
                    session_id = json.loads(raw).get("session_id", "")
                except ValueError:
                    await send(_error_frame("", "malformed frame"))
                    continue
                current_session[0] = session_id
                await host.process(session_id, raw, send, register)
        finally:
            runtime = host.get(current_session[0]) if current_session[0] else None
            if runtime is not None and bound[0] in runtime.connections:
                del runtime.connections[bound[0]]
            writer.close()

    server = await asyncio.start_server(on_connection, bind, port)
    async with server:
        await server.serve_forever()
