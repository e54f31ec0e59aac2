"""Live chat: per-session dialogue state and an HTTP JSON API.

Each session tracks its own belief and transcript; the model is shared
and read-only.  A turn runs the full pipeline: delexicalise the input,
update the belief, query the KB, compute the intention distribution,
pick an intention (forced, sampled from the renormalised top five, or
argmax depending on mode), beam-decode and relexicalise.  Diagnostics
expose the top five intentions with their probabilities and decoded
alternatives so a client can inspect and steer the policy.
"""

import hashlib
import json
import threading
import time
import uuid
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

import numpy as np

from .belief import TurnFeatures, mention_vector
from .corpus import (DONTCARE, INFORMABLE_SLOTS, NONE_VALUE, detokenize,
                     tokenize)
from .kb import form_query, match_bins
from .model import sample_intention

SESSION_IDLE_SECONDS = 30 * 60
TOP_K = 5


class SessionError(Exception):
    pass


class ChatSession:
    def __init__(self, session_id, belief, rng):
        self.session_id = session_id
        self.belief = belief
        self.rng = rng
        self.prev_response = []        # delexicalised tokens
        self.prev_response_map = {}
        self.offered_entity = None
        self.turn_count = 0
        self.transcript = []
        self.lock = threading.Lock()
        self.last_access = time.time()

    def view(self):
        belief_summary = {s: self.belief.top_value(s) for s in INFORMABLE_SLOTS}
        return {"session_id": self.session_id,
                "turns": self.turn_count,
                "belief": belief_summary,
                "requested": sorted(self.belief.requested_slots()),
                "offered_entity": self.offered_entity.name
                if self.offered_entity else None,
                "transcript": list(self.transcript)}


class DialogueService:
    """Shared model, per-session state, deterministic under a fixed seed."""

    def __init__(self, model, tracker, data, config, sample_top_k=True,
                 transcript_log=None, idle_seconds=SESSION_IDLE_SECONDS):
        self.model = model
        self.tracker = tracker
        self.data = data
        self.config = config
        self.sample_top_k = sample_top_k
        self.idle_seconds = idle_seconds
        self.seed = config.resolved_seed()
        self.sessions = {}
        self._store_lock = threading.Lock()
        self._transcript_path = transcript_log
        self._log_lock = threading.Lock()

    # ---- session store ------------------------------------------------------
    def _session_rng(self, session_id):
        digest = hashlib.sha256(("%d:%s" % (self.seed, session_id)).encode())
        return np.random.default_rng(int.from_bytes(digest.digest()[:8], "big"))

    def create_session(self, session_id=None):
        session_id = session_id or uuid.uuid4().hex[:12]
        session = ChatSession(session_id,
                              self.tracker.layout.initial_belief(),
                              self._session_rng(session_id))
        with self._store_lock:
            self._sweep()
            self.sessions[session_id] = session
        return session

    def get_session(self, session_id):
        with self._store_lock:
            session = self.sessions.get(session_id)
        if session is None:
            raise SessionError("unknown session %s" % session_id)
        session.last_access = time.time()
        return session

    def delete_session(self, session_id):
        with self._store_lock:
            if session_id not in self.sessions:
                raise SessionError("unknown session %s" % session_id)
            del self.sessions[session_id]

    def _sweep(self):
        now = time.time()
        dead = [sid for sid, s in self.sessions.items()
                if now - s.last_access > self.idle_seconds]
        for sid in dead:
            del self.sessions[sid]

    # ---- the chat pipeline --------------------------------------------------
    def _fallback_surfaces(self, belief):
        """Placeholder resolutions from the belief peaks, for responses that
        mention constraint values without an offered venue."""
        fallback = {}
        for slot in INFORMABLE_SLOTS:
            value = belief.top_value(slot)
            if value not in (NONE_VALUE, DONTCARE):
                fallback["[v.%s]" % slot] = [value]
        return fallback

    def _relexicalise_lenient(self, tokens, entity, fallback):
        remaining = {k: list(v) for k, v in fallback.items()}
        out, unresolved, used = [], [], {}
        for tok in tokens:
            if not (tok.startswith("[v.") and tok.endswith("]")):
                out.append(tok)
                continue
            slot = tok[3:-1]
            value = entity.get(slot) if entity is not None else None
            if value is None and remaining.get(tok):
                value = remaining[tok].pop(0)
            if value is None:
                unresolved.append(tok)
                out.append(tok)
            else:
                used.setdefault(tok, []).append(value)
                out.extend(tokenize(value))
        return out, unresolved, used

    def chat_turn(self, session_id, text, forced_intention=None):
        session = self.get_session(session_id)
        with session.lock:
            return self._chat_turn_locked(session, text, forced_intention)

    def _chat_turn_locked(self, session, text, forced_intention):
        model, data = self.model, self.data
        if forced_intention is not None and \
                not 0 <= forced_intention < model.latent_size:
            raise ValueError("forced intention %r out of range" % forced_intention)
        tokens = tokenize(text)
        delex_user, lexmap = data.delex.delexicalise(tokens)
        feats = TurnFeatures(
            user_ids=data.vocab.encode(delex_user),
            resp_ids=data.vocab.encode(session.prev_response),
            user_mentions={s: mention_vector(data.layout, data.delex, s, lexmap)
                           for s in INFORMABLE_SLOTS},
            resp_mentions={s: mention_vector(data.layout, data.delex, s,
                                             session.prev_response_map)
                           for s in INFORMABLE_SLOTS})
        session.belief = self.tracker.track(feats, session.belief)
        query = form_query(session.belief)
        count, hits = data.kb.search(query)
        state = model.dialogue_state(data.vocab.encode(delex_user),
                                     session.belief.vector(), match_bins(count))
        probs = model.policy_distribution(state)
        order = np.argsort(-probs)
        top = [int(i) for i in order[:TOP_K]]

        if forced_intention is not None:
            chosen = forced_intention
        elif self.sample_top_k:
            top_probs = probs[top] / probs[top].sum()
            chosen = top[sample_intention(top_probs, session.rng)]
        else:
            chosen = top[0]

        entity = hits[0] if count else session.offered_entity
        fallback = self._fallback_surfaces(session.belief)
        decode_list = top if chosen in top else top + [chosen]
        decoded = {}
        for z in decode_list:
            ids, avg, _ = model.beam_decode(z, state,
                                            beam_width=self.config.beam_width,
                                            max_len=self.config.max_decode_len)
            delex_tokens = data.vocab.decode(ids)
            surface, unresolved, used = self._relexicalise_lenient(
                delex_tokens, entity, fallback)
            decoded[z] = {"delex": delex_tokens, "surface": detokenize(surface),
                          "unresolved": unresolved, "lexical_map": used}

        response = decoded[chosen]
        if "[v.name]" in response["delex"] and count:
            session.offered_entity = hits[0]
        session.prev_response = response["delex"]
        session.prev_response_map = response["lexical_map"]
        session.turn_count += 1
        session.transcript.append({"speaker": "user", "text": text})
        session.transcript.append({"speaker": "machine",
                                   "text": response["surface"]})
        diagnostics = {
            "intentions": [{"intention": z, "prob": float(probs[z]),
                            "decoded": decoded[z]["surface"]}
                           for z in top],
            "chosen_intention": int(chosen),
            "db_matches": int(count),
            "belief": {s: session.belief.top_value(s) for s in INFORMABLE_SLOTS},
            "requested": sorted(session.belief.requested_slots()),
            "unresolved": response["unresolved"],
        }
        result = {"response": response["surface"], "diagnostics": diagnostics}
        self._log_turn(session, text, result)
        return result

    def _log_turn(self, session, text, result):
        if not self._transcript_path:
            return
        entry = {"session": session.session_id, "turn": session.turn_count,
                 "user": text, "response": result["response"],
                 "chosen_intention": result["diagnostics"]["chosen_intention"],
                 "time": time.time()}
        with self._log_lock:
            with open(self._transcript_path, "a") as f:
                f.write(json.dumps(entry) + "\n")


# ---- HTTP layer -------------------------------------------------------------

def _make_handler(service, ui_dir=None):
    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def log_message(self, fmt, *args):   # quiet by default
            pass

        def _send(self, code, payload, content_type="application/json"):
            body = payload if isinstance(payload, bytes) \
                else json.dumps(payload).encode()
            self.send_response(code)
            self.send_header("Content-Type", content_type)
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def _error(self, code, message):
            self._send(code, {"error": message})

        def _read_body(self):
            length = int(self.headers.get("Content-Length") or 0)
            if not length:
                return {}
            return json.loads(self.rfile.read(length).decode() or "{}")

        def do_POST(self):
            parts = self.path.strip("/").split("/")
            try:
                if parts == ["api", "session"]:
                    session = service.create_session()
                    return self._send(200, {"session_id": session.session_id})
                if len(parts) == 4 and parts[:2] == ["api", "session"] \
                        and parts[3] == "message":
                    body = self._read_body()
                    if "text" not in body:
                        return self._error(400, "missing field 'text'")
                    result = service.chat_turn(parts[2], body["text"],
                                               body.get("forced_intention"))
                    return self._send(200, result)
                return self._error(404, "no such endpoint")
            except SessionError as e:
                return self._error(404, str(e))
            except (ValueError, json.JSONDecodeError) as e:
                return self._error(400, str(e))

        def do_GET(self):
            parts = self.path.strip("/").split("/")
            if len(parts) == 4 and parts[:2] == ["api", "session"] \
                    and parts[3] == "state":
                try:
                    session = service.get_session(parts[2])
                except SessionError as e:
                    return self._error(404, str(e))
                with session.lock:
                    return self._send(200, session.view())
            if ui_dir is not None:
                return self._serve_static()
            return self._error(404, "no such endpoint")

        def do_DELETE(self):
            parts = self.path.strip("/").split("/")
            if len(parts) == 3 and parts[:2] == ["api", "session"]:
                try:
                    service.delete_session(parts[2])
                except SessionError as e:
                    return self._error(404, str(e))
                return self._send(200, {"deleted": True})
            return self._error(404, "no such endpoint")

        def _serve_static(self):
            rel = self.path.lstrip("/") or "index.html"
            target = (Path(ui_dir) / rel).resolve()
            if not str(target).startswith(str(Path(ui_dir).resolve())) \
                    or not target.is_file():
                return self._error(404, "not found")
            ctype = {"html": "text/html", "js": "text/javascript",
                     "css": "text/css", "json": "application/json",
                     "map": "application/json"}.get(
                         target.suffix.lstrip("."), "application/octet-stream")
            return self._send(200, target.read_bytes(), content_type=ctype)

    return Handler


def serve(service, host="127.0.0.1", port=8080, ui_dir=None):
    """Blocking HTTP server over a DialogueService."""
    server = ThreadingHTTPServer((host, port), _make_handler(service, ui_dir))
    return server
