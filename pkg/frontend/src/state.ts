// View-model for the chat screen: a pure reducer over server responses, so
// the rendered UI is a function of the session state alone.

import type { Diagnostics, MessageResult, SessionState } from "./api.js";

export interface MachineTurn {
  kind: "machine";
  text: string;
  diagnostics: Diagnostics | null;
}

export interface UserTurn {
  kind: "user";
  text: string;
}

export type TurnView = UserTurn | MachineTurn;

export type Connection = "idle" | "busy" | "error" | "expired";

export interface ChatView {
  sessionId: string | null;
  transcript: TurnView[];
  belief: Record<string, string>;
  requested: string[];
  dbMatches: number | null;
  forcedIntention: number | null;
  connection: Connection;
  errorMessage: string | null;
}

export function emptyView(): ChatView {
  return {
    sessionId: null,
    transcript: [],
    belief: {},
    requested: [],
    dbMatches: null,
    forcedIntention: null,
    connection: "idle",
    errorMessage: null,
  };
}

export function sessionStarted(view: ChatView, sessionId: string): ChatView {
  return { ...emptyView(), sessionId };
}

export function sendStarted(view: ChatView, text: string): ChatView {
  return {
    ...view,
    transcript: [...view.transcript, { kind: "user", text }],
    connection: "busy",
    errorMessage: null,
  };
}

export function messageArrived(view: ChatView, result: MessageResult): ChatView {
  const turn: MachineTurn = {
    kind: "machine",
    text: result.response,
    diagnostics: result.diagnostics,
  };
  return {
    ...view,
    transcript: [...view.transcript, turn],
    belief: result.diagnostics.belief,
    requested: result.diagnostics.requested,
    dbMatches: result.diagnostics.db_matches,
    forcedIntention: null,
    connection: "idle",
  };
}

export function requestFailed(
  view: ChatView,
  status: number,
  message: string,
): ChatView {
  // 404 on an existing session means it idled out server-side
  const expired = status === 404 && view.sessionId !== null;
  return {
    ...view,
    connection: expired ? "expired" : "error",
    errorMessage: message,
  };
}

export function forceIntention(view: ChatView, intention: number): ChatView {
  const last = lastDiagnostics(view);
  if (!last || !last.intentions.some((row) => row.intention === intention)) {
    return view; // only listed intentions can be forced
  }
  return { ...view, forcedIntention: intention };
}

export function clearForced(view: ChatView): ChatView {
  return { ...view, forcedIntention: null };
}

export function lastDiagnostics(view: ChatView): Diagnostics | null {
  for (let i = view.transcript.length - 1; i >= 0; i--) {
    const turn = view.transcript[i];
    if (turn.kind === "machine" && turn.diagnostics) return turn.diagnostics;
  }
  return null;
}

// Rebuild the view from a server session snapshot: refetching must
// reproduce the screen (minus per-turn diagnostics, which the server does
// not replay).
export function fromSessionState(state: SessionState): ChatView {
  return {
    ...emptyView(),
    sessionId: state.session_id,
    transcript: state.transcript.map((t) =>
      t.speaker === "user"
        ? { kind: "user", text: t.text }
        : { kind: "machine", text: t.text, diagnostics: null },
    ),
    belief: state.belief,
    requested: state.requested,
  };
}

export function probabilityBarsValid(d: Diagnostics): boolean {
  const probs = d.intentions.map((r) => r.prob);
  const descending = probs.every((p, i) => i === 0 || p <= probs[i - 1]);
  const total = probs.reduce((a, b) => a + b, 0);
  return descending && total <= 1.0 + 1e-6;
}
