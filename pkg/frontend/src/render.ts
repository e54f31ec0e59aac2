// DOM rendering: the screen is rebuilt from the view-model on every change.

import type { Diagnostics } from "./api.js";
import type { ChatView, TurnView } from "./state.js";

export interface Handlers {
  onForce(intention: number): void;
  onRetry(): void;
  onNewSession(): void;
}

function el(
  tag: string,
  className?: string,
  text?: string,
): HTMLElement {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function renderDiagnostics(
  d: Diagnostics,
  forced: number | null,
  handlers: Handlers,
): HTMLElement {
  const details = el("details", "diagnostics") as HTMLDetailsElement;
  details.open = true;
  const summary = el(
    "summary",
    undefined,
    `intentions (db matches: ${d.db_matches})`,
  );
  details.appendChild(summary);
  const table = el("div", "intention-table");
  for (const row of d.intentions) {
    const rowEl = el("div", "intention-row");
    rowEl.dataset.intention = String(row.intention);
    if (row.intention === d.chosen_intention) rowEl.classList.add("chosen");
    if (row.intention === forced) rowEl.classList.add("forced");
    const label = el("span", "intention-id", `(${row.intention} ${row.prob.toFixed(2)})`);
    const bar = el("span", "prob-bar");
    const fill = el("span", "prob-fill");
    fill.style.width = `${Math.round(row.prob * 100)}%`;
    bar.appendChild(fill);
    const text = el("span", "intention-text", row.decoded);
    rowEl.append(label, bar, text);
    rowEl.title = "click to steer the next reply through this intention";
    rowEl.addEventListener("click", () => handlers.onForce(row.intention));
    table.appendChild(rowEl);
  }
  details.appendChild(table);
  const inspector = el("details", "inspector");
  inspector.appendChild(el("summary", undefined, "raw json"));
  inspector.appendChild(el("pre", undefined, JSON.stringify(d, null, 1)));
  details.appendChild(inspector);
  return details;
}

function renderTurn(
  turn: TurnView,
  forced: number | null,
  handlers: Handlers,
): HTMLElement {
  const wrap = el("div", `turn ${turn.kind}`);
  wrap.appendChild(el("div", "bubble", turn.text));
  if (turn.kind === "machine" && turn.diagnostics) {
    wrap.appendChild(renderDiagnostics(turn.diagnostics, forced, handlers));
  }
  return wrap;
}

export function render(
  root: HTMLElement,
  view: ChatView,
  handlers: Handlers,
): void {
  root.replaceChildren();

  const status = el("div", "status");
  if (view.connection === "error") {
    status.classList.add("error");
    status.append(el("span", undefined, `request failed: ${view.errorMessage}`));
    const retry = el("button", undefined, "retry");
    retry.addEventListener("click", handlers.onRetry);
    status.appendChild(retry);
  } else if (view.connection === "expired") {
    status.classList.add("error");
    status.append(el("span", undefined, "session expired"));
    const again = el("button", undefined, "start a new session");
    again.addEventListener("click", handlers.onNewSession);
    status.appendChild(again);
  } else if (view.sessionId) {
    status.append(el("span", undefined, `session ${view.sessionId}`));
  }
  root.appendChild(status);

  const beliefBar = el("div", "belief");
  for (const [slot, value] of Object.entries(view.belief)) {
    beliefBar.appendChild(el("span", "chip", `${slot}: ${value}`));
  }
  if (view.requested.length) {
    beliefBar.appendChild(el("span", "chip requested",
      `requested: ${view.requested.join(", ")}`));
  }
  if (view.dbMatches !== null) {
    beliefBar.appendChild(el("span", "chip", `matches: ${view.dbMatches}`));
  }
  root.appendChild(beliefBar);

  const log = el("div", "transcript");
  for (const turn of view.transcript) {
    log.appendChild(renderTurn(turn, view.forcedIntention, handlers));
  }
  root.appendChild(log);

  if (view.forcedIntention !== null) {
    root.appendChild(el("div", "forcing",
      `next reply forced to intention ${view.forcedIntention}`));
  }
  log.scrollTop = log.scrollHeight;
}
