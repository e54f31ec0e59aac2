// Orchestrates API calls and view-model updates; rendering subscribes to
// view changes. One in-flight request per session at a time.

import { ApiClient, ApiError } from "./api.js";
import type { MessageResult } from "./api.js";
import {
  ChatView,
  clearForced,
  emptyView,
  forceIntention,
  messageArrived,
  requestFailed,
  sendStarted,
  sessionStarted,
} from "./state.js";

export class ChatController {
  view: ChatView = emptyView();
  private listeners: ((view: ChatView) => void)[] = [];

  constructor(private api: ApiClient) {}

  subscribe(listener: (view: ChatView) => void): void {
    this.listeners.push(listener);
    listener(this.view);
  }

  private commit(view: ChatView): void {
    this.view = view;
    for (const fn of this.listeners) fn(view);
  }

  async newSession(): Promise<void> {
    try {
      const id = await this.api.createSession();
      this.commit(sessionStarted(this.view, id));
    } catch (err) {
      this.commit(requestFailed(this.view, statusOf(err), String(err)));
    }
  }

  async send(text: string): Promise<MessageResult | null> {
    if (!text.trim() || this.view.connection === "busy") return null;
    if (!this.view.sessionId) {
      await this.newSession();
      if (!this.view.sessionId) return null;
    }
    const forced = this.view.forcedIntention ?? undefined;
    this.commit(sendStarted(clearForced(this.view), text));
    try {
      const result = await this.api.sendMessage(
        this.view.sessionId!,
        text,
        forced,
      );
      this.commit(messageArrived(this.view, result));
      return result;
    } catch (err) {
      this.commit(requestFailed(this.view, statusOf(err), String(err)));
      return null;
    }
  }

  force(intention: number): void {
    this.commit(forceIntention(this.view, intention));
  }
}

function statusOf(err: unknown): number {
  return err instanceof ApiError ? err.status : 0;
}
