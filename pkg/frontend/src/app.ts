import { ApiClient, ApiError, type SessionApi } from "./api.js";
import type { SessionSnapshot } from "./types.js";

interface Message {
  role: "user" | "system";
  text: string;
}

interface BannerState {
  message: string;
  retry: (() => Promise<void>) | null;
}

// One active session per tab; the server snapshot is authoritative and the
// UI only ever renders strings taken verbatim from it.
export class ChatApp {
  session: SessionSnapshot | null = null;
  messages: Message[] = [];
  banner: BannerState | null = null;
  busy = false;

  constructor(
    private root: HTMLElement,
    private api: SessionApi,
    private mode = "mixalign",
  ) {
    this.render();
  }

  // Actions -----------------------------------------------------------------

  async ask(question: string): Promise<void> {
    const trimmed = question.trim();
    if (!trimmed || this.busy) return;
    this.session = null;
    this.messages = [{ role: "user", text: trimmed }];
    await this.perform(() => this.api.startSession(trimmed, this.mode));
  }

  async reply(text: string): Promise<void> {
    const trimmed = text.trim();
    if (!trimmed || this.busy || !this.session) return;
    if (this.session.state !== "awaiting_clarification") return;
    const sessionId = this.session.session_id;
    this.messages.push({ role: "user", text: trimmed });
    await this.perform(() => this.api.clarify(sessionId, trimmed));
  }

  private async perform(call: () => Promise<SessionSnapshot>): Promise<void> {
    this.busy = true;
    this.banner = null;
    this.render();
    try {
      this.applySnapshot(await call());
    } catch (error) {
      this.handleError(error, call);
    } finally {
      this.busy = false;
      this.render();
    }
  }

  private applySnapshot(snapshot: SessionSnapshot): void {
    this.session = snapshot;
    if (snapshot.state === "awaiting_clarification") {
      const turn = snapshot.turns[snapshot.turns.length - 1];
      this.messages.push({ role: "system", text: turn.question_text });
    } else if (snapshot.state === "failed") {
      this.banner = {
        message: snapshot.failure ?? "the session failed",
        retry: null,
      };
    }
  }

  private handleError(error: unknown, call: () => Promise<SessionSnapshot>): void {
    if (error instanceof ApiError && error.status === 409) {
      const detail = error.detail as any;
      if (detail?.error === "ambiguous_reply") {
        this.messages.push({
          role: "system",
          text: `${detail.message} — ${detail.question_text}`,
        });
        return;
      }
      // WrongState: the tab is out of sync with the server
      this.banner = {
        message: "This session moved on; refresh to see its latest state.",
        retry: async () => {
          if (this.session) {
            this.applySnapshot(await this.api.getSession(this.session.session_id));
          }
        },
      };
      return;
    }
    const message =
      error instanceof ApiError
        ? `Request failed (${error.status}): ${error.message}`
        : "Could not reach the server.";
    this.banner = { message, retry: () => this.perform(call) };
  }

  // Rendering -----------------------------------------------------------------

  render(): void {
    this.root.textContent = "";
    this.root.appendChild(this.renderThread());
    if (this.banner) this.root.appendChild(this.renderBanner(this.banner));
    this.root.appendChild(this.renderInput());
  }

  private renderThread(): HTMLElement {
    const thread = el("div", "thread");
    for (const message of this.messages) {
      const bubble = el("div", `bubble ${message.role}`, message.text);
      bubble.dataset.testid = `bubble-${message.role}`;
      thread.appendChild(bubble);
    }
    const session = this.session;
    if (session?.state === "awaiting_clarification") {
      thread.appendChild(this.renderChips(session));
    }
    if (session?.state === "answered" && session.result) {
      thread.appendChild(this.renderAnswerCard(session));
    }
    return thread;
  }

  private renderChips(session: SessionSnapshot): HTMLElement {
    const turn = session.turns[session.turns.length - 1];
    const row = el("div", "chips");
    row.dataset.testid = "option-chips";
    for (const option of turn.options) {
      const chip = el("button", "chip", option) as HTMLButtonElement;
      chip.type = "button";
      chip.dataset.testid = "chip";
      chip.disabled = this.busy;
      chip.onclick = () => void this.reply(option);
      row.appendChild(chip);
    }
    return row;
  }

  private renderAnswerCard(session: SessionSnapshot): HTMLElement {
    const result = session.result!;
    const card = el("div", "answer-card");
    card.dataset.testid = "answer-card";

    const answer = el(
      "div",
      result.abstained ? "answer-text abstained" : "answer-text",
      result.answer_text,
    );
    answer.dataset.testid = "answer-text";
    card.appendChild(answer);

    const lastTurn = session.turns[session.turns.length - 1];
    if (lastTurn?.user_reply != null && lastTurn.matched_value == null) {
      card.appendChild(
        el("div", "flag", "answered without clarification"),
      );
    }

    if (session.candidates.groundings.length) {
      const evidence = el("details", "evidence");
      evidence.appendChild(
        el("summary", "", `Evidence (${session.candidates.groundings.length})`),
      );
      for (const grounding of session.candidates.groundings) {
        const row = el("div", "evidence-row", grounding.text);
        row.dataset.testid = "evidence-row";
        evidence.appendChild(row);
      }
      card.appendChild(evidence);
    }

    const notes = session.metadata.links.filter((link) => link.verdict);
    if (notes.length) {
      const list = el("div", "coref-notes");
      list.dataset.testid = "coref-notes";
      for (const link of notes) {
        list.appendChild(
          el("div", "note", `${link.surface_value} refers to ${link.kb_value}`),
        );
      }
      card.appendChild(list);
    }

    const answered = session.turns.filter((turn) => turn.user_reply != null);
    if (answered.length) {
      const recap = el("div", "clarification-recap");
      recap.dataset.testid = "clarification-recap";
      for (const turn of answered) {
        recap.appendChild(el("div", "q", `Q: ${turn.question_text}`));
        recap.appendChild(el("div", "a", `A: ${turn.user_reply}`));
      }
      card.appendChild(recap);
    }
    return card;
  }

  private renderBanner(banner: BannerState): HTMLElement {
    const box = el("div", "banner", banner.message);
    box.dataset.testid = "error-banner";
    if (banner.retry) {
      const retry = el("button", "retry", "Retry") as HTMLButtonElement;
      retry.type = "button";
      retry.dataset.testid = "retry-button";
      retry.onclick = () => void banner.retry!();
      box.appendChild(retry);
    }
    return box;
  }

  private renderInput(): HTMLElement {
    const awaiting = this.session?.state === "awaiting_clarification";
    const form = el("form", "composer") as HTMLFormElement;
    const input = el("input", "composer-input") as HTMLInputElement;
    input.type = "text";
    input.placeholder = awaiting ? "Type a reply…" : "Ask a question…";
    input.dataset.testid = "composer-input";
    const send = el("button", "send", awaiting ? "Reply" : "Ask") as HTMLButtonElement;
    send.type = "submit";
    send.dataset.testid = "send-button";
    send.disabled = this.busy;
    form.onsubmit = (event) => {
      event.preventDefault();
      const value = input.value;
      input.value = "";
      if (awaiting) void this.reply(value);
      else void this.ask(value);
    };
    form.appendChild(input);
    form.appendChild(send);
    return form;
  }
}

function el(tag: string, className = "", text = ""): HTMLElement {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text) node.textContent = text;
  return node;
}

export function mount(root: HTMLElement, baseUrl: string, mode?: string): ChatApp {
  return new ChatApp(root, new ApiClient(baseUrl), mode);
}

declare global {
  interface Window {
    KBALIGN_API?: string;
  }
}

if (typeof document !== "undefined") {
  const root = document.getElementById("kbalign-root");
  if (root) {
    const params = new URLSearchParams(window.location.search);
    const base =
      params.get("api") ?? window.KBALIGN_API ?? "http://127.0.0.1:8000";
    const mode = params.get("mode") ?? "mixalign";
    mount(root, base, mode);
  }
}
