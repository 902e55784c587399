import { beforeEach, describe, expect, it, vi } from "vitest";

import { ChatApp } from "../src/app.js";
import { ApiError, type SessionApi } from "../src/api.js";
import type { SessionSnapshot } from "../src/types.js";
import { answeredSnapshot, awaitingSnapshot } from "./snapshots.js";

function tick(): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, 0));
}

class FakeApi implements SessionApi {
  startCalls: Array<{ question: string; mode: string }> = [];
  clarifyCalls: Array<{ sessionId: string; reply: string }> = [];
  startResult: () => Promise<SessionSnapshot> = async () => awaitingSnapshot;
  clarifyResult: () => Promise<SessionSnapshot> = async () => answeredSnapshot;

  async startSession(question: string, mode: string): Promise<SessionSnapshot> {
    this.startCalls.push({ question, mode });
    return this.startResult();
  }

  async clarify(sessionId: string, reply: string): Promise<SessionSnapshot> {
    this.clarifyCalls.push({ sessionId, reply });
    return this.clarifyResult();
  }

  async getSession(): Promise<SessionSnapshot> {
    return answeredSnapshot;
  }
}

let root: HTMLElement;
let api: FakeApi;

beforeEach(() => {
  document.body.innerHTML = '<div id="root"></div>';
  root = document.getElementById("root")!;
  api = new FakeApi();
});

function chips(): HTMLButtonElement[] {
  return Array.from(root.querySelectorAll('[data-testid="chip"]'));
}

function byTestId(id: string): HTMLElement | null {
  return root.querySelector(`[data-testid="${id}"]`);
}

describe("ask flow", () => {
  it("renders the clarifying question with option chips", async () => {
    const app = new ChatApp(root, api);
    await app.ask("In which state was the hit leader born?");

    expect(api.startCalls).toEqual([
      { question: "In which state was the hit leader born?", mode: "mixalign" },
    ]);
    const system = byTestId("bubble-system");
    expect(system?.textContent).toBe("Which league do you mean: MLB or NPB?");
    expect(chips().map((c) => c.textContent)).toEqual(["MLB", "NPB"]);
    expect(byTestId("answer-card")).toBeNull();
  });

  it("chip click sends the option and renders the answer card", async () => {
    const app = new ChatApp(root, api);
    await app.ask("In which state was the hit leader born?");

    chips()[0]!.click();
    await tick();

    expect(api.clarifyCalls).toEqual([
      { sessionId: awaitingSnapshot.session_id, reply: "MLB" },
    ]);
    const card = byTestId("answer-card")!;
    expect(card).not.toBeNull();
    expect(byTestId("answer-text")!.textContent).toBe("Texas.");
    expect(byTestId("answer-text")!.classList.contains("abstained")).toBe(false);
    const recap = byTestId("clarification-recap")!;
    expect(recap.textContent).toContain("Q: Which league do you mean: MLB or NPB?");
    expect(recap.textContent).toContain("A: MLB");
    // chips disappear once the session is answered
    expect(chips()).toHaveLength(0);
  });

  it("evidence rows equal the snapshot groundings byte-for-byte", async () => {
    const app = new ChatApp(root, api);
    await app.ask("In which state was the hit leader born?");
    chips()[0]!.click();
    await tick();

    const rows = Array.from(
      root.querySelectorAll('[data-testid="evidence-row"]'),
    ).map((row) => row.textContent);
    expect(rows).toEqual(
      answeredSnapshot.candidates.groundings.map((g) => g.text),
    );
  });

  it("unambiguous questions render the answer card immediately", async () => {
    api.startResult = async () => answeredSnapshot;
    const app = new ChatApp(root, api);
    await app.ask("Which team does Yoshi Mura play for?");

    expect(byTestId("answer-card")).not.toBeNull();
    expect(byTestId("option-chips")).toBeNull();
  });

  it("abstentions are styled distinctly", async () => {
    api.startResult = async () => ({
      ...answeredSnapshot,
      turns: [],
      result: {
        answer_text: "There is not enough information to answer.",
        used_groundings: [],
        abstained: true,
        alignment_echo: {},
      },
    });
    const app = new ChatApp(root, api);
    await app.ask("something unanswerable");

    expect(byTestId("answer-text")!.classList.contains("abstained")).toBe(true);
  });

  it("no-match replies flag the answer card", async () => {
    api.startResult = async () => awaitingSnapshot;
    api.clarifyResult = async () => ({
      ...answeredSnapshot,
      turns: [
        {
          ...answeredSnapshot.turns[0]!,
          user_reply: "no idea",
          matched_value: null,
        },
      ],
    });
    const app = new ChatApp(root, api);
    await app.ask("In which state was the hit leader born?");
    await app.reply("no idea");

    expect(byTestId("answer-card")!.textContent).toContain(
      "answered without clarification",
    );
  });
});

describe("guards and errors", () => {
  it("ignores double submission while a request is in flight", async () => {
    let release!: (snapshot: SessionSnapshot) => void;
    api.startResult = async () => awaitingSnapshot;
    api.clarifyResult = () =>
      new Promise((resolve) => {
        release = resolve;
      });
    const app = new ChatApp(root, api);
    await app.ask("In which state was the hit leader born?");

    const first = app.reply("MLB");
    const second = app.reply("NPB"); // rejected: still busy
    release(answeredSnapshot);
    await Promise.all([first, second]);

    expect(api.clarifyCalls).toHaveLength(1);
    expect(api.clarifyCalls[0]!.reply).toBe("MLB");
  });

  it("replies are rejected when no clarification is pending", async () => {
    api.startResult = async () => answeredSnapshot;
    const app = new ChatApp(root, api);
    await app.ask("Which team does Yoshi Mura play for?");
    await app.reply("MLB");
    expect(api.clarifyCalls).toHaveLength(0);
  });

  it("network failure shows a retryable banner", async () => {
    api.startResult = async () => {
      throw new TypeError("fetch failed");
    };
    const app = new ChatApp(root, api);
    await app.ask("In which state was the hit leader born?");

    const banner = byTestId("error-banner")!;
    expect(banner.textContent).toContain("Could not reach the server.");

    api.startResult = async () => awaitingSnapshot;
    (byTestId("retry-button") as HTMLButtonElement).click();
    await tick();
    expect(byTestId("error-banner")).toBeNull();
    expect(chips()).toHaveLength(2);
  });

  it("wrong-state conflicts prompt a refresh", async () => {
    api.startResult = async () => awaitingSnapshot;
    api.clarifyResult = async () => {
      throw new ApiError("session is answered", 409, "session is answered");
    };
    const app = new ChatApp(root, api);
    await app.ask("In which state was the hit leader born?");
    await app.reply("MLB");

    expect(byTestId("error-banner")!.textContent).toContain("refresh");
  });

  it("ambiguous replies re-pose the clarifying question", async () => {
    api.startResult = async () => awaitingSnapshot;
    api.clarifyResult = async () => {
      throw new ApiError("ambiguous", 409, {
        error: "ambiguous_reply",
        message: "reply matches more than one option",
        question_text: "Which league do you mean: MLB or NPB?",
        options: ["MLB", "NPB"],
      });
    };
    const app = new ChatApp(root, api);
    await app.ask("In which state was the hit leader born?");
    await app.reply("MLB or NPB, either");

    const bubbles = Array.from(
      root.querySelectorAll('[data-testid="bubble-system"]'),
    );
    expect(bubbles.at(-1)?.textContent).toContain(
      "reply matches more than one option",
    );
    // still awaiting: the chips remain actionable
    expect(chips()).toHaveLength(2);
  });
});

describe("form wiring", () => {
  it("submitting the composer sends the question", async () => {
    const app = new ChatApp(root, api);
    const input = byTestId("composer-input") as HTMLInputElement;
    input.value = "In which state was the hit leader born?";
    (root.querySelector("form") as HTMLFormElement).dispatchEvent(
      new Event("submit", { cancelable: true }),
    );
    await tick();
    await tick();

    expect(api.startCalls).toHaveLength(1);
    expect(byTestId("bubble-user")!.textContent).toBe(
      "In which state was the hit leader born?",
    );
    void app;
  });
});
