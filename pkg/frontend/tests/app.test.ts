// @vitest-environment happy-dom
/* Controller behavior: optimistic append with 422 rollback, stale advice
   with retry, the 8-card submit gate, and ack-mismatch reconciliation. */

import { expect, test } from "vitest";
import { AdvisorClient, type HttpReply, type Transport } from "../src/api.js";
import { App } from "../src/app.js";
import type { AdvicePayload, CardInfo } from "../src/types.js";

const CATALOG: CardInfo[] = Array.from({ length: 10 }, (_, i) => ({
  card_id: `c${i}`,
  elixir_cost: (i % 5) + 1,
  func_type: "spell",
}));
const DECK = CATALOG.slice(0, 8).map((c) => c.card_id);

const HEALTH: HttpReply = {
  status: 200,
  body: { status: "ok", models_loaded: true, sessions: 0 },
};
const SESSION: HttpReply = { status: 200, body: { session_id: "s1" } };

function stayAdvice(over: Partial<AdvicePayload> = {}): AdvicePayload {
  return {
    decision: "stay",
    target_state: null,
    target_name: null,
    gate_prob: 0.42,
    candidates: [],
    provenance: "persona_gate",
    explanation: "held by PersonaGate",
    need_matches: 0,
    match_count: 1,
    subtype: 2,
    subtype_provisional: true,
    from_state: 1,
    from_name: "Cycle-2",
    ...over,
  };
}

function mount(): HTMLElement {
  document.body.innerHTML = `<div id="app"></div>`;
  return document.getElementById("app") as HTMLElement;
}

function makeApp(transport: Transport): { app: App; root: HTMLElement } {
  const root = mount();
  const app = new App(root, new AdvisorClient(transport), CATALOG);
  return { app, root };
}

function click(root: HTMLElement, selector: string): void {
  const el = root.querySelector(selector) as HTMLElement | null;
  if (!el) throw new Error(`missing element: ${selector}`);
  el.click();
}

function pickDeck(root: HTMLElement, deck: string[]): void {
  for (const card of deck) {
    click(root, `[data-action="toggle-card"][data-card="${card}"]`);
  }
}

const tick = () => new Promise((resolve) => setTimeout(resolve, 0));

test("422 shows the field error inline and rolls the timeline back", async () => {
  let release!: (reply: HttpReply) => void;
  const gated = new Promise<HttpReply>((resolve) => {
    release = resolve;
  });
  const replies = [HEALTH, SESSION];
  const paths: string[] = [];
  const transport: Transport = (method, path) => {
    paths.push(path);
    const next = replies.shift();
    return next ? Promise.resolve(next) : gated;
  };

  const { app, root } = makeApp(transport);
  await app.start();
  pickDeck(root, DECK);
  click(root, '[data-action="submit-match"]');
  await tick();

  // optimistic entry visible while the request is in flight
  expect(root.querySelectorAll("#timeline li.pending").length).toBe(1);

  release({
    status: 422,
    body: {
      detail: [
        {
          loc: ["body", "crown_diff"],
          msg: "win requires crown_diff >= 1",
          type: "value_error",
        },
      ],
    },
  });
  await app.whenIdle();

  expect(root.querySelectorAll("#timeline li").length).toBe(0);
  const error = root.querySelector('.field-error[data-field="crown_diff"]');
  expect(error?.textContent).toContain("win requires crown_diff >= 1");
  // no advice fetch after a rejected report
  expect(paths.filter((p) => p.endsWith("/advice")).length).toBe(0);
});

test("advice network failure keeps the last advice with a stale badge", async () => {
  const fresh = stayAdvice({
    provenance: "timing_gate",
    explanation: "held by TimingGate",
    match_count: 2,
  });
  let adviceCalls = 0;
  const transport: Transport = async (method, path) => {
    if (path === "/health") return HEALTH;
    if (path === "/session") return SESSION;
    if (path.endsWith("/match")) {
      return { status: 200, body: { ok: true, match_count: adviceCalls + 1 } };
    }
    adviceCalls += 1;
    if (adviceCalls === 1) return { status: 200, body: stayAdvice() };
    if (adviceCalls === 2) throw new Error("connection refused");
    return { status: 200, body: fresh };
  };

  const { app, root } = makeApp(transport);
  await app.start();
  pickDeck(root, DECK);
  click(root, '[data-action="submit-match"]');
  await app.whenIdle();
  expect(root.querySelector(".advice")?.getAttribute("data-provenance")).toBe(
    "persona_gate",
  );
  expect(root.querySelector(".badge.stale")).toBeNull();

  click(root, '[data-action="submit-match"]');
  await app.whenIdle();
  // previous advice still on screen, flagged stale
  const panel = root.querySelector(".advice") as HTMLElement;
  expect(panel.getAttribute("data-provenance")).toBe("persona_gate");
  expect(panel.querySelector(".badge.stale")).not.toBeNull();
  expect(root.querySelectorAll("#timeline li.confirmed").length).toBe(2);

  click(root, '[data-action="retry-advice"]');
  await app.whenIdle();
  const retried = root.querySelector(".advice") as HTMLElement;
  expect(retried.getAttribute("data-provenance")).toBe("timing_gate");
  expect(retried.querySelector(".badge.stale")).toBeNull();
});

test("submit is inert until 8 cards are picked", async () => {
  const paths: string[] = [];
  const transport: Transport = async (method, path) => {
    paths.push(path);
    if (path === "/health") return HEALTH;
    return SESSION;
  };
  const { app, root } = makeApp(transport);
  await app.start();

  pickDeck(root, DECK.slice(0, 7));
  const button = root.querySelector('[data-action="submit-match"]');
  expect(button?.hasAttribute("disabled")).toBe(true);
  expect(root.textContent).toContain("select 1 more card");

  click(root, '[data-action="submit-match"]');
  await app.whenIdle();
  expect(paths).toEqual(["/health", "/session"]);

  // a 9th pick is ignored once the deck is full
  pickDeck(root, [DECK[7], "c8"]);
  expect(root.querySelectorAll(".card.picked").length).toBe(8);
  expect(root.querySelector(`[data-card="c8"]`)?.classList.contains("picked")).toBe(false);
});

test("ack mismatch refetches the server timeline", async () => {
  const serverMatches = Array.from({ length: 3 }, (_, i) => ({
    timestamp: 1000 + 60 * i,
    deck: DECK,
    outcome: (i === 0 ? "loss" : "win") as "win" | "loss",
    crown_diff: i === 0 ? -1 : 1,
    mode: "pvp",
  }));
  const transport: Transport = async (method, path) => {
    if (path === "/health") return HEALTH;
    if (path === "/session") return SESSION;
    if (path.endsWith("/match")) {
      // two reports landed from elsewhere; ack says 3, client expects 1
      return { status: 200, body: { ok: true, match_count: 3 } };
    }
    if (path.endsWith("/advice")) {
      return { status: 200, body: stayAdvice({ match_count: 3 }) };
    }
    return {
      status: 200,
      body: {
        session_id: "s1",
        match_count: 3,
        matches: serverMatches,
        subtype: 2,
        subtype_provisional: true,
        last_advice: null,
      },
    };
  };

  const { app, root } = makeApp(transport);
  await app.start();
  pickDeck(root, DECK);
  click(root, '[data-action="submit-match"]');
  await app.whenIdle();

  expect(root.querySelectorAll("#timeline li.confirmed").length).toBe(3);
  expect(root.querySelector(".advice")?.getAttribute("data-provenance")).toBe(
    "persona_gate",
  );
});

test("degraded service shows a banner and opens no session", async () => {
  const paths: string[] = [];
  const transport: Transport = async (method, path) => {
    paths.push(path);
    return {
      status: 200,
      body: { status: "degraded", models_loaded: false, sessions: 0 },
    };
  };
  const { app, root } = makeApp(transport);
  await app.start();
  expect(root.querySelector(".banner")?.textContent).toContain("degraded");
  expect(paths).toEqual(["/health"]);
  expect(root.querySelector(".session-id")).toBeNull();
});
