/* Controller: wires the renderers to the API client through one set of
   delegated listeners.  Every server call goes through a single promise
   chain, so requests within the session stay sequential; whenIdle()
   resolves once the chain drains, which is what scripted tests await. */

import { AdvisorClient, ApiError, ValidationError } from "./api.js";
import {
  appendOptimistic,
  confirmEntry,
  confirmedCount,
  DECK_SIZE,
  emptyFormState,
  emptySessionState,
  rollbackEntry,
  sparklineFrom,
  timelineFromServer,
  type MatchFormState,
  type UiSessionState,
} from "./state.js";
import { sessionView } from "./render.js";
import type { CardInfo, MatchPayload } from "./types.js";

function describe(err: unknown): string {
  if (err instanceof ApiError) return err.message;
  return "network error: could not reach the advisor service";
}

export class App {
  state: UiSessionState = emptySessionState();
  form: MatchFormState = emptyFormState();
  private chain: Promise<void> = Promise.resolve();
  private retryPayload: MatchPayload | null = null;

  constructor(
    private root: HTMLElement,
    private client: AdvisorClient,
    private catalog: CardInfo[],
  ) {
    root.addEventListener("click", (ev) => this.onClick(ev));
    root.addEventListener("change", (ev) => this.onChange(ev));
    // the log button is a plain button; block any native form submission
    root.addEventListener("submit", (ev) => ev.preventDefault());
    this.render();
  }

  whenIdle(): Promise<void> {
    return this.chain;
  }

  /* Tasks handle their own failures; the catch keeps the chain alive if
     one slips through. */
  private enqueue(task: () => Promise<void>): void {
    this.chain = this.chain.then(task).catch(() => undefined);
  }

  render(): void {
    this.state.sparkline = sparklineFrom(this.state.timeline);
    this.root.innerHTML = sessionView(this.state, this.form, this.catalog);
  }

  start(): Promise<void> {
    this.enqueue(async () => {
      try {
        const health = await this.client.health();
        if (!health.models_loaded) {
          this.state.banner = "service degraded: models not loaded";
          this.render();
          return;
        }
        this.state.sessionId = await this.client.createSession();
        this.state.banner = null;
      } catch (err) {
        this.state.banner = describe(err);
      }
      this.render();
    });
    return this.whenIdle();
  }

  submitMatch(): void {
    if (!this.state.sessionId || this.form.deck.length !== DECK_SIZE) return;
    this.postMatch({
      deck: [...this.form.deck],
      outcome: this.form.outcome,
      crown_diff: this.form.crownDiff,
      mode: this.form.mode,
    });
  }

  private postMatch(payload: MatchPayload): void {
    this.enqueue(async () => {
      const sessionId = this.state.sessionId;
      if (!sessionId) return;
      const entry = appendOptimistic(this.state, payload);
      this.state.fieldErrors = {};
      this.state.banner = null;
      this.render();
      try {
        const ack = await this.client.logMatch(sessionId, payload);
        confirmEntry(entry);
        this.retryPayload = null;
        if (ack.match_count !== confirmedCount(this.state)) {
          await this.reconcileNow(sessionId);
        }
      } catch (err) {
        rollbackEntry(this.state, entry);
        if (err instanceof ValidationError) {
          this.state.fieldErrors = err.fields;
        } else {
          this.state.banner = describe(err);
          this.retryPayload = payload;
        }
        this.render();
        return;
      }
      this.render();
      await this.refreshAdviceNow(sessionId);
    });
  }

  refreshAdvice(): void {
    this.enqueue(async () => {
      if (this.state.sessionId) await this.refreshAdviceNow(this.state.sessionId);
    });
  }

  reconcile(): void {
    this.enqueue(async () => {
      if (this.state.sessionId) await this.reconcileNow(this.state.sessionId);
    });
  }

  private async refreshAdviceNow(sessionId: string): Promise<void> {
    try {
      this.state.advice = await this.client.getAdvice(sessionId);
      this.state.adviceStale = false;
    } catch {
      // keep the last advice on screen, flagged stale with a retry control
      this.state.adviceStale = true;
    }
    this.render();
  }

  private async reconcileNow(sessionId: string): Promise<void> {
    try {
      const snap = await this.client.getSession(sessionId);
      this.state.timeline = timelineFromServer(snap.matches);
      if (snap.last_advice) {
        this.state.advice = snap.last_advice;
        this.state.adviceStale = false;
      }
      this.state.banner = null;
    } catch (err) {
      this.state.banner = describe(err);
    }
    this.render();
  }

  private toggleCard(cardId: string): void {
    const at = this.form.deck.indexOf(cardId);
    if (at >= 0) this.form.deck.splice(at, 1);
    else if (this.form.deck.length < DECK_SIZE) this.form.deck.push(cardId);
    this.render();
  }

  private onClick(ev: Event): void {
    const target = ev.target as HTMLElement | null;
    const el = target?.closest?.("[data-action]") as HTMLElement | null;
    if (!el) return;
    const action = el.getAttribute("data-action");
    if (action === "toggle-card") {
      this.toggleCard(el.getAttribute("data-card") ?? "");
    } else if (action === "submit-match") {
      ev.preventDefault();
      this.submitMatch();
    } else if (action === "new-session") {
      void this.start();
    } else if (action === "retry-advice") {
      this.refreshAdvice();
    } else if (action === "retry-last") {
      const payload = this.retryPayload;
      this.state.banner = null;
      if (payload) this.postMatch(payload);
      else this.render();
    } else if (action === "reconcile") {
      this.reconcile();
    }
  }

  private onChange(ev: Event): void {
    const el = ev.target as HTMLElement | null;
    if (!el) return;
    if (el instanceof HTMLInputElement && el.name === "outcome") {
      this.form.outcome = el.value === "loss" ? "loss" : "win";
      this.render();
    } else if (el instanceof HTMLSelectElement) {
      const field = el.getAttribute("data-field");
      if (field === "crown_diff") this.form.crownDiff = parseInt(el.value, 10);
      else if (field === "mode") this.form.mode = el.value;
      this.render();
    }
  }
}
