/* Client-side session state.  The server is the source of truth: the
   timeline mirrors acknowledged reports (plus at most one optimistic entry
   in flight) and can always be rebuilt from a session refetch.  The
   sparkline numbers are behavior stats derived from the local timeline;
   advice scores are never touched client-side. */

import type { AdvicePayload, MatchPayload, Outcome, SessionMatch } from "./types.js";

export const DECK_SIZE = 8;

export type EntryStatus = "pending" | "confirmed";

export interface TimelineEntry {
  payload: MatchPayload;
  status: EntryStatus;
}

export interface MatchFormState {
  deck: string[];
  outcome: Outcome;
  crownDiff: number;
  mode: string;
}

export interface SparklineData {
  switchRate: number | null;
  recentWinrate: number | null;
  tiltSignal: number;
  winratePoints: number[];
}

export interface UiSessionState {
  sessionId: string | null;
  timeline: TimelineEntry[];
  advice: AdvicePayload | null;
  adviceStale: boolean;
  sparkline: SparklineData;
  fieldErrors: Record<string, string>;
  banner: string | null;
}

export function emptySessionState(): UiSessionState {
  return {
    sessionId: null,
    timeline: [],
    advice: null,
    adviceStale: false,
    sparkline: { switchRate: null, recentWinrate: null, tiltSignal: 0, winratePoints: [] },
    fieldErrors: {},
    banner: null,
  };
}

export function emptyFormState(): MatchFormState {
  return { deck: [], outcome: "win", crownDiff: 1, mode: "pvp" };
}

/* Order-insensitive deck identity, for change markers only. */
export function deckKey(deck: string[]): string {
  return [...deck].sort().join("|");
}

const RECENT_WINDOW = 10;
const TREND_WINDOW = 5;

export function sparklineFrom(timeline: TimelineEntry[]): SparklineData {
  const matches = timeline
    .filter((e) => e.status === "confirmed")
    .map((e) => e.payload);
  const n = matches.length;

  let changes = 0;
  for (let i = 1; i < n; i++) {
    if (deckKey(matches[i].deck) !== deckKey(matches[i - 1].deck)) changes++;
  }
  const switchRate = n > 1 ? changes / (n - 1) : null;

  const recent = matches.slice(-RECENT_WINDOW);
  const recentWinrate = recent.length
    ? recent.filter((m) => m.outcome === "win").length / recent.length
    : null;

  let tiltSignal = 0;
  for (let i = n - 1; i >= 0 && matches[i].outcome === "loss"; i--) tiltSignal++;

  const winratePoints = matches.map((_, i) => {
    const window = matches.slice(Math.max(0, i - TREND_WINDOW + 1), i + 1);
    return window.filter((m) => m.outcome === "win").length / window.length;
  });

  return { switchRate, recentWinrate, tiltSignal, winratePoints };
}

export function appendOptimistic(
  state: UiSessionState,
  payload: MatchPayload,
): TimelineEntry {
  const entry: TimelineEntry = { payload, status: "pending" };
  state.timeline.push(entry);
  return entry;
}

export function confirmEntry(entry: TimelineEntry): void {
  entry.status = "confirmed";
}

export function rollbackEntry(state: UiSessionState, entry: TimelineEntry): void {
  const at = state.timeline.indexOf(entry);
  if (at >= 0) state.timeline.splice(at, 1);
}

export function timelineFromServer(matches: SessionMatch[]): TimelineEntry[] {
  return matches.map((m) => ({
    payload: {
      deck: [...m.deck],
      outcome: m.outcome,
      crown_diff: m.crown_diff,
      mode: m.mode,
    },
    status: "confirmed" as const,
  }));
}

export function confirmedCount(state: UiSessionState): number {
  return state.timeline.filter((e) => e.status === "confirmed").length;
}
