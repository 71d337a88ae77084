/* Pure HTML renderers: state in, markup out.  No DOM reads and no score
   math here.  Candidate rows render in the exact order the server sent
   them, and every displayed score carries its full-precision server value
   in data-/title attributes alongside the rounded text. */

import type {
  AdvicePayload,
  CandidateScore,
  CardInfo,
  Provenance,
} from "./types.js";
import {
  DECK_SIZE,
  deckKey,
  type MatchFormState,
  type SparklineData,
  type TimelineEntry,
  type UiSessionState,
} from "./state.js";

export function escapeHtml(text: string): string {
  const map: Record<string, string> = {
    "&": "&amp;",
    "<": "&lt;",
    ">": "&gt;",
    '"': "&quot;",
    "'": "&#39;",
  };
  return text.replace(/[&<>"']/g, (ch) => map[ch]);
}

export const SUBTYPE_NAMES = [
  "One-deck Loyalist",
  "Loss-Reactive Switcher",
  "Flex Player",
];

/* Which pipeline stage answered, and what its verdict means. */
export const GATE_BADGES: Record<
  string,
  { stage: string; gate: string; label: string }
> = {
  persona_gate: { stage: "Who", gate: "PersonaGate", label: "hold course" },
  timing_gate: { stage: "When", gate: "TimingGate", label: "not a good moment" },
  no_candidates: {
    stage: "What",
    gate: "ScoreFusion",
    label: "no target clears the bar",
  },
  fusion: { stage: "What", gate: "ScoreFusion", label: "switch" },
};

const CROWN_CHOICES = [-3, -2, -1, 1, 2, 3];
const MODE_CHOICES = ["pvp", "path_of_legend"];

function score(x: number): string {
  return x.toFixed(3);
}

function fieldError(
  fieldErrors: Record<string, string>,
  field: string,
): string {
  const msg = fieldErrors[field];
  if (!msg) return "";
  return `<p class="field-error" data-field="${field}">${escapeHtml(msg)}</p>`;
}

export function logMatchForm(
  form: MatchFormState,
  catalog: CardInfo[],
  fieldErrors: Record<string, string>,
): string {
  const picked = new Set(form.deck);
  const cards = catalog
    .map((card) => {
      const id = escapeHtml(card.card_id);
      const on = picked.has(card.card_id) ? " picked" : "";
      return (
        `<button type="button" class="card${on}" data-action="toggle-card" ` +
        `data-card="${id}">${id}<small>${card.elixir_cost}</small></button>`
      );
    })
    .join("");

  const missing = DECK_SIZE - form.deck.length;
  const ready = missing === 0;
  const hint = ready
    ? "deck ready"
    : `select ${missing} more card${missing === 1 ? "" : "s"}`;

  const crowns = CROWN_CHOICES.map(
    (c) =>
      `<option value="${c}"${c === form.crownDiff ? " selected" : ""}>` +
      `${c > 0 ? "+" : ""}${c}</option>`,
  ).join("");
  const modes = MODE_CHOICES.map(
    (m) =>
      `<option value="${m}"${m === form.mode ? " selected" : ""}>${m}</option>`,
  ).join("");
  const radio = (value: string, label: string) =>
    `<label><input type="radio" name="outcome" value="${value}"` +
    `${form.outcome === value ? " checked" : ""}> ${label}</label>`;

  return `
  <div class="deck-picker" data-picked="${form.deck.length}">${cards}</div>
  ${fieldError(fieldErrors, "deck")}
  <div class="form-row">
    <fieldset class="outcome">${radio("win", "Win")}${radio("loss", "Loss")}</fieldset>
    ${fieldError(fieldErrors, "outcome")}
    <label>crowns <select data-field="crown_diff">${crowns}</select></label>
    ${fieldError(fieldErrors, "crown_diff")}
    <label>mode <select data-field="mode">${modes}</select></label>
    ${fieldError(fieldErrors, "mode")}
  </div>
  <div class="form-row">
    <button type="button" data-action="submit-match"${ready ? "" : " disabled"}>
      Log match</button>
    <span class="hint">${hint}</span>
  </div>`;
}

function shortDeck(deck: string[]): string {
  if (deck.length <= 3) return deck.join(", ");
  return `${deck.slice(0, 3).join(", ")} +${deck.length - 3}`;
}

export function timelineList(timeline: TimelineEntry[]): string {
  if (!timeline.length) {
    return `<p class="empty">No matches logged yet.</p>`;
  }
  const items = timeline.map((entry, i) => {
    const p = entry.payload;
    const changed =
      i > 0 && deckKey(p.deck) !== deckKey(timeline[i - 1].payload.deck);
    const bits = [
      `<span class="no">#${i + 1}</span>`,
      `<span class="outcome ${p.outcome}">${p.outcome === "win" ? "W" : "L"}</span>`,
      `<span class="crowns">${p.crown_diff > 0 ? "+" : ""}${p.crown_diff}</span>`,
      `<span class="deck" title="${escapeHtml(p.deck.join(", "))}">` +
        `${escapeHtml(shortDeck(p.deck))}</span>`,
    ];
    if (changed) bits.push(`<span class="badge deck-change">new deck</span>`);
    if (entry.status === "pending") {
      bits.push(`<span class="badge pending">sending</span>`);
    }
    return `<li class="${entry.status}">${bits.join(" ")}</li>`;
  });
  return `<ol class="timeline">${items.join("")}</ol>`;
}

const BARS = "▁▂▃▄▅▆▇█";

export function sparklineBlock(spark: SparklineData): string {
  const bars = spark.winratePoints
    .map((v) => BARS[Math.min(BARS.length - 1, Math.round(v * (BARS.length - 1)))])
    .join("");
  const pct = (x: number | null) =>
    x == null ? "--" : `${Math.round(x * 100)}%`;
  const hot = spark.tiltSignal >= 3 ? " hot" : "";
  return `<div class="sparkline" id="profile-sparkline">
    <span class="trend" title="trailing winrate">${bars || "·"}</span>
    <span class="stat">switch rate ${pct(spark.switchRate)}</span>
    <span class="stat">recent winrate ${pct(spark.recentWinrate)}</span>
    <span class="stat tilt${hot}">tilt ${spark.tiltSignal}L</span>
  </div>`;
}

function candidateTable(candidates: CandidateScore[]): string {
  if (!candidates.length) return "";
  const rows = candidates
    .map((c, i) => {
      const cell = (value: number) =>
        `<td class="num" title="${value}">${score(value)}</td>`;
      return (
        `<tr data-candidate="${c.to_state}" data-rank="${i}" ` +
        `data-fused="${c.fused}" data-quality="${c.quality}" ` +
        `data-adoptability="${c.adoptability}">` +
        `<td class="name">${escapeHtml(c.name)}</td>` +
        cell(c.fused) +
        cell(c.quality) +
        cell(c.adoptability) +
        `</tr>`
      );
    })
    .join("");
  return `<table class="candidates">
    <thead><tr><th>Candidate</th><th>Fused</th><th>Quality</th><th>Adoptability</th></tr></thead>
    <tbody>${rows}</tbody>
  </table>`;
}

function gateBadge(provenance: Provenance): string {
  const badge = GATE_BADGES[provenance];
  if (!badge) return "";
  return (
    `<span class="badge gate ${provenance}" data-provenance="${provenance}">` +
    `${badge.stage} · ${badge.gate}: ${badge.label}</span>`
  );
}

export function advicePanel(
  advice: AdvicePayload | null,
  stale: boolean,
): string {
  const staleBit = stale
    ? `<span class="badge stale">stale</span> ` +
      `<button type="button" data-action="retry-advice">Retry</button>`
    : "";

  if (!advice) {
    const placeholder = stale
      ? `<p class="empty">Advice unavailable.</p>`
      : `<p class="empty">Advice appears once matches are logged.</p>`;
    return `<div class="advice" data-decision="none">${staleBit}${placeholder}</div>`;
  }

  if (advice.provenance === "insufficient_history") {
    const total = advice.match_count + advice.need_matches;
    const pctDone = total ? Math.round((100 * advice.match_count) / total) : 0;
    const plural = advice.need_matches === 1 ? "" : "es";
    return `<div class="advice" data-decision="pending" data-provenance="insufficient_history">
      ${staleBit}
      <p class="progress-label">${advice.need_matches} more match${plural} to unlock advice</p>
      <div class="progress"><div class="bar" style="width:${pctDone}%"></div></div>
      <p class="note">${escapeHtml(advice.explanation)}</p>
    </div>`;
  }

  const heading =
    advice.decision === "switch"
      ? `Switch to ${escapeHtml(advice.target_name ?? "?")}`
      : advice.provenance === "persona_gate"
        ? "Stay (hold course)"
        : "Stay";
  const gateProb =
    advice.gate_prob == null
      ? ""
      : `<span class="stat" title="${advice.gate_prob}">switch-readiness ${score(advice.gate_prob)}</span>`;
  const subtype =
    advice.subtype == null
      ? ""
      : `<span class="stat subtype">${escapeHtml(SUBTYPE_NAMES[advice.subtype] ?? `subtype ${advice.subtype}`)}` +
        `${advice.subtype_provisional ? " (provisional)" : ""}</span>`;
  const from = advice.from_name
    ? `<span class="stat">playing ${escapeHtml(advice.from_name)}</span>`
    : "";

  return `<div class="advice" data-decision="${advice.decision}" data-provenance="${advice.provenance}">
    ${staleBit}
    <h3 class="decision">${heading}</h3>
    <p class="badges">${gateBadge(advice.provenance)}</p>
    <p class="context">${from}${subtype}${gateProb}
      <span class="stat">${advice.match_count} matches seen</span></p>
    ${candidateTable(advice.candidates)}
    <p class="note">${escapeHtml(advice.explanation)}</p>
  </div>`;
}

export function sessionView(
  state: UiSessionState,
  form: MatchFormState,
  catalog: CardInfo[],
): string {
  const head = state.sessionId
    ? `<header><h1>Switch Advisor</h1>
       <span class="session-id">session ${escapeHtml(state.sessionId)}</span>
       <button type="button" data-action="reconcile">Sync</button></header>`
    : `<header><h1>Switch Advisor</h1>
       <button type="button" data-action="new-session">Start session</button></header>`;
  const banner = state.banner
    ? `<div class="banner" role="alert">${escapeHtml(state.banner)}
       <button type="button" data-action="retry-last">Retry</button></div>`
    : "";
  if (!state.sessionId) return `${head}${banner}`;

  return `${head}${banner}<main>
  <section id="log-match-form">
    <h2>Log a match</h2>
    <form data-form="match">${logMatchForm(form, catalog, state.fieldErrors)}</form>
  </section>
  <section id="timeline">
    <h2>Timeline</h2>
    ${sparklineBlock(state.sparkline)}
    ${timelineList(state.timeline)}
  </section>
  <section id="advice-panel">
    <h2>Advice</h2>
    ${advicePanel(state.advice, state.adviceStale)}
  </section>
</main>`;
}
