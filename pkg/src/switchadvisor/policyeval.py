"""Offline policy evaluation on logged test events.

A policy approves or rejects a potential switch at each boundary event.  The
headline metric is the switch gap: among events where the player actually
switched, the mean observed delta of approved events minus that of rejected
ones.  It is undefined (rendered "---") when either side is empty, e.g. for
policies that approve everything.  Rec_TQP and Prec@1 are computed over the
approved actual-switch set, using the shared quality model's prediction for
the logged transition.

Prec@1 scores the observed transition's outcome even when the policy
recommended a different target; this is an offline-evaluation limitation,
stated in every emitted report.

Evaluation is restricted to events whose players belong to subtypes 1 and 2;
loyalists receive Stay upstream and are absent by construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .matchlog import PlayerHistory, SplitAssignment
from .transition import TransitionEvent

N_STATES = 13

OFFLINE_NOTE = ("note: Prec@1 and Rec_TQP score the logged transition even when "
                "the policy recommended a different target (offline evaluation).")


def switch_gap(y: np.ndarray, approved: np.ndarray) -> float | None:
    """Mean y over approved minus mean over rejected; None if a side is empty.
    Callers pass y/approved restricted to actual-switch events."""
    approved = np.asarray(approved, dtype=bool)
    if not approved.any() or approved.all():
        return None
    return float(y[approved].mean() - y[~approved].mean())


@dataclass(slots=True)
class PolicyDecisions:
    name: str
    approved: np.ndarray            # (N,) bool
    targets: np.ndarray             # (N,) int state id, -1 when none


@dataclass(slots=True)
class PolicyMetrics:
    n_events: int
    switch_rate: float
    n_approved_switch: int
    gap: float | None
    rec_tqp: float | None
    prec_at_1: float | None

    def row(self, name: str) -> list[str]:
        def pct(v, signed=False):
            if v is None:
                return "---"
            return f"{v * 100:+.1f}" if signed else f"{v * 100:.1f}"
        return [name, pct(self.switch_rate), pct(self.gap, signed=True),
                pct(self.rec_tqp, signed=True), pct(self.prec_at_1)]


def evaluate_policy(events: list[TransitionEvent], decisions: PolicyDecisions,
                    pred_y: np.ndarray) -> PolicyMetrics:
    """pred_y holds the quality model's prediction for each logged event's
    actual (from, to) pair; it is the shared lens for Rec_TQP."""
    approved = decisions.approved
    y = np.array([e.y_tq for e in events])
    is_switch = np.array([e.action == "switch" for e in events])
    app_switch = approved & is_switch
    n_app_switch = int(app_switch.sum())
    return PolicyMetrics(
        n_events=len(events),
        switch_rate=float(approved.mean()) if len(events) else 0.0,
        n_approved_switch=n_app_switch,
        gap=switch_gap(y[is_switch], approved[is_switch]),
        rec_tqp=float(pred_y[app_switch].mean()) if n_app_switch else None,
        prec_at_1=float((y[app_switch] > 0).mean()) if n_app_switch else None,
    )


def subtype_breakdown(events: list[TransitionEvent],
                      decisions: PolicyDecisions, pred_y: np.ndarray
                      ) -> dict[int, PolicyMetrics]:
    out: dict[int, PolicyMetrics] = {}
    for sub in (1, 2):
        mask = np.array([e.subtype == sub for e in events])
        if not mask.any():
            continue
        sub_events = [e for e, m in zip(events, mask) if m]
        sub_dec = PolicyDecisions(decisions.name, decisions.approved[mask],
                                  decisions.targets[mask])
        out[sub] = evaluate_policy(sub_events, sub_dec, pred_y[mask])
    return out


# ---------------------------------------------------------------------------
# Baseline policies

@dataclass(slots=True)
class BaselineAux:
    state_winrate: np.ndarray                    # (13,) train population mean
    player_index: dict[str, int]
    player_state_wr: np.ndarray                  # (P, 13), nan when unseen
    cf_pred: np.ndarray                          # (P, 13) completed matrix
    last_k_target: dict[tuple[str, int], int]    # (player, from) -> mode target


def _als_complete(matrix: np.ndarray, rank: int = 8, iters: int = 20,
                  reg: float = 0.1, seed: int = 0) -> np.ndarray:
    """Alternating least squares on the observed entries of a matrix with
    NaN holes; returns the completed low-rank reconstruction."""
    observed = ~np.isnan(matrix)
    filled = np.where(observed, matrix, 0.0)
    n_rows, n_cols = matrix.shape
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed,
                                                       spawn_key=(11,)))
    U = rng.normal(0.0, 0.1, (n_rows, rank))
    V = rng.normal(0.0, 0.1, (n_cols, rank))
    eye = reg * np.eye(rank)
    for _ in range(iters):
        for i in range(n_rows):
            o = observed[i]
            if not o.any():
                U[i] = 0.0
                continue
            Vo = V[o]
            U[i] = np.linalg.solve(Vo.T @ Vo + eye, Vo.T @ filled[i, o])
        for j in range(n_cols):
            o = observed[:, j]
            if not o.any():
                V[j] = 0.0
                continue
            Uo = U[o]
            V[j] = np.linalg.solve(Uo.T @ Uo + eye, Uo.T @ filled[o, j])
    return U @ V.T


def build_baseline_aux(histories: list[PlayerHistory], splits: SplitAssignment,
                       deck_states: dict[tuple[str, ...], int],
                       train_events: list[TransitionEvent],
                       seed: int = 0) -> BaselineAux:
    """All baseline inputs come from the training split only."""
    state_wins = np.zeros(N_STATES)
    state_counts = np.zeros(N_STATES)
    player_index = {h.player_id: i for i, h in enumerate(histories)}
    pw = np.zeros((len(histories), N_STATES))
    pc = np.zeros((len(histories), N_STATES))
    for h in histories:
        train_end, _, _ = splits.boundaries[h.player_id]
        row = player_index[h.player_id]
        for m in h.matches[:train_end]:
            s = deck_states[m.deck]
            state_wins[s] += m.won
            state_counts[s] += 1
            pw[row, s] += m.won
            pc[row, s] += 1
    with np.errstate(invalid="ignore"):
        state_winrate = np.where(state_counts > 0, state_wins / state_counts,
                                 np.nan)
        player_state_wr = np.where(pc > 0, pw / pc, np.nan)

    counts: dict[tuple[str, int], dict[int, int]] = {}
    for e in train_events:
        if e.split != "train" or e.action != "switch" or e.to_state == e.from_state:
            continue
        cell = counts.setdefault((e.player_id, e.from_state), {})
        cell[e.to_state] = cell.get(e.to_state, 0) + 1
    last_k = {key: min(targets, key=lambda t: (-targets[t], t))
              for key, targets in counts.items()}

    cf_pred = _als_complete(player_state_wr, seed=seed)
    return BaselineAux(state_winrate, player_index, player_state_wr, cf_pred,
                       last_k)


def run_baseline(name: str, events: list[TransitionEvent], aux: BaselineAux,
                 tau: float = 0.02, seed: int = 0) -> PolicyDecisions:
    n = len(events)
    approved = np.zeros(n, dtype=bool)
    targets = np.full(n, -1, dtype=np.int64)
    if name == "always_stay":
        pass
    elif name == "always_switch":
        approved[:] = True
    elif name == "wr_threshold":
        rng = np.random.default_rng(np.random.SeedSequence(entropy=seed,
                                                           spawn_key=(3,)))
        for i, e in enumerate(events):
            if e.wr_current < 0.45:
                approved[i] = True
                others = [s for s in range(N_STATES) if s != e.from_state]
                targets[i] = others[int(rng.integers(len(others)))]
    elif name == "population_oracle":
        means = aux.state_winrate
        best = int(np.nanargmax(means))
        for i, e in enumerate(events):
            if np.isnan(means[e.from_state]):
                continue
            if means[e.from_state] < means[best] - tau:
                approved[i] = True
                targets[i] = best
    elif name == "collaborative_filtering":
        for i, e in enumerate(events):
            row = aux.player_index.get(e.player_id)
            if row is None:
                continue
            pred = aux.cf_pred[row]
            best = int(np.argmax(pred))
            if best != e.from_state and pred[best] - pred[e.from_state] > 0:
                approved[i] = True
                targets[i] = best
    elif name == "last_k":
        approved[:] = True
        for i, e in enumerate(events):
            targets[i] = aux.last_k_target.get((e.player_id, e.from_state), -1)
    else:
        raise ValueError(f"unknown baseline {name!r}")
    return PolicyDecisions(name, approved, targets)


BASELINE_NAMES = ("always_stay", "always_switch", "wr_threshold",
                  "population_oracle", "collaborative_filtering", "last_k")


# ---------------------------------------------------------------------------
# Incremental ablation (configurations a-d)

@dataclass(slots=True)
class AblationInputs:
    gate_approved: np.ndarray    # (N,) bool, TimingGate decision per event
    fused_target: np.ndarray     # (N,) int, fused top candidate or -1 if none


def run_ablation(events: list[TransitionEvent], inputs: AblationInputs,
                 pred_y: np.ndarray) -> list[tuple[str, PolicyMetrics]]:
    """Rows (a)-(d): approve-all, +persona (identical population), +gate,
    +fusion (gate and non-empty candidates)."""
    n = len(events)
    all_on = np.ones(n, dtype=bool)
    has_candidates = inputs.fused_target >= 0
    configs = [
        ("(a) adoptability only", all_on, inputs.fused_target),
        ("(b) + persona gate", all_on, inputs.fused_target),
        ("(c) + timing gate", inputs.gate_approved, inputs.fused_target),
        ("(d) + quality fusion", inputs.gate_approved & has_candidates,
         inputs.fused_target),
    ]
    rows = []
    for name, approved, targets in configs:
        dec = PolicyDecisions(name, approved, np.where(approved, targets, -1))
        rows.append((name, evaluate_policy(events, dec, pred_y)))
    return rows


# ---------------------------------------------------------------------------
# Report emission

REPORT_COLUMNS = ("Policy", "Sw%", "SwitchGap", "Rec_TQP", "Prec@1")


def format_report(rows: list[tuple[str, PolicyMetrics]],
                  title: str = "offline policy evaluation") -> str:
    table = [list(REPORT_COLUMNS)]
    for name, metrics in rows:
        table.append(metrics.row(name))
    widths = [max(len(r[c]) for r in table) for c in range(len(REPORT_COLUMNS))]
    lines = [title, OFFLINE_NOTE]
    for r, row in enumerate(table):
        lines.append("  ".join(cell.ljust(widths[c])
                               for c, cell in enumerate(row)).rstrip())
        if r == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def save_report(rows: list[tuple[str, PolicyMetrics]], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("policy-eval v1\n")
        fh.write(f"# {OFFLINE_NOTE}\n")
        for name, m in rows:
            fields = [name.replace(" ", "_"), str(m.n_events),
                      repr(m.switch_rate), str(m.n_approved_switch)]
            for v in (m.gap, m.rec_tqp, m.prec_at_1):
                fields.append("---" if v is None else repr(v))
            fh.write(" ".join(fields) + "\n")
