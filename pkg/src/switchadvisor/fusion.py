"""Candidate construction and score fusion for switch targets.

Candidates for a (subtype, from_state) context are the cross-state targets
seen at least `min_support` times in training for that context, minus any
whose predicted quality is non-positive.  Each survivor gets an adoptability
score (how often players like this make that move) and a predicted quality
score; the two are fused as

    score(s') = alpha * norm_adopt(s') + (1 - alpha) * tanh(y_hat / scale)

with adoptability min-max normalized within the candidate set of one query.
An empty candidate set means Stay.

The adoptability scorer is pluggable; the default is Laplace-smoothed
transition frequency, which is all the fusion needs since scores are
re-normalized per query anyway.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Protocol

import numpy as np

from .policyeval import switch_gap
from .transition import TransitionEvent

N_STATES = 13
MIN_SUPPORT = 3


@dataclass(slots=True)
class FusionConfig:
    alpha: float = 0.5
    scale: float = 0.1
    grid: tuple[float, ...] = tuple(round(0.1 * i, 1) for i in range(11))

    def validate(self) -> None:
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must be in [0, 1], got {self.alpha}")
        if self.scale <= 0:
            raise ValueError(f"scale must be positive, got {self.scale}")


class TransitionCounts:
    """count(u, s -> s') over training cross-state switches."""

    def __init__(self):
        self.table: dict[tuple[int, int], dict[int, int]] = {}

    @classmethod
    def from_events(cls, events: list[TransitionEvent]) -> "TransitionCounts":
        counts = cls()
        for e in events:
            if e.split != "train" or e.action != "switch":
                continue
            if e.to_state == e.from_state:
                continue
            cell = counts.table.setdefault((e.subtype, e.from_state), {})
            cell[e.to_state] = cell.get(e.to_state, 0) + 1
        return counts

    def count(self, subtype: int, from_state: int, to_state: int) -> int:
        return self.table.get((subtype, from_state), {}).get(to_state, 0)

    def total(self, subtype: int, from_state: int) -> int:
        return sum(self.table.get((subtype, from_state), {}).values())

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("transition-counts v1\n")
            for (u, s), cell in sorted(self.table.items()):
                for s2, c in sorted(cell.items()):
                    fh.write(f"{u} {s} {s2} {c}\n")

    @classmethod
    def load(cls, path) -> "TransitionCounts":
        counts = cls()
        with open(path, encoding="utf-8") as fh:
            if fh.readline().strip() != "transition-counts v1":
                raise ValueError(f"not a transition-counts file: {path}")
            for line in fh:
                u, s, s2, c = line.split()
                cell = counts.table.setdefault((int(u), int(s)), {})
                cell[int(s2)] = int(c)
        return counts


class AdoptabilityScorer(Protocol):
    def score(self, subtype: int, from_state: int, to_state: int) -> float: ...


class LaplaceAdoptability:
    """(count + 1) / (total + n_states); always finite, always in (0, 1)."""

    def __init__(self, counts: TransitionCounts, n_states: int = N_STATES):
        self.counts = counts
        self.n_states = n_states

    def score(self, subtype: int, from_state: int, to_state: int) -> float:
        c = self.counts.count(subtype, from_state, to_state)
        t = self.counts.total(subtype, from_state)
        return (c + 1) / (t + self.n_states)


@dataclass(slots=True)
class Candidate:
    to_state: int
    adoptability: float
    y_tq: float
    norm_adopt: float = 0.0
    fused: float = 0.0


@dataclass(slots=True)
class CandidateSet:
    subtype: int
    from_state: int
    candidates: list[Candidate] = field(default_factory=list)


def build_candidates(subtype: int, from_state: int, counts: TransitionCounts,
                     scorer: AdoptabilityScorer,
                     quality_fn: Callable[[int], float],
                     min_support: int = MIN_SUPPORT) -> CandidateSet:
    """quality_fn maps a target state to the quality model's prediction for
    this context; the caller binds the player features."""
    out = CandidateSet(subtype, from_state)
    cell = counts.table.get((subtype, from_state), {})
    for to_state in sorted(cell):
        if to_state == from_state or cell[to_state] < min_support:
            continue
        y_hat = float(quality_fn(to_state))
        if y_hat <= 0.0:
            continue
        out.candidates.append(Candidate(
            to_state=to_state,
            adoptability=float(scorer.score(subtype, from_state, to_state)),
            y_tq=y_hat))
    return out


def fuse_scores(candidates: list[Candidate], alpha: float,
                scale: float = 0.1) -> list[Candidate]:
    """Fills norm_adopt and fused in place and returns the list."""
    if not candidates:
        return candidates
    raw = np.array([c.adoptability for c in candidates])
    lo, hi = raw.min(), raw.max()
    norm = np.ones_like(raw) if hi == lo else (raw - lo) / (hi - lo)
    for c, nv in zip(candidates, norm):
        c.norm_adopt = float(nv)
        c.fused = float(alpha * nv + (1 - alpha) * np.tanh(c.y_tq / scale))
    return candidates


def rank_candidates(candidates: list[Candidate]) -> list[Candidate]:
    """Highest fused first; ties prefer larger y_tq, then lower state id."""
    return sorted(candidates, key=lambda c: (-c.fused, -c.y_tq, c.to_state))


@dataclass(slots=True)
class Recommendation:
    decision: str                      # "stay" or "switch"
    target: int | None
    gate_prob: float | None
    provenance: str                    # persona_gate | timing_gate | no_candidates | fusion
    candidates: list[Candidate] = field(default_factory=list)


def recommend(subtype: int, from_state: int, gate_prob: float | None,
              theta: float, counts: TransitionCounts,
              scorer: AdoptabilityScorer, quality_fn: Callable[[int], float],
              config: FusionConfig | None = None) -> Recommendation:
    """Full Who -> When -> What decision for one context.  gate_prob may be
    None only when the persona gate already said Stay (subtype 0)."""
    config = config or FusionConfig()
    config.validate()
    if subtype == 0:
        return Recommendation("stay", None, None, "persona_gate")
    if gate_prob is None:
        raise ValueError("gate_prob is required for forwarded subtypes")
    if gate_prob < theta:
        return Recommendation("stay", None, gate_prob, "timing_gate")
    cand_set = build_candidates(subtype, from_state, counts, scorer, quality_fn)
    if not cand_set.candidates:
        return Recommendation("stay", None, gate_prob, "no_candidates")
    ranked = rank_candidates(
        fuse_scores(cand_set.candidates, config.alpha, config.scale))
    return Recommendation("switch", ranked[0].to_state, gate_prob, "fusion",
                          ranked)


# ---------------------------------------------------------------------------
# Alpha tuning

@dataclass(slots=True)
class AlphaTuningRow:
    gate_approved: bool
    candidates: list[Candidate]        # post-filter, adoptability + y_tq set
    actual_to: int
    y_tq: float
    is_switch: bool


def pipeline_gap_at_alpha(rows: list[AlphaTuningRow], alpha: float,
                          scale: float = 0.1) -> float | None:
    """Validation switch gap with the event counted as approved only when
    the fused top target matches the logged transition; approval through the
    gate alone is alpha-independent, so target agreement is what the grid
    search can actually move."""
    y, approved = [], []
    for row in rows:
        if not row.is_switch:
            continue
        ok = False
        if row.gate_approved and row.candidates:
            ranked = rank_candidates(fuse_scores(list(row.candidates), alpha,
                                                 scale))
            ok = ranked[0].to_state == row.actual_to
        y.append(row.y_tq)
        approved.append(ok)
    if not y:
        return None
    return switch_gap(np.array(y), np.array(approved))


def tune_alpha(rows: list[AlphaTuningRow], config: FusionConfig | None = None
               ) -> tuple[float, list[tuple[float, float | None]]]:
    """Grid search over alpha; ties keep the smaller value.  Returns the
    chosen alpha and the (alpha, gap) diagnostics."""
    config = config or FusionConfig()
    best_alpha = None
    best_gap = None
    diagnostics = []
    for alpha in config.grid:
        gap = pipeline_gap_at_alpha(rows, alpha, config.scale)
        diagnostics.append((alpha, gap))
        if gap is None:
            continue
        if best_gap is None or gap > best_gap:
            best_gap = gap
            best_alpha = alpha
    if best_alpha is None:
        warnings.warn("no alpha produced a defined validation gap; "
                      "defaulting to 0.5")
        return 0.5, diagnostics
    return best_alpha, diagnostics


def save_fusion_config(config: FusionConfig, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("fusion-config v1\n")
        fh.write(f"alpha {repr(config.alpha)}\n")
        fh.write(f"scale {repr(config.scale)}\n")
        fh.write("grid " + ",".join(repr(g) for g in config.grid) + "\n")


def load_fusion_config(path) -> FusionConfig:
    with open(path, encoding="utf-8") as fh:
        if fh.readline().strip() != "fusion-config v1":
            raise ValueError(f"not a fusion-config file: {path}")
        fields = dict(line.strip().split(" ", 1) for line in fh)
    return FusionConfig(alpha=float(fields["alpha"]),
                        scale=float(fields["scale"]),
                        grid=tuple(float(g) for g in fields["grid"].split(",")))
