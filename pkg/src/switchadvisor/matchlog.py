"""Match-log data model, file ingestion, player filters, splits and windows.

File formats (both line-delimited JSON, one record per line):

  matchlog: {"player_id": str, "timestamp": int, "deck": [8 card ids],
             "outcome": "win"|"loss", "crown_diff": int, "mode": str}
  cards:    {"card_id": str, "elixir_cost": int, "func_type": str}

Matches are grouped per player and sorted by timestamp; ``seq_index`` is the
per-player chronological position.  Records in modes other than ``pvp`` /
``path_of_legend`` are dropped at load time (counted, not an error) — every
retained record satisfies the MatchRecord invariants.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

FUNC_TYPES = ("win_condition", "spell", "building", "support")
SUPPORTED_MODES = ("pvp", "path_of_legend")
DECK_SIZE = 8
DEFAULT_WINDOW = 10


class MatchlogError(ValueError):
    """Malformed matchlog or card-catalog input."""


@dataclass(frozen=True, slots=True)
class Card:
    card_id: str
    elixir_cost: int
    func_type: str

    def __post_init__(self):
        if not 1 <= self.elixir_cost <= 9:
            raise MatchlogError(f"card {self.card_id}: elixir_cost {self.elixir_cost} outside [1,9]")
        if self.func_type not in FUNC_TYPES:
            raise MatchlogError(f"card {self.card_id}: unknown func_type {self.func_type!r}")


@dataclass(frozen=True, slots=True)
class MatchRecord:
    player_id: str
    seq_index: int
    timestamp: int
    deck: tuple[str, ...]  # 8 distinct card ids, canonically sorted
    avg_elixir: float
    outcome: str  # "win" | "loss"
    crown_diff: int
    mode: str

    @property
    def won(self) -> bool:
        return self.outcome == "win"


@dataclass(slots=True)
class PlayerHistory:
    player_id: str
    matches: list[MatchRecord]

    def __len__(self) -> int:
        return len(self.matches)

    def deck_changes(self) -> list[bool]:
        """dc_t per match: deck differs from the previous match (dc_0 = False)."""
        flags = [False] * len(self.matches)
        for t in range(1, len(self.matches)):
            flags[t] = self.matches[t].deck != self.matches[t - 1].deck
        return flags

    def post_outcome_counts(self) -> tuple[int, int]:
        """(post-loss, post-win) observation counts: matches whose predecessor
        was a loss resp. a win."""
        post_loss = sum(1 for t in range(1, len(self.matches)) if not self.matches[t - 1].won)
        post_win = sum(1 for t in range(1, len(self.matches)) if self.matches[t - 1].won)
        return post_loss, post_win


@dataclass(slots=True)
class SplitAssignment:
    """Chronological per-player split boundaries over seq_index.

    Ranges are half-open: train = [0, train_end), val = [train_end, val_end),
    test = [val_end, n).
    """

    boundaries: dict[str, tuple[int, int, int]]

    def segments(self, player_id: str) -> dict[str, tuple[int, int]]:
        train_end, val_end, n = self.boundaries[player_id]
        return {"train": (0, train_end), "val": (train_end, val_end), "test": (val_end, n)}


@dataclass(slots=True)
class FilterReport:
    total_players: int = 0
    dropped_matches_other_mode: int = 0
    removed_fewer_than_20_matches: int = 0
    removed_fewer_than_5_post_loss: int = 0
    removed_fewer_than_5_post_win: int = 0
    retained_players: int = 0

    def as_dict(self) -> dict:
        return {
            "total_players": self.total_players,
            "dropped_matches_other_mode": self.dropped_matches_other_mode,
            "removed_fewer_than_20_matches": self.removed_fewer_than_20_matches,
            "removed_fewer_than_5_post_loss": self.removed_fewer_than_5_post_loss,
            "removed_fewer_than_5_post_win": self.removed_fewer_than_5_post_win,
            "retained_players": self.retained_players,
        }


@dataclass(frozen=True, slots=True)
class WindowSpan:
    """A K-match sliding window [start, start+K) plus its supervision target
    at index start+K.  Step features and head targets are materialized in the
    encoder module."""

    player_id: str
    start: int
    length: int
    split: str = "train"

    @property
    def target_index(self) -> int:
        return self.start + self.length


# ---------------------------------------------------------------------------
# Card catalog


def load_cards(path) -> dict[str, Card]:
    catalog: dict[str, Card] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                card = Card(str(rec["card_id"]), int(rec["elixir_cost"]), str(rec["func_type"]))
            except (KeyError, TypeError, ValueError, MatchlogError) as exc:
                raise MatchlogError(f"cards line {line_no}: {exc}") from exc
            if card.card_id in catalog:
                raise MatchlogError(f"cards line {line_no}: duplicate card_id {card.card_id!r}")
            catalog[card.card_id] = card
    return catalog


def save_cards(catalog: dict[str, Card], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for card in catalog.values():
            fh.write(json.dumps({"card_id": card.card_id, "elixir_cost": card.elixir_cost,
                                 "func_type": card.func_type}) + "\n")


def deck_avg_elixir(deck: Sequence[str], catalog: dict[str, Card]) -> float:
    costs = []
    for cid in deck:
        if cid not in catalog:
            raise MatchlogError(f"unknown card_id {cid!r}")
        costs.append(catalog[cid].elixir_cost)
    return sum(costs) / len(costs)


# ---------------------------------------------------------------------------
# Matchlog ingestion


def _parse_match_line(line_no: int, line: str, catalog: dict[str, Card]) -> dict:
    try:
        rec = json.loads(line)
    except json.JSONDecodeError as exc:
        raise MatchlogError(f"line {line_no}: invalid JSON ({exc.msg})") from exc
    for key in ("player_id", "timestamp", "deck", "outcome", "crown_diff", "mode"):
        if key not in rec:
            raise MatchlogError(f"line {line_no}: missing field {key!r}")
    deck = rec["deck"]
    if not isinstance(deck, list) or len(deck) != DECK_SIZE or len(set(deck)) != DECK_SIZE:
        raise MatchlogError(f"line {line_no}: deck must list {DECK_SIZE} distinct card ids")
    for cid in deck:
        if cid not in catalog:
            raise MatchlogError(f"line {line_no}: unknown card_id {cid!r}")
    outcome = rec["outcome"]
    if outcome not in ("win", "loss"):
        raise MatchlogError(f"line {line_no}: outcome must be 'win' or 'loss', got {outcome!r}")
    crown = rec["crown_diff"]
    if not isinstance(crown, int) or not -3 <= crown <= 3:
        raise MatchlogError(f"line {line_no}: crown_diff {crown!r} outside [-3, 3]")
    if crown == 0:
        raise MatchlogError(f"line {line_no}: crown_diff 0 (ties are rejected)")
    if outcome == "win" and crown < 1:
        raise MatchlogError(f"line {line_no}: win requires crown_diff >= 1, got {crown}")
    if outcome == "loss" and crown > -1:
        raise MatchlogError(f"line {line_no}: loss requires crown_diff <= -1, got {crown}")
    if not isinstance(rec["timestamp"], int):
        raise MatchlogError(f"line {line_no}: timestamp must be integer seconds")
    return rec


def load_matchlog(path, catalog: dict[str, Card],
                  report: FilterReport | None = None) -> list[PlayerHistory]:
    """Load a line-delimited matchlog, group by player and sort chronologically.

    Records in unsupported modes are dropped (counted in ``report`` when one
    is passed).  Any malformed line raises :class:`MatchlogError` naming the
    line number.  Returns histories in first-appearance order of players.
    """
    raw: dict[str, list[tuple[int, int, dict]]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            rec = _parse_match_line(line_no, line, catalog)
            if rec["mode"] not in SUPPORTED_MODES:
                if report is not None:
                    report.dropped_matches_other_mode += 1
                continue
            raw.setdefault(rec["player_id"], []).append((rec["timestamp"], line_no, rec))

    histories = []
    for player_id, entries in raw.items():
        entries.sort(key=lambda e: (e[0], e[1]))  # timestamp, then file order
        matches = []
        for seq, (_, _, rec) in enumerate(entries):
            deck = tuple(sorted(rec["deck"]))
            matches.append(MatchRecord(
                player_id=player_id,
                seq_index=seq,
                timestamp=rec["timestamp"],
                deck=deck,
                avg_elixir=deck_avg_elixir(deck, catalog),
                outcome=rec["outcome"],
                crown_diff=rec["crown_diff"],
                mode=rec["mode"],
            ))
        histories.append(PlayerHistory(player_id=player_id, matches=matches))
    return histories


def save_matchlog(histories: Iterable[PlayerHistory], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for hist in histories:
            for m in hist.matches:
                fh.write(json.dumps({
                    "player_id": m.player_id,
                    "timestamp": m.timestamp,
                    "deck": list(m.deck),
                    "outcome": m.outcome,
                    "crown_diff": m.crown_diff,
                    "mode": m.mode,
                }) + "\n")


# ---------------------------------------------------------------------------
# Filters, splits, windows


def apply_filters(histories: Iterable[PlayerHistory],
                  min_matches: int = 20,
                  min_post_loss: int = 5,
                  min_post_win: int = 5,
                  report: FilterReport | None = None) -> tuple[list[PlayerHistory], FilterReport]:
    """Retain players with >= 20 matches, >= 5 post-loss and >= 5 post-win
    observations.  A player failing several rules is counted under each."""
    if report is None:
        report = FilterReport()
    kept = []
    for hist in histories:
        report.total_players += 1
        post_loss, post_win = hist.post_outcome_counts()
        ok = True
        if len(hist) < min_matches:
            report.removed_fewer_than_20_matches += 1
            ok = False
        if post_loss < min_post_loss:
            report.removed_fewer_than_5_post_loss += 1
            ok = False
        if post_win < min_post_win:
            report.removed_fewer_than_5_post_win += 1
            ok = False
        if ok:
            kept.append(hist)
            report.retained_players += 1
    return kept, report


def make_splits(histories: Iterable[PlayerHistory],
                ratios: tuple[float, float, float] = (0.8, 0.1, 0.1)) -> SplitAssignment:
    """Per player: first floor(r_train*n) matches -> train, next floor(r_val*n)
    -> val, remainder -> test."""
    boundaries = {}
    for hist in histories:
        n = len(hist)
        train_end = int(ratios[0] * n)
        val_end = train_end + int(ratios[1] * n)
        boundaries[hist.player_id] = (train_end, val_end, n)
    return SplitAssignment(boundaries=boundaries)


def extract_windows(history: PlayerHistory, k: int = DEFAULT_WINDOW,
                    bounds: tuple[int, int] | None = None,
                    split: str = "train") -> list[WindowSpan]:
    """Sliding stride-1 windows within [lo, hi): window i covers matches
    [i, i+k), target match i+k.  Needs k+1 matches; shorter segments yield []."""
    lo, hi = bounds if bounds is not None else (0, len(history))
    n = hi - lo
    if n < k + 1:
        return []
    return [WindowSpan(history.player_id, lo + i, k, split) for i in range(n - k)]


def split_windows(history: PlayerHistory, assignment: SplitAssignment,
                  k: int = DEFAULT_WINDOW) -> list[WindowSpan]:
    """All windows of a player, segment by segment (never crossing a split
    boundary), in chronological order."""
    spans = []
    for split, bounds in assignment.segments(history.player_id).items():
        spans.extend(extract_windows(history, k, bounds, split))
    return spans


def iter_matches(histories: Iterable[PlayerHistory]) -> Iterator[MatchRecord]:
    for hist in histories:
        yield from hist.matches
