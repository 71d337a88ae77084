"""Transition events, outcome deltas, and timing labels.

At every window boundary the player either kept their deck (stay) or changed
it (switch).  The raw outcome delta is

    y_tq = WR_next - WR_current

comparing the win rate over the next H matches against the window just
played.  Because losing streaks revert to the mean on their own, a switch is
credited only with what it adds over matched players who stayed:

    delta_net = y_tq - stay_baseline(state, subtype, wr_bucket)

where the baseline table holds mean y_tq of training-split stay events per
(state, subtype, win-rate bucket) cell.  Timing labels mark switches with
delta_net > 0 as positive; stay events are undersampled in the training mix
only, never in val or test.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .matchlog import PlayerHistory, SplitAssignment, extract_windows

BUCKET_EDGES = (0.3, 0.45, 0.55, 0.7)

GOOD_SWITCH, BAD_SWITCH, STAY_NEGATIVE = "good_switch", "bad_switch", "stay_negative"


def wr_bucket(wr: float) -> int:
    """Five fixed half-open buckets over [0, 1]; 1.0 falls in the last."""
    if not 0.0 <= wr <= 1.0:
        raise ValueError(f"win rate {wr} outside [0,1]")
    for b, edge in enumerate(BUCKET_EDGES):
        if wr < edge:
            return b
    return len(BUCKET_EDGES)


@dataclass(slots=True)
class TransitionEvent:
    player_id: str
    window_start: int
    boundary_index: int     # first match of the post-boundary regime
    split: str
    action: str             # "stay" | "switch"
    from_state: int
    to_state: int
    subtype: int
    wins_current: int
    k: int
    wins_next: int
    n_next: int
    stay_baseline: float | None = None
    baseline_level: str | None = None
    delta_net: float | None = None

    @property
    def event_id(self) -> str:
        return f"{self.player_id}:{self.boundary_index}"

    @property
    def wr_current(self) -> float:
        return self.wins_current / self.k

    @property
    def wr_next(self) -> float:
        return self.wins_next / self.n_next

    @property
    def y_tq(self) -> float:
        return self.wr_next - self.wr_current

    @property
    def bucket(self) -> int:
        return wr_bucket(self.wr_current)


@dataclass(slots=True)
class ExtractionReport:
    windows_total: int = 0
    events_kept: int = 0
    dropped_short_horizon: int = 0


def extract_events(histories: list[PlayerHistory],
                   deck_states: dict[tuple[str, ...], int],
                   subtype_labels: dict[str, int],
                   splits: SplitAssignment, k: int = 10, horizon: int = 10,
                   min_next: int = 5,
                   report: ExtractionReport | None = None
                   ) -> list[TransitionEvent]:
    """One event per window boundary with enough post-boundary matches.

    The WR_next horizon never crosses a split boundary; boundaries with
    fewer than min_next observable matches are dropped and counted.
    """
    events: list[TransitionEvent] = []
    for hist in histories:
        wins = [int(m.won) for m in hist.matches]
        states = [deck_states[m.deck] for m in hist.matches]
        decks = [m.deck for m in hist.matches]
        subtype = subtype_labels[hist.player_id]
        for split, (lo, hi) in splits.segments(hist.player_id).items():
            for span in extract_windows(hist, k, (lo, hi), split):
                if report is not None:
                    report.windows_total += 1
                t = span.target_index
                n_next = min(horizon, hi - t)
                if n_next < min_next:
                    if report is not None:
                        report.dropped_short_horizon += 1
                    continue
                switched = decks[t] != decks[t - 1]
                events.append(TransitionEvent(
                    player_id=hist.player_id,
                    window_start=span.start,
                    boundary_index=t,
                    split=split,
                    action="switch" if switched else "stay",
                    from_state=states[t - 1],
                    to_state=states[t],
                    subtype=subtype,
                    wins_current=sum(wins[span.start:t]),
                    k=k,
                    wins_next=sum(wins[t:t + n_next]),
                    n_next=n_next,
                ))
                if report is not None:
                    report.events_kept += 1
    return events


class StayBaselineTable:
    """Mean y_tq of training stay events per (state, subtype, bucket) cell.

    Cells below the support threshold fall back to the (state, subtype)
    aggregate, and to the global stay mean when that is thin too.  Sums are
    accumulated in event order so cell means are exactly reproducible.
    """

    def __init__(self, min_support: int = 5):
        self.min_support = min_support
        self.cells: dict[tuple[int, int, int], list] = {}
        self.su: dict[tuple[int, int], list] = {}
        self.total = [0.0, 0]

    @classmethod
    def build(cls, train_events: list[TransitionEvent],
              min_support: int = 5) -> "StayBaselineTable":
        table = cls(min_support)
        for e in train_events:
            if e.split != "train" or e.action != "stay":
                continue
            y = e.y_tq
            cell = table.cells.setdefault((e.from_state, e.subtype, e.bucket),
                                          [0.0, 0])
            cell[0] += y
            cell[1] += 1
            su = table.su.setdefault((e.from_state, e.subtype), [0.0, 0])
            su[0] += y
            su[1] += 1
            table.total[0] += y
            table.total[1] += 1
        if table.total[1] == 0:
            raise ValueError("no stay events in the training split")
        return table

    def cell_mean(self, state: int, subtype: int, bucket: int) -> float | None:
        cell = self.cells.get((state, subtype, bucket))
        return cell[0] / cell[1] if cell else None

    def lookup(self, state: int, subtype: int, bucket: int) -> tuple[float, str]:
        """Returns (baseline, level) where level records the fallback depth."""
        cell = self.cells.get((state, subtype, bucket))
        if cell and cell[1] >= self.min_support:
            return cell[0] / cell[1], "cell"
        su = self.su.get((state, subtype))
        if su and su[1] >= self.min_support:
            return su[0] / su[1], "state_subtype"
        return self.total[0] / self.total[1], "global"

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("stay-baseline v1\n")
            fh.write(f"min_support {self.min_support}\n")
            fh.write(f"global {self.total[0]!r} {self.total[1]}\n")
            for (s, u), (sm, n) in sorted(self.su.items()):
                fh.write(f"su {s} {u} {sm!r} {n}\n")
            for (s, u, b), (sm, n) in sorted(self.cells.items()):
                fh.write(f"cell {s} {u} {b} {sm!r} {n}\n")

    @classmethod
    def load(cls, path) -> "StayBaselineTable":
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
        if not lines or lines[0] != "stay-baseline v1":
            raise ValueError(f"not a baseline table file: {path}")
        table = cls()
        for line in lines[1:]:
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "min_support":
                table.min_support = int(parts[1])
            elif parts[0] == "global":
                table.total = [float(parts[1]), int(parts[2])]
            elif parts[0] == "su":
                table.su[(int(parts[1]), int(parts[2]))] = [float(parts[3]),
                                                            int(parts[4])]
            elif parts[0] == "cell":
                key = (int(parts[1]), int(parts[2]), int(parts[3]))
                table.cells[key] = [float(parts[4]), int(parts[5])]
            else:
                raise ValueError(f"unknown baseline directive {parts[0]!r}")
        return table


def attach_baselines(events: list[TransitionEvent],
                     table: StayBaselineTable) -> None:
    """Fill stay_baseline / delta_net on every event (stays included; their
    deltas feed negative labels and diagnostics)."""
    for e in events:
        baseline, level = table.lookup(e.from_state, e.subtype, e.bucket)
        e.stay_baseline = baseline
        e.baseline_level = level
        e.delta_net = e.y_tq - baseline


@dataclass(slots=True)
class TimingLabel:
    event_id: str
    label: int
    source: str


def label_event(event: TransitionEvent) -> TimingLabel:
    if event.delta_net is None:
        raise ValueError("event has no delta_net; attach baselines first")
    if event.action == "switch":
        if event.delta_net > 0:
            return TimingLabel(event.event_id, 1, GOOD_SWITCH)
        return TimingLabel(event.event_id, 0, BAD_SWITCH)
    return TimingLabel(event.event_id, 0, STAY_NEGATIVE)


def build_timing_labels(train_events: list[TransitionEvent], seed: int = 0
                        ) -> list[tuple[TransitionEvent, TimingLabel]]:
    """Training mix: every switch event plus stays undersampled to the same
    count (uniform, without replacement, seeded).  Val/test sets are never
    resampled; label those with label_event directly."""
    switches = [e for e in train_events if e.action == "switch"]
    stays = [e for e in train_events if e.action == "stay"]
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    if len(stays) > len(switches):
        idx = rng.choice(len(stays), size=len(switches), replace=False)
        chosen = [stays[i] for i in np.sort(idx)]
    else:
        warnings.warn("fewer stay than switch events; using all stays")
        chosen = stays
    mix = switches + chosen
    return [(e, label_event(e)) for e in mix]


# ---------------------------------------------------------------------------
# Flat event files

_EVENT_FIELDS = ("player_id", "window_start", "boundary_index", "split",
                 "action", "from_state", "to_state", "subtype",
                 "wins_current", "k", "wins_next", "n_next")


def save_events(events: list[TransitionEvent], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\t".join(_EVENT_FIELDS) + "\n")
        for e in events:
            fh.write("\t".join(str(getattr(e, f)) for f in _EVENT_FIELDS) + "\n")


def load_events(path) -> list[TransitionEvent]:
    events = []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split("\t")
        if header != list(_EVENT_FIELDS):
            raise ValueError(f"unexpected event file header in {path}")
        for line in fh:
            v = line.rstrip("\n").split("\t")
            events.append(TransitionEvent(
                player_id=v[0], window_start=int(v[1]), boundary_index=int(v[2]),
                split=v[3], action=v[4], from_state=int(v[5]), to_state=int(v[6]),
                subtype=int(v[7]), wins_current=int(v[8]), k=int(v[9]),
                wins_next=int(v[10]), n_next=int(v[11])))
    return events
