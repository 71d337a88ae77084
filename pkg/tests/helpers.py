"""Hand-rolled builders for small, fully-controlled fixtures."""

import json

from switchadvisor.matchlog import MatchRecord, PlayerHistory, deck_avg_elixir


def make_match(catalog, player_id="p0", seq=0, ts=None, deck=None,
               outcome="win", crown=None, mode="pvp"):
    if deck is None:
        deck = tuple(sorted(catalog)[:8])
    else:
        deck = tuple(sorted(deck))
    if crown is None:
        crown = 1 if outcome == "win" else -1
    return MatchRecord(
        player_id=player_id,
        seq_index=seq,
        timestamp=ts if ts is not None else 1_000 + 60 * seq,
        deck=deck,
        avg_elixir=deck_avg_elixir(deck, catalog),
        outcome=outcome,
        crown_diff=crown,
        mode=mode,
    )


def make_history(catalog, outcomes, player_id="p0", decks=None):
    """Build a history from a win/loss string like 'WLWWL'.  ``decks`` maps
    seq index -> deck to model switches; unlisted indices reuse the default."""
    matches = []
    for i, ch in enumerate(outcomes):
        deck = decks.get(i) if decks else None
        matches.append(make_match(
            catalog, player_id=player_id, seq=i, deck=deck,
            outcome="win" if ch == "W" else "loss"))
    return PlayerHistory(player_id=player_id, matches=matches)


def match_line(catalog, player_id="p0", ts=1000, deck=None, outcome="win",
               crown=None, mode="pvp", **overrides):
    if deck is None:
        deck = sorted(catalog)[:8]
    if crown is None:
        crown = 1 if outcome == "win" else -1
    rec = {"player_id": player_id, "timestamp": ts, "deck": list(deck),
           "outcome": outcome, "crown_diff": crown, "mode": mode}
    rec.update(overrides)
    return json.dumps(rec)
