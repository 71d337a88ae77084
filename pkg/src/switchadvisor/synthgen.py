"""Synthetic match-log generator with planted structure.

Every downstream component is tested against corpora from this module: deck
archetypes are planted as 13 structural templates, player behavior follows a
three-regime switching automaton (loyalist / loss-reactive / flex), and match
outcomes are driven by a latent win probability

    p = clamp(tier_base + mastery - opponent_meta + state_penalty, 0.05, 0.95)

where mastery grows with consecutive use of the same deck and is partially
lost on switches.  The generator emits the matchlog plus a ground-truth file
(planted subtype per player, planted archetype per deck, latent p per match)
that the pipeline itself never reads.

Generation is deterministic: player i draws from a generator seeded by
(master_seed, sha256(player_id)), so per-player streams are independent of
iteration order.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .matchlog import Card, MatchRecord, PlayerHistory

N_STATES = 13

STATE_NAMES = {
    0: ("Beatdown", "All-In Beatdown"),
    1: ("Control", "Unit-Heavy Control"),
    2: ("Control", "Standard Control"),
    3: ("Control", "Bridge Spam"),
    4: ("Cycle", "Classic Cycle"),
    5: ("Beatdown", "Classic Beatdown"),
    6: ("Beatdown", "Defensive Heavy"),
    7: ("Cycle", "Hyper Cycle"),
    8: ("Specialist", "Three Musketeers"),
    9: ("Beatdown", "Siege / Heavy Control"),
    10: ("Beatdown", "Defensive Heavy Variant"),
    11: ("Cycle", "Off-Meta Cycle"),
    12: ("Specialist", "Spell Cycle / Troll"),
}

# Deck templates as (func_type, cost) multisets.  Swapping cards for other
# variants of the same func_type keeps the four type ratios exactly constant,
# so planted archetypes stay separable under within-state noise.
STATE_TEMPLATES: dict[int, list[tuple[str, int]]] = {
    0: [("win_condition", 8), ("win_condition", 6), ("support", 5), ("support", 5),
        ("support", 4), ("support", 4), ("spell", 5), ("spell", 3)],
    1: [("win_condition", 4), ("support", 5), ("support", 4), ("support", 4),
        ("support", 3), ("support", 3), ("support", 2), ("spell", 3)],
    2: [("win_condition", 5), ("building", 4), ("spell", 6), ("spell", 3),
        ("support", 4), ("support", 4), ("support", 3), ("support", 2)],
    3: [("win_condition", 4), ("win_condition", 4), ("win_condition", 3), ("support", 4),
        ("support", 3), ("spell", 2), ("spell", 3), ("building", 5)],
    4: [("win_condition", 4), ("building", 3), ("building", 2), ("spell", 3),
        ("support", 1), ("support", 2), ("support", 2), ("support", 4)],
    5: [("win_condition", 7), ("support", 6), ("support", 5), ("support", 4),
        ("support", 4), ("support", 3), ("spell", 4), ("spell", 2)],
    6: [("building", 6), ("building", 4), ("win_condition", 5), ("support", 5),
        ("support", 4), ("support", 3), ("spell", 4), ("spell", 6)],
    7: [("win_condition", 3), ("spell", 1), ("spell", 2), ("support", 1),
        ("support", 1), ("support", 2), ("support", 2), ("building", 3)],
    8: [("support", 9), ("support", 9), ("win_condition", 3), ("support", 4),
        ("support", 2), ("spell", 2), ("spell", 1), ("building", 5)],
    9: [("win_condition", 8), ("building", 5), ("building", 3), ("spell", 6),
        ("spell", 2), ("support", 3), ("support", 2), ("support", 5)],
    10: [("building", 6), ("building", 4), ("building", 3), ("win_condition", 6),
         ("support", 5), ("support", 4), ("spell", 5), ("spell", 3)],
    11: [("win_condition", 4), ("spell", 1), ("spell", 1), ("spell", 2),
         ("support", 1), ("support", 2), ("support", 2), ("support", 3)],
    12: [("win_condition", 3), ("spell", 1), ("spell", 2), ("spell", 2),
         ("spell", 3), ("spell", 4), ("support", 1), ("building", 2)],
}

VARIANTS = ("a", "b", "c")


@dataclass(slots=True)
class SubtypeParams:
    p_switch_after_loss: float
    p_switch_after_win: float
    within_state_adjust_prob: float

    def validate(self):
        for p in (self.p_switch_after_loss, self.p_switch_after_win,
                  self.within_state_adjust_prob):
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"probability {p} outside [0,1]")


@dataclass(slots=True)
class GeneratorConfig:
    n_players: int = 2000
    matches_per_player: tuple[int, int] = (180, 220)
    subtype_mix: tuple[float, float, float] = (0.481, 0.160, 0.359)
    subtype_params: tuple[SubtypeParams, ...] = (
        SubtypeParams(0.003, 0.001, 0.95),  # loyalist: near-zero switching
        SubtypeParams(0.487, 0.064, 0.35),  # loss-reactive switcher
        SubtypeParams(0.148, 0.066, 0.5),   # flex player
    )
    tier_base_winrates: tuple[float, ...] = (0.46, 0.50, 0.54)
    mastery_gain: float = 0.005
    mastery_cap: float = 0.06
    mastery_retain_cross: float = 0.3
    mastery_retain_within: float = 0.8
    # one weak state per major group; escaping one is the planted "good switch"
    state_meta_penalty: dict[int, float] = field(
        default_factory=lambda: {3: -0.06, 7: -0.05, 12: -0.08})
    opponent_meta_std: float = 0.02
    mode: str = "pvp"
    start_epoch: int = 1_700_000_000
    rng_seed: int = 0

    def validate(self):
        if abs(sum(self.subtype_mix) - 1.0) > 1e-9:
            raise ValueError("subtype_mix must sum to 1")
        for p in self.subtype_mix:
            if not 0.0 <= p <= 1.0:
                raise ValueError("subtype_mix entries must be in [0,1]")
        for params in self.subtype_params:
            params.validate()
        for s in self.state_meta_penalty:
            if s not in STATE_TEMPLATES:
                raise ValueError(f"state_meta_penalty references unknown state {s}")


@dataclass(slots=True)
class GroundTruth:
    player_subtype: dict[str, int]
    player_tier: dict[str, int]
    deck_state: dict[tuple[str, ...], int]
    match_latent_p: dict[str, list[float]]

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for pid in self.player_subtype:
                fh.write(json.dumps({"kind": "player", "player_id": pid,
                                     "subtype": self.player_subtype[pid],
                                     "tier": self.player_tier[pid]}) + "\n")
            for deck, state in self.deck_state.items():
                fh.write(json.dumps({"kind": "deck", "deck": list(deck),
                                     "state": state}) + "\n")
            for pid, ps in self.match_latent_p.items():
                fh.write(json.dumps({"kind": "latent", "player_id": pid,
                                     "p": [round(p, 6) for p in ps]}) + "\n")

    @classmethod
    def load(cls, path) -> "GroundTruth":
        gt = cls({}, {}, {}, {})
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                rec = json.loads(line)
                if rec["kind"] == "player":
                    gt.player_subtype[rec["player_id"]] = rec["subtype"]
                    gt.player_tier[rec["player_id"]] = rec["tier"]
                elif rec["kind"] == "deck":
                    gt.deck_state[tuple(rec["deck"])] = rec["state"]
                elif rec["kind"] == "latent":
                    gt.match_latent_p[rec["player_id"]] = rec["p"]
        return gt


def _card_id(func: str, cost: int, variant: str) -> str:
    return f"{func}_{cost}{variant}"


def generate_cards(config: GeneratorConfig | None = None) -> dict[str, Card]:
    """Deterministic catalog: every func_type at every cost 1..9, three
    variants each (108 cards), enough for all 13 templates plus swaps."""
    catalog: dict[str, Card] = {}
    for func in ("win_condition", "spell", "building", "support"):
        for cost in range(1, 10):
            for variant in VARIANTS:
                cid = _card_id(func, cost, variant)
                catalog[cid] = Card(cid, cost, func)
    return catalog


def _stable_hash(text: str) -> int:
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:8], "big")


def player_rng(master_seed: int, player_id: str) -> np.random.Generator:
    return np.random.default_rng(
        np.random.SeedSequence(entropy=master_seed, spawn_key=(_stable_hash(player_id),)))


def _instantiate_deck(state: int, rng: np.random.Generator, catalog: dict[str, Card],
                      noise_swaps: int) -> tuple[str, ...]:
    """Build a deck from a state template, picking variants per duplicate slot,
    then apply a few within-state style swaps as noise."""
    used: dict[tuple[str, int], int] = {}
    cards = []
    for func, cost in STATE_TEMPLATES[state]:
        idx = used.get((func, cost), 0)
        used[(func, cost)] = idx + 1
        cards.append(_card_id(func, cost, VARIANTS[idx]))
    deck = tuple(sorted(cards))
    for _ in range(noise_swaps):
        deck = _swap_one_card(deck, rng, catalog)
    return deck


def _swap_one_card(deck: tuple[str, ...], rng: np.random.Generator,
                   catalog: dict[str, Card]) -> tuple[str, ...]:
    """Replace one card with an unused same-func variant at the same cost
    (mostly) or +-1 cost, always producing a different 8-card set."""
    order = rng.permutation(len(deck))
    for pos in order:
        old = catalog[deck[int(pos)]]
        if rng.random() < 0.8:
            cost_options = [old.elixir_cost]
        else:
            cost_options = [c for c in (old.elixir_cost - 1, old.elixir_cost + 1)
                            if 1 <= c <= 9]
        candidates = [
            _card_id(old.func_type, cost, v)
            for cost in cost_options for v in VARIANTS
            if _card_id(old.func_type, cost, v) not in deck
        ]
        if candidates:
            new_card = candidates[int(rng.integers(len(candidates)))]
            rest = [c for c in deck if c != old.card_id]
            return tuple(sorted(rest + [new_card]))
    return deck  # catalog guarantees candidates; defensive fallback


def _same_group_states(state: int) -> list[int]:
    group = STATE_NAMES[state][0]
    return [s for s in STATE_NAMES if STATE_NAMES[s][0] == group and s != state]


def _pick_cross_state(subtype: int, state: int, primary: int,
                      rng: np.random.Generator) -> int:
    others = [s for s in range(N_STATES) if s != state]
    if subtype == 2 and state != primary:
        return primary  # basecamp: excursions return to the main strategy
    same_group = _same_group_states(state)
    if subtype in (1, 2) and same_group and rng.random() < 0.7:
        return int(same_group[int(rng.integers(len(same_group)))])
    return int(others[int(rng.integers(len(others)))])


def _sample_crown(won: bool, u: float) -> int:
    # decisive outcomes only; margin distribution (.55, .30, .15)
    mag = 1 if u < 0.55 else (2 if u < 0.85 else 3)
    return mag if won else -mag


def generate_player(player_id: str, config: GeneratorConfig,
                    catalog: dict[str, Card], subtype: int, tier: int,
                    n_matches: int, rng: np.random.Generator,
                    deck_state: dict[tuple[str, ...], int]) -> tuple[PlayerHistory, list[float]]:
    params = config.subtype_params[subtype]
    state = int(rng.integers(N_STATES))
    primary = state
    deck = _instantiate_deck(state, rng, catalog, int(rng.integers(3)))
    deck_state.setdefault(deck, state)
    mastery = 0.0
    ts = config.start_epoch + int(rng.integers(0, 365 * 24 * 3600))

    u_outcome = rng.random(n_matches)
    u_switch = rng.random(n_matches)
    u_within = rng.random(n_matches)
    u_crown = rng.random(n_matches)
    meta = rng.normal(0.0, config.opponent_meta_std, n_matches) \
        if config.opponent_meta_std > 0 else np.zeros(n_matches)
    gaps = (120 + rng.exponential(1800, n_matches)).astype(int)

    matches: list[MatchRecord] = []
    latent: list[float] = []
    costs_cache: dict[tuple[str, ...], float] = {}
    for t in range(n_matches):
        p = config.tier_base_winrates[tier] + mastery - meta[t] \
            + config.state_meta_penalty.get(state, 0.0)
        p = min(0.95, max(0.05, p))
        latent.append(p)
        won = bool(u_outcome[t] < p)
        if deck not in costs_cache:
            costs_cache[deck] = sum(catalog[c].elixir_cost for c in deck) / len(deck)
        matches.append(MatchRecord(
            player_id=player_id, seq_index=t, timestamp=ts, deck=deck,
            avg_elixir=costs_cache[deck], outcome="win" if won else "loss",
            crown_diff=_sample_crown(won, u_crown[t]), mode=config.mode,
        ))
        ts += int(gaps[t])

        # deck for match t+1: outcome-conditioned switch decision
        mastery = min(mastery + config.mastery_gain, config.mastery_cap)
        p_switch = params.p_switch_after_win if won else params.p_switch_after_loss
        if u_switch[t] < p_switch:
            if u_within[t] < params.within_state_adjust_prob:
                deck = _swap_one_card(deck, rng, catalog)
                mastery *= config.mastery_retain_within
            else:
                state = _pick_cross_state(subtype, state, primary, rng)
                deck = _instantiate_deck(state, rng, catalog, int(rng.integers(3)))
                mastery *= config.mastery_retain_cross
            deck_state.setdefault(deck, state)
    return PlayerHistory(player_id=player_id, matches=matches), latent


def generate_population(config: GeneratorConfig,
                        catalog: dict[str, Card] | None = None
                        ) -> tuple[list[PlayerHistory], GroundTruth]:
    """Generate the full population; see module docstring for the automaton."""
    config.validate()
    if catalog is None:
        catalog = generate_cards(config)
    mix = np.asarray(config.subtype_mix)
    histories: list[PlayerHistory] = []
    gt = GroundTruth({}, {}, {}, {})
    lo, hi = config.matches_per_player
    for i in range(config.n_players):
        player_id = f"p{i:05d}"
        rng = player_rng(config.rng_seed, player_id)
        subtype = int(rng.choice(len(mix), p=mix))
        tier = int(rng.integers(len(config.tier_base_winrates)))
        n_matches = int(rng.integers(lo, hi + 1))
        history, latent = generate_player(player_id, config, catalog, subtype,
                                          tier, n_matches, rng, gt.deck_state)
        histories.append(history)
        gt.player_subtype[player_id] = subtype
        gt.player_tier[player_id] = tier
        gt.match_latent_p[player_id] = latent
    return histories, gt


# ---------------------------------------------------------------------------
# Flat key=value config files (documented in the README)

_SUBTYPE_KEYS = ("p_switch_after_loss", "p_switch_after_win", "within_state_adjust_prob")


def load_generator_config(path) -> GeneratorConfig:
    config = GeneratorConfig()
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"config line {line_no}: expected key = value")
            key, value = (part.strip() for part in line.split("=", 1))
            _apply_config_key(config, key, value, line_no)
    config.validate()
    return config


def _apply_config_key(config: GeneratorConfig, key: str, value: str, line_no: int):
    try:
        if key == "n_players":
            config.n_players = int(value)
        elif key == "matches_per_player":
            lo, hi = (int(v) for v in value.split(","))
            config.matches_per_player = (lo, hi)
        elif key == "subtype_mix":
            a, b, c = (float(v) for v in value.split(","))
            config.subtype_mix = (a, b, c)
        elif key.startswith("subtype") and "." in key:
            idx = int(key.split(".")[0].removeprefix("subtype"))
            attr = key.split(".", 1)[1]
            if attr not in _SUBTYPE_KEYS:
                raise ValueError(f"unknown subtype parameter {attr!r}")
            setattr(config.subtype_params[idx], attr, float(value))
        elif key == "tier_base_winrates":
            config.tier_base_winrates = tuple(float(v) for v in value.split(","))
        elif key in ("mastery_gain", "mastery_cap", "mastery_retain_cross",
                     "mastery_retain_within", "opponent_meta_std"):
            setattr(config, key, float(value))
        elif key.startswith("state_meta_penalty."):
            state = int(key.split(".", 1)[1])
            config.state_meta_penalty[state] = float(value)
        elif key == "rng_seed":
            config.rng_seed = int(value)
        elif key == "mode":
            config.mode = value
        else:
            raise ValueError(f"unknown key {key!r}")
    except (ValueError, IndexError) as exc:
        raise ValueError(f"config line {line_no}: {exc}") from exc
