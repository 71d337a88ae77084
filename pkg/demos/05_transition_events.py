"""Extract transition events at deck-change boundaries and net out the stay
baseline.

Every window boundary becomes an event: the player either switched decks or
stayed, and y_tq measures the winrate change across the boundary (next
horizon matches vs the k-match window before it).  Raw y_tq is confounded by
regression to the mean, so each event is matched against the mean y_tq of
*stay* events in the same (state, subtype, winrate-bucket) cell; the residual
delta_net is what the timing gate and quality head actually learn from.
"""

from collections import Counter

from switchadvisor.archetype import fit_archetypes
from switchadvisor.matchlog import apply_filters, make_splits
from switchadvisor.subtype import (assign_subtypes, behavior_profile,
                                   fit_subtypes)
from switchadvisor.synthgen import (GeneratorConfig, generate_cards,
                                    generate_population)
from switchadvisor.transition import (StayBaselineTable, attach_baselines,
                                      extract_events, wr_bucket)

config = GeneratorConfig(n_players=120, rng_seed=7)
catalog = generate_cards(config)
histories, _ = generate_population(config, catalog)
kept, _ = apply_filters(histories)
splits = make_splits(kept)

arch = fit_archetypes([m.deck for h in kept for m in h.matches], catalog,
                      k=13, seed=0, restarts=10)
deck_states = arch.assign_decks([m.deck for h in kept for m in h.matches],
                                catalog)
profiles = []
for h in kept:
    train_end, _, _ = splits.boundaries[h.player_id]
    profiles.append(behavior_profile(h.player_id, h.matches[:train_end]))
labels = assign_subtypes(fit_subtypes(profiles, seed=0, restarts=10),
                         profiles)

events = extract_events(kept, deck_states, labels, splits, k=10, horizon=10,
                        min_next=5)
by_action = Counter(e.action for e in events)
by_split = Counter(e.split for e in events)
print(f"{len(events)} events: {dict(by_action)} across {dict(by_split)}\n")

table = StayBaselineTable.build(events, min_support=5)
attach_baselines(events, table)
print(f"stay-baseline table: {len(table.cells)} cells, "
      f"global mean {table.total[0] / table.total[1]:+.4f}")

print("\nbaseline lookups walk cell -> (state,subtype) -> global:")
levels = Counter(e.baseline_level for e in events)
for level, n in levels.most_common():
    print(f"  {level:<13} {n:>5} events")

sw = next(e for e in events if e.action == "switch" and e.split == "train")
print(f"\none switch event, worked:")
print(f"  player {sw.player_id}, boundary match {sw.boundary_index}, "
      f"state {sw.from_state} -> {sw.to_state}, subtype {sw.subtype}")
print(f"  window winrate  {sw.wins_current}/{sw.k} = {sw.wr_current:.2f} "
      f"(bucket {wr_bucket(sw.wr_current)})")
print(f"  horizon winrate {sw.wins_next}/{sw.n_next} = {sw.wr_next:.2f}")
print(f"  y_tq      {sw.y_tq:+.4f}")
print(f"  baseline  {sw.stay_baseline:+.4f}  ({sw.baseline_level})")
print(f"  delta_net {sw.delta_net:+.4f}  -> "
      f"{'good' if sw.delta_net > 0 else 'bad'} switch label")

train_sw = [e for e in events if e.split == "train" and e.action == "switch"]
good = sum(1 for e in train_sw if e.delta_net > 0)
print(f"\ntraining switches: {good}/{len(train_sw)} beat their matched "
      f"stay baseline")
