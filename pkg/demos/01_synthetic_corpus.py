"""Generate a synthetic ladder population and check what got planted.

The generator drives one automaton per player: a deck archetype (strategy
state), a behavioral subtype controlling when the player switches decks, and
a mastery curve that makes fresh decks underperform.  Everything downstream
is trained on these logs, so this script is the ground floor: does the
corpus actually contain the behavior we claim it does?
"""

import numpy as np

from switchadvisor.synthgen import (GeneratorConfig, generate_cards,
                                    generate_population)

config = GeneratorConfig(n_players=150, rng_seed=7)
catalog = generate_cards(config)
histories, truth = generate_population(config, catalog)

n_matches = sum(len(h) for h in histories)
print(f"{len(histories)} players, {n_matches} matches, "
      f"{len(catalog)} cards in the catalog\n")

subtype_names = {0: "loyalist", 1: "reactive", 2: "flex"}
counts = {s: 0 for s in subtype_names}
for pid, s in truth.player_subtype.items():
    counts[s] += 1
print("planted subtype mix:")
for s, name in subtype_names.items():
    print(f"  {s} {name:<9} {counts[s]:>4} players")

# the reactive subtype is defined by switching after losses, not wins;
# measure the pooled post-outcome deck-change rates per planted subtype
print("\npost-outcome deck-change rates (the loss_reactivity signature):")
for s, name in subtype_names.items():
    post = {True: [0, 0], False: [0, 0]}   # won-last -> [switches, obs]
    for h in histories:
        if truth.player_subtype[h.player_id] != s:
            continue
        dc = h.deck_changes()
        for t in range(1, len(h.matches)):
            side = post[bool(h.matches[t - 1].won)]
            side[0] += dc[t]
            side[1] += 1
    p_loss = post[False][0] / post[False][1]
    p_win = post[True][0] / post[True][1]
    print(f"  {name:<9} post-loss {p_loss:.3f}  post-win {p_win:.3f}  "
          f"reactivity {p_loss - p_win:+.3f}")

print("\nmean winrate by subtype (loyalists should be ahead):")
for s, name in subtype_names.items():
    wr = np.mean([np.mean([m.won for m in h.matches]) for h in histories
                  if truth.player_subtype[h.player_id] == s])
    print(f"  {name:<9} {wr:.4f}")

# a single player's deck timeline, compressed to change points
h = next(x for x in histories if truth.player_subtype[x.player_id] == 1)
states = [truth.deck_state[m.deck] for m in h.matches]
changes = [(0, states[0])] + [(t, states[t]) for t in range(1, len(states))
                              if states[t] != states[t - 1]]
print(f"\nplayer {h.player_id} (reactive), {len(h.matches)} matches, "
      f"{len(changes) - 1} deck changes:")
print("  " + " -> ".join(f"m{t}:state{s}" for t, s in changes[:12])
      + (" ..." if len(changes) > 12 else ""))
