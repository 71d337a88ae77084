"""Pretrain the session encoder and poke at its structure.

The encoder turns a k-match window into a context vector z_c via a GRU over
per-match features, adds a projection of the window summary statistics, and
maintains a per-player EMA user vector z_u that only ever sees *previous*
windows.  Training is multi-task on cheap self-supervised targets (will the
deck change? crown bucket? subtype?).  Everything is numpy with hand-written
backprop, so the finite-difference gradient check below is the load-bearing
correctness test.
"""

import numpy as np

from switchadvisor.archetype import fit_archetypes
from switchadvisor.encoder import (EncoderConfig, PlayerArrays,
                                   SessionEncoder, build_card_index,
                                   gradient_check_encoder, materialize)
from switchadvisor.matchlog import (WindowSpan, apply_filters, make_splits,
                                    split_windows)
from switchadvisor.subtype import (assign_subtypes, behavior_profile,
                                   fit_subtypes)
from switchadvisor.synthgen import (GeneratorConfig, generate_cards,
                                    generate_population)

print("finite-difference gradient check (tiny config):")
err = gradient_check_encoder(seed=0)
print(f"  max relative error {err:.3e}\n")

config = GeneratorConfig(n_players=80, rng_seed=7)
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

card_index = build_card_index(catalog)
arrays = {h.player_id: PlayerArrays.from_history(h, deck_states, card_index,
                                                 labels[h.player_id])
          for h in kept}

k = 10
enc_config = EncoderConfig(k=k, n_states=13, cat_dim=4, card_dim=8,
                           cont_dim=4, hidden=32, d_z=16, epochs=6,
                           learning_rate=0.05, seed=1)
spans = {"train": [], "val": []}
for h in kept:
    for span in split_windows(h, splits, k):
        if span.split in spans:
            spans[span.split].append(span)

encoder = SessionEncoder(enc_config, card_index)
train_batch = materialize(spans["train"], arrays, k)
val_batch = materialize(spans["val"], arrays, k)
encoder.set_cont_stats(train_batch.cont)
report = encoder.pretrain(train_batch, val_batch)

print(f"pretrained on {len(spans['train'])} windows "
      f"({report.epochs_run} epochs, {report.seconds:.1f}s)")
print("  epoch  train_loss  val_loss")
for i, (tr, va) in enumerate(zip(report.train_loss, report.val_loss)):
    print(f"  {i:>5}  {tr:>10.4f}  {va:>8.4f}")
print("probe metrics on validation windows:")
for name, value in sorted(report.metrics.items()):
    print(f"  {name:<10} {value:.4f}")

# structure: context = window encoding + projected summary stats, and the
# user vector is an EMA of *previous* contexts only
pid = kept[0].player_id
player_spans = [WindowSpan(pid, i, k) for i in range(5)]
zc, zu, mf = encoder.encode_player(arrays[pid], player_spans)
d = enc_config.user_decay
print(f"\nuser-vector EMA (decay {d}):")
print(f"  zu[0] is zero: {bool(np.all(zu[0] == 0.0))}")
recur = all(np.array_equal(zu[i], d * zu[i - 1] + (1.0 - d) * zc[i - 1])
            for i in range(1, 5))
print(f"  zu[i] == d*zu[i-1] + (1-d)*zc[i-1] for all i: {recur}")
