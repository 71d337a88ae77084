"""Train the full pipeline, then ask it for live advice.

run_pipeline chains every stage (filters, archetypes, subtypes, encoder,
events, gate, quality head, fusion) off one master seed and returns frozen
artifacts.  The advise() call is the deployed decision path: PersonaGate on
the subtype, TimingGate on the window embedding, then fused candidate
ranking.  Settings here are the quick ones; expect useful structure, not
headline numbers.
"""

import warnings

from switchadvisor.encoder import EncoderConfig
from switchadvisor.heads import HeadsConfig
from switchadvisor.pipeline import PipelineConfig, run_pipeline
from switchadvisor.service import session_advice
from switchadvisor.synthgen import (GeneratorConfig, generate_cards,
                                    generate_population)

gen = GeneratorConfig(n_players=80, rng_seed=11)
catalog = generate_cards(gen)
histories, _ = generate_population(gen, catalog)

config = PipelineConfig(
    master_seed=5, restarts=8, n_boot=2000,
    encoder=EncoderConfig(cat_dim=4, card_dim=8, cont_dim=4, hidden=16,
                          d_z=16, learning_rate=0.05, epochs=3),
    heads=HeadsConfig(hidden=64, epochs=6))
with warnings.catch_warnings():
    warnings.simplefilter("ignore")
    result = run_pipeline(histories, catalog, config)

print(result.summary)

# live advice: replay one player's recent matches as a session; scan for a
# player whose context actually yields candidates so the table shows up
player = max(histories, key=lambda h: len(h.matches))
advice = session_advice(result.artifacts, player.player_id,
                        player.matches[:25])
for h in histories:
    if len(h.matches) < 25:
        continue
    probe = session_advice(result.artifacts, h.player_id, h.matches[:25])
    if probe["candidates"]:
        player, advice = h, probe
        break
records = player.matches[:25]

print(f"\nlive advice for {player.player_id} after {len(records)} matches:")
print(f"  subtype    {advice['subtype']} "
      f"(provisional: {advice['subtype_provisional']})")
print(f"  from state {advice['from_state']} ({advice['from_name']})")
print(f"  decision   {advice['decision']}  [{advice['provenance']}]")
print(f"  gate prob  {advice['gate_prob']}")
print(f"  {advice['explanation']}")
if advice["candidates"]:
    print("  candidates (fused ranking):")
    print("    to  name                        adopt   norm    y_tq    fused")
    for c in advice["candidates"]:
        print(f"    {c['to_state']:>2}  {c['name']:<26} "
              f"{c['adoptability']:.3f}  {c['norm_adopt']:.3f}  "
              f"{c['quality']:+.3f}  {c['fused']:+.3f}")
