"""Score the staged pipeline against reference policies on held-out events.

Offline evaluation replays logged test events under each policy: did it
approve this switch, and what target would it have picked?  SwitchGap is the
mean y_tq of approved switches minus stays; the ablation row (a)->(d) adds
one pipeline stage at a time, and the reference rows bound the problem from
below (always_stay) and above (population_oracle, which reads the planted
meta).  Quick settings again, so read the table for ordering, not magnitude.
"""

import warnings

from switchadvisor.encoder import EncoderConfig
from switchadvisor.heads import HeadsConfig
from switchadvisor.pipeline import PipelineConfig, run_pipeline
from switchadvisor.policyeval import format_report
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

print(format_report(result.policy_rows))

print("per-subtype breakdown of the full pipeline (d):")
for sub, metrics in sorted(result.breakdown.items()):
    name, sw, gap, rec, prec = metrics.row(f"subtype {sub}")
    print(f"  {name}: switch {sw}%, gap {gap}, rec_tqp {rec}, prec@1 {prec}")

p = result.predictor
print(f"\nquality predictor on {p.n_events} test switches:")
print(f"  MAE {p.mae:.4f} vs always-zero {p.baseline_mae:.4f}")
print(f"  direction accuracy {p.direction_accuracy:.3f} "
      f"vs always-zero {p.baseline_direction:.3f}")
if p.gap is not None:
    ci = ("" if p.gap_ci is None else
          f"  95% CI [{p.gap_ci[0] * 100:+.1f}, {p.gap_ci[1] * 100:+.1f}]%p")
    print(f"  discrimination gap {p.gap * 100:+.1f}%p{ci}")
