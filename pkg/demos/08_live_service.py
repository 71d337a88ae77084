"""Drive the HTTP advisor end to end without leaving the process.

The service wraps the frozen artifacts behind a small JSON API: create a
session, report matches one at a time, ask for advice whenever.  Advice is a
pure function of the session's match list, so replaying the same reports
into a fresh session (or a restarted process, via the JSONL logs) returns
the identical payload.  TestClient keeps this demo network-free; `python -m
switchadvisor serve --models ...` runs the same app with uvicorn.
"""

import json
import tempfile
import warnings

from fastapi.testclient import TestClient

from switchadvisor.encoder import EncoderConfig
from switchadvisor.heads import HeadsConfig
from switchadvisor.pipeline import PipelineConfig, run_pipeline
from switchadvisor.service import create_app
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

sessions_dir = tempfile.mkdtemp(prefix="advisor_sessions_")
client = TestClient(create_app(artifacts=result.artifacts,
                               sessions_dir=sessions_dir))

print("health:", client.get("/health").json())
sid = client.post("/session").json()["session_id"]
print(f"session {sid}\n")

player = max(histories, key=lambda h: len(h.matches))
for i, m in enumerate(player.matches[:12]):
    resp = client.post(f"/session/{sid}/match", json={
        "deck": list(m.deck), "outcome": m.outcome,
        "crown_diff": m.crown_diff, "mode": m.mode})
    if i in (0, 5, 11):
        print(f"  match {i + 1:>2} logged -> {resp.json()}")

advice = client.get(f"/session/{sid}/advice").json()
print(f"\nadvice after 12 matches:")
print(json.dumps(advice, indent=2)[:900])

# validation is strict: one bad report, nothing recorded
bad = client.post(f"/session/{sid}/match", json={
    "deck": list(player.matches[0].deck), "outcome": "win",
    "crown_diff": -2, "mode": "pvp"})
print(f"\nwin with crown_diff -2 -> {bad.status_code}: "
      f"{bad.json()['detail'][0]['msg']}")

# replay purity: a fresh app over the same session logs gives the same advice
client2 = TestClient(create_app(artifacts=result.artifacts,
                                sessions_dir=sessions_dir))
replayed = client2.get(f"/session/{sid}/advice").json()
print(f"\nfresh process, same JSONL logs, identical advice: "
      f"{replayed == advice}")
