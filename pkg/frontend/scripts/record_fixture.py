"""Record a live session round trip as a frontend test fixture.

Trains the quick pipeline on a small synthetic corpus, picks a 12-match
stretch whose advice is a switch with a multi-row candidate table, replays
it through the HTTP service, and writes every request/response pair plus
the card catalog:

    tests/fixtures/session_roundtrip.json   replayed by the vitest suite
    cards.json                              static catalog asset for the page

Rerun from frontend/ after any change to the service wire format:

    python3 scripts/record_fixture.py
"""

import json
import os
import warnings

from fastapi.testclient import TestClient

from switchadvisor.encoder import EncoderConfig
from switchadvisor.heads import HeadsConfig
from switchadvisor.matchlog import MatchRecord, deck_avg_elixir
from switchadvisor.pipeline import PipelineConfig, run_pipeline
from switchadvisor.service import DEFAULT_EPOCH, create_app, session_advice
from switchadvisor.synthgen import (GeneratorConfig, generate_cards,
                                    generate_population)

HERE = os.path.dirname(os.path.abspath(__file__))
FRONTEND = os.path.dirname(HERE)
SESSION_LEN = 12


def quick_config():
    return PipelineConfig(
        master_seed=5,
        restarts=8,
        n_boot=2000,
        encoder=EncoderConfig(cat_dim=4, card_dim=8, cont_dim=4, hidden=16,
                              d_z=16, learning_rate=0.05, epochs=2),
        heads=HeadsConfig(hidden=64, epochs=4),
    )


def session_records(matches, catalog):
    """Mirror the service's internal record building for offline probing."""
    records = []
    for i, m in enumerate(matches):
        deck = tuple(sorted(m.deck))
        records.append(MatchRecord(
            player_id="probe", seq_index=i, timestamp=DEFAULT_EPOCH + 60 * i,
            deck=deck, avg_elixir=deck_avg_elixir(deck, catalog),
            outcome=m.outcome, crown_diff=m.crown_diff, mode=m.mode))
    return records


def find_switch_window(artifacts, histories, catalog):
    """First 12-match stretch whose advice is a switch with >= 3 candidates
    (falls back to any switch)."""
    fallback = None
    for h in histories:
        for start in range(0, len(h.matches) - SESSION_LEN + 1, 4):
            window = h.matches[start:start + SESSION_LEN]
            advice = session_advice(artifacts, "probe",
                                    session_records(window, catalog))
            if advice["decision"] != "switch":
                continue
            if len(advice["candidates"]) >= 3:
                return window
            if fallback is None:
                fallback = window
    if fallback is None:
        raise SystemExit("no switch-producing 12-match window found")
    return fallback


def main():
    catalog = generate_cards()
    histories, _ = generate_population(GeneratorConfig(n_players=60,
                                                       rng_seed=11), catalog)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        result = run_pipeline(histories, catalog, quick_config())

    window = find_switch_window(result.artifacts, histories, catalog)

    client = TestClient(create_app(artifacts=result.artifacts))
    steps = []

    def call(method, path, body=None):
        reply = client.request(method, path,
                               json=body) if body is not None else \
            client.request(method, path)
        steps.append({"method": method, "path": path, "request": body,
                      "status": reply.status_code, "response": reply.json()})
        return reply.json()

    # exactly the calls the browser client makes: health check, session
    # create, then (report, advice) per match
    call("GET", "/health")
    sid = call("POST", "/session")["session_id"]
    for m in window:
        call("POST", f"/session/{sid}/match",
             {"deck": sorted(m.deck), "outcome": m.outcome,
              "crown_diff": m.crown_diff, "mode": m.mode})
        call("GET", f"/session/{sid}/advice")

    final = steps[-1]["response"]
    print(f"recorded session {sid}: decision={final['decision']} "
          f"provenance={final['provenance']} "
          f"candidates={len(final['candidates'])}")

    cards = [{"card_id": c.card_id, "elixir_cost": c.elixir_cost,
              "func_type": c.func_type}
             for c in sorted(catalog.values(), key=lambda c: c.card_id)]
    fixture = {"session_id": sid, "catalog": cards, "steps": steps}

    fixture_path = os.path.join(FRONTEND, "tests", "fixtures",
                                "session_roundtrip.json")
    os.makedirs(os.path.dirname(fixture_path), exist_ok=True)
    with open(fixture_path, "w", encoding="utf-8") as fh:
        json.dump(fixture, fh, indent=1)
        fh.write("\n")
    with open(os.path.join(FRONTEND, "cards.json"), "w",
              encoding="utf-8") as fh:
        json.dump(cards, fh, indent=1)
        fh.write("\n")
    print(f"wrote {fixture_path} ({len(steps)} steps) and cards.json "
          f"({len(cards)} cards)")


if __name__ == "__main__":
    main()
