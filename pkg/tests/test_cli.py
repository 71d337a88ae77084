"""Command-line interface: the staged commands must reproduce the one-shot
pipeline byte for byte, and the utility commands must round-trip cleanly."""

import filecmp
import json
import os
import warnings

import pytest

from switchadvisor.cli import build_parser, main
from switchadvisor.matchlog import (MatchRecord, deck_avg_elixir, load_cards,
                                    load_matchlog)
from switchadvisor.pipeline import ARTIFACT_FILES, load_artifacts
from switchadvisor.service import session_advice

QUICK = ["--seed", "5", "--restarts", "8",
         "--enc-cat-dim", "4", "--enc-card-dim", "8", "--enc-cont-dim", "4",
         "--enc-hidden", "16", "--enc-d-z", "16",
         "--enc-learning-rate", "0.05", "--enc-epochs", "2",
         "--heads-hidden", "64", "--heads-epochs", "4"]


def run_cli(*argv):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        main(list(argv))


@pytest.fixture(scope="module")
def cli_corpus(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli_corpus")
    run_cli("synth", "--out", str(out), "--players", "60", "--seed", "11")
    return out


@pytest.fixture(scope="module")
def oneshot(cli_corpus, tmp_path_factory):
    out = tmp_path_factory.mktemp("cli_oneshot")
    run_cli("pipeline", "--corpus", str(cli_corpus), "--out", str(out), *QUICK)
    return out


@pytest.fixture(scope="module")
def staged(cli_corpus, tmp_path_factory):
    work = tmp_path_factory.mktemp("cli_staged")
    corpus = str(cli_corpus)
    run_cli("archetype", "fit", "--corpus", corpus, "--work", str(work),
            "--k", "13", "--seed", "5", "--restarts", "8")
    run_cli("subtype", "fit", "--corpus", corpus, "--work", str(work),
            "--seed", "5", "--restarts", "8")
    run_cli("encoder", "pretrain", "--corpus", corpus, "--work", str(work),
            *QUICK)
    run_cli("transition", "extract", "--corpus", corpus, "--work", str(work),
            "--seed", "5")
    events = str(work / "events.tsv")
    run_cli("transition", "baseline", "--events", events, "--work", str(work))
    run_cli("transition", "labels", "--events", events, "--work", str(work),
            "--seed", "5")
    run_cli("heads", "train-gate", "--corpus", corpus, "--work", str(work),
            *QUICK)
    run_cli("heads", "train-quality", "--corpus", corpus, "--work", str(work),
            *QUICK)
    run_cli("heads", "eval", "--corpus", corpus, "--work", str(work), *QUICK)
    run_cli("fuse", "tune-alpha", "--corpus", corpus, "--work", str(work),
            "--seed", "5")
    run_cli("eval", "--corpus", corpus, "--work", str(work), "--seed", "5")
    return work


# ---------------------------------------------------------------------------
# synth / ingest

def test_synth_writes_corpus(cli_corpus):
    catalog = load_cards(str(cli_corpus / "cards.tsv"))
    histories = load_matchlog(str(cli_corpus / "matchlog.jsonl"), catalog)
    assert len(histories) == 60
    assert (cli_corpus / "truth.jsonl").exists()


def test_synth_config_file(tmp_path, capsys):
    cfg = tmp_path / "gen.cfg"
    cfg.write_text("n_players = 8   # tiny\nrng_seed = 3\n")
    out = tmp_path / "corpus"
    run_cli("synth", "--config", str(cfg), "--out", str(out))
    assert "8 players" in capsys.readouterr().out
    catalog = load_cards(str(out / "cards.tsv"))
    assert len(load_matchlog(str(out / "matchlog.jsonl"), catalog)) == 8


def test_ingest_filters_corpus(cli_corpus, tmp_path, capsys):
    out = tmp_path / "filtered"
    run_cli("ingest", "--matchlog", str(cli_corpus / "matchlog.jsonl"),
            "--cards", str(cli_corpus / "cards.tsv"), "--out", str(out))
    line = capsys.readouterr().out
    assert "retained" in line and "of 60 players" in line
    catalog = load_cards(str(out / "cards.tsv"))
    kept = load_matchlog(str(out / "matchlog.jsonl"), catalog)
    assert 0 < len(kept) <= 60
    report = dict(l.split() for l in
                  (out / "filter_report.txt").read_text().splitlines())
    assert int(report["retained_players"]) == len(kept)

    # re-ingesting an already filtered corpus keeps everyone
    out2 = tmp_path / "refiltered"
    run_cli("ingest", "--matchlog", str(out / "matchlog.jsonl"),
            "--cards", str(out / "cards.tsv"), "--out", str(out2))
    kept2 = load_matchlog(str(out2 / "matchlog.jsonl"), catalog)
    assert len(kept2) == len(kept)


# ---------------------------------------------------------------------------
# staged == one-shot

def test_staged_models_match_oneshot(oneshot, staged):
    for key, name in sorted(ARTIFACT_FILES.items()):
        a = oneshot / "models" / name
        b = staged / "models" / name
        assert a.exists() and b.exists(), name
        assert filecmp.cmp(a, b, shallow=False), f"{key}: {name} differs"


def test_staged_reports_match_oneshot(oneshot, staged):
    for name in ("policy_eval.txt", "policy_eval.dat", "predictor.dat"):
        a = oneshot / "reports" / name
        b = staged / "reports" / name
        assert filecmp.cmp(a, b, shallow=False), name


def test_oneshot_summary_written(oneshot):
    summary = (oneshot / "reports" / "summary.txt").read_text()
    for token in ("players retained", "archetype silhouette",
                  "subtype silhouette", "encoder epochs", "gate theta",
                  "quality val MAE", "fusion alpha",
                  "offline policy evaluation"):
        assert token in summary


def test_staged_intermediates(staged):
    events = (staged / "events.tsv").read_text().splitlines()
    assert events[0].startswith("player_id\t")
    assert len(events) > 100
    labels = (staged / "timing_labels.tsv").read_text().splitlines()
    assert labels[0] == "event_id\tlabel\tsource"
    assert {l.split("\t")[1] for l in labels[1:]} <= {"0", "1"}
    assert (staged / "reports" / "predictor.txt").exists()


# ---------------------------------------------------------------------------
# assign / encode / recommend on the staged work dir

def test_archetype_assign(cli_corpus, staged, tmp_path, capsys):
    out = tmp_path / "deck_states.tsv"
    run_cli("archetype", "assign", "--corpus", str(cli_corpus),
            "--work", str(staged), "--out", str(out))
    assert "distinct decks" in capsys.readouterr().out
    lines = out.read_text().splitlines()
    assert lines[0] == "state\tstate_name\tdeck"
    states = {int(l.split("\t")[0]) for l in lines[1:]}
    assert states <= set(range(13))


def test_subtype_assign(cli_corpus, staged, tmp_path):
    out = tmp_path / "subs.tsv"
    run_cli("subtype", "assign", "--corpus", str(cli_corpus),
            "--work", str(staged), "--out", str(out))
    lines = out.read_text().splitlines()
    assert len(lines) == 61   # header + every player (unfiltered corpus)


def test_encoder_encode(cli_corpus, staged, tmp_path):
    out = tmp_path / "features.tsv"
    run_cli("encoder", "encode", "--corpus", str(cli_corpus),
            "--work", str(staged), "--out", str(out), "--seed", "5")
    lines = out.read_text().splitlines()
    assert lines[0] == "player_id\tstart\tcontext\tuser\tstats"
    first = lines[1].split("\t")
    assert len(first[2].split(",")) == 16   # d_z from the CLI flags


def test_fuse_recommend_matches_offline(cli_corpus, staged, tmp_path, capsys):
    artifacts = load_artifacts(str(staged / "models"))
    catalog = load_cards(str(cli_corpus / "cards.tsv"))
    histories = load_matchlog(str(cli_corpus / "matchlog.jsonl"), catalog)
    player = max(histories, key=lambda h: len(h.matches))
    context = {"player_id": "ctx", "matches": [
        {"timestamp": m.timestamp, "deck": list(m.deck),
         "outcome": m.outcome, "crown_diff": m.crown_diff, "mode": m.mode}
        for m in player.matches[:25]]}
    path = tmp_path / "context.json"
    path.write_text(json.dumps(context))
    run_cli("fuse", "recommend", "--work", str(staged),
            "--context", str(path))
    printed = json.loads(capsys.readouterr().out)

    records = []
    for i, m in enumerate(player.matches[:25]):
        deck = tuple(sorted(m.deck))
        records.append(MatchRecord(
            player_id="ctx", seq_index=i, timestamp=m.timestamp, deck=deck,
            avg_elixir=deck_avg_elixir(deck, artifacts.catalog),
            outcome=m.outcome, crown_diff=m.crown_diff, mode=m.mode))
    assert printed == session_advice(artifacts, "ctx", records)


# ---------------------------------------------------------------------------
# diagnostics and error handling

def test_gradcheck_passes(capsys):
    run_cli("encoder", "gradcheck", "--seed", "0")
    out = capsys.readouterr().out
    assert "max relative error" in out
    assert float(out.split()[-1]) < 1e-3


def test_archetype_stability(cli_corpus, capsys):
    run_cli("archetype", "stability", "--corpus", str(cli_corpus),
            "--seeds", "0,1", "--restarts", "2")
    out = capsys.readouterr().out.splitlines()
    assert out[0] == "seed_a seed_b ARI NMI"
    ari = float(out[1].split()[2])
    assert -1.0 <= ari <= 1.0
    assert out[-1].startswith("mean ARI")


def test_missing_upstream_model_exits(cli_corpus, tmp_path):
    with pytest.raises(SystemExit) as exc:
        run_cli("heads", "train-gate", "--corpus", str(cli_corpus),
                "--work", str(tmp_path / "empty"), *QUICK)
    assert "missing" in str(exc.value)


def test_eval_rejects_policy_subset(cli_corpus, staged):
    with pytest.raises(SystemExit) as exc:
        run_cli("eval", "--corpus", str(cli_corpus), "--work", str(staged),
                "--policies", "demo")
    assert "only --policies all" in str(exc.value)


def test_parser_requires_command(capsys):
    with pytest.raises(SystemExit):
        build_parser().parse_args([])
    with pytest.raises(SystemExit):
        build_parser().parse_args(["archetype"])


def test_eval_prints_breakdown(cli_corpus, staged, capsys):
    run_cli("eval", "--corpus", str(cli_corpus), "--work", str(staged),
            "--seed", "5")
    out = capsys.readouterr().out
    assert "SwitchGap" in out and "Rec_TQP" in out
    assert "subtype 1" in out and "subtype 2" in out
