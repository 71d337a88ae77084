"""Command-line entry points.

The one-shot `pipeline` command trains and evaluates everything; the staged
commands (archetype, subtype, encoder, transition, heads, fuse, eval) run the
same steps one at a time against a shared work directory, so intermediate
models can be inspected or refitted without redoing the rest.  Staged runs
reconstruct features from the frozen upstream models and agree exactly with
the one-shot path under the same master seed.

Work directory layout: WORK/models/ holds the model files (the layout the
service loads), WORK/*.tsv the event/label intermediates, WORK/reports/ the
evaluation output.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import archetype as archetype_mod
from . import cluster
from . import subtype as subtype_mod
from .encoder import (EncoderConfig, SessionEncoder, build_card_index,
                      gradient_check_encoder)
from .fusion import (AlphaTuningRow, FusionConfig, TransitionCounts,
                     save_fusion_config, tune_alpha)
from .heads import (GateModel, HeadsConfig, QualityModel, evaluate_predictor,
                    train_quality, train_timing_gate)
from .matchlog import (apply_filters, load_cards, load_matchlog,
                       save_cards, save_matchlog)
from .pipeline import (ARTIFACT_FILES, Artifacts, PipelineConfig,
                       candidate_lists, derive_inputs, evaluate_trained,
                       load_artifacts, run_pipeline, stage_seed)
from .policyeval import format_report, save_report
from .synthgen import (GeneratorConfig, generate_cards, generate_population,
                       load_generator_config)
from .transition import (StayBaselineTable, attach_baselines,
                         build_timing_labels, label_event, load_events,
                         save_events)

log = logging.getLogger("switchadvisor")


def _corpus(path):
    catalog = load_cards(os.path.join(path, "cards.tsv"))
    histories = load_matchlog(os.path.join(path, "matchlog.jsonl"), catalog)
    return histories, catalog


def _models_dir(work):
    return os.path.join(work, "models")


def _model_path(work, key):
    return os.path.join(_models_dir(work), ARTIFACT_FILES[key])


def _require(work, key):
    path = _model_path(work, key)
    if not os.path.exists(path):
        sys.exit(f"error: missing {path}; run the upstream stage first")
    return path


def _pipeline_config(args) -> PipelineConfig:
    config = PipelineConfig(master_seed=args.seed)
    if getattr(args, "restarts", None) is not None:
        config.restarts = args.restarts
    enc = config.encoder
    for name in ("hidden", "d_z", "cat_dim", "card_dim", "cont_dim",
                 "epochs", "learning_rate", "batch_size"):
        value = getattr(args, f"enc_{name}", None)
        if value is not None:
            setattr(enc, name, value)
    heads = config.heads
    for name in ("hidden", "epochs", "learning_rate", "batch_size"):
        value = getattr(args, f"heads_{name}", None)
        if value is not None:
            setattr(heads, name, value)
    return config


def _add_seed(parser):
    parser.add_argument("--seed", type=int, default=0,
                        help="master seed (stage seeds derive from it)")


def _add_model_dims(parser):
    parser.add_argument("--enc-hidden", type=int, dest="enc_hidden")
    parser.add_argument("--enc-d-z", type=int, dest="enc_d_z")
    parser.add_argument("--enc-cat-dim", type=int, dest="enc_cat_dim")
    parser.add_argument("--enc-card-dim", type=int, dest="enc_card_dim")
    parser.add_argument("--enc-cont-dim", type=int, dest="enc_cont_dim")
    parser.add_argument("--enc-epochs", type=int, dest="enc_epochs")
    parser.add_argument("--enc-learning-rate", type=float,
                        dest="enc_learning_rate")
    parser.add_argument("--enc-batch-size", type=int, dest="enc_batch_size")
    parser.add_argument("--heads-hidden", type=int, dest="heads_hidden")
    parser.add_argument("--heads-epochs", type=int, dest="heads_epochs")
    parser.add_argument("--heads-learning-rate", type=float,
                        dest="heads_learning_rate")
    parser.add_argument("--heads-batch-size", type=int,
                        dest="heads_batch_size")
    parser.add_argument("--restarts", type=int)


def _derived(args, config, need_baseline=False):
    histories, catalog = _corpus(args.corpus)
    arch = archetype_mod.load_model(_require(args.work, "archetype"))
    sub_model = subtype_mod.load_model(_require(args.work, "subtype"))
    encoder = SessionEncoder.load(_require(args.work, "encoder"))
    baseline = None
    if need_baseline:
        baseline = StayBaselineTable.load(_require(args.work, "baseline"))
    d = derive_inputs(histories, catalog, arch, sub_model, encoder, config,
                      baseline=baseline)
    return d, catalog, arch, sub_model, encoder


# ---------------------------------------------------------------------------
# commands

def cmd_ingest(args):
    catalog = load_cards(args.cards)
    from .matchlog import FilterReport
    report = FilterReport()
    histories = load_matchlog(args.matchlog, catalog, report=report)
    kept, report = apply_filters(histories, report=report)
    os.makedirs(args.out, exist_ok=True)
    save_cards(catalog, os.path.join(args.out, "cards.tsv"))
    save_matchlog(kept, os.path.join(args.out, "matchlog.jsonl"))
    with open(os.path.join(args.out, "filter_report.txt"), "w",
              encoding="utf-8") as fh:
        for key, value in report.as_dict().items():
            fh.write(f"{key} {value}\n")
    print(f"retained {report.retained_players} of {report.total_players} "
          f"players -> {args.out}")


def cmd_synth(args):
    config = (load_generator_config(args.config) if args.config
              else GeneratorConfig())
    if args.players is not None:
        config.n_players = args.players
    if args.seed is not None:
        config.rng_seed = args.seed
    catalog = generate_cards(config)
    histories, truth = generate_population(config, catalog)
    os.makedirs(args.out, exist_ok=True)
    save_cards(catalog, os.path.join(args.out, "cards.tsv"))
    save_matchlog(histories, os.path.join(args.out, "matchlog.jsonl"))
    truth.save(os.path.join(args.out, "truth.jsonl"))
    n_matches = sum(len(h) for h in histories)
    print(f"{len(histories)} players, {n_matches} matches -> {args.out}")


def cmd_archetype_fit(args):
    histories, catalog = _corpus(args.corpus)
    config = _pipeline_config(args)
    kept, _ = apply_filters(histories)
    from .matchlog import make_splits
    splits = make_splits(kept)
    decks = []
    for h in kept:
        train_end, _, _ = splits.boundaries[h.player_id]
        decks.extend(m.deck for m in h.matches[:train_end])
    model = archetype_mod.fit_archetypes(
        decks, catalog, k=args.k, seed=stage_seed(config.master_seed, 1),
        restarts=config.restarts)
    os.makedirs(_models_dir(args.work), exist_ok=True)
    archetype_mod.save_model(model, _model_path(args.work, "archetype"))
    save_cards(catalog, _model_path(args.work, "catalog"))
    print(f"k={model.n_states} silhouette={model.silhouette:.4f} "
          f"-> {_model_path(args.work, 'archetype')}")


def cmd_archetype_assign(args):
    histories, catalog = _corpus(args.corpus)
    model = archetype_mod.load_model(_require(args.work, "archetype"))
    decks = [m.deck for h in histories for m in h.matches]
    assignments = model.assign_decks(decks, catalog)
    out = args.out or os.path.join(args.work, "deck_states.tsv")
    with open(out, "w", encoding="utf-8") as fh:
        fh.write("state\tstate_name\tdeck\n")
        for deck, state in assignments.items():
            fh.write(f"{state}\t{model.states[state].name}\t"
                     + ",".join(deck) + "\n")
    print(f"{len(assignments)} distinct decks -> {out}")


def cmd_archetype_stability(args):
    histories, catalog = _corpus(args.corpus)
    kept, _ = apply_filters(histories)
    from .matchlog import make_splits
    splits = make_splits(kept)
    decks = []
    for h in kept:
        train_end, _, _ = splits.boundaries[h.player_id]
        decks.extend(m.deck for m in h.matches[:train_end])
    distinct = list(dict.fromkeys(decks))
    from .archetype import feature_matrix
    seeds = [int(s) for s in args.seeds.split(",")]
    labelings = []
    for seed in seeds:
        model = archetype_mod.fit_archetypes(distinct, catalog, k=args.k,
                                             seed=seed,
                                             restarts=args.restarts or 50)
        labelings.append(model.assign_features(feature_matrix(distinct,
                                                              catalog)))
    print("seed_a seed_b ARI NMI")
    aris = []
    for i in range(len(seeds)):
        for j in range(i + 1, len(seeds)):
            ari, nmi = cluster.labeling_agreement([labelings[i], labelings[j]])
            aris.append(ari)
            print(f"{seeds[i]} {seeds[j]} {ari:.4f} {nmi:.4f}")
    if aris:
        print(f"mean ARI {np.mean(aris):.4f}  min ARI {min(aris):.4f}")


def cmd_subtype_fit(args):
    histories, _ = _corpus(args.corpus)
    config = _pipeline_config(args)
    kept, _ = apply_filters(histories)
    from .matchlog import make_splits
    splits = make_splits(kept)
    profiles = []
    for h in kept:
        train_end, _, _ = splits.boundaries[h.player_id]
        profiles.append(subtype_mod.behavior_profile(h.player_id,
                                                     h.matches[:train_end]))
    model = subtype_mod.fit_subtypes(profiles,
                                     seed=stage_seed(config.master_seed, 2),
                                     restarts=config.restarts)
    os.makedirs(_models_dir(args.work), exist_ok=True)
    subtype_mod.save_model(model, _model_path(args.work, "subtype"))
    labels = subtype_mod.assign_subtypes(model, profiles)
    subtype_mod.save_label_table(_model_path(args.work, "subtype_labels"),
                                 labels, profiles)
    counts = {s: sum(1 for v in labels.values() if v == s) for s in (0, 1, 2)}
    print(f"silhouette={model.silhouette:.4f} labels={counts} "
          f"-> {_model_path(args.work, 'subtype')}")


def cmd_subtype_assign(args):
    histories, _ = _corpus(args.corpus)
    model = subtype_mod.load_model(_require(args.work, "subtype"))
    profiles = [subtype_mod.behavior_profile(h.player_id, h.matches)
                for h in histories]
    labels = subtype_mod.assign_subtypes(model, profiles)
    out = args.out or os.path.join(args.work, "subtype_assignments.tsv")
    subtype_mod.save_label_table(out, labels, profiles)
    print(f"{len(labels)} players -> {out}")


def cmd_encoder_pretrain(args):
    histories, catalog = _corpus(args.corpus)
    config = _pipeline_config(args)
    arch = archetype_mod.load_model(_require(args.work, "archetype"))
    sub_model = subtype_mod.load_model(_require(args.work, "subtype"))
    from .encoder import PlayerArrays, materialize
    from .matchlog import make_splits, split_windows
    kept, _ = apply_filters(histories)
    splits = make_splits(kept)
    deck_states = arch.assign_decks(
        [m.deck for h in kept for m in h.matches], catalog)
    profiles = []
    for h in kept:
        train_end, _, _ = splits.boundaries[h.player_id]
        profiles.append(subtype_mod.behavior_profile(h.player_id,
                                                     h.matches[:train_end]))
    labels = subtype_mod.assign_subtypes(sub_model, profiles)
    card_index = build_card_index(catalog)
    arrays = {h.player_id: PlayerArrays.from_history(
        h, deck_states, card_index, labels[h.player_id]) for h in kept}
    spans = {"train": [], "val": []}
    for h in kept:
        for span in split_windows(h, splits, config.k):
            if span.split in spans:
                spans[span.split].append(span)
    enc_config = config.encoder
    enc_config.k = config.k
    enc_config.n_states = arch.n_states
    enc_config.seed = stage_seed(config.master_seed, 3)
    encoder = SessionEncoder(enc_config, card_index)
    train_batch = materialize(spans["train"], arrays, config.k)
    val_batch = materialize(spans["val"], arrays, config.k)
    encoder.set_cont_stats(train_batch.cont)
    report = encoder.pretrain(train_batch, val_batch)
    encoder.save(_model_path(args.work, "encoder"))
    metrics = " ".join(f"{k}={v:.4f}" for k, v in sorted(report.metrics.items()))
    print(f"{report.epochs_run} epochs, val loss {report.val_loss[-1]:.4f}, "
          f"{metrics} -> {_model_path(args.work, 'encoder')}")


def cmd_encoder_encode(args):
    config = _pipeline_config(args)
    d, *_ = _derived(args, config)
    out = args.out or os.path.join(args.work, "window_features.tsv")
    with open(out, "w", encoding="utf-8") as fh:
        fh.write("player_id\tstart\tcontext\tuser\tstats\n")
        for (pid, start), row in d.store.index.items():
            zc = ",".join(repr(float(v)) for v in d.store.zc[row])
            zu = ",".join(repr(float(v)) for v in d.store.zu[row])
            mf = ",".join(repr(float(v)) for v in d.store.mf[row])
            fh.write(f"{pid}\t{start}\t{zc}\t{zu}\t{mf}\n")
    print(f"{len(d.store.index)} windows -> {out}")


def cmd_encoder_gradcheck(args):
    err = gradient_check_encoder(seed=args.seed)
    print(f"max relative error {err:.3e}")
    if err >= 1e-3:
        sys.exit("gradient check FAILED (>= 1e-3)")


def cmd_transition_extract(args):
    config = _pipeline_config(args)
    d, *_ = _derived(args, config)
    out = args.out or os.path.join(args.work, "events.tsv")
    save_events(d.events, out)
    n_train = sum(1 for e in d.events if e.split == "train")
    print(f"{len(d.events)} events ({n_train} train) -> {out}")


def cmd_transition_baseline(args):
    events = load_events(args.events)
    table = StayBaselineTable.build(events, args.min_support)
    os.makedirs(_models_dir(args.work), exist_ok=True)
    table.save(_model_path(args.work, "baseline"))
    print(f"{len(table.cells)} cells, global mean "
          f"{table.total[0] / table.total[1]:+.5f} "
          f"-> {_model_path(args.work, 'baseline')}")


def cmd_transition_labels(args):
    events = load_events(args.events)
    table = StayBaselineTable.load(_require(args.work, "baseline"))
    attach_baselines(events, table)
    config = _pipeline_config(args)
    train_events = [e for e in events if e.split == "train"]
    mix = build_timing_labels(train_events,
                              seed=stage_seed(config.master_seed, 4))
    out = args.out or os.path.join(args.work, "timing_labels.tsv")
    with open(out, "w", encoding="utf-8") as fh:
        fh.write("event_id\tlabel\tsource\n")
        for _, lab in mix:
            fh.write(f"{lab.event_id}\t{lab.label}\t{lab.source}\n")
    n_pos = sum(lab.label for _, lab in mix)
    print(f"{len(mix)} labeled events ({n_pos} positive) -> {out}")


def cmd_heads_train_gate(args):
    config = _pipeline_config(args)
    d, *_ = _derived(args, config, need_baseline=True)
    train_events = [e for e in d.events if e.split == "train"]
    val_events = [e for e in d.events if e.split == "val"]
    mix = build_timing_labels(train_events,
                              seed=stage_seed(config.master_seed, 4))
    config.heads.seed = stage_seed(config.master_seed, 5)
    gate, metrics = train_timing_gate(d.store, mix, val_events, config.heads)
    gate.save(_model_path(args.work, "gate"))
    print(f"val auc {metrics['val_auc']:.4f} theta {metrics['theta']:.2f} "
          f"approval {metrics['val_approval_rate']:.4f} "
          f"-> {_model_path(args.work, 'gate')}")


def cmd_heads_train_quality(args):
    config = _pipeline_config(args)
    d, *_ = _derived(args, config, need_baseline=True)
    train_switch = [e for e in d.events
                    if e.split == "train" and e.action == "switch"]
    val_switch = [e for e in d.events
                  if e.split == "val" and e.action == "switch"]
    config.heads.seed = stage_seed(config.master_seed, 5)
    quality, metrics = train_quality(d.store, train_switch, val_switch,
                                     config.heads)
    quality.save(_model_path(args.work, "quality"))
    print(f"train MAE {metrics['train_mae']:.5f} "
          f"val MAE {metrics['val_mae']:.5f} "
          f"-> {_model_path(args.work, 'quality')}")


def cmd_heads_eval(args):
    config = _pipeline_config(args)
    d, *_ = _derived(args, config, need_baseline=True)
    quality = QualityModel.load(_require(args.work, "quality"))
    test_switch = [e for e in d.events
                   if e.split == "test" and e.action == "switch"]
    report = evaluate_predictor(quality, d.store, test_switch,
                                n_boot=config.n_boot,
                                seed=stage_seed(config.master_seed, 6))
    out_dir = args.out or os.path.join(args.work, "reports")
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "predictor.txt"), "w",
              encoding="utf-8") as fh:
        fh.write(report.as_text() + "\n")
    report.save(os.path.join(out_dir, "predictor.dat"))
    print(report.as_text())


def cmd_fuse_tune_alpha(args):
    config = _pipeline_config(args)
    d, *_ = _derived(args, config, need_baseline=True)
    gate = GateModel.load(_require(args.work, "gate"))
    quality = QualityModel.load(_require(args.work, "quality"))
    train_events = [e for e in d.events if e.split == "train"]
    counts = TransitionCounts.from_events(train_events)
    counts.save(_model_path(args.work, "counts"))
    from .fusion import LaplaceAdoptability
    arch = archetype_mod.load_model(_require(args.work, "archetype"))
    scorer = LaplaceAdoptability(counts, arch.n_states)
    val_eval = [e for e in d.events
                if e.split == "val" and e.subtype in (1, 2)]
    cands = candidate_lists(val_eval, d.store, quality, counts, scorer,
                            config.candidate_min_support)
    probs = gate.predict_prob(d.store.gate_input(val_eval))
    rows = [AlphaTuningRow(gate_approved=bool(p >= gate.theta),
                           candidates=c, actual_to=e.to_state, y_tq=e.y_tq,
                           is_switch=e.action == "switch")
            for e, p, c in zip(val_eval, probs, cands)]
    fusion_config = FusionConfig()
    alpha, diag = tune_alpha(rows, fusion_config)
    fusion_config.alpha = alpha
    save_fusion_config(fusion_config, _model_path(args.work, "fusion"))
    for a, gap in diag:
        print(f"alpha {a:.1f}  gap {'---' if gap is None else format(gap, '+.5f')}")
    print(f"chosen alpha {alpha:.1f} -> {_model_path(args.work, 'fusion')}")


def cmd_fuse_recommend(args):
    from .matchlog import MatchRecord, deck_avg_elixir
    from .service import session_advice
    artifacts = load_artifacts(_models_dir(args.work))
    with open(args.context, encoding="utf-8") as fh:
        context = json.load(fh)
    matches = []
    for i, rec in enumerate(context["matches"]):
        deck = tuple(sorted(rec["deck"]))
        matches.append(MatchRecord(
            player_id=context.get("player_id", "context"), seq_index=i,
            timestamp=rec["timestamp"], deck=deck,
            avg_elixir=deck_avg_elixir(deck, artifacts.catalog),
            outcome=rec["outcome"], crown_diff=rec["crown_diff"],
            mode=rec.get("mode", "pvp")))
    advice = session_advice(artifacts, context.get("player_id", "context"),
                            matches)
    print(json.dumps(advice, indent=2))


def cmd_eval(args):
    if args.policies != "all":
        sys.exit("error: only --policies all is supported")
    config = _pipeline_config(args)
    histories, catalog = _corpus(args.corpus)
    artifacts = load_artifacts(_models_dir(args.work))
    d = derive_inputs(histories, catalog, artifacts.archetype,
                      artifacts.subtype, artifacts.encoder, config,
                      baseline=artifacts.baseline)
    rows, breakdown = evaluate_trained(artifacts, d.store, d.events, d.kept,
                                       d.splits, d.deck_states, config)
    out_dir = args.out or os.path.join(args.work, "reports")
    os.makedirs(out_dir, exist_ok=True)
    text = format_report(rows)
    with open(os.path.join(out_dir, "policy_eval.txt"), "w",
              encoding="utf-8") as fh:
        fh.write(text)
    save_report(rows, os.path.join(out_dir, "policy_eval.dat"))
    print(text)
    for sub, metrics in sorted(breakdown.items()):
        print("  ".join(metrics.row(f"subtype {sub}")))


def cmd_pipeline(args):
    histories, catalog = _corpus(args.corpus)
    config = _pipeline_config(args)
    result = run_pipeline(histories, catalog, config, out_dir=args.out)
    print(result.summary)


def cmd_serve(args):
    import uvicorn
    from .service import create_app
    app = create_app(models_dir=args.models, sessions_dir=args.sessions)
    uvicorn.run(app, host=args.host, port=args.port)


# ---------------------------------------------------------------------------
# parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="switchadvisor",
        description="strategy switch advisor: train, evaluate and serve")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="validate and filter a matchlog")
    p.add_argument("--matchlog", required=True)
    p.add_argument("--cards", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    p.add_argument("--config", help="flat key=value generator config")
    p.add_argument("--out", required=True)
    p.add_argument("--players", type=int)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_synth)

    arche = sub.add_parser("archetype", help="deck strategy states")
    asub = arche.add_subparsers(dest="subcommand", required=True)
    p = asub.add_parser("fit")
    p.add_argument("--corpus", required=True)
    p.add_argument("--work", required=True)
    p.add_argument("--k", type=int, default=13)
    _add_seed(p)
    p.add_argument("--restarts", type=int)
    p.set_defaults(func=cmd_archetype_fit)
    p = asub.add_parser("assign")
    p.add_argument("--corpus", required=True)
    p.add_argument("--work", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_archetype_assign)
    p = asub.add_parser("stability")
    p.add_argument("--corpus", required=True)
    p.add_argument("--k", type=int, default=13)
    p.add_argument("--seeds", default="0,1,2")
    p.add_argument("--restarts", type=int)
    p.set_defaults(func=cmd_archetype_stability)

    subt = sub.add_parser("subtype", help="behavioral player subtypes")
    ssub = subt.add_subparsers(dest="subcommand", required=True)
    p = ssub.add_parser("fit")
    p.add_argument("--corpus", required=True)
    p.add_argument("--work", required=True)
    _add_seed(p)
    p.add_argument("--restarts", type=int)
    p.set_defaults(func=cmd_subtype_fit)
    p = ssub.add_parser("assign")
    p.add_argument("--corpus", required=True)
    p.add_argument("--work", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_subtype_assign)

    enc = sub.add_parser("encoder", help="session encoder")
    esub = enc.add_subparsers(dest="subcommand", required=True)
    p = esub.add_parser("pretrain")
    p.add_argument("--corpus", required=True)
    p.add_argument("--work", required=True)
    _add_seed(p)
    _add_model_dims(p)
    p.set_defaults(func=cmd_encoder_pretrain)
    p = esub.add_parser("encode")
    p.add_argument("--corpus", required=True)
    p.add_argument("--work", required=True)
    p.add_argument("--out")
    _add_seed(p)
    p.set_defaults(func=cmd_encoder_encode)
    p = esub.add_parser("gradcheck")
    _add_seed(p)
    p.set_defaults(func=cmd_encoder_gradcheck)

    trans = sub.add_parser("transition", help="boundary events and baselines")
    tsub = trans.add_subparsers(dest="subcommand", required=True)
    p = tsub.add_parser("extract")
    p.add_argument("--corpus", required=True)
    p.add_argument("--work", required=True)
    p.add_argument("--out")
    _add_seed(p)
    p.set_defaults(func=cmd_transition_extract)
    p = tsub.add_parser("baseline")
    p.add_argument("--events", required=True)
    p.add_argument("--work", required=True)
    p.add_argument("--min-support", type=int, default=5)
    p.set_defaults(func=cmd_transition_baseline)
    p = tsub.add_parser("labels")
    p.add_argument("--events", required=True)
    p.add_argument("--work", required=True)
    p.add_argument("--out")
    _add_seed(p)
    p.set_defaults(func=cmd_transition_labels)

    heads = sub.add_parser("heads", help="timing gate and quality model")
    hsub = heads.add_subparsers(dest="subcommand", required=True)
    for name, func in (("train-gate", cmd_heads_train_gate),
                       ("train-quality", cmd_heads_train_quality),
                       ("eval", cmd_heads_eval)):
        p = hsub.add_parser(name)
        p.add_argument("--corpus", required=True)
        p.add_argument("--work", required=True)
        if name == "eval":
            p.add_argument("--out")
        _add_seed(p)
        _add_model_dims(p)
        p.set_defaults(func=func)

    fuse = sub.add_parser("fuse", help="candidate fusion")
    fsub = fuse.add_subparsers(dest="subcommand", required=True)
    p = fsub.add_parser("tune-alpha")
    p.add_argument("--corpus", required=True)
    p.add_argument("--work", required=True)
    _add_seed(p)
    p.set_defaults(func=cmd_fuse_tune_alpha)
    p = fsub.add_parser("recommend")
    p.add_argument("--work", required=True)
    p.add_argument("--context", required=True,
                   help="JSON file with a matches array")
    p.set_defaults(func=cmd_fuse_recommend)

    p = sub.add_parser("eval", help="offline policy evaluation")
    p.add_argument("--corpus", required=True)
    p.add_argument("--work", required=True)
    p.add_argument("--policies", default="all")
    p.add_argument("--out")
    _add_seed(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("pipeline", help="train everything in one run")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    _add_seed(p)
    _add_model_dims(p)
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("serve", help="run the advisor HTTP service")
    p.add_argument("--models", required=True)
    p.add_argument("--sessions")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8321)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> None:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(name)s %(message)s")
    args.func(args)


if __name__ == "__main__":
    main()
