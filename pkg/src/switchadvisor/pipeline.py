"""End-to-end orchestration: match logs in, trained models and reports out.

The stages run in dependency order: filter players, split each history
chronologically, fit the deck archetypes and behavior subtypes on training
data only, pretrain the session encoder, extract boundary events with stay
baselines, train the timing gate and quality model, tune the fusion mixing
weight on validation, then evaluate everything on the held-out test events
against the reference policies.

Every stage draws its seed deterministically from one master seed, so two
runs with the same inputs produce byte-identical model files and reports.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field

import numpy as np

from . import archetype as archetype_mod
from . import subtype as subtype_mod
from .encoder import (EncoderConfig, PlayerArrays, PretrainReport,
                      SessionEncoder, build_card_index, materialize)
from .fusion import (AlphaTuningRow, Candidate, FusionConfig,
                     LaplaceAdoptability, TransitionCounts, fuse_scores,
                     load_fusion_config, rank_candidates, recommend,
                     save_fusion_config, tune_alpha)
from .fusion import Recommendation
from .heads import (FeatureStore, GateModel, HeadsConfig, PredictorReport,
                    QualityModel, evaluate_predictor, gate_feature_row,
                    quality_feature_rows, train_quality, train_timing_gate)
from .matchlog import (Card, PlayerHistory, SplitAssignment, apply_filters,
                       load_cards, make_splits, save_cards, split_windows)
from .policyeval import (BASELINE_NAMES, AblationInputs, PolicyMetrics,
                         build_baseline_aux, format_report, run_ablation,
                         run_baseline, save_report, subtype_breakdown,
                         evaluate_policy)
from .transition import (ExtractionReport, StayBaselineTable, TransitionEvent,
                         attach_baselines, build_timing_labels, extract_events)

log = logging.getLogger(__name__)

FORWARDED_SUBTYPES = (1, 2)


def stage_seed(master: int, salt: int) -> int:
    """Deterministic per-stage seed derived from the master seed."""
    ss = np.random.SeedSequence(entropy=master, spawn_key=(salt,))
    return int(ss.generate_state(1, dtype=np.uint32)[0])


@dataclass(slots=True)
class PipelineConfig:
    k: int = 10
    horizon: int = 10
    min_next: int = 5
    min_matches: int = 20
    min_post_loss: int = 5
    min_post_win: int = 5
    baseline_min_support: int = 5
    candidate_min_support: int = 3
    archetype_k: int = 13
    restarts: int = 50
    oracle_tau: float = 0.02
    n_boot: int = 10000
    master_seed: int = 0
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    heads: HeadsConfig = field(default_factory=HeadsConfig)
    fusion: FusionConfig = field(default_factory=FusionConfig)


@dataclass(slots=True)
class Artifacts:
    """Everything the serving path needs, loadable from one directory."""
    catalog: dict[str, Card]
    archetype: archetype_mod.ArchetypeModel
    subtype: subtype_mod.SubtypeModel
    encoder: SessionEncoder
    gate: GateModel
    quality: QualityModel
    baseline: StayBaselineTable
    counts: TransitionCounts
    fusion: FusionConfig
    subtype_labels: dict[str, int] = field(default_factory=dict)
    profiles: list = field(default_factory=list)

    def scorer(self) -> LaplaceAdoptability:
        return LaplaceAdoptability(self.counts, self.archetype.n_states)


ARTIFACT_FILES = {
    "catalog": "cards.tsv",
    "archetype": "archetype.txt",
    "subtype": "subtype.txt",
    "subtype_labels": "subtype_labels.tsv",
    "encoder": "encoder.txt",
    "gate": "gate.txt",
    "quality": "quality.txt",
    "baseline": "stay_baseline.txt",
    "counts": "transition_counts.txt",
    "fusion": "fusion.txt",
}


def save_artifacts(artifacts: Artifacts, models_dir) -> None:
    os.makedirs(models_dir, exist_ok=True)
    p = lambda key: os.path.join(models_dir, ARTIFACT_FILES[key])
    save_cards(artifacts.catalog, p("catalog"))
    archetype_mod.save_model(artifacts.archetype, p("archetype"))
    subtype_mod.save_model(artifacts.subtype, p("subtype"))
    subtype_mod.save_label_table(p("subtype_labels"), artifacts.subtype_labels,
                                 artifacts.profiles or None)
    artifacts.encoder.save(p("encoder"))
    artifacts.gate.save(p("gate"))
    artifacts.quality.save(p("quality"))
    artifacts.baseline.save(p("baseline"))
    artifacts.counts.save(p("counts"))
    save_fusion_config(artifacts.fusion, p("fusion"))


def load_artifacts(models_dir) -> Artifacts:
    p = lambda key: os.path.join(models_dir, ARTIFACT_FILES[key])
    for key in ARTIFACT_FILES:
        if key != "subtype_labels" and not os.path.exists(p(key)):
            raise FileNotFoundError(f"missing model file: {p(key)}")
    labels = (subtype_mod.load_label_table(p("subtype_labels"))
              if os.path.exists(p("subtype_labels")) else {})
    return Artifacts(
        catalog=load_cards(p("catalog")),
        archetype=archetype_mod.load_model(p("archetype")),
        subtype=subtype_mod.load_model(p("subtype")),
        encoder=SessionEncoder.load(p("encoder")),
        gate=GateModel.load(p("gate")),
        quality=QualityModel.load(p("quality")),
        baseline=StayBaselineTable.load(p("baseline")),
        counts=TransitionCounts.load(p("counts")),
        fusion=load_fusion_config(p("fusion")),
        subtype_labels=labels,
    )


# ---------------------------------------------------------------------------
# Serving-path recommendation (single context, shared with the HTTP service)

def advise(artifacts: Artifacts, subtype: int, from_state: int,
           zc: np.ndarray, zu: np.ndarray, mf: np.ndarray) -> Recommendation:
    """Who -> When -> What for one live context."""
    if subtype == 0:
        return recommend(0, from_state, None, artifacts.gate.theta,
                         artifacts.counts, artifacts.scorer(), lambda s: 0.0,
                         artifacts.fusion)
    x = gate_feature_row(zc, zu, mf, subtype, from_state)
    prob = float(artifacts.gate.predict_prob(x[None, :])[0])

    def quality_fn(to_state: int) -> float:
        rows = quality_feature_rows(zc, zu, mf, from_state, [to_state])
        return float(artifacts.quality.predict(rows)[0])

    return recommend(subtype, from_state, prob, artifacts.gate.theta,
                     artifacts.counts, artifacts.scorer(), quality_fn,
                     artifacts.fusion)


# ---------------------------------------------------------------------------
# Batch candidate construction for offline evaluation

def candidate_lists(events: list[TransitionEvent], store: FeatureStore,
                    quality: QualityModel, counts: TransitionCounts,
                    scorer: LaplaceAdoptability, min_support: int = 3
                    ) -> list[list[Candidate]]:
    """Stage-1 + stage-2 filtered candidates per event, quality predicted in
    one batch.  Candidates are unfused; callers pick alpha."""
    per_event_targets: list[list[int]] = []
    blocks: list[np.ndarray] = []
    spans: list[tuple[int, int]] = []
    pos = 0
    for e in events:
        cell = counts.table.get((e.subtype, e.from_state), {})
        targets = [s for s in sorted(cell)
                   if s != e.from_state and cell[s] >= min_support]
        per_event_targets.append(targets)
        spans.append((pos, pos + len(targets)))
        if targets:
            blocks.append(store.quality_input_for_targets(e, targets))
            pos += len(targets)
    pred = (quality.predict(np.vstack(blocks)) if blocks
            else np.zeros(0))
    out: list[list[Candidate]] = []
    for e, targets, (lo, hi) in zip(events, per_event_targets, spans):
        cands = [Candidate(t, scorer.score(e.subtype, e.from_state, t),
                           float(p))
                 for t, p in zip(targets, pred[lo:hi]) if p > 0]
        out.append(cands)
    return out


def fused_top_targets(cands_per_event: list[list[Candidate]], alpha: float,
                      scale: float) -> np.ndarray:
    targets = np.full(len(cands_per_event), -1, dtype=np.int64)
    for i, cands in enumerate(cands_per_event):
        if cands:
            ranked = rank_candidates(fuse_scores(list(cands), alpha, scale))
            targets[i] = ranked[0].to_state
    return targets


def evaluate_trained(artifacts: Artifacts, store: FeatureStore,
                     events: list[TransitionEvent],
                     kept: list[PlayerHistory], splits: SplitAssignment,
                     deck_states: dict[tuple[str, ...], int],
                     config: PipelineConfig
                     ) -> tuple[list[tuple[str, PolicyMetrics]],
                                dict[int, PolicyMetrics]]:
    """Held-out policy evaluation of a trained stack: incremental ablation
    rows, reference policies, and the per-subtype breakdown of (d)."""
    from .policyeval import PolicyDecisions

    seed = config.master_seed
    train_events = [e for e in events if e.split == "train"]
    test_eval = [e for e in events
                 if e.split == "test" and e.subtype in FORWARDED_SUBTYPES]
    scorer = artifacts.scorer()
    test_probs = artifacts.gate.predict_prob(store.gate_input(test_eval))
    test_cands = candidate_lists(test_eval, store, artifacts.quality,
                                 artifacts.counts, scorer,
                                 config.candidate_min_support)
    fused_targets = fused_top_targets(test_cands, artifacts.fusion.alpha,
                                      artifacts.fusion.scale)
    pred_y = artifacts.quality.predict(store.quality_input(test_eval))
    ablation = AblationInputs(
        gate_approved=test_probs >= artifacts.gate.theta,
        fused_target=fused_targets)
    policy_rows = run_ablation(test_eval, ablation, pred_y)

    aux = build_baseline_aux(kept, splits, deck_states, train_events,
                             seed=stage_seed(seed, 7))
    for name in BASELINE_NAMES:
        decisions = run_baseline(name, test_eval, aux, tau=config.oracle_tau,
                                 seed=stage_seed(seed, 8))
        policy_rows.append((name, evaluate_policy(test_eval, decisions,
                                                  pred_y)))

    final = PolicyDecisions("(d) + quality fusion",
                            ablation.gate_approved & (fused_targets >= 0),
                            fused_targets)
    breakdown = subtype_breakdown(test_eval, final, pred_y)
    return policy_rows, breakdown


# ---------------------------------------------------------------------------
# Rebuilding pipeline inputs from frozen models (staged CLI runs, eval)

@dataclass(slots=True)
class DerivedInputs:
    kept: list[PlayerHistory]
    splits: SplitAssignment
    deck_states: dict[tuple[str, ...], int]
    subtype_labels: dict[str, int]
    store: FeatureStore
    events: list[TransitionEvent]
    filter_report: object


def derive_inputs(histories: list[PlayerHistory], catalog: dict[str, Card],
                  arch: archetype_mod.ArchetypeModel,
                  sub_model: subtype_mod.SubtypeModel,
                  encoder: SessionEncoder, config: PipelineConfig,
                  baseline: StayBaselineTable | None = None) -> DerivedInputs:
    """Recompute splits, labels, features and events from frozen models.
    Deterministic, so staged runs agree with the one-shot pipeline."""
    kept, filter_report = apply_filters(
        histories, config.min_matches, config.min_post_loss,
        config.min_post_win)
    if not kept:
        raise ValueError("no players survive the activity filters")
    splits = make_splits(kept)
    deck_states = arch.assign_decks(
        [m.deck for h in kept for m in h.matches], catalog)
    profiles = []
    for h in kept:
        train_end, _, _ = splits.boundaries[h.player_id]
        profiles.append(subtype_mod.behavior_profile(
            h.player_id, h.matches[:train_end]))
    subtype_labels = subtype_mod.assign_subtypes(sub_model, profiles)

    card_index = encoder.card_vocab
    store = FeatureStore(encoder.config.d_z)
    events: list[TransitionEvent] = []
    for h in kept:
        arrays = PlayerArrays.from_history(h, deck_states, card_index,
                                           subtype_labels[h.player_id])
        spans = split_windows(h, splits, config.k)
        zc, zu, mf = encoder.encode_player(arrays, spans)
        store.add_player(h.player_id, [s.start for s in spans], zc, zu, mf)
    store.seal()
    events = extract_events(kept, deck_states, subtype_labels, splits,
                            k=config.k, horizon=config.horizon,
                            min_next=config.min_next)
    if baseline is not None:
        attach_baselines(events, baseline)
    return DerivedInputs(kept, splits, deck_states, subtype_labels, store,
                         events, filter_report)


# ---------------------------------------------------------------------------
# The run itself

@dataclass(slots=True)
class PipelineResult:
    artifacts: Artifacts
    splits: SplitAssignment
    deck_states: dict[tuple[str, ...], int]
    events: list[TransitionEvent]
    store: FeatureStore
    filter_report: object
    extraction: ExtractionReport
    pretrain: PretrainReport
    gate_metrics: dict
    quality_metrics: dict
    predictor: PredictorReport
    alpha_diag: list[tuple[float, float | None]]
    policy_rows: list[tuple[str, PolicyMetrics]]
    breakdown: dict[int, PolicyMetrics]
    summary: str


def _summary_text(result_fields: dict) -> str:
    lines = ["pipeline summary"]
    for key, value in result_fields.items():
        lines.append(f"{key} {value}")
    return "\n".join(lines) + "\n"


def run_pipeline(histories: list[PlayerHistory], catalog: dict[str, Card],
                 config: PipelineConfig | None = None,
                 out_dir=None) -> PipelineResult:
    config = config or PipelineConfig()
    seed = config.master_seed

    kept, filter_report = apply_filters(
        histories, config.min_matches, config.min_post_loss,
        config.min_post_win)
    if not kept:
        raise ValueError("no players survive the activity filters")
    splits = make_splits(kept)
    log.info("filters: %d/%d players kept", len(kept), len(histories))

    # deck archetypes, fitted on training-segment decks only
    train_decks = []
    for h in kept:
        train_end, _, _ = splits.boundaries[h.player_id]
        train_decks.extend(m.deck for m in h.matches[:train_end])
    arch = archetype_mod.fit_archetypes(
        train_decks, catalog, k=config.archetype_k,
        seed=stage_seed(seed, 1), restarts=config.restarts)
    all_decks = [m.deck for h in kept for m in h.matches]
    deck_states = arch.assign_decks(all_decks, catalog)
    log.info("archetypes: k=%d silhouette=%.3f", arch.n_states, arch.silhouette)

    # behavior subtypes from training-segment profiles
    profiles = []
    for h in kept:
        train_end, _, _ = splits.boundaries[h.player_id]
        profiles.append(subtype_mod.behavior_profile(
            h.player_id, h.matches[:train_end]))
    sub_model = subtype_mod.fit_subtypes(profiles, seed=stage_seed(seed, 2),
                                         restarts=config.restarts)
    subtype_labels = subtype_mod.assign_subtypes(sub_model, profiles)
    log.info("subtypes: silhouette=%.3f", sub_model.silhouette)

    # session encoder pretraining on training windows
    card_index = build_card_index(catalog)
    arrays = {h.player_id: PlayerArrays.from_history(
        h, deck_states, card_index, subtype_labels[h.player_id]) for h in kept}
    spans_by_split: dict[str, list] = {"train": [], "val": [], "test": []}
    spans_by_player: dict[str, list] = {}
    for h in kept:
        spans = split_windows(h, splits, config.k)
        spans_by_player[h.player_id] = spans
        for span in spans:
            spans_by_split[span.split].append(span)

    enc_config = config.encoder
    enc_config.k = config.k
    enc_config.n_states = config.archetype_k
    enc_config.seed = stage_seed(seed, 3)
    encoder = SessionEncoder(enc_config, card_index)
    train_batch = materialize(spans_by_split["train"], arrays, config.k)
    val_batch = materialize(spans_by_split["val"], arrays, config.k)
    encoder.set_cont_stats(train_batch.cont)
    pretrain_report = encoder.pretrain(train_batch, val_batch)
    log.info("encoder: %d epochs, val loss %.4f, metrics %s",
             pretrain_report.epochs_run, pretrain_report.val_loss[-1],
             {k: round(v, 3) for k, v in pretrain_report.metrics.items()})

    # frozen embeddings for every window
    store = FeatureStore(enc_config.d_z)
    for h in kept:
        spans = spans_by_player[h.player_id]
        zc, zu, mf = encoder.encode_player(arrays[h.player_id], spans)
        store.add_player(h.player_id, [s.start for s in spans], zc, zu, mf)
    store.seal()

    # boundary events, stay baselines, timing labels
    extraction = ExtractionReport()
    events = extract_events(kept, deck_states, subtype_labels, splits,
                            k=config.k, horizon=config.horizon,
                            min_next=config.min_next, report=extraction)
    baseline = StayBaselineTable.build(events, config.baseline_min_support)
    attach_baselines(events, baseline)
    train_events = [e for e in events if e.split == "train"]
    val_events = [e for e in events if e.split == "val"]
    test_events = [e for e in events if e.split == "test"]
    log.info("events: %d train / %d val / %d test",
             len(train_events), len(val_events), len(test_events))

    # timing gate
    train_mix = build_timing_labels(train_events, seed=stage_seed(seed, 4))
    heads_config = config.heads
    heads_config.seed = stage_seed(seed, 5)
    gate, gate_metrics = train_timing_gate(store, train_mix, val_events,
                                           heads_config)
    log.info("gate: val auc %.3f theta %.2f approval %.3f",
             gate_metrics["val_auc"], gate_metrics["theta"],
             gate_metrics["val_approval_rate"])

    # transition quality
    train_switch = [e for e in train_events if e.action == "switch"]
    val_switch = [e for e in val_events if e.action == "switch"]
    test_switch = [e for e in test_events if e.action == "switch"]
    quality, quality_metrics = train_quality(store, train_switch, val_switch,
                                             heads_config)
    predictor = evaluate_predictor(quality, store, test_switch,
                                   n_boot=config.n_boot,
                                   seed=stage_seed(seed, 6))
    log.info("quality: test MAE %.4f (always-zero %.4f) direction %.3f",
             predictor.mae, predictor.baseline_mae,
             predictor.direction_accuracy)

    # fusion: candidates from training switches, alpha tuned on validation
    counts = TransitionCounts.from_events(train_events)
    scorer = LaplaceAdoptability(counts, config.archetype_k)
    fusion_config = config.fusion

    val_eval = [e for e in val_events if e.subtype in FORWARDED_SUBTYPES]
    val_cands = candidate_lists(val_eval, store, quality, counts, scorer,
                                config.candidate_min_support)
    val_probs = gate.predict_prob(store.gate_input(val_eval))
    rows = [AlphaTuningRow(gate_approved=bool(p >= gate.theta),
                           candidates=cands, actual_to=e.to_state,
                           y_tq=e.y_tq, is_switch=e.action == "switch")
            for e, p, cands in zip(val_eval, val_probs, val_cands)]
    alpha, alpha_diag = tune_alpha(rows, fusion_config)
    fusion_config.alpha = alpha
    log.info("fusion: alpha %.1f", alpha)

    # held-out evaluation against reference policies
    artifacts = Artifacts(catalog=catalog, archetype=arch, subtype=sub_model,
                          encoder=encoder, gate=gate, quality=quality,
                          baseline=baseline, counts=counts,
                          fusion=fusion_config, subtype_labels=subtype_labels,
                          profiles=profiles)
    policy_rows, breakdown = evaluate_trained(artifacts, store, events, kept,
                                              splits, deck_states, config)

    summary = _build_summary(filter_report, splits, arch, sub_model,
                             pretrain_report, extraction, gate_metrics,
                             quality_metrics, predictor, alpha, alpha_diag,
                             policy_rows, breakdown)

    if out_dir is not None:
        _emit(artifacts, summary, policy_rows, predictor, out_dir)

    return PipelineResult(
        artifacts=artifacts, splits=splits, deck_states=deck_states,
        events=events, store=store, filter_report=filter_report,
        extraction=extraction, pretrain=pretrain_report,
        gate_metrics=gate_metrics, quality_metrics=quality_metrics,
        predictor=predictor, alpha_diag=alpha_diag, policy_rows=policy_rows,
        breakdown=breakdown, summary=summary)


def _build_summary(filter_report, splits, arch, sub_model, pretrain,
                   extraction, gate_metrics, quality_metrics, predictor,
                   alpha, alpha_diag, policy_rows, breakdown) -> str:
    lines = ["pipeline summary", ""]
    lines.append(f"players retained      {filter_report.retained_players}"
                 f" of {filter_report.total_players}")
    lines.append(f"archetype silhouette  {arch.silhouette:.4f}")
    lines.append(f"subtype silhouette    {sub_model.silhouette:.4f}")
    lines.append(f"windows kept          {extraction.events_kept}"
                 f" of {extraction.windows_total}"
                 f" ({extraction.dropped_short_horizon} short-horizon)")
    lines.append(f"encoder epochs        {pretrain.epochs_run}")
    lines.append(f"encoder val loss      {pretrain.val_loss[-1]:.6f}")
    for name, value in sorted(pretrain.metrics.items()):
        lines.append(f"encoder {name:<14}{value:.4f}")
    gap = gate_metrics["val_gap"]
    lines.append(f"gate val auc          {gate_metrics['val_auc']:.4f}")
    lines.append(f"gate theta            {gate_metrics['theta']:.2f}")
    lines.append(f"gate val approval     {gate_metrics['val_approval_rate']:.4f}")
    lines.append(f"gate val gap          "
                 f"{'---' if gap is None else format(gap, '.6f')}")
    lines.append(f"quality val MAE       {quality_metrics['val_mae']:.6f}")
    lines.append(f"fusion alpha          {alpha:.1f}")
    lines.append("alpha grid            "
                 + " ".join(f"{a:.1f}:{'---' if g is None else format(g, '.4f')}"
                            for a, g in alpha_diag))
    lines.append("")
    lines.append("test-split quality predictor")
    lines.append(predictor.as_text())
    lines.append("")
    lines.append(format_report(policy_rows).rstrip())
    lines.append("")
    lines.append("per-subtype breakdown of (d)")
    for sub, metrics in sorted(breakdown.items()):
        row = metrics.row(f"subtype {sub}")
        lines.append("  ".join(row))
    return "\n".join(lines) + "\n"


def _emit(artifacts: Artifacts, summary: str, policy_rows, predictor,
          out_dir) -> None:
    models_dir = os.path.join(out_dir, "models")
    reports_dir = os.path.join(out_dir, "reports")
    os.makedirs(reports_dir, exist_ok=True)
    save_artifacts(artifacts, models_dir)
    with open(os.path.join(reports_dir, "summary.txt"), "w",
              encoding="utf-8") as fh:
        fh.write(summary)
    with open(os.path.join(reports_dir, "policy_eval.txt"), "w",
              encoding="utf-8") as fh:
        fh.write(format_report(policy_rows))
    save_report(policy_rows, os.path.join(reports_dir, "policy_eval.dat"))
    predictor.save(os.path.join(reports_dir, "predictor.dat"))
