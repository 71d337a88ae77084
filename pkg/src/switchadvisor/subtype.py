"""Player behavior subtypes and the Who-stage gate.

Each player's switching behavior is summarized from their training-split
matches, players are clustered into three subtypes on four standardized
features, and clusters are renamed canonically so the labels carry fixed
meaning: 0 one-deck loyalist, 1 loss-reactive switcher, 2 flex player.
Loyalists are answered with an immediate Stay; the other two subtypes are
forwarded to the timing and target stages.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass

import numpy as np

from . import cluster
from .matchlog import MatchRecord

SUBTYPE_NAMES = {0: "One-deck Loyalist", 1: "Loss-Reactive Switcher", 2: "Flex Player"}

CLUSTER_FEATURES = ("overall_switch_rate", "loss_reactivity",
                    "avg_change_magnitude", "top_deck_occupancy")


@dataclass(frozen=True, slots=True)
class BehaviorProfile:
    player_id: str
    overall_switch_rate: float
    post_loss_switch_rate: float
    post_win_switch_rate: float
    loss_reactivity: float
    avg_change_magnitude: float
    top_deck_occupancy: float
    deck_entropy: float

    def cluster_vector(self) -> np.ndarray:
        return np.array([getattr(self, name) for name in CLUSTER_FEATURES])


def jaccard_distance(a: tuple[str, ...], b: tuple[str, ...]) -> float:
    sa, sb = set(a), set(b)
    return 1.0 - len(sa & sb) / len(sa | sb)


def behavior_profile(player_id: str, matches: list[MatchRecord]) -> BehaviorProfile:
    """Switching statistics over a match sequence (rates are 0 when a
    denominator is empty, which filtered histories never produce)."""
    n = len(matches)
    changes = post_loss = post_loss_n = post_win = post_win_n = 0
    magnitudes: list[float] = []
    for i in range(1, n):
        changed = matches[i].deck != matches[i - 1].deck
        changes += changed
        if changed:
            magnitudes.append(jaccard_distance(matches[i - 1].deck, matches[i].deck))
        if matches[i - 1].won:
            post_win_n += 1
            post_win += changed
        else:
            post_loss_n += 1
            post_loss += changed
    usage = Counter(m.deck for m in matches)
    total = sum(usage.values())
    entropy = -sum((c / total) * math.log2(c / total) for c in usage.values())
    pl = post_loss / post_loss_n if post_loss_n else 0.0
    pw = post_win / post_win_n if post_win_n else 0.0
    return BehaviorProfile(
        player_id=player_id,
        overall_switch_rate=changes / (n - 1) if n > 1 else 0.0,
        post_loss_switch_rate=pl,
        post_win_switch_rate=pw,
        loss_reactivity=pl - pw,
        avg_change_magnitude=sum(magnitudes) / len(magnitudes) if magnitudes else 0.0,
        top_deck_occupancy=max(usage.values()) / total,
        deck_entropy=entropy,
    )


@dataclass(slots=True)
class SubtypeModel:
    mean: np.ndarray
    std: np.ndarray
    centroids: np.ndarray       # standardized space, raw cluster order
    canonical: dict[int, int]   # raw cluster id -> canonical label
    silhouette: float

    def standardize(self, vectors: np.ndarray) -> np.ndarray:
        return (vectors - self.mean) / self.std

    def assign(self, profile: BehaviorProfile) -> int:
        return self.assign_vectors(profile.cluster_vector()[None, :])[0]

    def assign_vectors(self, vectors: np.ndarray) -> list[int]:
        z = self.standardize(np.atleast_2d(vectors))
        raw = cluster.assign_labels(z, self.centroids)
        # nearest-centroid ties resolve to the lowest raw id; remap to the
        # lowest canonical label among tied raw clusters instead
        d = ((z[:, None, :] - self.centroids[None, :, :]) ** 2).sum(axis=2)
        out = []
        for i, r in enumerate(raw):
            tied = np.flatnonzero(np.isclose(d[i], d[i, r], rtol=0.0, atol=0.0))
            out.append(min(self.canonical[int(t)] for t in tied))
        return out


def canonical_relabel(centroids_raw_space: np.ndarray) -> dict[int, int]:
    """Name clusters by behavior: lowest mean overall_switch_rate is the
    loyalist (0); of the other two, higher mean loss_reactivity is the
    loss-reactive switcher (1); the remaining one is flex (2)."""
    switch_rate = centroids_raw_space[:, CLUSTER_FEATURES.index("overall_switch_rate")]
    reactivity = centroids_raw_space[:, CLUSTER_FEATURES.index("loss_reactivity")]
    loyal = int(np.argmin(switch_rate))
    rest = [c for c in range(len(centroids_raw_space)) if c != loyal]
    reactive = rest[0] if reactivity[rest[0]] >= reactivity[rest[1]] else rest[1]
    flex = rest[1] if reactive == rest[0] else rest[0]
    return {loyal: 0, reactive: 1, flex: 2}


def fit_subtypes(profiles: list[BehaviorProfile], seed: int = 0,
                 restarts: int = 50) -> SubtypeModel:
    if len(profiles) < 3:
        raise ValueError("need at least 3 players to fit subtypes")
    vectors = np.stack([p.cluster_vector() for p in profiles])
    mean = vectors.mean(axis=0)
    std = vectors.std(axis=0)
    std = np.where(std > 0, std, 1.0)
    z = (vectors - mean) / std
    result = cluster.kmeans(z, 3, seed=seed, restarts=restarts)
    sil = cluster.silhouette(z, result.labels, sample_size=len(z), seed=seed)
    raw_means = np.stack([vectors[result.labels == c].mean(axis=0) for c in range(3)])
    return SubtypeModel(mean, std, result.centroids, canonical_relabel(raw_means), sil)


def assign_subtypes(model: SubtypeModel, profiles: list[BehaviorProfile]
                    ) -> dict[str, int]:
    vectors = np.stack([p.cluster_vector() for p in profiles])
    labels = model.assign_vectors(vectors)
    return {p.player_id: int(lab) for p, lab in zip(profiles, labels)}


def subtype_gate(label: int) -> str:
    """Who-stage decision: loyalists stay, switchers and flex go forward."""
    if label not in (0, 1, 2):
        raise ValueError(f"invalid subtype label {label}")
    return "Stay" if label == 0 else "Forward"


# ---------------------------------------------------------------------------
# Flat files

MODEL_HEADER = "subtype-model v1"


def save_model(model: SubtypeModel, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(MODEL_HEADER + "\n")
        fh.write("features " + " ".join(CLUSTER_FEATURES) + "\n")
        fh.write("mean " + " ".join(repr(float(v)) for v in model.mean) + "\n")
        fh.write("std " + " ".join(repr(float(v)) for v in model.std) + "\n")
        fh.write(f"silhouette {model.silhouette!r}\n")
        for c in range(3):
            row = " ".join(repr(float(v)) for v in model.centroids[c])
            fh.write(f"centroid {c} {row}\n")
        for raw, canon in sorted(model.canonical.items()):
            fh.write(f"label {raw} {canon} {SUBTYPE_NAMES[canon]}\n")


def load_model(path) -> SubtypeModel:
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    if not lines or lines[0] != MODEL_HEADER:
        raise ValueError(f"not a subtype model file: {path}")
    mean = std = None
    silhouette = float("nan")
    centroids: dict[int, list[float]] = {}
    canonical: dict[int, int] = {}
    for line in lines[1:]:
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if parts[0] == "features":
            if tuple(parts[1:]) != CLUSTER_FEATURES:
                raise ValueError("model file feature order mismatch")
        elif parts[0] == "mean":
            mean = np.array([float(v) for v in parts[1:]])
        elif parts[0] == "std":
            std = np.array([float(v) for v in parts[1:]])
        elif parts[0] == "silhouette":
            silhouette = float(parts[1])
        elif parts[0] == "centroid":
            centroids[int(parts[1])] = [float(v) for v in parts[2:]]
        elif parts[0] == "label":
            canonical[int(parts[1])] = int(parts[2])
        else:
            raise ValueError(f"unknown model file directive {parts[0]!r}")
    if mean is None or std is None or len(centroids) != 3 or len(canonical) != 3:
        raise ValueError("incomplete model file")
    cent = np.stack([np.array(centroids[c]) for c in sorted(centroids)])
    return SubtypeModel(mean, std, cent, canonical, silhouette)


def save_label_table(path, labels: dict[str, int],
                     profiles: list[BehaviorProfile] | None = None) -> None:
    """Feature columns are included when profiles are given; the loader only
    ever reads the first two columns."""
    by_id = {p.player_id: p for p in profiles} if profiles else {}
    with open(path, "w", encoding="utf-8") as fh:
        header = "player_id\tlabel"
        if by_id:
            header += "\t" + "\t".join(CLUSTER_FEATURES)
        fh.write(header + "\n")
        for pid, label in labels.items():
            row = f"{pid}\t{label}"
            if by_id:
                p = by_id[pid]
                row += "\t" + "\t".join(repr(float(v))
                                        for v in p.cluster_vector())
            fh.write(row + "\n")


def load_label_table(path) -> dict[str, int]:
    labels: dict[str, int] = {}
    with open(path, "r", encoding="utf-8") as fh:
        next(fh)
        for line in fh:
            parts = line.rstrip("\n").split("\t")
            labels[parts[0]] = int(parts[1])
    return labels
