"""Deck strategy states: cluster decks into 13 archetypes.

A deck is summarized by seven structural indicators (average elixir cost,
population cost std, four functional type ratios, and the fraction of cheap
cards), each mapped to its empirical CDF position over the training corpus,
optionally weighted, then clustered with k-means.  The fitted model assigns
every deck a state id 0..12 used as the strategy state everywhere downstream.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import cluster
from .matchlog import Card

FEATURE_ORDER = (
    "avg_elixir",
    "elixir_std",
    "ratio_win_condition",
    "ratio_spell",
    "ratio_building",
    "ratio_support",
    "ratio_cheap",
)

FUNC_ORDER = ("win_condition", "spell", "building", "support")

CHEAP_COST_MAX = 2


def deck_features(deck: tuple[str, ...], catalog: dict[str, Card]) -> np.ndarray:
    """Seven structural indicators for one deck, in FEATURE_ORDER."""
    if len(deck) != 8:
        raise ValueError(f"deck must have 8 cards, got {len(deck)}")
    costs = np.empty(8)
    funcs = []
    for i, cid in enumerate(deck):
        card = catalog.get(cid)
        if card is None:
            raise ValueError(f"unknown card_id {cid!r}")
        costs[i] = card.elixir_cost
        funcs.append(card.func_type)
    ratios = [funcs.count(f) / 8.0 for f in FUNC_ORDER]
    return np.array([
        costs.mean(),
        costs.std(),  # population std, ddof=0
        *ratios,
        float(np.count_nonzero(costs <= CHEAP_COST_MAX)) / 8.0,
    ])


def feature_matrix(decks, catalog: dict[str, Card]) -> np.ndarray:
    return np.stack([deck_features(d, catalog) for d in decks])


class QuantileMap:
    """Per-feature empirical CDF transform fitted on a reference corpus.

    Duplicate reference values collapse to the mean of their rank positions,
    keeping the map strictly increasing on distinct values; queries outside
    the reference range clamp to 0/1 ends.
    """

    def __init__(self, values: list[np.ndarray], positions: list[np.ndarray]):
        self.values = values
        self.positions = positions

    @classmethod
    def fit(cls, points: np.ndarray) -> "QuantileMap":
        values, positions = [], []
        n = points.shape[0]
        base = np.linspace(0.0, 1.0, n) if n > 1 else np.array([0.5])
        for j in range(points.shape[1]):
            col = np.sort(points[:, j])
            uniq, start, counts = np.unique(col, return_index=True, return_counts=True)
            sums = np.add.reduceat(base, start)
            values.append(uniq)
            positions.append(sums / counts)
        return cls(values, positions)

    def transform(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(points)
        out = np.empty_like(points, dtype=float)
        for j in range(points.shape[1]):
            out[:, j] = np.interp(points[:, j], self.values[j], self.positions[j])
        return out


@dataclass(frozen=True, slots=True)
class StrategyState:
    state_id: int
    group: str
    name: str


GROUPS = ("Cycle", "Control", "Beatdown", "Specialist")


def _group_for(raw_mean: np.ndarray) -> str:
    """Cosmetic group label from cluster-mean raw features."""
    feat = dict(zip(FEATURE_ORDER, raw_mean))
    if feat["elixir_std"] >= 2.2 or feat["ratio_spell"] >= 0.5:
        return "Specialist"
    if feat["avg_elixir"] >= 4.1:
        return "Beatdown"
    if feat["avg_elixir"] <= 3.2 and feat["ratio_cheap"] >= 0.45:
        return "Cycle"
    return "Control"


@dataclass(slots=True)
class ArchetypeModel:
    quantile: QuantileMap
    weights: np.ndarray
    centroids: np.ndarray  # in weighted quantile space
    states: dict[int, StrategyState]
    silhouette: float

    @property
    def n_states(self) -> int:
        return self.centroids.shape[0]

    def transform(self, raw: np.ndarray) -> np.ndarray:
        return self.quantile.transform(raw) * np.sqrt(self.weights)

    def assign_features(self, raw: np.ndarray) -> np.ndarray:
        return cluster.assign_labels(self.transform(raw), self.centroids)

    def assign_state(self, deck: tuple[str, ...], catalog: dict[str, Card]) -> int:
        raw = deck_features(deck, catalog)[None, :]
        return int(self.assign_features(raw)[0])

    def assign_decks(self, decks, catalog: dict[str, Card]) -> dict[tuple[str, ...], int]:
        """Batch map of distinct decks to states; equals per-deck assignment."""
        distinct = list(dict.fromkeys(decks))
        labels = self.assign_features(feature_matrix(distinct, catalog))
        return {deck: int(label) for deck, label in zip(distinct, labels)}


def fit_archetypes(decks, catalog: dict[str, Card], k: int = 13,
                   weights: np.ndarray | None = None, seed: int = 0,
                   restarts: int = 50, silhouette_sample: int = 5000
                   ) -> ArchetypeModel:
    """Fit on the distinct decks of the training corpus (one vote per deck).

    Raises ValueError when fewer than k distinct feature vectors exist.
    """
    distinct = list(dict.fromkeys(decks))
    raw = feature_matrix(distinct, catalog)
    if weights is None:
        weights = np.ones(len(FEATURE_ORDER))
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (len(FEATURE_ORDER),) or np.any(weights <= 0):
        raise ValueError("weights must be 7 positive values")
    qmap = QuantileMap.fit(raw)
    points = qmap.transform(raw) * np.sqrt(weights)
    result = cluster.kmeans(points, k, seed=seed, restarts=restarts)
    sil = cluster.silhouette(points, result.labels, sample_size=silhouette_sample,
                             seed=seed) if k > 1 else float("nan")

    states = {}
    group_counts: dict[str, int] = {}
    for sid in range(k):
        members = raw[result.labels == sid]
        mean = members.mean(axis=0) if len(members) else raw.mean(axis=0)
        group = _group_for(mean)
        group_counts[group] = group_counts.get(group, 0) + 1
        states[sid] = StrategyState(sid, group, f"{group}-{group_counts[group]}")
    return ArchetypeModel(qmap, weights, result.centroids, states, sil)


# ---------------------------------------------------------------------------
# Versioned flat-file model format

MODEL_HEADER = "archetype-model v1"


def save_model(model: ArchetypeModel, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(MODEL_HEADER + "\n")
        fh.write("# weights: unit defaults; taxonomy: 4 func types (stand-in)\n")
        fh.write("features " + " ".join(FEATURE_ORDER) + "\n")
        fh.write("weights " + " ".join(repr(float(w)) for w in model.weights) + "\n")
        fh.write(f"silhouette {model.silhouette!r}\n")
        for j, name in enumerate(FEATURE_ORDER):
            vals = model.quantile.values[j]
            pos = model.quantile.positions[j]
            fh.write(f"quantile {name} {len(vals)}\n")
            for v, p in zip(vals, pos):
                fh.write(f"{float(v)!r} {float(p)!r}\n")
        for sid in range(model.n_states):
            row = " ".join(repr(float(c)) for c in model.centroids[sid])
            fh.write(f"centroid {sid} {row}\n")
        for sid, state in sorted(model.states.items()):
            fh.write(f"state {sid} {state.group} {state.name}\n")


def load_model(path) -> ArchetypeModel:
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    if not lines or lines[0] != MODEL_HEADER:
        raise ValueError(f"not an archetype model file: {path}")
    weights = None
    silhouette = float("nan")
    qvalues: list[np.ndarray] = []
    qpositions: list[np.ndarray] = []
    centroids: dict[int, list[float]] = {}
    states: dict[int, StrategyState] = {}
    i = 1
    while i < len(lines):
        line = lines[i]
        i += 1
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if parts[0] == "features":
            if tuple(parts[1:]) != FEATURE_ORDER:
                raise ValueError("model file feature order mismatch")
        elif parts[0] == "weights":
            weights = np.array([float(v) for v in parts[1:]])
        elif parts[0] == "silhouette":
            silhouette = float(parts[1])
        elif parts[0] == "quantile":
            n = int(parts[2])
            block = [lines[i + r].split() for r in range(n)]
            i += n
            qvalues.append(np.array([float(b[0]) for b in block]))
            qpositions.append(np.array([float(b[1]) for b in block]))
        elif parts[0] == "centroid":
            centroids[int(parts[1])] = [float(v) for v in parts[2:]]
        elif parts[0] == "state":
            sid = int(parts[1])
            states[sid] = StrategyState(sid, parts[2], " ".join(parts[3:]))
        else:
            raise ValueError(f"unknown model file directive {parts[0]!r}")
    if weights is None or not centroids:
        raise ValueError("incomplete model file")
    cent = np.stack([np.array(centroids[sid]) for sid in sorted(centroids)])
    return ArchetypeModel(QuantileMap(qvalues, qpositions), weights, cent,
                          states, silhouette)
