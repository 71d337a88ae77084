"""Decision heads on the frozen encoder.

TimingGate answers When: a binary classifier over (context_vec, user_vec,
window stats, subtype, current state) trained with a positive class weight
of 1.5, thresholded at a value tuned on validation.  The quality model
answers part of What: it regresses the raw boundary delta y_tq from the same
context plus (from, to) state pair, so candidate targets can be ranked.
Both are 3-layer MLPs, hidden 256, trained with mini-batch gradient descent
and early stopping; inputs are standardized with training-set statistics
kept inside the model file.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .policyeval import switch_gap
from .transition import TransitionEvent

N_STATES = 13


@dataclass(slots=True)
class HeadsConfig:
    hidden: int = 256
    batch_size: int = 256
    learning_rate: float = 1e-3
    epochs: int = 20
    patience: int = 3
    grad_clip: float = 5.0
    w_pos: float = 1.5
    theta_grid: np.ndarray = field(
        default_factory=lambda: np.round(np.arange(0.0, 1.001, 0.01), 2))
    max_approval_rate: float = 0.15
    min_side_support: int = 15
    seed: int = 0


class FeatureStore:
    """Encoder outputs joined to events by (player_id, window_start)."""

    def __init__(self, d_z: int):
        self.d_z = d_z
        self.index: dict[tuple[str, int], int] = {}
        self._zc: list[np.ndarray] = []
        self._zu: list[np.ndarray] = []
        self._mf: list[np.ndarray] = []
        self.zc: np.ndarray | None = None
        self.zu: np.ndarray | None = None
        self.mf: np.ndarray | None = None

    def add_player(self, player_id: str, starts: list[int], zc: np.ndarray,
                   zu: np.ndarray, mf: np.ndarray) -> None:
        base = len(self.index)
        for i, start in enumerate(starts):
            self.index[(player_id, start)] = base + i
        self._zc.append(zc)
        self._zu.append(zu)
        self._mf.append(mf)

    def seal(self) -> None:
        self.zc = np.concatenate(self._zc) if self._zc else np.zeros((0, self.d_z))
        self.zu = np.concatenate(self._zu) if self._zu else np.zeros((0, self.d_z))
        self.mf = np.concatenate(self._mf) if self._mf else np.zeros((0, 7))
        self._zc, self._zu, self._mf = [], [], []

    def rows(self, events: list[TransitionEvent]) -> np.ndarray:
        return np.array([self.index[(e.player_id, e.window_start)]
                         for e in events], dtype=np.int64)

    def gate_input(self, events: list[TransitionEvent]) -> np.ndarray:
        r = self.rows(events)
        sub = np.zeros((len(events), 3))
        state = np.zeros((len(events), N_STATES))
        for i, e in enumerate(events):
            sub[i, e.subtype] = 1.0
            state[i, e.from_state] = 1.0
        return np.concatenate([self.zc[r], self.zu[r], self.mf[r], sub, state],
                              axis=1)

    def quality_input(self, events: list[TransitionEvent],
                      to_states: list[int] | None = None) -> np.ndarray:
        r = self.rows(events)
        src = np.zeros((len(events), N_STATES))
        dst = np.zeros((len(events), N_STATES))
        for i, e in enumerate(events):
            src[i, e.from_state] = 1.0
            dst[i, to_states[i] if to_states is not None else e.to_state] = 1.0
        return np.concatenate([self.zc[r], self.zu[r], self.mf[r], src, dst],
                              axis=1)

    def quality_input_for_targets(self, event: TransitionEvent,
                                  to_states: list[int]) -> np.ndarray:
        """One context fanned out across candidate destinations."""
        row = self.index[(event.player_id, event.window_start)]
        base = np.concatenate([self.zc[row], self.zu[row], self.mf[row]])
        src = np.zeros(N_STATES)
        src[event.from_state] = 1.0
        out = np.empty((len(to_states), base.size + 2 * N_STATES))
        for i, to in enumerate(to_states):
            dst = np.zeros(N_STATES)
            dst[to] = 1.0
            out[i] = np.concatenate([base, src, dst])
        return out


def gate_feature_row(zc: np.ndarray, zu: np.ndarray, mf: np.ndarray,
                     subtype: int, from_state: int) -> np.ndarray:
    """Single-context gate input; must match FeatureStore.gate_input."""
    sub = np.zeros(3)
    sub[subtype] = 1.0
    state = np.zeros(N_STATES)
    state[from_state] = 1.0
    return np.concatenate([zc, zu, mf, sub, state])


def quality_feature_rows(zc: np.ndarray, zu: np.ndarray, mf: np.ndarray,
                         from_state: int, to_states: list[int]) -> np.ndarray:
    """One context fanned out over targets; matches FeatureStore layout."""
    base = np.concatenate([zc, zu, mf])
    src = np.zeros(N_STATES)
    src[from_state] = 1.0
    out = np.empty((len(to_states), base.size + 2 * N_STATES))
    for i, to in enumerate(to_states):
        dst = np.zeros(N_STATES)
        dst[to] = 1.0
        out[i] = np.concatenate([base, src, dst])
    return out


class MLP:
    """in -> hidden -> hidden -> out, ReLU between the linear layers."""

    def __init__(self, name: str, in_dim: int, hidden: int, out_dim: int,
                 rng: np.random.Generator):
        self.l1 = nn.Linear(f"{name}.l1", in_dim, hidden, rng)
        self.l2 = nn.Linear(f"{name}.l2", hidden, hidden, rng)
        self.l3 = nn.Linear(f"{name}.l3", hidden, out_dim, rng)
        self._a = None

    def forward(self, X: np.ndarray) -> np.ndarray:
        h1 = np.maximum(self.l1.forward(X), 0.0)
        h2 = np.maximum(self.l2.forward(h1), 0.0)
        self._a = (h1, h2)
        return self.l3.forward(h2)

    def backward(self, dout: np.ndarray) -> np.ndarray:
        h1, h2 = self._a
        d2 = self.l3.backward(dout) * (h2 > 0)
        d1 = self.l2.backward(d2) * (h1 > 0)
        return self.l1.backward(d1)

    def params(self) -> dict[str, nn.Param]:
        return {**self.l1.params(), **self.l2.params(), **self.l3.params()}


def weighted_bce_with_logits(logits: np.ndarray, y: np.ndarray, w_pos: float
                             ) -> tuple[float, np.ndarray]:
    x = logits.reshape(-1)
    yf = y.reshape(-1).astype(float)
    w = 1.0 + (w_pos - 1.0) * yf
    raw = np.maximum(x, 0.0) - x * yf + np.log1p(np.exp(-np.abs(x)))
    sig = 1.0 / (1.0 + np.exp(-np.abs(x)))
    sig = np.where(x >= 0, sig, 1.0 - sig)
    grad = w * (sig - yf) / x.size
    return float((w * raw).mean()), grad.reshape(logits.shape)


class _StandardizedMLP:
    """Shared plumbing: input standardization + MLP + training loop."""

    def __init__(self, name: str, in_dim: int, config: HeadsConfig):
        self.config = config
        rng = np.random.default_rng(np.random.SeedSequence(config.seed))
        self.mlp = MLP(name, in_dim, config.hidden, 1, rng)
        self.x_mean = np.zeros(in_dim)
        self.x_std = np.ones(in_dim)

    def set_input_stats(self, X: np.ndarray) -> None:
        self.x_mean = X.mean(axis=0)
        std = X.std(axis=0)
        self.x_std = np.where(std > 0, std, 1.0)

    def raw_output(self, X: np.ndarray) -> np.ndarray:
        return self.mlp.forward((X - self.x_mean) / self.x_std).reshape(-1)

    def fit(self, X: np.ndarray, y: np.ndarray, X_val: np.ndarray,
            y_val: np.ndarray, loss_fn) -> dict[str, list[float]]:
        c = self.config
        self.set_input_stats(X)
        Xn = (X - self.x_mean) / self.x_std
        Xv = (X_val - self.x_mean) / self.x_std
        rng = np.random.default_rng(np.random.SeedSequence(entropy=c.seed,
                                                           spawn_key=(1,)))
        params = self.mlp.params()
        train_hist, val_hist = [], []
        best_val = np.inf
        best = None
        bad = 0
        for _ in range(c.epochs):
            perm = rng.permutation(len(Xn))
            total = 0.0
            n_batches = 0
            for lo in range(0, len(perm), c.batch_size):
                idx = perm[lo:lo + c.batch_size]
                nn.zero_grads(params)
                out = self.mlp.forward(Xn[idx])
                loss, grad = loss_fn(out, y[idx])
                if not np.isfinite(loss):
                    raise RuntimeError(f"head training diverged: loss={loss}")
                self.mlp.backward(grad)
                nn.clip_global_norm(params, c.grad_clip)
                nn.sgd_step(params, c.learning_rate)
                total += loss
                n_batches += 1
            train_hist.append(total / n_batches)
            val_loss, _ = loss_fn(self.mlp.forward(Xv), y_val)
            val_hist.append(val_loss)
            if val_loss < best_val:
                best_val = val_loss
                best = {k: p.value.copy() for k, p in params.items()}
                bad = 0
            else:
                bad += 1
                if bad >= c.patience:
                    break
        if best is not None:
            for k, p in params.items():
                p.value[...] = best[k]
        return {"train_loss": train_hist, "val_loss": val_hist}

    def _tensors(self) -> dict[str, np.ndarray]:
        out = {name: p.value for name, p in self.mlp.params().items()}
        out["x_mean"] = self.x_mean
        out["x_std"] = self.x_std
        return out

    def _restore(self, tensors: dict[str, np.ndarray]) -> None:
        for name, p in self.mlp.params().items():
            p.value[...] = tensors[name]
        self.x_mean = tensors["x_mean"]
        self.x_std = tensors["x_std"]


class GateModel(_StandardizedMLP):
    """When-stage binary classifier; approve iff sigmoid(logit) >= theta."""

    def __init__(self, in_dim: int, config: HeadsConfig, theta: float = 0.5):
        super().__init__("gate", in_dim, config)
        self.theta = theta

    def predict_prob(self, X: np.ndarray) -> np.ndarray:
        logit = self.raw_output(X)
        out = np.empty_like(logit)
        pos = logit >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-logit[pos]))
        ex = np.exp(logit[~pos])
        out[~pos] = ex / (1.0 + ex)
        return out

    def approve(self, X: np.ndarray) -> np.ndarray:
        return self.predict_prob(X) >= self.theta

    def save(self, path) -> None:
        meta = {"kind": "gate-model", "in_dim": str(self.x_mean.size),
                "hidden": str(self.config.hidden), "theta": repr(self.theta),
                "w_pos": repr(self.config.w_pos), "seed": str(self.config.seed)}
        nn.save_tensors(path, self._tensors(), meta)

    @classmethod
    def load(cls, path) -> "GateModel":
        tensors, meta = nn.load_tensors(path)
        if meta.get("kind") != "gate-model":
            raise ValueError(f"not a gate model file: {path}")
        config = HeadsConfig(hidden=int(meta["hidden"]),
                             w_pos=float(meta["w_pos"]), seed=int(meta["seed"]))
        model = cls(int(meta["in_dim"]), config, theta=float(meta["theta"]))
        model._restore(tensors)
        return model


class QualityModel(_StandardizedMLP):
    """What-stage regressor of the raw boundary delta for a (from, to) pair."""

    def __init__(self, in_dim: int, config: HeadsConfig):
        super().__init__("quality", in_dim, config)

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.raw_output(X)

    def save(self, path) -> None:
        meta = {"kind": "quality-model", "in_dim": str(self.x_mean.size),
                "hidden": str(self.config.hidden), "seed": str(self.config.seed)}
        nn.save_tensors(path, self._tensors(), meta)

    @classmethod
    def load(cls, path) -> "QualityModel":
        tensors, meta = nn.load_tensors(path)
        if meta.get("kind") != "quality-model":
            raise ValueError(f"not a quality model file: {path}")
        config = HeadsConfig(hidden=int(meta["hidden"]), seed=int(meta["seed"]))
        model = cls(int(meta["in_dim"]), config)
        model._restore(tensors)
        return model


def tune_theta(probs: np.ndarray, events: list[TransitionEvent],
               grid: np.ndarray, max_rate: float,
               min_side: int = 15) -> tuple[float, dict]:
    """Pick the threshold maximizing the switch gap on the full validation
    distribution subject to an approval-rate cap; ties go to the higher
    (more conservative) threshold.

    A gap estimate only counts when both the approved and the rejected
    switcher sides hold at least min_side events; a difference of means over
    a handful of matches is noise and picking its argmax selects pathological
    thresholds."""
    y = np.array([e.y_tq for e in events])
    is_switch = np.array([e.action == "switch" for e in events])
    best_theta = None
    best_gap = -np.inf
    rows = []
    for theta in grid:
        approved = probs >= theta
        rate = float(approved.mean())
        app_sw = approved[is_switch]
        gap = switch_gap(y[is_switch], app_sw)
        rows.append((float(theta), rate, gap))
        if rate > max_rate or gap is None:
            continue
        if min(app_sw.sum(), (~app_sw).sum()) < min_side:
            continue
        if gap >= best_gap:
            best_gap = gap
            best_theta = float(theta)
    if best_theta is None:
        warnings.warn("no threshold produced a supported switch gap; using 0.5")
        return 0.5, {"rows": rows, "gap": None}
    return best_theta, {"rows": rows, "gap": best_gap}


def train_timing_gate(store: FeatureStore,
                      train_mix: list[tuple[TransitionEvent, object]],
                      val_events: list[TransitionEvent],
                      config: HeadsConfig | None = None
                      ) -> tuple[GateModel, dict]:
    from sklearn.metrics import roc_auc_score
    from .transition import label_event

    config = config or HeadsConfig()
    events = [e for e, _ in train_mix]
    y = np.array([lab.label for _, lab in train_mix])
    if len(np.unique(y)) < 2:
        raise ValueError("training mix has a single class; cannot fit the gate")
    X = store.gate_input(events)
    X_val = store.gate_input(val_events)
    y_val = np.array([label_event(e).label for e in val_events])
    model = GateModel(X.shape[1], config)
    history = model.fit(X, y, X_val, y_val,
                        lambda out, t: weighted_bce_with_logits(out, t, config.w_pos))
    probs = model.predict_prob(X_val)
    theta, tuning = tune_theta(probs, val_events, config.theta_grid,
                               config.max_approval_rate,
                               config.min_side_support)
    model.theta = theta
    metrics = {
        "val_auc": float(roc_auc_score(y_val, probs))
        if len(np.unique(y_val)) > 1 else float("nan"),
        "theta": theta,
        "val_approval_rate": float((probs >= theta).mean()),
        "val_gap": tuning["gap"],
        "history": history,
    }
    return model, metrics


def train_quality(store: FeatureStore, train_switch: list[TransitionEvent],
                  val_switch: list[TransitionEvent],
                  config: HeadsConfig | None = None
                  ) -> tuple[QualityModel, dict]:
    config = config or HeadsConfig()
    if len(train_switch) < 100:
        warnings.warn(f"only {len(train_switch)} switch events; "
                      "quality estimates will be high-variance")
    X = store.quality_input(train_switch)
    y = np.array([e.y_tq for e in train_switch])
    X_val = store.quality_input(val_switch)
    y_val = np.array([e.y_tq for e in val_switch])
    model = QualityModel(X.shape[1], config)
    history = model.fit(X, y, X_val, y_val, nn.mse)
    pred_val = model.predict(X_val)
    metrics = {
        "train_mae": float(np.abs(model.predict(X) - y).mean()),
        "val_mae": float(np.abs(pred_val - y_val).mean()),
        "history": history,
    }
    return model, metrics


@dataclass(slots=True)
class PredictorReport:
    n_events: int
    mae: float
    direction_accuracy: float
    precision: float
    recall: float
    f1: float
    gap: float | None
    gap_ci: tuple[float, float] | None
    negative_confirmation: float
    baseline_mae: float            # Always-Zero
    baseline_direction: float      # Always-Zero

    def as_text(self) -> str:
        gap = "---" if self.gap is None else f"{self.gap * 100:+.1f}%p"
        ci = ("---" if self.gap_ci is None
              else f"[{self.gap_ci[0] * 100:+.1f}, {self.gap_ci[1] * 100:+.1f}]%p")
        lines = [
            f"events                {self.n_events}",
            f"MAE                   {self.mae:.4f}  (always-zero {self.baseline_mae:.4f})",
            f"direction accuracy    {self.direction_accuracy:.3f}  "
            f"(always-zero {self.baseline_direction:.3f})",
            f"precision             {self.precision:.3f}",
            f"recall                {self.recall:.3f}",
            f"F1                    {self.f1:.3f}",
            f"discrimination gap    {gap}  95% CI {ci}",
            f"negative confirmation {self.negative_confirmation:.3f}",
        ]
        return "\n".join(lines)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("predictor-report v1\n")
            for name in ("n_events", "mae", "direction_accuracy", "precision",
                         "recall", "f1", "negative_confirmation",
                         "baseline_mae", "baseline_direction"):
                fh.write(f"{name} {getattr(self, name)!r}\n")
            fh.write(f"gap {'---' if self.gap is None else repr(self.gap)}\n")
            if self.gap_ci is None:
                fh.write("gap_ci --- ---\n")
            else:
                fh.write(f"gap_ci {self.gap_ci[0]!r} {self.gap_ci[1]!r}\n")


def bootstrap_gap_ci(y: np.ndarray, pred_positive: np.ndarray,
                     n_boot: int = 10000, seed: int = 0,
                     chunk: int = 500) -> tuple[float, float] | None:
    """Percentile CI of the discrimination gap; resamples whose predicted
    sets are one-sided carry no gap and are dropped."""
    n = y.size
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed,
                                                       spawn_key=(7,)))
    gaps: list[np.ndarray] = []
    done = 0
    while done < n_boot:
        rows = min(chunk, n_boot - done)
        idx = rng.integers(0, n, size=(rows, n))
        pos = pred_positive[idx]
        yb = y[idx]
        n_pos = pos.sum(axis=1)
        n_neg = n - n_pos
        ok = (n_pos > 0) & (n_neg > 0)
        with np.errstate(invalid="ignore"):
            gap = ((yb * pos).sum(axis=1) / n_pos
                   - (yb * ~pos).sum(axis=1) / n_neg)
        gaps.append(gap[ok])
        done += rows
    pool = np.concatenate(gaps)
    if pool.size == 0:
        return None
    return (float(np.quantile(pool, 0.025)), float(np.quantile(pool, 0.975)))


def evaluate_predictor(model: QualityModel, store: FeatureStore,
                       test_switch: list[TransitionEvent],
                       n_boot: int = 10000, seed: int = 0) -> PredictorReport:
    if len(test_switch) < 30:
        raise ValueError("need at least 30 switch events to evaluate")
    X = store.quality_input(test_switch)
    pred = model.predict(X)
    y = np.array([e.y_tq for e in test_switch])
    return _predictor_report(pred, y, n_boot=n_boot, seed=seed)


def _predictor_report(pred: np.ndarray, y: np.ndarray, n_boot: int = 10000,
                      seed: int = 0) -> PredictorReport:
    pred_pos = pred > 0
    actual_pos = y > 0
    mae = float(np.abs(pred - y).mean())
    direction = float((pred_pos == actual_pos).mean())
    tp = int((pred_pos & actual_pos).sum())
    precision = tp / pred_pos.sum() if pred_pos.any() else 0.0
    recall = tp / actual_pos.sum() if actual_pos.any() else 0.0
    f1 = (2 * precision * recall / (precision + recall)
          if precision + recall > 0 else 0.0)
    if pred_pos.any() and (~pred_pos).any():
        gap = float(y[pred_pos].mean() - y[~pred_pos].mean())
        ci = bootstrap_gap_ci(y, pred_pos, n_boot=n_boot, seed=seed)
    else:
        gap, ci = None, None
    neg_conf = (float((y[~pred_pos] <= 0).mean()) if (~pred_pos).any() else 0.0)
    return PredictorReport(
        n_events=y.size, mae=mae, direction_accuracy=direction,
        precision=float(precision), recall=float(recall), f1=float(f1),
        gap=gap, gap_ci=ci, negative_confirmation=neg_conf,
        baseline_mae=float(np.abs(y).mean()),
        baseline_direction=float((y <= 0).mean()))
