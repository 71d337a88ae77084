"""Session window encoder: BiGRU over K-match windows, multi-task pretrained.

A window covers K consecutive matches of one player.  Per step the encoder
sees the strategy state, outcome, deck-change flag, crown bucket, the deck
itself (mean of card embeddings), and two continuous features (log1p time
gap, average elixir).  The window vector is

    window_vec = W_o [fw_h_K || bw_h_1]

and the context vector adds a linear injection of seven window statistics:

    context_vec = window_vec + stats_proj(stats)

A per-player user vector is an exponential moving average of prior windows'
context vectors (decay 0.9, zero start), so it never sees the current or any
future window.  Pretraining fits five linear heads on context_vec predicting
the boundary match (deck change, transition type, outcome, crown margin) and
the player's subtype, then the backbone is frozen.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import nn
from .matchlog import Card, PlayerHistory, WindowSpan

HEAD_NAMES = ("dc", "dv", "win", "sub", "cd")

DEFAULT_HEAD_WEIGHTS = {"dc": 1.5, "dv": 1.5, "win": 1.0, "sub": 1.0, "cd": 0.5}

NO_CHANGE, WITHIN_STATE, CROSS_STATE = 0, 1, 2

STATS_FIELDS = (
    "avg_win_rate",
    "avg_deck_switch_rate",
    "avg_elixir",
    "tilt_signal",
    "win_rate_trend",
    "crown_trend",
    "deck_switch_concentration",
)


@dataclass(slots=True)
class EncoderConfig:
    k: int = 10
    n_states: int = 13
    cat_dim: int = 8
    card_dim: int = 32
    cont_dim: int = 8
    hidden: int = 128
    layers: int = 2
    d_z: int = 128
    head_weights: dict[str, float] = field(
        default_factory=lambda: dict(DEFAULT_HEAD_WEIGHTS))
    user_decay: float = 0.9
    batch_size: int = 256
    learning_rate: float = 1e-3
    epochs: int = 20
    patience: int = 3
    grad_clip: float = 5.0
    seed: int = 0


def build_card_index(catalog: dict[str, Card]) -> dict[str, int]:
    """Stable card vocabulary; index 0 is reserved for unknown ids."""
    return {cid: i + 1 for i, cid in enumerate(sorted(catalog))}


@dataclass(slots=True)
class PlayerArrays:
    """Per-step model inputs for one player's full history."""
    player_id: str
    states: np.ndarray     # (n,) int
    wins: np.ndarray       # (n,) int 0/1
    dcs: np.ndarray        # (n,) int 0/1, first match 0
    crowns: np.ndarray     # (n,) int -3..3
    dts: np.ndarray        # (n,) float, log1p seconds since previous
    elixirs: np.ndarray    # (n,) float
    cards: np.ndarray      # (n, 8) int vocab indices
    deck_ids: np.ndarray   # (n,) int, exact-deck interning per player
    subtype: int

    @classmethod
    def from_history(cls, history: PlayerHistory, deck_states: dict[tuple[str, ...], int],
                     card_index: dict[str, int], subtype: int) -> "PlayerArrays":
        n = len(history.matches)
        states = np.empty(n, dtype=np.int64)
        wins = np.empty(n, dtype=np.int64)
        crowns = np.empty(n, dtype=np.int64)
        dts = np.zeros(n)
        elixirs = np.empty(n)
        cards = np.empty((n, 8), dtype=np.int64)
        deck_ids = np.empty(n, dtype=np.int64)
        interned: dict[tuple[str, ...], int] = {}
        prev_ts = None
        for i, m in enumerate(history.matches):
            states[i] = deck_states[m.deck]
            wins[i] = int(m.won)
            crowns[i] = m.crown_diff
            if prev_ts is not None:
                dts[i] = np.log1p(max(0, m.timestamp - prev_ts))
            prev_ts = m.timestamp
            elixirs[i] = m.avg_elixir
            cards[i] = [card_index.get(c, 0) for c in m.deck]
            deck_ids[i] = interned.setdefault(m.deck, len(interned))
        dcs = np.zeros(n, dtype=np.int64)
        dcs[1:] = deck_ids[1:] != deck_ids[:-1]
        return cls(history.player_id, states, wins, dcs, crowns, dts, elixirs,
                   cards, deck_ids, subtype)


def window_stats(arrays: PlayerArrays, start: int, k: int) -> np.ndarray:
    """Seven summary statistics of the window, in STATS_FIELDS order."""
    sl = slice(start, start + k)
    wins = arrays.wins[sl]
    steps = np.arange(1, k + 1)
    denom = k * (k * k - 1) / 12.0  # sum of squared centered indices
    centered = steps - (k + 1) / 2.0
    counts = np.bincount(arrays.deck_ids[sl])
    shares = counts[counts > 0] / k
    return np.array([
        wins.mean(),
        arrays.dcs[sl].mean(),
        arrays.elixirs[sl].mean(),
        float(3 - wins[-3:].sum()),
        float(centered @ wins) / denom,
        float(centered @ arrays.crowns[sl]) / denom,
        float((shares ** 2).sum()),
    ])


@dataclass(slots=True)
class WindowBatch:
    states: np.ndarray    # (B, K)
    outcomes: np.ndarray  # (B, K)
    dcs: np.ndarray       # (B, K)
    crowns: np.ndarray    # (B, K) bucket 0..6
    cont: np.ndarray      # (B, K, 2) [dt, elixir]
    cards: np.ndarray     # (B, K, 8)
    mf: np.ndarray        # (B, 7)
    y_dc: np.ndarray      # (B,)
    y_dv: np.ndarray      # (B,)
    y_win: np.ndarray     # (B,)
    y_sub: np.ndarray     # (B,)
    y_cd: np.ndarray      # (B,) crown_diff / 3

    def __len__(self) -> int:
        return self.states.shape[0]

    def take(self, idx: np.ndarray) -> "WindowBatch":
        return WindowBatch(*(getattr(self, f.name)[idx]
                             for f in self.__dataclass_fields__.values()))


def materialize(spans: list[WindowSpan],
                arrays_by_player: dict[str, PlayerArrays], k: int) -> WindowBatch:
    B = len(spans)
    states = np.empty((B, k), dtype=np.int64)
    outcomes = np.empty((B, k), dtype=np.int64)
    dcs = np.empty((B, k), dtype=np.int64)
    crowns = np.empty((B, k), dtype=np.int64)
    cont = np.empty((B, k, 2))
    cards = np.empty((B, k, 8), dtype=np.int64)
    mf = np.empty((B, 7))
    y_dc = np.empty(B, dtype=np.int64)
    y_dv = np.empty(B, dtype=np.int64)
    y_win = np.empty(B, dtype=np.int64)
    y_sub = np.empty(B, dtype=np.int64)
    y_cd = np.empty(B)
    for i, span in enumerate(spans):
        a = arrays_by_player[span.player_id]
        s, e = span.start, span.start + k
        t = span.target_index
        states[i] = a.states[s:e]
        outcomes[i] = a.wins[s:e]
        dcs[i] = a.dcs[s:e]
        crowns[i] = a.crowns[s:e] + 3
        cont[i, :, 0] = a.dts[s:e]
        cont[i, :, 1] = a.elixirs[s:e]
        cards[i] = a.cards[s:e]
        mf[i] = window_stats(a, s, k)
        y_dc[i] = a.dcs[t]
        if not a.dcs[t]:
            y_dv[i] = NO_CHANGE
        elif a.states[t] == a.states[t - 1]:
            y_dv[i] = WITHIN_STATE
        else:
            y_dv[i] = CROSS_STATE
        y_win[i] = a.wins[t]
        y_sub[i] = a.subtype
        y_cd[i] = a.crowns[t] / 3.0
    return WindowBatch(states, outcomes, dcs, crowns, cont, cards, mf,
                       y_dc, y_dv, y_win, y_sub, y_cd)


@dataclass(slots=True)
class PretrainReport:
    epochs_run: int
    train_loss: list[float]
    val_loss: list[float]
    metrics: dict[str, float]
    seconds: float


class SessionEncoder:
    """The shared backbone.  Build, pretrain once, freeze, then encode."""

    def __init__(self, config: EncoderConfig, card_vocab: dict[str, int]):
        self.config = config
        self.card_vocab = dict(card_vocab)
        self.frozen = False
        rng = np.random.default_rng(np.random.SeedSequence(config.seed))
        c = config
        self.emb_state = nn.Embedding("emb_state", c.n_states + 1, c.cat_dim, rng)
        self.emb_outcome = nn.Embedding("emb_outcome", 2, c.cat_dim, rng)
        self.emb_dc = nn.Embedding("emb_dc", 2, c.cat_dim, rng)
        self.emb_crown = nn.Embedding("emb_crown", 7, c.cat_dim, rng)
        self.emb_card = nn.Embedding("emb_card", len(card_vocab) + 1, c.card_dim, rng)
        self.cont_mean = np.zeros(2)
        self.cont_std = np.ones(2)
        self.cont_gain = nn.Param(np.ones(2))
        self.cont_bias = nn.Param(np.zeros(2))
        self.cont_proj = nn.Linear("cont_proj", 2, c.cont_dim, rng)
        in_dim = 4 * c.cat_dim + c.card_dim + c.cont_dim
        self.grus: list[nn.BiGRU] = []
        for layer in range(c.layers):
            self.grus.append(nn.BiGRU(f"gru{layer}", in_dim, c.hidden, rng))
            in_dim = 2 * c.hidden
        self.out_proj = nn.Linear("out_proj", 2 * c.hidden, c.d_z, rng, bias=False)
        self.stats_proj = nn.Linear("stats_proj", 7, c.d_z, rng)
        self.heads = {
            "dc": nn.Linear("head_dc", c.d_z, 1, rng),
            "dv": nn.Linear("head_dv", c.d_z, 3, rng),
            "win": nn.Linear("head_win", c.d_z, 1, rng),
            "sub": nn.Linear("head_sub", c.d_z, 3, rng),
            "cd": nn.Linear("head_cd", c.d_z, 1, rng),
        }
        self._cache = None

    def params(self) -> dict[str, nn.Param]:
        out: dict[str, nn.Param] = {}
        for layer in (self.emb_state, self.emb_outcome, self.emb_dc,
                      self.emb_crown, self.emb_card, self.cont_proj,
                      *self.grus, self.out_proj, self.stats_proj,
                      *self.heads.values()):
            out.update(layer.params())
        out["cont_gain"] = self.cont_gain
        out["cont_bias"] = self.cont_bias
        return out

    def set_cont_stats(self, cont: np.ndarray) -> None:
        flat = cont.reshape(-1, 2)
        self.cont_mean = flat.mean(axis=0)
        std = flat.std(axis=0)
        self.cont_std = np.where(std > 0, std, 1.0)

    # -- forward / backward ------------------------------------------------

    def forward_context(self, batch: WindowBatch) -> tuple[np.ndarray, np.ndarray]:
        """Returns (window_vec, context_vec) for the batch."""
        c = self.config
        se = self.emb_state.forward(batch.states)
        oe = self.emb_outcome.forward(batch.outcomes)
        de = self.emb_dc.forward(batch.dcs)
        ce = self.emb_crown.forward(batch.crowns)
        card_e = self.emb_card.forward(batch.cards)
        deck_e = card_e.mean(axis=2)
        xc = (batch.cont - self.cont_mean) / self.cont_std
        u = xc * self.cont_gain.value + self.cont_bias.value
        cp = self.cont_proj.forward(u)
        X = np.concatenate([se, oe, de, ce, deck_e, cp], axis=2)
        H = X
        for gru in self.grus:
            H = gru.forward(H)
        boundary = np.concatenate([H[:, -1, :c.hidden], H[:, 0, c.hidden:]], axis=1)
        window_vec = self.out_proj.forward(boundary)
        context_vec = window_vec + self.stats_proj.forward(batch.mf)
        self._cache = (batch, xc, X.shape)
        return window_vec, context_vec

    def backward_context(self, d_context: np.ndarray) -> None:
        batch, xc, x_shape = self._cache
        c = self.config
        self.stats_proj.backward(d_context)
        d_boundary = self.out_proj.backward(d_context)
        B, K, _ = x_shape
        dH = np.zeros((B, K, 2 * c.hidden))
        dH[:, -1, :c.hidden] = d_boundary[:, :c.hidden]
        dH[:, 0, c.hidden:] = d_boundary[:, c.hidden:]
        for gru in reversed(self.grus):
            dH = gru.backward(dH)
        d = c.cat_dim
        self.emb_state.backward(dH[:, :, 0:d])
        self.emb_outcome.backward(dH[:, :, d:2 * d])
        self.emb_dc.backward(dH[:, :, 2 * d:3 * d])
        self.emb_crown.backward(dH[:, :, 3 * d:4 * d])
        d_deck = dH[:, :, 4 * d:4 * d + c.card_dim]
        d_card = np.repeat(d_deck[:, :, None, :] / 8.0, 8, axis=2)
        self.emb_card.backward(d_card)
        du = self.cont_proj.backward(dH[:, :, 4 * d + c.card_dim:])
        self.cont_gain.grad += (du * xc).sum(axis=(0, 1))
        self.cont_bias.grad += du.sum(axis=(0, 1))

    def head_losses(self, context_vec: np.ndarray, batch: WindowBatch,
                    backprop: bool = False) -> tuple[float, dict[str, float]]:
        w = self.config.head_weights
        losses: dict[str, float] = {}
        d_context = np.zeros_like(context_vec) if backprop else None
        specs = [
            ("dc", batch.y_dc, nn.bce_with_logits),
            ("dv", batch.y_dv, nn.ce_with_logits),
            ("win", batch.y_win, nn.bce_with_logits),
            ("sub", batch.y_sub, nn.ce_with_logits),
            ("cd", batch.y_cd, nn.mse),
        ]
        for name, target, loss_fn in specs:
            out = self.heads[name].forward(context_vec)
            loss, grad = loss_fn(out, target)
            losses[name] = loss
            if backprop:
                d_context += self.heads[name].backward(w[name] * grad)
        total = sum(w[name] * losses[name] for name in losses)
        if backprop:
            self.backward_context(d_context)
        return total, losses

    def batch_loss(self, batch: WindowBatch, backprop: bool = False
                   ) -> tuple[float, dict[str, float]]:
        _, context_vec = self.forward_context(batch)
        return self.head_losses(context_vec, batch, backprop=backprop)

    # -- training ----------------------------------------------------------

    def pretrain(self, train: WindowBatch, val: WindowBatch) -> PretrainReport:
        if self.frozen:
            raise RuntimeError("encoder is frozen; pretrain may run only once")
        if len(train) == 0:
            raise ValueError("empty training set")
        c = self.config
        self.set_cont_stats(train.cont)
        rng = np.random.default_rng(np.random.SeedSequence(entropy=c.seed,
                                                           spawn_key=(1,)))
        params = self.params()
        t0 = time.time()
        train_hist: list[float] = []
        val_hist: list[float] = []
        best_val = np.inf
        best_snapshot = None
        bad_epochs = 0
        for epoch in range(c.epochs):
            perm = rng.permutation(len(train))
            epoch_loss = 0.0
            n_batches = 0
            for lo in range(0, len(perm), c.batch_size):
                idx = perm[lo:lo + c.batch_size]
                nn.zero_grads(params)
                loss, _ = self.batch_loss(train.take(idx), backprop=True)
                if not np.isfinite(loss):
                    raise RuntimeError(
                        f"training diverged: loss={loss} at epoch {epoch} "
                        f"batch {n_batches}")
                nn.clip_global_norm(params, c.grad_clip)
                nn.sgd_step(params, c.learning_rate)
                epoch_loss += loss
                n_batches += 1
            train_hist.append(epoch_loss / n_batches)
            val_hist.append(self.evaluate_loss(val))
            if val_hist[-1] < best_val:
                best_val = val_hist[-1]
                best_snapshot = {k: p.value.copy() for k, p in params.items()}
                bad_epochs = 0
            else:
                bad_epochs += 1
                if bad_epochs >= c.patience:
                    break
        if best_snapshot is not None:
            for k, p in params.items():
                p.value[...] = best_snapshot[k]
        metrics = self.evaluate_heads(val)
        self.frozen = True
        return PretrainReport(len(train_hist), train_hist, val_hist, metrics,
                              time.time() - t0)

    def evaluate_loss(self, batch: WindowBatch, chunk: int = 1024) -> float:
        total = 0.0
        for lo in range(0, len(batch), chunk):
            part = batch.take(np.arange(lo, min(lo + chunk, len(batch))))
            loss, _ = self.batch_loss(part)
            total += loss * len(part)
        return total / len(batch)

    def evaluate_heads(self, batch: WindowBatch, chunk: int = 1024) -> dict[str, float]:
        from sklearn.metrics import roc_auc_score
        outs = {name: [] for name in HEAD_NAMES}
        for lo in range(0, len(batch), chunk):
            part = batch.take(np.arange(lo, min(lo + chunk, len(batch))))
            _, context_vec = self.forward_context(part)
            for name in HEAD_NAMES:
                outs[name].append(self.heads[name].forward(context_vec))
        pred = {name: np.concatenate(v) for name, v in outs.items()}
        metrics: dict[str, float] = {}
        for name, y in (("dc", batch.y_dc), ("win", batch.y_win)):
            if len(np.unique(y)) > 1:
                metrics[f"auc_{name}"] = float(roc_auc_score(y, pred[name].reshape(-1)))
            else:
                metrics[f"auc_{name}"] = float("nan")
        for name, y in (("dv", batch.y_dv), ("sub", batch.y_sub)):
            metrics[f"acc_{name}"] = float((pred[name].argmax(axis=1) == y).mean())
        metrics["mse_cd"] = float(((pred["cd"].reshape(-1) - batch.y_cd) ** 2).mean())
        return metrics

    # -- inference ---------------------------------------------------------

    def encode_batch(self, batch: WindowBatch) -> tuple[np.ndarray, np.ndarray]:
        return self.forward_context(batch)

    def encode_player(self, arrays: PlayerArrays, spans: list[WindowSpan]
                      ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Encode a player's windows in chronological order.

        Returns (context_vecs, user_vecs, stats) where user_vecs[i] is the
        EMA of context_vecs[:i], i.e. the state available before window i.
        """
        if not spans:
            d = self.config.d_z
            return np.zeros((0, d)), np.zeros((0, d)), np.zeros((0, 7))
        order = sorted(range(len(spans)), key=lambda i: spans[i].start)
        batch = materialize([spans[i] for i in order], {arrays.player_id: arrays},
                            self.config.k)
        _, context = self.forward_context(batch)
        decay = self.config.user_decay
        user = np.zeros_like(context)
        current = np.zeros(self.config.d_z)
        for row in range(len(order)):
            user[row] = current
            current = decay * current + (1.0 - decay) * context[row]
        # undo the chronological sort so rows align with the input spans
        context_out = np.empty_like(context)
        user_out = np.empty_like(user)
        mf_out = np.empty_like(batch.mf)
        for row, i in enumerate(order):
            context_out[i] = context[row]
            user_out[i] = user[row]
            mf_out[i] = batch.mf[row]
        return context_out, user_out, mf_out

    # -- persistence -------------------------------------------------------

    def save(self, path) -> None:
        c = self.config
        vocab_order = sorted(self.card_vocab, key=self.card_vocab.get)
        meta = {
            "kind": "encoder-model",
            "k": str(c.k), "n_states": str(c.n_states),
            "cat_dim": str(c.cat_dim), "card_dim": str(c.card_dim),
            "cont_dim": str(c.cont_dim), "hidden": str(c.hidden),
            "layers": str(c.layers), "d_z": str(c.d_z),
            "user_decay": repr(c.user_decay),
            "seed": str(c.seed),
            "frozen": str(int(self.frozen)),
            "head_weights": ",".join(f"{n}:{c.head_weights[n]!r}" for n in HEAD_NAMES),
            "card_vocab": ",".join(vocab_order),
        }
        tensors = {name: p.value for name, p in self.params().items()}
        tensors["cont_mean"] = self.cont_mean
        tensors["cont_std"] = self.cont_std
        nn.save_tensors(path, tensors, meta)

    @classmethod
    def load(cls, path) -> "SessionEncoder":
        tensors, meta = nn.load_tensors(path)
        if meta.get("kind") != "encoder-model":
            raise ValueError(f"not an encoder model file: {path}")
        weights = {}
        for pair in meta["head_weights"].split(","):
            name, value = pair.split(":")
            weights[name] = float(value)
        config = EncoderConfig(
            k=int(meta["k"]), n_states=int(meta["n_states"]),
            cat_dim=int(meta["cat_dim"]), card_dim=int(meta["card_dim"]),
            cont_dim=int(meta["cont_dim"]), hidden=int(meta["hidden"]),
            layers=int(meta["layers"]), d_z=int(meta["d_z"]),
            head_weights=weights, user_decay=float(meta["user_decay"]),
            seed=int(meta["seed"]))
        vocab_order = meta["card_vocab"].split(",") if meta["card_vocab"] else []
        card_vocab = {cid: i + 1 for i, cid in enumerate(vocab_order)}
        model = cls(config, card_vocab)
        params = model.params()
        for name, p in params.items():
            if name not in tensors:
                raise ValueError(f"model file missing tensor {name}")
            if tensors[name].shape != p.value.shape:
                raise ValueError(f"tensor {name} shape mismatch")
            p.value[...] = tensors[name]
        model.cont_mean = tensors["cont_mean"]
        model.cont_std = tensors["cont_std"]
        model.frozen = bool(int(meta["frozen"]))
        return model


def gradient_check_encoder(config: EncoderConfig | None = None,
                           eps: float = 1e-4, seed: int = 0) -> float:
    """Analytic vs central-difference gradients on a tiny random problem."""
    if config is None:
        config = EncoderConfig(k=4, cat_dim=3, card_dim=4, cont_dim=3,
                               hidden=4, layers=2, d_z=4, seed=seed)
    rng = np.random.default_rng(seed)
    vocab = {f"c{i}": i + 1 for i in range(7)}
    model = SessionEncoder(config, vocab)
    B, K = 3, config.k
    batch = WindowBatch(
        states=rng.integers(0, config.n_states, (B, K)),
        outcomes=rng.integers(0, 2, (B, K)),
        dcs=rng.integers(0, 2, (B, K)),
        crowns=rng.integers(0, 7, (B, K)),
        cont=rng.normal(0.0, 1.0, (B, K, 2)),
        cards=rng.integers(0, len(vocab) + 1, (B, K, 8)),
        mf=rng.normal(0.0, 1.0, (B, 7)),
        y_dc=rng.integers(0, 2, B),
        y_dv=rng.integers(0, 3, B),
        y_win=rng.integers(0, 2, B),
        y_sub=rng.integers(0, 3, B),
        y_cd=rng.uniform(-1.0, 1.0, B),
    )
    model.set_cont_stats(batch.cont)
    params = model.params()

    def loss_fn():
        return model.batch_loss(batch)[0]

    def backward_fn():
        model.batch_loss(batch, backprop=True)

    return nn.gradient_check(params, loss_fn, backward_fn, eps=eps)
