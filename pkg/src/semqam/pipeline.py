"""End-to-end system: encoder -> quantizer -> QAM symbols -> AWGN -> decoder.

Training runs the channel in the loop: hard indices are modulated, sent at
the training SNR, hard-detected, and the receiver looks the codewords back
up; the channel+detection block is treated as identity on embeddings in the
backward pass.  The objective is cross entropy plus the VQ terms plus a
transport penalty pulling the codeword usage distribution toward the
capacity-achieving input distribution of the induced discrete channel.
"""

from __future__ import annotations

import dataclasses
import json
import logging
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .capacity import blahut_arimoto
from .channel import AwgnChannel, _add_noise, dmc_analytic
from .constellation import SUPPORTED_ORDERS, detect, make_qam, map_indices
from .quantizer import (
    Codebook,
    assign_nearest,
    hard_usage_histogram,
    init_codebook,
    perplexity,
    quantize_gumbel,
    quantize_ste,
    usage_distribution,
    vq_losses,
)
from .transport import grad_wrt_source, qam_ground_cost, sinkhorn

log = logging.getLogger(__name__)

_CHECKPOINT_FORMAT = "semqam-checkpoint-v1"

ESTIMATORS = ("ste", "gumbel")
TARGETS = ("blahut_arimoto", "uniform")
OPTIMIZERS = ("adam", "sgd")


class TrainingDiverged(RuntimeError):
    """Non-finite loss; .epoch carries the epoch index at abort."""

    def __init__(self, message: str, epoch: int):
        super().__init__(message)
        self.epoch = epoch


@dataclass
class TrainConfig:
    k: int = 16
    d: int = 8
    m: int = 4                       # channel symbols per example
    snr_train_db: float = 12.0
    snr_eval_grid: tuple[float, ...] = (4.0, 8.0, 12.0, 16.0, 20.0)
    estimator: str = "ste"
    tau_start: float = 2.0           # gumbel temperature schedule
    tau_end: float = 0.5
    tau_decay: float = 0.85
    tau_soft: float = 1.0            # soft-assignment temperature on the STE path
    lambda_wass: float = 0.1
    beta_commit: float = 0.25
    target_dist: str = "blahut_arimoto"
    eps_sinkhorn: float = 1e-2
    sinkhorn_tol: float = 1e-4
    sinkhorn_max_iter: int = 100000
    sinkhorn_omega: float = 1.9      # over-relaxation, same fixed point
    encoder_hidden: tuple[int, ...] = (128,)
    decoder_hidden: tuple[int, ...] = (128,)
    encoder_out_gain: float = 0.1    # init scale of the encoder output layer;
                                     # small values start all tokens near the
                                     # codebook center (assignments learned,
                                     # not frozen by init)
    codebook_init: str = "uniform"
    channel_grad: str = "straight_through"
    optimizer: str = "adam"
    lr: float = 3e-3
    lr_decay: float = 1.0            # per-epoch multiplicative decay
    momentum: float = 0.9
    epochs: int = 12
    batch: int = 128
    seed: int = 0
    collapse_threshold: float = 0.05  # warn when perplexity < threshold * K

    def validate(self) -> None:
        if self.k not in SUPPORTED_ORDERS:
            raise ValueError(f"k must be one of {SUPPORTED_ORDERS}")
        if self.estimator not in ESTIMATORS:
            raise ValueError(f"estimator must be one of {ESTIMATORS}")
        if self.target_dist not in TARGETS:
            raise ValueError(f"target_dist must be one of {TARGETS}")
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"optimizer must be one of {OPTIMIZERS}")
        if self.channel_grad != "straight_through":
            raise ValueError(
                "channel_grad: only 'straight_through' is implemented "
                "('posterior_soft' is reserved)"
            )
        if self.lambda_wass < 0 or self.beta_commit < 0 or self.lr < 0:
            raise ValueError("lambda_wass, beta_commit and lr must be >= 0")
        if not self.snr_eval_grid:
            raise ValueError("snr_eval_grid must be nonempty")
        if min(self.d, self.m, self.epochs, self.batch) < 1:
            raise ValueError("d, m, epochs and batch must be >= 1")
        if self.tau_start <= 0 or self.tau_end <= 0 or not 0 < self.tau_decay <= 1:
            raise ValueError("tau schedule must be positive with decay in (0, 1]")
        if not 0 < self.lr_decay <= 1:
            raise ValueError("lr_decay must be in (0, 1]")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")
        if self.encoder_out_gain <= 0:
            raise ValueError("encoder_out_gain must be positive")


@dataclass
class Metrics:
    per_epoch: list[dict] = field(default_factory=list)
    per_snr: list[dict] = field(default_factory=list)
    per_step: list[dict] = field(default_factory=list)
    events: list[str] = field(default_factory=list)


@dataclass
class ForwardResult:
    logits: Tensor
    tokens: Tensor          # encoder output, one row per channel symbol
    qout: object            # QuantizerOutput
    sent: np.ndarray
    received: np.ndarray


class Model:
    """MLP encoder/decoder around a shared codebook and constellation."""

    def __init__(self, cfg: TrainConfig, n_features: int, n_classes: int,
                 encoder, decoder, codebook: Codebook):
        self.cfg = cfg
        self.n_features = n_features
        self.n_classes = n_classes
        self.encoder = encoder  # list of (W, b) Tensor pairs
        self.decoder = decoder
        self.codebook = codebook
        self.const = make_qam(cfg.k)

    @classmethod
    def build(cls, cfg: TrainConfig, n_features: int, n_classes: int, seed) -> "Model":
        rng = np.random.default_rng(seed)
        enc = _init_mlp(rng, [n_features, *cfg.encoder_hidden, cfg.m * cfg.d],
                        out_gain=cfg.encoder_out_gain)
        dec = _init_mlp(rng, [cfg.m * cfg.d, *cfg.decoder_hidden, n_classes])
        cb = init_codebook(cfg.k, cfg.d, cfg.codebook_init, seed=int(rng.integers(2**31)))
        return cls(cfg, n_features, n_classes, enc, dec, cb)

    def parameters(self) -> list[Tensor]:
        params = []
        for w, b in self.encoder + self.decoder:
            params.extend([w, b])
        params.append(self.codebook.embeddings)
        return params

    def encode(self, x: Tensor) -> Tensor:
        return _mlp_forward(self.encoder, x)

    def decode(self, h: Tensor) -> Tensor:
        return _mlp_forward(self.decoder, h)

    def encode_np(self, x: np.ndarray) -> np.ndarray:
        return _mlp_forward_np(self.encoder, x)

    def decode_np(self, h: np.ndarray) -> np.ndarray:
        return _mlp_forward_np(self.decoder, h)


def _init_mlp(rng: np.random.Generator, widths: list[int],
              out_gain: float = 1.0) -> list[tuple[Tensor, Tensor]]:
    layers = []
    n = len(widths) - 1
    for i, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:])):
        gain = out_gain if i == n - 1 else 1.0
        w = rng.standard_normal((fan_in, fan_out)) * gain * np.sqrt(2.0 / fan_in)
        layers.append(
            (Tensor(w, requires_grad=True), Tensor(np.zeros(fan_out), requires_grad=True))
        )
    return layers


def _mlp_forward(layers, x: Tensor) -> Tensor:
    h = x
    for i, (w, b) in enumerate(layers):
        h = ad.add(ad.matmul(h, w), b)
        if i < len(layers) - 1:
            h = ad.relu(h)
    return h


def _mlp_forward_np(layers, x: np.ndarray) -> np.ndarray:
    h = np.asarray(x, dtype=np.float64)
    for i, (w, b) in enumerate(layers):
        h = h @ w.value + b.value
        if i < len(layers) - 1:
            h = np.maximum(h, 0.0)
    return h


def build_target_distribution(cfg: TrainConfig) -> np.ndarray:
    """Capacity-achieving input distribution of the training-SNR DMC, or uniform."""
    if cfg.target_dist == "uniform":
        return np.full(cfg.k, 1.0 / cfg.k)
    w = dmc_analytic(make_qam(cfg.k), AwgnChannel(cfg.snr_train_db))
    return blahut_arimoto(w).input_dist


def forward_train(model: Model, x: np.ndarray, cfg: TrainConfig, rng,
                  tau: float | None = None) -> ForwardResult:
    """Channel-in-the-loop forward pass; `rng` (seed or Generator) drives
    the Gumbel draw and the channel noise, in that order."""
    rng = np.random.default_rng(rng)
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    z_flat = model.encode(ad.constant(x))
    tokens = ad.reshape(z_flat, (n * cfg.m, cfg.d))
    if cfg.estimator == "ste":
        qout = quantize_ste(model.codebook, tokens, cfg.tau_soft)
    else:
        qout = quantize_gumbel(
            model.codebook,
            tokens,
            cfg.tau_start if tau is None else tau,
            seed=int(rng.integers(2**63)),
        )
    sent = qout.indices
    y = _add_noise(map_indices(model.const, sent), AwgnChannel(cfg.snr_train_db), rng)
    received = detect(model.const, y)
    # straight-through across channel + detection: identity on embeddings
    emb = model.codebook.embeddings.value
    rx_quantized = ad.add(qout.quantized, ad.constant(emb[received] - emb[sent]))
    logits = model.decode(ad.reshape(rx_quantized, (n, cfg.m * cfg.d)))
    return ForwardResult(logits, tokens, qout, sent, received)


def total_loss(model: Model, fr: ForwardResult, labels: np.ndarray, cfg: TrainConfig,
               target: np.ndarray, cost: np.ndarray):
    """Assemble the training objective.

    Returns (loss tensor, components dict, sinkhorn result).  The transport
    term enters the graph through its source-marginal gradient (the dual
    potential), so its logged value is exactly the entropic transport cost.
    """
    ce = ad.cross_entropy(fr.logits, labels)
    cb_loss, commit = vq_losses(fr.tokens, model.codebook, fr.sent)
    usage = usage_distribution(fr.qout.soft_assign)
    res = sinkhorn(
        usage.value, target, cost,
        eps=cfg.eps_sinkhorn, tol=cfg.sinkhorn_tol, max_iter=cfg.sinkhorn_max_iter,
        omega=cfg.sinkhorn_omega, strict=False,
    )
    lin = ad.sum_(ad.mul(usage, ad.constant(grad_wrt_source(res))))
    wass_node = ad.add(ad.sub(lin, ad.constant(float(lin.value))), ad.constant(res.cost_eps))

    total = ce
    components = {"task_loss": float(ce.value), "codebook_term": 0.0}
    if cfg.estimator == "ste":
        total = ad.add(total, cb_loss)
        components["codebook_term"] = float(cb_loss.value)
    commit_term = ad.mul(commit, cfg.beta_commit)
    total = ad.add(total, commit_term)
    components["commit_term"] = float(commit_term.value)
    wass_term = ad.mul(wass_node, cfg.lambda_wass)
    total = ad.add(total, wass_term)
    components["wass_term"] = float(wass_term.value)
    components["total"] = float(total.value)
    components["commit_loss"] = float(commit.value)
    components["wass_cost"] = res.cost_eps
    return total, components, res


class _Adam:
    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p.value) for p in params]
        self.v = [np.zeros_like(p.value) for p in params]
        self.t = 0

    def step(self):
        self.t += 1
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad if p.grad is not None else 0.0
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * np.square(g)
            mh = m / (1 - self.beta1**self.t)
            vh = v / (1 - self.beta2**self.t)
            p.value -= self.lr * mh / (np.sqrt(vh) + self.eps)


class _SgdMomentum:
    def __init__(self, params, lr, momentum):
        self.params = params
        self.lr, self.momentum = lr, momentum
        self.buf = [np.zeros_like(p.value) for p in params]

    def step(self):
        for p, b in zip(self.params, self.buf):
            g = p.grad if p.grad is not None else 0.0
            b *= self.momentum
            b += g
            p.value -= self.lr * b


def _make_optimizer(cfg: TrainConfig, params):
    if cfg.optimizer == "adam":
        return _Adam(params, cfg.lr)
    return _SgdMomentum(params, cfg.lr, cfg.momentum)


def tau_at_epoch(cfg: TrainConfig, epoch: int) -> float:
    return max(cfg.tau_end, cfg.tau_start * cfg.tau_decay**epoch)


def train(cfg: TrainConfig, dataset, checkpoint_path=None) -> tuple[Model, Metrics]:
    """Train on (dataset.features, dataset.labels); returns model and metrics.

    Deterministic for a given config: all randomness (init, shuffling,
    channel noise, Gumbel draws) derives from cfg.seed.
    """
    cfg.validate()
    x, labels = dataset.features, dataset.labels
    if x.shape[0] == 0:
        raise ValueError("empty dataset")
    n_classes = int(labels.max()) + 1
    ss = np.random.SeedSequence(cfg.seed)
    s_init, s_shuffle, s_channel = ss.spawn(3)

    model = Model.build(cfg, x.shape[1], n_classes, s_init)
    target = build_target_distribution(cfg)
    cost = qam_ground_cost(model.const)
    params = model.parameters()
    opt = _make_optimizer(cfg, params)
    rng_shuffle = np.random.default_rng(s_shuffle)
    rng_channel = np.random.default_rng(s_channel)

    metrics = Metrics()
    step = 0
    for epoch in range(cfg.epochs):
        tau = tau_at_epoch(cfg, epoch)
        opt.lr = cfg.lr * cfg.lr_decay**epoch
        order = rng_shuffle.permutation(x.shape[0])
        sums = {"task_loss": 0.0, "commit_loss": 0.0, "wass_cost": 0.0}
        usage_sum = np.zeros(cfg.k)
        hard_counts = np.zeros(cfg.k)
        n_batches = 0
        for lo in range(0, order.size, cfg.batch):
            sel = order[lo : lo + cfg.batch]
            fr = forward_train(model, x[sel], cfg, rng_channel, tau=tau)
            loss, comps, _ = total_loss(model, fr, labels[sel], cfg, target, cost)
            if not np.isfinite(comps["total"]):
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch}", epoch
                )
            ad.zero_grad(params)
            ad.backward(loss)
            opt.step()
            comps["step"] = step
            comps["epoch"] = epoch
            metrics.per_step.append(comps)
            for key in sums:
                sums[key] += comps[key]
            usage_sum += fr.qout.soft_assign.value.mean(axis=0)
            hard_counts += np.bincount(fr.sent, minlength=cfg.k)
            n_batches += 1
            step += 1
        usage = usage_sum / n_batches
        ppl = perplexity(usage / usage.sum())
        row = {
            "epoch": epoch,
            "task_loss": sums["task_loss"] / n_batches,
            "commit_loss": sums["commit_loss"] / n_batches,
            "wass": sums["wass_cost"] / n_batches,
            "perplexity": ppl,
            "usage": usage / usage.sum(),
            "hard_usage": hard_counts / hard_counts.sum(),
        }
        metrics.per_epoch.append(row)
        if ppl < cfg.collapse_threshold * cfg.k:
            event = (
                f"codebook collapse at epoch {epoch}: perplexity {ppl:.3f} "
                f"< {cfg.collapse_threshold} * {cfg.k}"
            )
            metrics.events.append(event)
            log.warning(event)
    if checkpoint_path is not None:
        save_checkpoint(checkpoint_path, model)
    return model, metrics


def forward_eval(model: Model, x: np.ndarray, snr_db: float, seed) -> np.ndarray:
    """Hard quantization, one channel draw, argmax prediction; no gradients."""
    preds, _ = _eval_pass(model, x, snr_db, np.random.default_rng(seed))
    return preds


def _eval_pass(model: Model, x: np.ndarray, snr_db: float, rng):
    cfg = model.cfg
    z = model.encode_np(x).reshape(-1, cfg.d)
    sent = assign_nearest(model.codebook, z)
    y = _add_noise(map_indices(model.const, sent), AwgnChannel(snr_db), rng)
    received = detect(model.const, y)
    emb = model.codebook.embeddings.value
    logits = model.decode_np(emb[received].reshape(x.shape[0], cfg.m * cfg.d))
    return logits.argmax(axis=1), float(np.mean(received != sent))


def evaluate_sweep(model: Model, snr_grid, dataset, n_draws: int, seed: int) -> list[dict]:
    """Accuracy and observed SER per grid point, averaged over n_draws
    channel realizations; per-point sub-seeds derive from (seed, index, draw)."""
    rows = []
    for gi, snr_db in enumerate(snr_grid):
        accs, sers = [], []
        for draw in range(n_draws):
            rng = np.random.default_rng(np.random.SeedSequence([seed, gi, draw]))
            preds, ser = _eval_pass(model, dataset.features, snr_db, rng)
            accs.append(float(np.mean(preds == dataset.labels)))
            sers.append(ser)
        rows.append(
            {
                "snr_db": float(snr_db),
                "accuracy": float(np.mean(accs)),
                "ser_observed": float(np.mean(sers)),
                "n_draws": n_draws,
            }
        )
    return rows


def save_checkpoint(path, model: Model) -> None:
    """Versioned npz: config echo, codebook, layer weights."""
    arrays = {
        "codebook": model.codebook.embeddings.value,
    }
    for tag, layers in (("enc", model.encoder), ("dec", model.decoder)):
        for i, (w, b) in enumerate(layers):
            arrays[f"{tag}{i}_w"] = w.value
            arrays[f"{tag}{i}_b"] = b.value
    header = {
        "format": _CHECKPOINT_FORMAT,
        "config": dataclasses.asdict(model.cfg),
        "n_features": model.n_features,
        "n_classes": model.n_classes,
        "n_encoder_layers": len(model.encoder),
        "n_decoder_layers": len(model.decoder),
    }
    np.savez(path, header=json.dumps(header, sort_keys=True), **arrays)


def load_checkpoint(path) -> Model:
    with np.load(path, allow_pickle=False) as data:
        header = json.loads(str(data["header"]))
        if header.get("format") != _CHECKPOINT_FORMAT:
            raise ValueError(f"not a {_CHECKPOINT_FORMAT} file: {path}")
        cfg_dict = header["config"]
        for key in ("snr_eval_grid", "encoder_hidden", "decoder_hidden"):
            cfg_dict[key] = tuple(cfg_dict[key])
        cfg = TrainConfig(**cfg_dict)
        encoder = [
            (
                Tensor(data[f"enc{i}_w"], requires_grad=True),
                Tensor(data[f"enc{i}_b"], requires_grad=True),
            )
            for i in range(header["n_encoder_layers"])
        ]
        decoder = [
            (
                Tensor(data[f"dec{i}_w"], requires_grad=True),
                Tensor(data[f"dec{i}_b"], requires_grad=True),
            )
            for i in range(header["n_decoder_layers"])
        ]
        codebook = Codebook(cfg.k, cfg.d, Tensor(data["codebook"], requires_grad=True))
    return Model(cfg, header["n_features"], header["n_classes"], encoder, decoder, codebook)
