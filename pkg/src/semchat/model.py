"""Autoregressive language model over linearized dialogues.

A small decoder-only transformer with learned positional and token-type
embeddings, trained from scratch with a masked next-token cross-entropy: only
positions selected by the loss mask (semantic values and Machine utterances)
contribute. The trainer follows a plateau schedule: validate every N steps,
halve the learning rate after a patience of non-improving validations, stop
after a fixed number of halvings.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .linearize import LinearizedExample, TokenType

CHECKPOINT_FORMAT = "semchat-model"
CHECKPOINT_VERSION = 1


class TrainingDivergence(RuntimeError):
    """Raised when the training loss stops being finite."""


@dataclass
class ModelConfig:
    vocab_size: int
    layers: int = 4
    heads: int = 4
    hidden_dim: int = 256
    max_positions: int = 512
    token_type_count: int = 5
    dropout: float = 0.1
    seed: int = 0


@dataclass
class TrainSchedule:
    batch_size: int = 24
    learning_rate: float = 5e-5
    grad_clip_norm: float = 1.0
    validate_every: int = 5000
    lr_halving_patience: int = 5
    max_halvings: int = 3
    max_steps: int | None = None
    log_path: str | None = None

    def __post_init__(self) -> None:
        for name in ("batch_size", "learning_rate", "grad_clip_norm",
                     "validate_every", "lr_halving_patience", "max_halvings"):
            if getattr(self, name) <= 0 and name != "max_halvings":
                raise ValueError(f"{name} must be positive")
            if name == "max_halvings" and self.max_halvings < 0:
                raise ValueError("max_halvings must be >= 0")


class _Block(nn.Module):
    def __init__(self, hidden: int, heads: int, dropout: float):
        super().__init__()
        self.heads = heads
        self.ln1 = nn.LayerNorm(hidden)
        self.qkv = nn.Linear(hidden, 3 * hidden)
        self.proj = nn.Linear(hidden, hidden)
        self.ln2 = nn.LayerNorm(hidden)
        self.mlp = nn.Sequential(
            nn.Linear(hidden, 4 * hidden),
            nn.GELU(),
            nn.Linear(4 * hidden, hidden),
        )
        self.dropout = nn.Dropout(dropout)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        b, t, d = x.shape
        h = self.ln1(x)
        q, k, v = self.qkv(h).chunk(3, dim=-1)
        q = q.view(b, t, self.heads, d // self.heads).transpose(1, 2)
        k = k.view(b, t, self.heads, d // self.heads).transpose(1, 2)
        v = v.view(b, t, self.heads, d // self.heads).transpose(1, 2)
        att = F.scaled_dot_product_attention(q, k, v, is_causal=True)
        att = att.transpose(1, 2).reshape(b, t, d)
        x = x + self.dropout(self.proj(att))
        x = x + self.dropout(self.mlp(self.ln2(x)))
        return x


class DialogueTransformer(nn.Module):
    """Decoder-only transformer with token-type embeddings."""

    def __init__(self, config: ModelConfig, dtype: torch.dtype = torch.float32):
        super().__init__()
        torch.manual_seed(config.seed)
        self.config = config
        self.tok_emb = nn.Embedding(config.vocab_size, config.hidden_dim)
        self.pos_emb = nn.Embedding(config.max_positions, config.hidden_dim)
        self.type_emb = nn.Embedding(config.token_type_count, config.hidden_dim)
        self.dropout = nn.Dropout(config.dropout)
        self.blocks = nn.ModuleList(
            [_Block(config.hidden_dim, config.heads, config.dropout) for _ in range(config.layers)]
        )
        self.ln_f = nn.LayerNorm(config.hidden_dim)
        self.head = nn.Linear(config.hidden_dim, config.vocab_size)
        # Zero-initialized head: an untrained model predicts the uniform
        # distribution over the vocabulary.
        nn.init.zeros_(self.head.weight)
        nn.init.zeros_(self.head.bias)
        if dtype is not torch.float32:
            self.to(dtype)

    def forward(self, token_ids: torch.Tensor, token_type_ids: torch.Tensor) -> torch.Tensor:
        b, t = token_ids.shape
        if t > self.config.max_positions:
            raise ValueError(
                f"sequence length {t} exceeds max_positions {self.config.max_positions}"
            )
        positions = torch.arange(t, device=token_ids.device).unsqueeze(0)
        x = self.tok_emb(token_ids) + self.pos_emb(positions) + self.type_emb(token_type_ids)
        x = self.dropout(x)
        for block in self.blocks:
            x = block(x)
        return self.head(self.ln_f(x))


def masked_cross_entropy(
    logits: torch.Tensor, token_ids: torch.Tensor, loss_mask: torch.Tensor
) -> torch.Tensor:
    """Mean next-token cross-entropy over masked target positions.

    ``loss_mask[t]`` supervises the prediction of token t from positions < t,
    so position 0 can never be supervised. A batch with no masked positions
    contributes zero loss.
    """
    pred = logits[:, :-1, :]
    target = token_ids[:, 1:]
    mask = loss_mask[:, 1:]
    losses = F.cross_entropy(
        pred.reshape(-1, pred.size(-1)), target.reshape(-1), reduction="none"
    ).view(target.shape)
    denom = mask.sum()
    if denom.item() == 0:
        return logits.sum() * 0.0
    return (losses * mask).sum() / denom


def _to_tensors(example: LinearizedExample) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    return (
        torch.tensor(example.token_ids, dtype=torch.long),
        torch.tensor(example.token_type_ids, dtype=torch.long),
        torch.tensor(example.loss_mask, dtype=torch.bool),
    )


def _pad_batch(
    items: list[tuple[torch.Tensor, torch.Tensor, torch.Tensor]], pad_id: int
) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    max_len = max(ids.numel() for ids, _, _ in items)
    ids = torch.full((len(items), max_len), pad_id, dtype=torch.long)
    types = torch.zeros((len(items), max_len), dtype=torch.long)
    mask = torch.zeros((len(items), max_len), dtype=torch.bool)
    for i, (t_ids, t_types, t_mask) in enumerate(items):
        n = t_ids.numel()
        ids[i, :n] = t_ids
        types[i, :n] = t_types
        mask[i, :n] = t_mask
    return ids, types, mask


@dataclass
class ModelCheckpoint:
    """Single-file model state: config, parameters, tokenizer fingerprint."""

    config: ModelConfig
    state_dict: dict
    tokenizer_fingerprint: str
    metadata: dict = field(default_factory=dict)
    _cached: DialogueTransformer | None = field(default=None, repr=False, compare=False)

    def model(self) -> DialogueTransformer:
        if self._cached is None:
            module = DialogueTransformer(self.config)
            module.load_state_dict(self.state_dict)
            module.eval()
            self._cached = module
        return self._cached

    def save(self, path: str | Path) -> None:
        torch.save(
            {
                "format": CHECKPOINT_FORMAT,
                "version": CHECKPOINT_VERSION,
                "config": asdict(self.config),
                "tokenizer_fingerprint": self.tokenizer_fingerprint,
                "metadata": self.metadata,
                "state_dict": self.state_dict,
            },
            path,
        )

    @classmethod
    def load(cls, path: str | Path) -> "ModelCheckpoint":
        payload = torch.load(path, map_location="cpu", weights_only=False)
        if payload.get("format") != CHECKPOINT_FORMAT:
            raise ValueError(f"not a model checkpoint: {path}")
        return cls(
            config=ModelConfig(**payload["config"]),
            state_dict=payload["state_dict"],
            tokenizer_fingerprint=payload["tokenizer_fingerprint"],
            metadata=payload.get("metadata", {}),
        )


def train(
    train_examples: list[LinearizedExample],
    valid_examples: list[LinearizedExample],
    config: ModelConfig,
    schedule: TrainSchedule,
    tokenizer_fingerprint: str = "",
    pad_id: int = 0,
) -> ModelCheckpoint:
    """Optimize the masked next-token objective; keep the best-validation state."""
    if not train_examples:
        raise ValueError("no training examples")
    if not valid_examples:
        valid_examples = train_examples
    model = DialogueTransformer(config)
    model.train()
    optimizer = torch.optim.Adam(model.parameters(), lr=schedule.learning_rate)
    shuffle_rng = np.random.default_rng(config.seed)
    tensors = [_to_tensors(ex) for ex in train_examples]

    lr = schedule.learning_rate
    best_ppl = math.inf
    best_state = {k: v.detach().clone() for k, v in model.state_dict().items()}
    bad_validations = 0
    halvings = 0
    step = 0
    log: list[dict] = []
    stop = False
    last_loss = float("nan")

    while not stop:
        order = shuffle_rng.permutation(len(tensors))
        for start in range(0, len(order), schedule.batch_size):
            batch_items = [tensors[i] for i in order[start : start + schedule.batch_size]]
            ids, types, mask = _pad_batch(batch_items, pad_id)
            logits = model(ids, types)
            loss = masked_cross_entropy(logits, ids, mask)
            if not torch.isfinite(loss):
                raise TrainingDivergence(
                    f"non-finite training loss at step {step}: {loss.item()!r} "
                    f"(lr={lr:g}, batch={len(batch_items)})"
                )
            optimizer.zero_grad()
            loss.backward()
            torch.nn.utils.clip_grad_norm_(model.parameters(), schedule.grad_clip_norm)
            optimizer.step()
            last_loss = loss.item()
            step += 1

            if step % schedule.validate_every == 0:
                model.eval()
                valid_ppl = evaluate_ppl_module(model, valid_examples, "ALL_MASKED", pad_id)
                model.train()
                log.append(
                    {"step": step, "train_loss": last_loss, "valid_ppl": valid_ppl, "lr": lr}
                )
                if valid_ppl < best_ppl:
                    best_ppl = valid_ppl
                    best_state = {
                        k: v.detach().clone() for k, v in model.state_dict().items()
                    }
                    bad_validations = 0
                else:
                    bad_validations += 1
                    if bad_validations >= schedule.lr_halving_patience:
                        if halvings >= schedule.max_halvings:
                            stop = True
                            break
                        halvings += 1
                        lr /= 2.0
                        for group in optimizer.param_groups:
                            group["lr"] = lr
                        bad_validations = 0
            if schedule.max_steps is not None and step >= schedule.max_steps:
                stop = True
                break

    if not log:
        model.eval()
        valid_ppl = evaluate_ppl_module(model, valid_examples, "ALL_MASKED", pad_id)
        log.append({"step": step, "train_loss": last_loss, "valid_ppl": valid_ppl, "lr": lr})
        if valid_ppl < best_ppl:
            best_ppl = valid_ppl
            best_state = {k: v.detach().clone() for k, v in model.state_dict().items()}
    if schedule.log_path:
        with Path(schedule.log_path).open("w", encoding="utf-8") as fh:
            for entry in log:
                fh.write(json.dumps(entry) + "\n")
    return ModelCheckpoint(
        config=config,
        state_dict=best_state,
        tokenizer_fingerprint=tokenizer_fingerprint,
        metadata={
            "steps": step,
            "best_valid_ppl": best_ppl,
            "halvings": halvings,
            "log": log,
        },
    )


PPL_SCOPES = ("ALL_MASKED", "MACHINE_UTT_ONLY")


@torch.no_grad()
def evaluate_ppl_module(
    model: DialogueTransformer,
    examples: list[LinearizedExample],
    scope: str = "ALL_MASKED",
    pad_id: int = 0,
    batch_size: int = 32,
) -> float:
    """exp(mean teacher-forced cross-entropy) over in-scope positions.

    MACHINE_UTT_ONLY restricts to Machine utterance tokens while still
    conditioning on the gold semantic spans present in the sequence.
    """
    if scope not in PPL_SCOPES:
        raise ValueError(f"scope must be one of {PPL_SCOPES}")
    model.eval()
    total_nll = 0.0
    total_count = 0
    for start in range(0, len(examples), batch_size):
        chunk = examples[start : start + batch_size]
        items = [_to_tensors(ex) for ex in chunk]
        ids, types, mask = _pad_batch(items, pad_id)
        if scope == "MACHINE_UTT_ONLY":
            mask = mask & (types == int(TokenType.MACHINE_UTT))
        logits = model(ids, types)
        pred = logits[:, :-1, :]
        target = ids[:, 1:]
        tmask = mask[:, 1:]
        losses = F.cross_entropy(
            pred.reshape(-1, pred.size(-1)), target.reshape(-1), reduction="none"
        ).view(target.shape)
        total_nll += (losses * tmask).sum().item()
        total_count += int(tmask.sum().item())
    if total_count == 0:
        raise ValueError(f"no positions in scope {scope}")
    return math.exp(total_nll / total_count)


def evaluate_ppl(
    ckpt: ModelCheckpoint,
    examples: list[LinearizedExample],
    scope: str = "ALL_MASKED",
    pad_id: int = 0,
) -> float:
    return evaluate_ppl_module(ckpt.model(), examples, scope, pad_id)


@torch.no_grad()
def next_token_distribution(
    ckpt_or_model: ModelCheckpoint | DialogueTransformer,
    prefix_ids: list[int],
    prefix_type_ids: list[int],
) -> np.ndarray:
    """Probability vector over the vocabulary for the next position."""
    model = ckpt_or_model.model() if isinstance(ckpt_or_model, ModelCheckpoint) else ckpt_or_model
    if not prefix_ids:
        raise ValueError("prefix must be non-empty")
    if len(prefix_ids) >= model.config.max_positions:
        raise ValueError(
            f"prefix length {len(prefix_ids)} reaches max_positions "
            f"{model.config.max_positions}"
        )
    model.eval()
    ids = torch.tensor([prefix_ids], dtype=torch.long)
    types = torch.tensor([prefix_type_ids], dtype=torch.long)
    logits = model(ids, types)[0, -1].double()
    probs = torch.softmax(logits, dim=-1).numpy()
    return probs / probs.sum()


class TransformerBackend:
    """Adapter exposing the decoder interface of the decode module."""

    def __init__(self, ckpt: ModelCheckpoint):
        self.checkpoint = ckpt
        self._model = ckpt.model()
        self.max_positions = ckpt.config.max_positions

    def next_token_distribution(
        self, prefix_ids: list[int], prefix_type_ids: list[int]
    ) -> np.ndarray:
        return next_token_distribution(self._model, prefix_ids, prefix_type_ids)
