import numpy as np
import pytest

from semchat.corpus import derive_training_views
from semchat.linearize import LinearizationScheme, Linearizer
from semchat.tokenizer import Tokenizer
from semchat.toydata import corpus_texts, make_toy_corpus


@pytest.fixture(scope="session")
def toy_sessions():
    return make_toy_corpus(24, seed=3, id_prefix="fix")


@pytest.fixture(scope="session")
def tokenizer(toy_sessions):
    return Tokenizer.build(corpus_texts(toy_sessions))


@pytest.fixture(scope="session")
def linearizer(tokenizer):
    return Linearizer(tokenizer, LinearizationScheme(max_sequence_length=256))


def gradient_check_max_rel_error(n_coords: int = 60, seed: int = 5) -> float:
    """Compare analytic masked-CE gradients on a float64 micro-model against
    central finite differences; returns the worst relative error."""
    import torch

    from semchat.model import DialogueTransformer, ModelConfig, masked_cross_entropy

    torch.manual_seed(seed)
    config = ModelConfig(
        vocab_size=12, layers=2, heads=2, hidden_dim=16, max_positions=24,
        dropout=0.0, seed=seed,
    )
    model = DialogueTransformer(config, dtype=torch.float64)
    gen = torch.Generator().manual_seed(seed + 1)
    ids = torch.randint(0, config.vocab_size, (2, 18), generator=gen)
    types = torch.randint(0, 5, (2, 18), generator=gen)
    mask = torch.rand((2, 18), generator=gen) < 0.5
    mask[:, 0] = False

    def loss_value() -> torch.Tensor:
        return masked_cross_entropy(model(ids, types), ids, mask)

    model.zero_grad()
    loss_value().backward()
    params = [p for p in model.parameters() if p.grad is not None]
    rng = np.random.default_rng(seed)
    h = 1e-6
    worst = 0.0
    checked = 0
    while checked < n_coords:
        p = params[rng.integers(len(params))]
        idx = tuple(rng.integers(s) for s in p.shape)
        analytic = p.grad[idx].item()
        with torch.no_grad():
            orig = p[idx].item()
            p[idx] = orig + h
            up = loss_value().item()
            p[idx] = orig - h
            down = loss_value().item()
            p[idx] = orig
        fd = (up - down) / (2 * h)
        scale = max(abs(analytic), abs(fd))
        if scale < 1e-8:
            continue
        worst = max(worst, abs(analytic - fd) / scale)
        checked += 1
    return worst


class StubLM:
    """Next-token distribution driven by a function of the prefix."""

    def __init__(self, vocab_size, fn=None):
        self.vocab_size = vocab_size
        self.fn = fn

    def next_token_distribution(self, prefix_ids, prefix_type_ids):
        if self.fn is None:
            return np.full(self.vocab_size, 1.0 / self.vocab_size)
        dist = np.asarray(self.fn(prefix_ids, prefix_type_ids), dtype=float)
        return dist / dist.sum()


@pytest.fixture
def uniform_stub(tokenizer):
    return StubLM(tokenizer.vocab_size)


def make_stub(vocab_size, fn=None):
    return StubLM(vocab_size, fn)


@pytest.fixture(scope="session")
def overfit_artifacts():
    """Train the small overfit model once for acceptance-style checks."""
    from semchat.model import ModelConfig, TrainSchedule, TransformerBackend, train

    train_sessions = make_toy_corpus(120, seed=0, id_prefix="train")
    test_sessions = make_toy_corpus(30, seed=2, id_prefix="test")
    tokenizer = Tokenizer.build(corpus_texts(train_sessions))
    linearizer = Linearizer(tokenizer, LinearizationScheme(max_sequence_length=256))
    examples = [
        linearizer.linearize_session(view)
        for session in train_sessions
        for view in derive_training_views(session)
    ]
    config = ModelConfig(
        vocab_size=tokenizer.vocab_size,
        layers=2,
        heads=4,
        hidden_dim=128,
        max_positions=256,
        dropout=0.0,
        seed=7,
    )
    schedule = TrainSchedule(
        batch_size=24,
        learning_rate=1e-3,
        validate_every=200,
        lr_halving_patience=3,
        max_halvings=1,
        max_steps=1200,
    )
    ckpt = train(
        examples,
        examples,
        config,
        schedule,
        tokenizer_fingerprint=tokenizer.fingerprint(),
        pad_id=tokenizer.pad_id,
    )
    return {
        "train_sessions": train_sessions,
        "test_sessions": test_sessions,
        "tokenizer": tokenizer,
        "linearizer": linearizer,
        "checkpoint": ckpt,
        "backend": TransformerBackend(ckpt),
        "train_examples": examples,
    }
