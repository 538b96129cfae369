"""semchat: modular open-domain dialogue with explicit semantic variables.

Annotate conversations with emotions, dialogue acts, and topical words;
linearize them into a joint understand/plan/generate training sequence; train
an autoregressive model on the masked objective; decode with per-stage
sampling methods and constraints; evaluate; and serve interactive sessions
with human-editable plans.
"""

__version__ = "0.1.0"

from .corpus import (
    DA_LABELS,
    EMOTION_LABELS,
    AnnotatedSession,
    CorpusSplit,
    DALabel,
    EmotionLabel,
    SemanticAnnotation,
    Speaker,
    TrainingView,
    Utterance,
    corpus_stats,
    derive_training_views,
    load_corpus,
    save_corpus,
)
from .annotate import (
    SentenceClassifier,
    TopicalVocabulary,
    TransitionMatrix,
    align_topical_words,
    annotate_corpus,
    build_topical_vocabulary,
    classify_sentences,
    split_sentences,
    train_classifier,
    transition_matrix,
)
from .tokenizer import SpecialTokens, Tokenizer
from .linearize import (
    LinearizationScheme,
    LinearizedExample,
    Linearizer,
    TokenType,
)
from .model import (
    ModelCheckpoint,
    ModelConfig,
    TrainSchedule,
    TransformerBackend,
    evaluate_ppl,
    next_token_distribution,
    train,
)
from .decode import (
    DecodingPolicy,
    GenerationTrace,
    HistoryTurn,
    StagePolicy,
    apply_repetition_constraint,
    default_policy,
    respond,
    sample_token,
)
from .metrics import (
    EmbeddingTable,
    MetricReport,
    bleu_n,
    dist_n,
    embedding_metrics,
    evaluate_generation,
    evaluate_understanding,
    label_f1,
    topical_f1,
    topical_recall,
)
from .toydata import make_toy_corpus
