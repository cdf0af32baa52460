"""Code-comment inconsistency tooling: corpus construction, detection, repair and evaluation.

Re-exports the main entry points of each stage.
"""

__version__ = "0.1.0"

from .config import LlmEndpoint, PipelineConfig, load_config
from .corpus import corpus_stats, deduplicate, load_corpus, save_corpus
from .detector import DetectorModel, evaluate, fit, predict, train
from .enhance import iterative_enhance
from .errors import BackendError, CciError, DataError, UsageError
from .evalkit import bleu4, classification_metrics, gleu, meteor, sari
from .fixer import fix_comment
from .llm_gateway import LlmGateway, chat_complete, chat_complete_batch
from .logging_setup import setup_logging
from .models import CciCase, Corpus
from .semfilter import semantic_filter
from .solver import solve
from .synfilter import apply_syntactic_filters, classify_case

__all__ = [
    "__version__",
    "LlmEndpoint",
    "PipelineConfig",
    "load_config",
    "corpus_stats",
    "deduplicate",
    "load_corpus",
    "save_corpus",
    "DetectorModel",
    "evaluate",
    "fit",
    "predict",
    "train",
    "iterative_enhance",
    "BackendError",
    "CciError",
    "DataError",
    "UsageError",
    "bleu4",
    "classification_metrics",
    "gleu",
    "meteor",
    "sari",
    "fix_comment",
    "LlmGateway",
    "chat_complete",
    "chat_complete_batch",
    "setup_logging",
    "CciCase",
    "Corpus",
    "semantic_filter",
    "solve",
    "apply_syntactic_filters",
    "classify_case",
]
