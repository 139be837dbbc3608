"""QA-based factuality metrics for summaries, evaluated as span-level error localizers."""
from .annotate import CandidateSpan, extract_candidate_spans
from .backends import Answer, BackendConfig, Question, make_backend
from .corpus import AnnotatedPair, Dataset, Token, derive_span_gold, derive_summary_gold, load_dataset
from .eval import ScoredItem, evaluate_f1, paired_bootstrap, roc_curve, tune_threshold
from .pipeline import MetricConfig, run_pipeline

__version__ = "0.1.0"
