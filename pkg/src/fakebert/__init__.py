"""COVID-19 fake-news classification with a BERT encoder and CNN/BiLSTM heads."""

from .corpus import LABELS, DatasetSplit, TweetRecord, label_counts, load_csv, merge_and_split
from .metrics import EvaluationReport, accuracy, f1, precision_recall, roc_auc
from .textprep import EncodedExample, TokenizerSpec, encode, length_histogram, tokenize

__version__ = "0.1.0"

CLASSES = LABELS

__all__ = [
    "CLASSES",
    "DatasetSplit",
    "EncodedExample",
    "EvaluationReport",
    "TokenizerSpec",
    "TweetRecord",
    "accuracy",
    "encode",
    "f1",
    "label_counts",
    "length_histogram",
    "load_csv",
    "merge_and_split",
    "precision_recall",
    "roc_auc",
    "tokenize",
]
