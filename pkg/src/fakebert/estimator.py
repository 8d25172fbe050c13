"""scikit-learn compatible wrappers around the tokenizer, models and keyword removal."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_labels, check_texts
from .corpus import LABELS, TweetRecord
from .encoder import EncoderConfig, load_pretrained, tiny_encoder
from .heads import VariantSpec, build_variant, logits_for, softmax
from .keywords import STOPWORDS, remove_words, word_frequencies
from .textprep import TokenizerSpec, build_vocab, encode_batch
from .trainer import train


def make_tokenizer(texts=None, vocab_file=None, vocab_size=1000, max_len=512, lowercase=True):
    if vocab_file is not None:
        return TokenizerSpec.from_vocab_file(vocab_file, max_len=max_len, lowercase=lowercase)
    if texts is None:
        raise ValueError("either vocab_file or texts to build a vocabulary from is required")
    return TokenizerSpec(vocab=build_vocab(texts, vocab_size, lowercase), max_len=max_len, lowercase=lowercase)


class WordPieceVectorizer(TransformerMixin, BaseEstimator):
    """Texts to fixed-length token-id rows.

    Without ``vocab_file`` a vocabulary of ``vocab_size`` entries is built
    from the training texts. ``transform`` returns the id matrix; the
    attention mask is ``ids != pad_id`` (see :meth:`attention_mask`).
    """

    def __init__(self, vocab_file=None, vocab_size=1000, max_len=512, lowercase=True):
        self.vocab_file = vocab_file
        self.vocab_size = vocab_size
        self.max_len = max_len
        self.lowercase = lowercase

    def fit(self, X, y=None):
        texts = check_texts(X)
        self.tokenizer_ = make_tokenizer(texts, self.vocab_file, self.vocab_size, self.max_len, self.lowercase)
        return self

    def transform(self, X):
        check_is_fitted(self, "tokenizer_")
        ids, _ = encode_batch(check_texts(X), self.tokenizer_)
        return ids

    def attention_mask(self, ids):
        check_is_fitted(self, "tokenizer_")
        return (np.asarray(ids) != self.tokenizer_.pad_id).astype(np.int64)


class FakeNewsClassifier(ClassifierMixin, BaseEstimator):
    """One of the five encoder + head variants as a scikit-learn classifier.

    Pass ``checkpoint`` (a published BERT directory) for the full model, or
    ``tiny=True`` for a small random encoder whose vocabulary is built from
    the training texts. ``learning_rate`` and ``epochs`` override the
    variant's published defaults when set.
    """

    def __init__(
        self,
        variant=4,
        checkpoint=None,
        vocab_file=None,
        tiny=False,
        max_len=None,
        vocab_size=1000,
        hidden_size=32,
        num_layers=2,
        num_heads=2,
        learning_rate=None,
        epochs=None,
        batch_size=32,
        cnn_filters=256,
        bilstm_hidden=256,
        random_state=0,
        output_dir=None,
    ):
        self.variant = variant
        self.checkpoint = checkpoint
        self.vocab_file = vocab_file
        self.tiny = tiny
        self.max_len = max_len
        self.vocab_size = vocab_size
        self.hidden_size = hidden_size
        self.num_layers = num_layers
        self.num_heads = num_heads
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.batch_size = batch_size
        self.cnn_filters = cnn_filters
        self.bilstm_hidden = bilstm_hidden
        self.random_state = random_state
        self.output_dir = output_dir

    def _variant_spec(self):
        overrides = {"cnn_filters": self.cnn_filters, "bilstm_hidden": self.bilstm_hidden}
        if self.learning_rate is not None:
            overrides["learning_rate"] = self.learning_rate
        if self.epochs is not None:
            overrides["epochs"] = self.epochs
        return VariantSpec.published(self.variant, **overrides)

    def _backbone(self, texts):
        if self.checkpoint is not None:
            max_len = self.max_len or 512
            vocab_file = self.vocab_file or Path(self.checkpoint) / "vocab.txt"
            tokenizer = make_tokenizer(vocab_file=vocab_file, max_len=max_len)
            return tokenizer, load_pretrained(self.checkpoint)
        if not self.tiny:
            raise ValueError("set checkpoint= for a pretrained encoder or tiny=True for a random one")
        max_len = self.max_len or 64
        tokenizer = make_tokenizer(texts, self.vocab_file, self.vocab_size, max_len)
        config = EncoderConfig.tiny(
            vocab_size=tokenizer.vocab_size,
            hidden_size=self.hidden_size,
            num_layers=self.num_layers,
            num_heads=self.num_heads,
            max_positions=max(max_len, 64),
        )
        return tokenizer, tiny_encoder(config, seed=self.random_state)

    def fit(self, X, y):
        texts = check_texts(X)
        labels = check_labels(y, len(texts))
        self.spec_ = self._variant_spec()
        self.tokenizer_, encoder = self._backbone(texts)
        self.model_ = build_variant(self.spec_, encoder, seed=self.random_state)
        records = [TweetRecord(str(i), t, lab) for i, (t, lab) in enumerate(zip(texts, labels))]
        self.train_state_ = train(
            self.model_, records, self.spec_, self.tokenizer_, self.batch_size, self.random_state, self.output_dir
        )
        self.classes_ = np.array(LABELS)
        return self

    def decision_function(self, X):
        """Raw class scores (logits), columns ordered as ``classes_``."""
        check_is_fitted(self, "model_")
        return logits_for(self.model_, encode_batch(check_texts(X), self.tokenizer_))

    def predict_proba(self, X):
        return softmax(self.decision_function(X))

    def predict(self, X):
        check_is_fitted(self, "model_")
        return self.classes_[np.argmax(self.decision_function(X), axis=1)]


class KeywordRemover(TransformerMixin, BaseEstimator):
    """Delete keywords from texts.

    With ``words`` unset, ``fit`` picks the ``top_k`` most frequent
    non-stopwords, counted over the texts labeled fake in ``y`` (or over
    every text when ``y`` is omitted).
    """

    def __init__(self, words=None, top_k=10, stopwords=None):
        self.words = words
        self.top_k = top_k
        self.stopwords = stopwords

    def fit(self, X, y=None):
        texts = check_texts(X)
        if self.words is not None:
            self.words_ = list(self.words)
            return self
        if y is not None:
            labels = check_labels(y, len(texts))
            texts = [t for t, lab in zip(texts, labels) if lab == "fake"]
        stop = STOPWORDS if self.stopwords is None else self.stopwords
        self.words_ = word_frequencies(texts, stop).top(self.top_k)
        return self

    def transform(self, X):
        check_is_fitted(self, "words_")
        return [remove_words(t, self.words_) for t in check_texts(X)]

