"""scikit-learn style wrappers around the captioner and the skip-gram model."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .captioner import CaptionerParams, generate
from .embed import SkipGramParams, context_pairs, export_table, load_embeddings, train_skipgram
from .metrics import EvalInstance, bleu
from .text import build_vocab, decode, encode, normalize_tokenize
from .training import AdamState, TrainConfig, mean_loss, run_epochs
from .validation import check_depth, check_grids, check_references, check_sentences


class AttentionCaptioner(BaseEstimator):
    """Attentive GRU captioner trained with Adam under teacher forcing.

    ``fit(X, y)`` takes feature grids (n x H x W x D, or a list of H x W x D
    arrays) and, per grid, one caption string or a list of reference
    captions. Every reference becomes its own training example.

    Fitted attributes: ``vocab_``, ``params_``, ``optimizer_state_``,
    ``initial_loss_`` (mean loss before the first update) and ``loss_curve_``.
    """

    def __init__(
        self,
        lr=1e-3,
        beta1=0.9,
        beta2=0.999,
        eps=1e-8,
        batch_size=8,
        epochs=30,
        seed=0,
        max_caption_len=20,
        enc_dim=32,
        dec_dim=64,
        embed_dim=32,
        attn_dim=None,
        grad_clip=None,
        min_count=1,
        embeddings=None,
    ):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.batch_size = batch_size
        self.epochs = epochs
        self.seed = seed
        self.max_caption_len = max_caption_len
        self.enc_dim = enc_dim
        self.dec_dim = dec_dim
        self.embed_dim = embed_dim
        self.attn_dim = attn_dim
        self.grad_clip = grad_clip
        self.min_count = min_count
        self.embeddings = embeddings

    def config(self) -> TrainConfig:
        return TrainConfig.from_dict(self.get_params())

    def fit(self, X, y):
        cfg = self.config()
        grids = check_grids(X)
        refs = check_references(y, len(grids))
        self.vocab_ = build_vocab([tokens for r in refs for tokens in r], cfg.min_count)
        examples = [
            (g, encode(tokens, self.vocab_, cfg.max_caption_len))
            for g, r in zip(grids, refs)
            for tokens in r
        ]
        table = load_embeddings(cfg.embeddings) if cfg.embeddings else None
        self.params_ = CaptionerParams.init(
            len(self.vocab_), grids[0].depth, cfg.enc_dim, cfg.dec_dim, cfg.embed_dim,
            cfg.attn_dim, seed=cfg.seed, embedding=table,
        )
        self.optimizer_state_ = AdamState()
        self.initial_loss_ = mean_loss(self.params_, examples)
        self.loss_curve_ = run_epochs(self.params_, examples, cfg, self.optimizer_state_)
        self.n_features_in_ = grids[0].depth
        return self

    def _decode_all(self, X):
        check_is_fitted(self, "params_")
        grids = check_grids(X)
        check_depth(grids, self.n_features_in_)
        return [generate(g, self.params_, self.max_caption_len + 1) for g in grids]

    def predict(self, X) -> list[str]:
        return [decode(tokens, self.vocab_) for tokens, _ in self._decode_all(X)]

    def predict_attention(self, X) -> list[tuple[list[str], list[np.ndarray]]]:
        """Per grid: emitted words (reserved tokens included) and attention weights per word."""
        return [([self.vocab_.word(t) for t in tokens], alphas) for tokens, alphas in self._decode_all(X)]

    def score(self, X, y) -> float:
        """Corpus BLEU-4 of the greedy captions against ``y``."""
        refs = check_references(y, len(X))
        corpus = [
            EvalInstance(normalize_tokenize(c), r) for c, r in zip(self.predict(X), refs)
        ]
        return bleu(corpus, 4)


class SkipGramEmbedder(BaseEstimator, TransformerMixin):
    """Full-softmax skip-gram word vectors.

    ``fit`` takes raw sentences (or token lists); ``transform`` maps words to
    their center vectors, unknown words to the ``<unk>`` row.
    """

    def __init__(self, dim=8, window=2, steps=200, lr=0.5, min_count=1, seed=0):
        self.dim = dim
        self.window = window
        self.steps = steps
        self.lr = lr
        self.min_count = min_count
        self.seed = seed

    def fit(self, X, y=None):
        sentences = check_sentences(X)
        self.vocab_ = build_vocab(sentences, self.min_count)
        corpus = [[self.vocab_.id(w) for w in s] for s in sentences]
        self.params_ = SkipGramParams.init(len(self.vocab_), self.dim, self.window, self.seed)
        self.n_pairs_ = len(context_pairs(corpus, self.window))
        self.loss_curve_ = train_skipgram(corpus, self.params_, self.steps, self.lr)
        return self

    @property
    def embedding_(self) -> np.ndarray:
        check_is_fitted(self, "params_")
        return export_table(self.params_)

    def transform(self, X) -> np.ndarray:
        table = self.embedding_
        return np.stack([table[self.vocab_.id(w)] for w in X])
