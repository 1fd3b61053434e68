"""Scikit-learn style wrapper: fit on samples, then generate word problems."""

from __future__ import annotations

from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from . import generator as gen
from .corpus import build_vocab, equation_graph_tokens, kg_graph_tokens
from .training import TrainConfig, train


class MwpGenerator(BaseEstimator):
    """Generates math word problems for two-variable linear systems.

    ``fit`` takes a list of :class:`~mwpgen.corpus.MwpSample` and a
    :class:`~mwpgen.cskg.KnowledgeGraph`; ``generate`` takes a new system
    plus a topic and entity binding and returns relexicalized problems.
    All constructor arguments are plain hyperparameters, so the usual
    ``get_params``/``set_params``/``clone`` machinery applies.
    """

    def __init__(
        self,
        embedding_dim=128,
        hidden_dim=512,
        latent_dim=128,
        hops=3,
        max_len=120,
        num_merges=200,
        batch_size=32,
        teacher_forcing=0.5,
        lr=1e-3,
        max_steps=2000,
        kl_ramp_fraction=0.5,
        eval_interval=200,
        lr_patience=3,
        beam_width=5,
        seed=0,
        verbose=False,
    ):
        self.embedding_dim = embedding_dim
        self.hidden_dim = hidden_dim
        self.latent_dim = latent_dim
        self.hops = hops
        self.max_len = max_len
        self.num_merges = num_merges
        self.batch_size = batch_size
        self.teacher_forcing = teacher_forcing
        self.lr = lr
        self.max_steps = max_steps
        self.kl_ramp_fraction = kl_ramp_fraction
        self.eval_interval = eval_interval
        self.lr_patience = lr_patience
        self.beam_width = beam_width
        self.seed = seed
        self.verbose = verbose

    def fit(self, samples, kg, dev_samples=None, checkpoint_prefix=None, log_file=None):
        """Build the vocabulary and model from ``samples`` and train."""
        if not samples:
            raise ValueError("fit requires at least one sample")
        for s in samples:
            s.prepare()
        texts = [" ".join(s.delex_tokens) for s in samples]
        self.vocab_ = build_vocab(
            texts, equation_graph_tokens() + kg_graph_tokens(kg), self.num_merges
        )
        self.kg_ = kg
        config = gen.ModelConfig(
            embedding_dim=self.embedding_dim,
            hidden_dim=self.hidden_dim,
            latent_dim=self.latent_dim,
            hops=self.hops,
            vocab_size=len(self.vocab_),
            max_len=self.max_len,
        )
        self.model_ = gen.MwpModel(config, seed=self.seed)
        train_inputs = [
            gen.prepare_inputs(s, kg, self.vocab_, self.max_len) for s in samples
        ]
        dev_inputs = [
            gen.prepare_inputs(s, kg, self.vocab_, self.max_len)
            for s in (dev_samples or [])
        ]
        cfg = TrainConfig(
            batch_size=self.batch_size,
            teacher_forcing=self.teacher_forcing,
            lr=self.lr,
            max_steps=self.max_steps,
            kl_ramp_fraction=self.kl_ramp_fraction,
            eval_interval=self.eval_interval,
            lr_patience=self.lr_patience,
            seed=self.seed,
        )
        self.train_result_ = train(
            self.model_,
            train_inputs,
            dev_inputs,
            cfg,
            self.vocab_,
            checkpoint_prefix=checkpoint_prefix,
            log_file=log_file,
            verbose=self.verbose,
        )
        return self

    def generate(self, equations, topic, bind_x, bind_y, n=1, seed=None):
        """Generate ``n`` word problems for one system; see :func:`mwpgen.generate`."""
        if not hasattr(self, "model_"):
            raise NotFittedError("MwpGenerator must be fitted before generating")
        return gen.generate(
            self.model_,
            self.kg_,
            self.vocab_,
            equations,
            topic,
            bind_x,
            bind_y,
            n=n,
            seed=self.seed if seed is None else seed,
            beam_width=self.beam_width,
            max_len=self.max_len,
        )
