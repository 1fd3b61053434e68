"""Math word problem generation from two-variable linear systems.

Pipeline: equation parsing -> relation-labeled symbolic graph -> Levi graph
-> gated graph encoders (equations + commonsense knowledge) -> conditional
VAE with a self-planning GRU decoder -> beam search -> relexicalization.
"""

from importlib import resources

from . import corpus, cskg, eqlang, graph, metrics, numerics, training
from .corpus import (
    MwpSample,
    MwpTemplate,
    Vocab,
    build_vocab,
    delexicalize,
    load_dataset,
    load_templates,
    load_vocab,
    relexicalize,
    save_dataset,
    save_vocab,
    split,
    synth_corpus,
    synth_variant_corpus,
)
from .cskg import KnowledgeGraph, VariableBinding, load_triples, topic_instance
from .eqlang import build_symbolic_graph, parse_system, solve_system
from .estimator import MwpGenerator
from .generator import ModelConfig, MwpModel, generate, prepare_inputs
from .graph import LabeledGraph, LeviGraph, levi_transform
from .metrics import EvalReport, bleu4, corpus_bleu4, evaluate, rouge_l, self_bleu
from .training import TrainConfig, train

__version__ = "0.1.0"


def default_cskg_path():
    """Path to the packaged starter commonsense knowledge graph."""
    return str(resources.files("mwpgen.data") / "cskg.tsv")


def default_templates_path():
    """Path to the packaged starter template bank."""
    return str(resources.files("mwpgen.data") / "templates.jsonl")


__all__ = [
    "EvalReport",
    "KnowledgeGraph",
    "LabeledGraph",
    "LeviGraph",
    "ModelConfig",
    "MwpGenerator",
    "MwpModel",
    "MwpSample",
    "MwpTemplate",
    "TrainConfig",
    "VariableBinding",
    "Vocab",
    "bleu4",
    "build_symbolic_graph",
    "build_vocab",
    "corpus",
    "corpus_bleu4",
    "cskg",
    "default_cskg_path",
    "default_templates_path",
    "delexicalize",
    "eqlang",
    "evaluate",
    "generate",
    "graph",
    "levi_transform",
    "load_dataset",
    "load_templates",
    "load_triples",
    "load_vocab",
    "metrics",
    "numerics",
    "parse_system",
    "prepare_inputs",
    "relexicalize",
    "rouge_l",
    "save_dataset",
    "save_vocab",
    "self_bleu",
    "solve_system",
    "split",
    "synth_corpus",
    "synth_variant_corpus",
    "topic_instance",
    "train",
    "training",
]
