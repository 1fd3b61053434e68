"""Training loop: Adam over the annealed ELBO with dev-driven learning-rate
halving, periodic checkpoints and line-oriented JSON logs."""

from __future__ import annotations

import json
import logging
import shutil
import sys
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from . import generator as gen
from . import numerics as nm

log = logging.getLogger(__name__)


class NumericFailure(RuntimeError):
    """Training aborted on a non-finite loss or gradient."""


@dataclass
class TrainConfig:
    batch_size: int = 32
    teacher_forcing: float = 0.5
    lr: float = 1e-3
    max_steps: int = 2000
    kl_ramp_fraction: float = 0.5  # of max_steps
    eval_interval: int = 200
    lr_patience: int = 3  # evals without dev improvement before halving
    seed: int = 0

    def to_dict(self):
        return dict(self.__dict__)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass
class TrainResult:
    steps: int
    best_dev_loss: float
    history: List[dict] = field(default_factory=list)


def _batches(n, batch_size, rng):
    """Endless stream of index batches over seeded epoch shuffles."""
    while True:
        order = list(range(n))
        rng.shuffle(order)
        for i in range(0, n, batch_size):
            yield order[i : i + batch_size]


def evaluate_loss(model, inputs_list, vocab, step, kl_ramp_steps):
    """Deterministic dev loss: teacher forcing 1.0 and eps = 0."""
    zero_eps = np.zeros((1, model.config.latent_dim))
    rng = nm.Xoshiro256(0)
    total = 0.0
    accuracy = 0.0
    for inputs in inputs_list:
        loss, stats = gen.training_loss(
            model, inputs, vocab, step, kl_ramp_steps, 1.0, rng, eps=zero_eps
        )
        total += loss.item()
        accuracy += stats.token_accuracy
    n = max(len(inputs_list), 1)
    return total / n, accuracy / n


def train(model, train_inputs, dev_inputs, cfg, vocab,
          checkpoint_prefix: Optional[str] = None, log_file=None, verbose=True):
    """Train in place; returns a :class:`TrainResult`.

    Writes ``<prefix>`` checkpoints each evaluation interval and keeps the
    best dev checkpoint at ``<prefix>-best``. A NaN/Inf loss aborts with the
    last-good checkpoint retained on disk.
    """
    rng = nm.Xoshiro256(cfg.seed)
    adam = nm.AdamState(lr=cfg.lr)
    kl_ramp_steps = max(int(cfg.max_steps * cfg.kl_ramp_fraction), 1)
    result = TrainResult(steps=0, best_dev_loss=float("inf"))
    evals_since_improvement = 0

    def emit(record):
        result.history.append(record)
        if log_file is not None:
            log_file.write(json.dumps(record, sort_keys=True) + "\n")
            log_file.flush()
        if verbose:
            pretty = " ".join(f"{k}={v:.4f}" if isinstance(v, float) else f"{k}={v}"
                              for k, v in record.items())
            print(pretty, file=sys.stderr)

    def save(step, dev_loss=None):
        if checkpoint_prefix is None:
            return
        nm.save_arrays(model.state_arrays(), checkpoint_prefix)
        if dev_loss is not None and dev_loss < result.best_dev_loss:
            shutil.copyfile(checkpoint_prefix + ".bin", checkpoint_prefix + "-best.bin")
            shutil.copyfile(
                checkpoint_prefix + ".manifest.json",
                checkpoint_prefix + "-best.manifest.json",
            )

    save(0)
    if cfg.max_steps == 0:
        return result

    def run_eval(step):
        nonlocal evals_since_improvement
        if not dev_inputs:
            save(step)
            return
        dev_loss, dev_acc = evaluate_loss(model, dev_inputs, vocab, step, kl_ramp_steps)
        emit({"step": step, "dev_loss": dev_loss, "dev_token_accuracy": dev_acc,
              "lr": adam.lr})
        save(step, dev_loss)
        if dev_loss < result.best_dev_loss:
            result.best_dev_loss = dev_loss
            evals_since_improvement = 0
        else:
            evals_since_improvement += 1
            if evals_since_improvement >= cfg.lr_patience:
                adam.lr /= 2.0
                evals_since_improvement = 0
                log.info("dev loss plateaued; halving learning rate to %g", adam.lr)

    batches = _batches(len(train_inputs), cfg.batch_size, rng)
    for step in range(1, cfg.max_steps + 1):
        batch = next(batches)
        with nm.Tape() as tape:
            losses = []
            nll = kl = acc = 0.0
            weight = gen.kl_weight(step, kl_ramp_steps)
            for idx in batch:
                loss, stats = gen.training_loss(
                    model, train_inputs[idx], vocab, step, kl_ramp_steps,
                    cfg.teacher_forcing, rng,
                )
                losses.append(loss)
                nll += stats.nll_per_token
                kl += stats.kl
                acc += stats.token_accuracy
            total = nm.scale(nm.concat(losses, axis=1), 1.0 / len(batch))
            total = nm.sum_all(total)
            if not np.isfinite(total.data[0, 0]):
                raise NumericFailure(
                    f"non-finite loss at step {step}; last-good checkpoint retained"
                )
            grads_by_id = nm.backward(total, tape)
        grads = {name: grads_by_id.get(id(p)) for name, p in model.params.items()}
        nm.adam_step(model.params, grads, adam)
        result.steps = step
        b = len(batch)
        emit({"step": step, "loss": float(total.data[0, 0]), "nll_per_token": nll / b,
              "kl": kl / b, "kl_weight": weight, "token_accuracy": acc / b})
        if step % cfg.eval_interval == 0 or step == cfg.max_steps:
            run_eval(step)
    return result
