"""BLEU-4, ROUGE-L and Self-BLEU over token sequences.

Scores are on a 0-100 scale. BLEU uses clipped n-gram precisions (n=1..4)
with a brevity penalty; any zero precision gets add-one smoothing on both
numerator and denominator so short candidates do not degenerate to zero.
"""

from __future__ import annotations

import logging
import math
from collections import Counter
from dataclasses import dataclass
from typing import Dict, List, Sequence

log = logging.getLogger(__name__)

MAX_ORDER = 4


class ContractError(ValueError):
    pass


def _ngrams(tokens, n):
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def _clipped_counts(candidate, references):
    """Per-order (matched, total) clipped n-gram counts for one candidate."""
    stats = []
    for n in range(1, MAX_ORDER + 1):
        cand = _ngrams(candidate, n)
        total = sum(cand.values())
        if not cand:
            stats.append((0, 0))
            continue
        best = Counter()
        for ref in references:
            for gram, count in _ngrams(ref, n).items():
                if count > best[gram]:
                    best[gram] = count
        matched = sum(min(count, best[gram]) for gram, count in cand.items())
        stats.append((matched, total))
    return stats


def _closest_ref_length(candidate, references):
    return min((abs(len(r) - len(candidate)), len(r)) for r in references)[1]


def _bleu_from_counts(stats, cand_len, ref_len, smooth):
    log_sum = 0.0
    for matched, total in stats:
        if total == 0:
            return 0.0
        if matched == 0:
            if not smooth:
                return 0.0
            matched, total = matched + 1, total + 1
        log_sum += math.log(matched / total)
    precision_gm = math.exp(log_sum / MAX_ORDER)
    bp = 1.0 if cand_len >= ref_len else math.exp(1.0 - ref_len / max(cand_len, 1))
    return 100.0 * bp * precision_gm


def bleu4(candidate, references, smooth=True):
    """Sentence BLEU-4 of a candidate against one or more references."""
    if not references:
        raise ContractError("bleu4 requires at least one reference")
    if not candidate:
        log.warning("bleu4: empty candidate scores 0")
        return 0.0
    stats = _clipped_counts(candidate, references)
    return _bleu_from_counts(
        stats, len(candidate), _closest_ref_length(candidate, references), smooth
    )


def corpus_bleu4(pairs, smooth=True):
    """Corpus BLEU-4: clipped counts summed over all (candidate, references)."""
    totals = [(0, 0)] * MAX_ORDER
    cand_len = 0
    ref_len = 0
    for candidate, references in pairs:
        if not candidate:
            log.warning("corpus_bleu4: skipping empty candidate")
            continue
        for i, (m, t) in enumerate(_clipped_counts(candidate, references)):
            totals[i] = (totals[i][0] + m, totals[i][1] + t)
        cand_len += len(candidate)
        ref_len += _closest_ref_length(candidate, references)
    if cand_len == 0:
        return 0.0
    return _bleu_from_counts(totals, cand_len, ref_len, smooth)


def _lcs_length(a, b):
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, start=1):
            if x == y:
                cur.append(prev[j - 1] + 1)
            else:
                cur.append(max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def rouge_l(candidate, reference):
    """LCS-based F1 (beta = 1) on a 0-100 scale."""
    if not candidate or not reference:
        raise ContractError("rouge_l requires non-empty sequences")
    lcs = _lcs_length(candidate, reference)
    if lcs == 0:
        return 0.0
    precision = lcs / len(candidate)
    recall = lcs / len(reference)
    return 100.0 * 2 * precision * recall / (precision + recall)


def self_bleu(samples):
    """Diversity score over exactly 4 generations for the same input: each
    sample's BLEU-4 against the other three, averaged. Lower is more diverse."""
    if len(samples) != 4:
        raise ContractError(f"self_bleu requires exactly 4 samples, got {len(samples)}")
    scores = []
    for i, sample in enumerate(samples):
        others = [s for j, s in enumerate(samples) if j != i]
        scores.append(bleu4(sample, others))
    return sum(scores) / len(scores)


@dataclass
class EvalReport:
    bleu4: float
    rouge_l: float
    self_bleu: float  # NaN when predictions do not come in groups of 4
    per_sample: List[Dict[str, float]]

    def to_dict(self):
        return {
            "bleu4": self.bleu4,
            "rouge_l": self.rouge_l,
            "self_bleu": self.self_bleu,
            "per_sample": self.per_sample,
        }

    def table(self):
        lines = [
            f"{'metric':<12}{'score':>10}",
            f"{'BLEU-4':<12}{self.bleu4:>10.3f}",
            f"{'ROUGE-L':<12}{self.rouge_l:>10.3f}",
        ]
        if not math.isnan(self.self_bleu):
            lines.append(f"{'Self-BLEU':<12}{self.self_bleu:>10.3f}")
        return "\n".join(lines)


def evaluate(predictions, references, groups=None):
    """Corpus evaluation of parallel token-sequence lists.

    ``groups`` optionally holds lists of 4 token sequences per input for
    Self-BLEU; otherwise Self-BLEU is NaN.
    """
    if len(predictions) != len(references):
        raise ContractError(
            f"{len(predictions)} predictions vs {len(references)} references"
        )
    per_sample = []
    for cand, ref in zip(predictions, references):
        per_sample.append(
            {"bleu4": bleu4(cand, [ref]) if cand else 0.0, "rouge_l": rouge_l(cand, ref)}
        )
    corpus = corpus_bleu4((cand, [ref]) for cand, ref in zip(predictions, references))
    mean_rouge = sum(s["rouge_l"] for s in per_sample) / len(per_sample)
    if groups:
        sb = sum(self_bleu(g) for g in groups) / len(groups)
    else:
        sb = float("nan")
    return EvalReport(corpus, mean_rouge, sb, per_sample)
