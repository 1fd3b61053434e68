"""Tokenization, delexicalization and synthetic corpus generation.

Text is tokenized with byte-pair encoding over whitespace-separated words.
Reserved tokens (<pad>, <bos>, <eos>, <unk>, the quantity/entity slots and
all graph node tokens) are atomic: BPE never splits them or merges into
them. Word boundaries are kept reversible with a ``</w>`` marker attached to
the final character of each word (standalone when a word ends in a slot
token), so decode(encode(text)) == text for in-alphabet text.
"""

from __future__ import annotations

import json
import logging
import re
import string
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Tuple

from . import eqlang
from .eqlang import ConstraintViolation, parse_system, solve_system, build_symbolic_graph
from .graph import REVERSE_SUFFIX

log = logging.getLogger(__name__)

PAD, BOS, EOS, UNK = "<pad>", "<bos>", "<eos>", "<unk>"
END_OF_WORD = "</w>"
X_ENTITY, Y_ENTITY = "<x_entity>", "<y_entity>"
QUANTITY_SLOTS = ("<a>", "<b>", "<m>", "<m2>", "<c>", "<d>", "<n>", "<n2>")
SLOT_TOKENS = QUANTITY_SLOTS + (X_ENTITY, Y_ENTITY)

_NUMBER_RE = re.compile(r"(?<![\w.])\d+(?:\.\d+)?(?![\w.])")


class MissingSlot(KeyError):
    pass


class TemplateGap(ValueError):
    pass


class ContractError(ValueError):
    pass


def equation_graph_tokens():
    """All node tokens the symbolic equation graph can produce."""
    tokens = ["x", "y", "dum1", "dum2", "res1", "res2"]
    tokens.extend(QUANTITY_SLOTS)
    for rel in eqlang.RELATION_VOCABULARY:
        tokens.append(rel)
        tokens.append(rel + REVERSE_SUFFIX)
    return tokens


def kg_graph_tokens(kg):
    """All node tokens a CSKG Levi graph can produce."""
    tokens = sorted(kg.entities)
    for rel in sorted({r for _, r, _ in kg.triples}):
        tokens.append(rel)
        tokens.append(rel + REVERSE_SUFFIX)
    return tokens


# ---------------------------------------------------------------------------
# vocabulary + BPE


class Vocab:
    def __init__(self, tokens, specials, merges):
        self.id_to_token = list(tokens)
        self.token_to_id = {t: i for i, t in enumerate(self.id_to_token)}
        if len(self.token_to_id) != len(self.id_to_token):
            raise ValueError("duplicate tokens in vocabulary")
        self.specials = set(specials)
        self.merges = list(merges)
        self._ranks = {pair: i for i, pair in enumerate(self.merges)}
        # atomic tokens that may be embedded inside a word, longest first
        self._atomic = sorted(
            (t for t in self.specials if t != END_OF_WORD), key=len, reverse=True
        )

    def __len__(self):
        return len(self.id_to_token)

    # -- word segmentation

    def _word_symbols(self, word):
        units = []
        i = 0
        while i < len(word):
            hit = None
            for tok in self._atomic:
                if word.startswith(tok, i):
                    hit = tok
                    break
            if hit is not None:
                units.append((True, hit))
                i += len(hit)
            else:
                units.append((False, word[i]))
                i += 1
        symbols = []
        for k, (special, u) in enumerate(units):
            if special:
                symbols.append(u)
            elif k == len(units) - 1:
                symbols.append(u + END_OF_WORD)
            else:
                symbols.append(u)
        if units[-1][0]:
            symbols.append(END_OF_WORD)
        return symbols

    def _mergeable(self, sym):
        return sym != END_OF_WORD and sym not in self.specials

    def _apply_merges(self, symbols):
        while True:
            best_rank = None
            best_idx = -1
            for i in range(len(symbols) - 1):
                a, b = symbols[i], symbols[i + 1]
                if not (self._mergeable(a) and self._mergeable(b)):
                    continue
                rank = self._ranks.get((a, b))
                if rank is not None and (best_rank is None or rank < best_rank):
                    best_rank = rank
                    best_idx = i
            if best_rank is None:
                return symbols
            i = best_idx
            symbols = symbols[:i] + [symbols[i] + symbols[i + 1]] + symbols[i + 2 :]

    def encode(self, text):
        """Token ids for a whitespace-tokenized text; unknowns become <unk>."""
        ids = []
        unk = self.token_to_id[UNK]
        for word in text.split():
            for sym in self._apply_merges(self._word_symbols(word)):
                i = self.token_to_id.get(sym)
                if i is None:
                    log.warning("out-of-vocabulary symbol %r -> <unk>", sym)
                    i = unk
                ids.append(i)
        return ids

    def decode(self, ids):
        words = []
        current = []
        for i in ids:
            sym = self.id_to_token[i]
            if sym == END_OF_WORD:
                words.append("".join(current))
                current = []
            elif sym.endswith(END_OF_WORD) and sym not in self.specials:
                current.append(sym[: -len(END_OF_WORD)])
                words.append("".join(current))
                current = []
            else:
                current.append(sym)
        if current:
            words.append("".join(current))
        return " ".join(words)


def train_bpe(texts, num_merges, specials):
    """Greedy highest-frequency pair merges, ties broken lexicographically.

    Returns (merges, alphabet): the ordered merge table and the full symbol
    inventory (initial symbols plus merge products) seen in the corpus.
    """
    helper = Vocab([PAD], specials=set(specials) | {END_OF_WORD}, merges=[])
    words = Counter()
    for text in texts:
        for word in text.split():
            words[word] += 1
    if not words:
        raise ContractError("empty corpus")
    split_words = {w: helper._word_symbols(w) for w in words}
    alphabet = set()
    for syms in split_words.values():
        alphabet.update(syms)
    merges = []
    for _ in range(num_merges):
        pairs = Counter()
        for w, syms in split_words.items():
            freq = words[w]
            for a, b in zip(syms, syms[1:]):
                if helper._mergeable(a) and helper._mergeable(b):
                    pairs[(a, b)] += freq
        if not pairs:
            break
        best = min(pairs.items(), key=lambda kv: (-kv[1], kv[0]))[0]
        merges.append(best)
        merged = best[0] + best[1]
        alphabet.add(merged)
        for w, syms in split_words.items():
            out = []
            i = 0
            while i < len(syms):
                if (
                    i + 1 < len(syms)
                    and (syms[i], syms[i + 1]) == best
                    and helper._mergeable(syms[i])
                    and helper._mergeable(syms[i + 1])
                ):
                    out.append(merged)
                    i += 2
                else:
                    out.append(syms[i])
                    i += 1
            split_words[w] = out
    return merges, sorted(alphabet)


def build_vocab(texts, graph_tokens, num_merges):
    """Shared vocabulary over text subwords, slots and graph node tokens."""
    specials = [PAD, BOS, EOS, UNK, END_OF_WORD]
    specials.extend(SLOT_TOKENS)
    for tok in graph_tokens:
        if tok not in specials:
            specials.append(tok)
    merges, alphabet = train_bpe(texts, num_merges, specials)
    tokens = list(specials)
    for sym in alphabet:
        if sym not in specials:
            tokens.append(sym)
    return Vocab(tokens, specials, merges)


def save_vocab(vocab, path):
    with open(path, "w", encoding="utf-8") as f:
        for i, tok in enumerate(vocab.id_to_token):
            kind = "special" if tok in vocab.specials else "subword"
            f.write(f"#token\t{i}\t{kind}\t{tok}\n")
        for a, b in vocab.merges:
            f.write(f"{a}\t{b}\n")


def load_vocab(path):
    tokens = []
    specials = []
    merges = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.rstrip("\n")
            if not line:
                continue
            if line.startswith("#token\t"):
                _, _, kind, tok = line.split("\t", 3)
                tokens.append(tok)
                if kind == "special":
                    specials.append(tok)
            else:
                a, b = line.split("\t")
                merges.append((a, b))
    return Vocab(tokens, specials, merges)


# ---------------------------------------------------------------------------
# samples, delexicalization


@dataclass
class MwpSample:
    equations: str
    topic: str
    bind_x: str
    bind_y: str
    text: str
    system: Optional[eqlang.LinearSystem] = field(default=None, repr=False)
    delex_tokens: Optional[List[str]] = field(default=None, repr=False)
    slot_map: Optional[Dict[str, str]] = field(default=None, repr=False)
    diagnostics: List[str] = field(default_factory=list, repr=False)

    def prepare(self):
        """Parse, solve and delexicalize; idempotent."""
        if self.delex_tokens is not None:
            return self
        self.system = parse_system(self.equations)
        solve_system(self.system)
        self.delex_tokens, self.slot_map, self.diagnostics = delexicalize(
            self.text, self.system, self.bind_x, self.bind_y
        )
        return self

    def to_record(self):
        return {
            "equations": self.equations,
            "topic": self.topic,
            "bind_x": self.bind_x,
            "bind_y": self.bind_y,
            "text": self.text,
        }

    @classmethod
    def from_record(cls, record):
        return cls(
            equations=record["equations"],
            topic=record["topic"],
            bind_x=record["bind_x"],
            bind_y=record["bind_y"],
            text=record["text"],
        )


def _canonical_number(value):
    if value.denominator == 1:
        return str(value.numerator)
    return f"{value.numerator}/{value.denominator}"


def delexicalize(text, system, bind_x, bind_y):
    """Replace quantities with slot tokens and bound entities with
    <x_entity>/<y_entity>; returns (word tokens, slot map, diagnostics)."""
    if system.solution is None:
        solve_system(system)
    slot_values = build_symbolic_graph(system).slot_values
    # slot priority for ambiguous duplicate values
    ordered_slots = [s for s in QUANTITY_SLOTS if s in slot_values]
    diagnostics = []
    slot_map = {}

    # entities first; a plural 's'/'es' suffix stays outside the slot token so
    # relexicalization restores the exact surface form
    out = text
    for token, entity in ((X_ENTITY, bind_x), (Y_ENTITY, bind_y)):
        pattern = re.compile(
            r"(?<![A-Za-z])" + re.escape(entity) + r"(e?s)?(?![A-Za-z])"
        )
        replaced, count = pattern.subn(lambda m: token + (m.group(1) or ""), out)
        if count:
            out = replaced
            slot_map[token] = entity
        else:
            diagnostics.append(f"bound entity {entity!r} not found in text")

    def replace_number(match):
        literal = match.group(0)
        value = Fraction(literal)
        for slot in ordered_slots:
            if slot_values[slot] == value:
                recorded = slot_map.setdefault(slot, literal)
                if recorded != literal:
                    diagnostics.append(
                        f"slot {slot} matched both {recorded!r} and {literal!r}"
                    )
                return slot
        diagnostics.append(f"number {literal!r} has no matching quantity slot")
        return literal

    out = _NUMBER_RE.sub(replace_number, out)
    return out.split(), slot_map, diagnostics


def relexicalize(tokens, slot_map, strict=True):
    """Refill slot tokens. Uncovered slot tokens raise :class:`MissingSlot`
    when ``strict``; otherwise they are left verbatim with a warning."""
    words = []
    for word in tokens:
        for slot in SLOT_TOKENS:
            if slot in word:
                surface = slot_map.get(slot)
                if surface is None:
                    if strict:
                        raise MissingSlot(slot)
                    log.warning("slot %s has no surface; leaving it verbatim", slot)
                    continue
                word = word.replace(slot, surface)
        words.append(word)
    return " ".join(words)


# ---------------------------------------------------------------------------
# templates and synthetic corpus


@dataclass(frozen=True)
class MwpTemplate:
    template: str
    shape: str  # e.g. "x+y=m; cx+dy=n" with slot letters a, b, c, d, m, n
    topic: str

    def placeholders(self):
        return {name for _, name, _, _ in string.Formatter().parse(self.template) if name}


_SHAPE_LETTERS = "abcdmn"
_SENTINELS = {letter: Fraction(7919 + i) for i, letter in enumerate(_SHAPE_LETTERS)}


def _substitute_shape(shape, values):
    out = []
    for ch in shape:
        out.append(str(values[ch]) if ch in values else ch)
    return "".join(out)


def shape_letters(shape):
    return [ch for ch in shape if ch in _SHAPE_LETTERS]


def validate_shape(shape):
    """Parse the shape with sentinel quantities; raises on a malformed shape."""
    sentinel_str = _substitute_shape(shape, {k: v.numerator for k, v in _SENTINELS.items()})
    parse_system(sentinel_str)


def load_templates(path):
    templates = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            if not line.strip():
                continue
            rec = json.loads(line)
            templates.append(MwpTemplate(rec["template"], rec["shape"], rec["topic"]))
    if not templates:
        raise ContractError(f"no templates in {path}")
    for t in templates:
        validate_shape(t.shape)
    return templates


def topic_entities(kg, topic):
    return sorted(h for h, r, t in kg.triples if r == "belong_to" and t == topic)


def _sample_system(shape, rng, max_tries=200):
    """Instantiate a shape with random positive integers so that the solution
    is a pair of positive integers."""
    letters = set(shape_letters(shape))
    lhs_letters = sorted(letters - {"m", "n"})
    for _ in range(max_tries):
        x_star = rng.randint(1, 12)
        y_star = rng.randint(1, 12)
        values = {letter: rng.randint(2, 9) for letter in lhs_letters}
        sentinel_values = dict(values)
        # rhs slots are implied by the solution
        sentinel_values.update({k: _SENTINELS[k].numerator for k in letters & {"m", "n"}})
        try:
            probe = parse_system(_substitute_shape(shape, sentinel_values))
        except (ConstraintViolation, eqlang.EquationSyntaxError):
            return None
        ok = True
        for eq, rhs_letter in ((probe.eq1, "m"), (probe.eq2, "n")):
            alpha, beta, gamma = eqlang.normalize_equation(eq)
            if rhs_letter in letters:
                rhs = alpha * x_star + beta * y_star
                if rhs <= 0 or rhs.denominator != 1:
                    ok = False
                    break
                values[rhs_letter] = rhs.numerator
            elif alpha * x_star + beta * y_star != gamma:
                ok = False
                break
        if not ok:
            continue
        equations = _substitute_shape(shape, values)
        system = parse_system(equations)
        try:
            solution = solve_system(system)
        except eqlang.SingularSystem:
            continue
        if solution.x != x_star or solution.y != y_star:
            continue
        if not solution.positive_integers:
            continue
        return equations, system, values
    return None


def synth_corpus(templates, kg, count, seed, required_shapes=None):
    """Generate ``count`` solvable samples from the template bank."""
    from .numerics import Xoshiro256

    shapes = {t.shape for t in templates}
    for shape in required_shapes or ():
        if shape not in shapes:
            raise TemplateGap(f"no template for equation shape {shape!r}")
    usable = []
    for t in templates:
        entities = topic_entities(kg, t.topic)
        if len(entities) < 2:
            raise TemplateGap(
                f"topic {t.topic!r} has fewer than two entities for template binding"
            )
        usable.append((t, entities))

    rng = Xoshiro256(seed)
    samples = []
    while len(samples) < count:
        template, entities = usable[rng.randint(0, len(usable) - 1)]
        drawn = _sample_system(template.shape, rng)
        if drawn is None:
            raise TemplateGap(f"cannot instantiate equation shape {template.shape!r}")
        equations, system, values = drawn
        bind_x = rng.choice(entities)
        bind_y = rng.choice([e for e in entities if e != bind_x])
        fills = {k: str(v) for k, v in values.items()}
        fills["x_entity"] = bind_x
        fills["y_entity"] = bind_y
        missing = template.placeholders() - set(fills)
        if missing:
            raise TemplateGap(
                f"template placeholders {sorted(missing)} not covered by shape "
                f"{template.shape!r}"
            )
        text = template.template.format(**fills)
        sample = MwpSample(
            equations=equations,
            topic=template.topic,
            bind_x=bind_x,
            bind_y=bind_y,
            text=text,
        )
        sample.prepare()
        samples.append(sample)
    return samples


def synth_variant_corpus(templates, kg, num_inputs, variants_per_input, seed):
    """Like :func:`synth_corpus`, but each drawn input (equations, topic and
    entity binding) is rendered with ``variants_per_input`` distinct surface
    templates, so the corpus pairs every input with several texts."""
    from .numerics import Xoshiro256

    groups = {}
    for t in templates:
        groups.setdefault((t.shape, t.topic), []).append(t)
    usable = [g for g in groups.values() if len(g) >= variants_per_input]
    if not usable:
        raise TemplateGap(
            f"no (shape, topic) group has {variants_per_input} template variants"
        )
    rng = Xoshiro256(seed)
    samples = []
    for _ in range(num_inputs):
        group = list(usable[rng.randint(0, len(usable) - 1)])
        shape, topic = group[0].shape, group[0].topic
        entities = topic_entities(kg, topic)
        if len(entities) < 2:
            raise TemplateGap(
                f"topic {topic!r} has fewer than two entities for template binding"
            )
        drawn = _sample_system(shape, rng)
        if drawn is None:
            raise TemplateGap(f"cannot instantiate equation shape {shape!r}")
        equations, system, values = drawn
        bind_x = rng.choice(entities)
        bind_y = rng.choice([e for e in entities if e != bind_x])
        fills = {k: str(v) for k, v in values.items()}
        fills["x_entity"] = bind_x
        fills["y_entity"] = bind_y
        rng.shuffle(group)
        for template in group[:variants_per_input]:
            sample = MwpSample(
                equations=equations,
                topic=topic,
                bind_x=bind_x,
                bind_y=bind_y,
                text=template.template.format(**fills),
            )
            sample.prepare()
            samples.append(sample)
    return samples


def split(dataset, dev_fraction, test_fraction, seed):
    """Disjoint, exhaustive (train, dev, test) with a seeded shuffle."""
    from .numerics import Xoshiro256

    if dev_fraction + test_fraction >= 1:
        raise ContractError("dev and test fractions must sum to less than 1")
    if not dataset:
        raise ContractError("cannot split an empty dataset")
    items = list(dataset)
    Xoshiro256(seed).shuffle(items)
    n = len(items)
    n_dev = int(n * dev_fraction + 1e-9)
    n_test = int(n * test_fraction + 1e-9)
    dev = items[:n_dev]
    test = items[n_dev : n_dev + n_test]
    train = items[n_dev + n_test :]
    return train, dev, test


def save_dataset(samples, path):
    with open(path, "w", encoding="utf-8") as f:
        for s in samples:
            f.write(json.dumps(s.to_record(), ensure_ascii=False, sort_keys=True) + "\n")


def load_dataset(path):
    samples = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            if line.strip():
                samples.append(MwpSample.from_record(json.loads(line)))
    return samples
