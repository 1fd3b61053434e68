"""Conditional VAE with a self-planning GRU decoder over two graph encodings.

The equation graph and the knowledge graph are encoded separately; a latent
Gaussian conditions the decoder, whose per-step context is a learned convex
combination (weight beta) of attention over equation nodes and attention
over knowledge-graph nodes. Training draws the latent from the posterior;
inference draws from the prior, so diversity comes from the prior draws.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from . import corpus as corpus_mod
from . import cskg as cskg_mod
from . import numerics as nm
from .encoder import GgnnParams, ggnn_encode, init_ggnn_params, node_ids
from .eqlang import build_symbolic_graph, parse_system, solve_system
from .graph import levi_transform, row_normalize


@dataclass
class ModelConfig:
    embedding_dim: int = 128
    hidden_dim: int = 512
    latent_dim: int = 128
    hops: int = 3
    vocab_size: int = 0
    max_len: int = 120
    share_encoders: bool = False

    def to_dict(self):
        return dict(self.__dict__)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass
class LatentGaussian:
    mu: nm.Tensor
    log_sigma: nm.Tensor


@dataclass
class GruParams:
    w_z: nm.Parameter
    u_z: nm.Parameter
    w_r: nm.Parameter
    u_r: nm.Parameter
    w_h: nm.Parameter
    u_h: nm.Parameter

    def named(self):
        return {p.name: p for p in self.__dict__.values()}


def init_gru(in_dim, hid_dim, rng, prefix):
    def mat(name, shape):
        return nm.Parameter(rng.normal_array(shape, 0.02), f"{prefix}.{name}")

    return GruParams(
        w_z=mat("w_z", (in_dim, hid_dim)),
        u_z=mat("u_z", (hid_dim, hid_dim)),
        w_r=mat("w_r", (in_dim, hid_dim)),
        u_r=mat("u_r", (hid_dim, hid_dim)),
        w_h=mat("w_h", (in_dim, hid_dim)),
        u_h=mat("u_h", (hid_dim, hid_dim)),
    )


def gru_step(p, h, x):
    z = nm.sigmoid(nm.add(nm.matmul(x, p.w_z), nm.matmul(h, p.u_z)))
    r = nm.sigmoid(nm.add(nm.matmul(x, p.w_r), nm.matmul(h, p.u_r)))
    cand = nm.tanh(nm.add(nm.matmul(x, p.w_h), nm.matmul(nm.mul(r, h), p.u_h)))
    one_minus_z = nm.add_const(nm.scale(z, -1.0), 1.0)
    return nm.add(nm.mul(one_minus_z, h), nm.mul(z, cand))


def kl_divergence(q, p):
    """Closed-form KL between diagonal Gaussians, summed over dimensions."""
    log_ratio = nm.sub(p.log_sigma, q.log_sigma)
    var_q = nm.exp(nm.scale(q.log_sigma, 2.0))
    inv_var_p = nm.exp(nm.scale(p.log_sigma, -2.0))
    diff = nm.sub(q.mu, p.mu)
    quad = nm.mul(nm.add(var_q, nm.mul(diff, diff)), nm.scale(inv_var_p, 0.5))
    return nm.sum_all(nm.add_const(nm.add(log_ratio, quad), -0.5))


def reparameterize(gauss, eps):
    """z = mu + sigma * eps with gradient flow into mu and log sigma."""
    eps_t = eps if isinstance(eps, nm.Tensor) else nm.Tensor(eps)
    if eps_t.shape != gauss.mu.shape:
        raise nm.ShapeError(f"eps shape {eps_t.shape} != mu shape {gauss.mu.shape}")
    return nm.add(gauss.mu, nm.mul(nm.exp(gauss.log_sigma), eps_t))


@dataclass
class PlanState:
    context: nm.Tensor      # c_t, (1, emb)
    beta: nm.Tensor         # (1, 1) in (0, 1)
    alpha_eq: nm.Tensor     # (1, |V_e|)
    alpha_kg: nm.Tensor     # (1, |V_k|)
    context_eq: nm.Tensor
    context_kg: nm.Tensor


@dataclass
class GraphInputs:
    """Constant per-sample model inputs for one Levi graph."""

    ids: List[int]
    adjacency: nm.Tensor


def graph_inputs(levi, vocab):
    return GraphInputs(node_ids(levi, vocab), nm.Tensor(row_normalize(levi)))


class MwpModel:
    """Complete named-parameter set plus the forward operations."""

    def __init__(self, config, seed=0):
        if config.vocab_size <= 0:
            raise ValueError("config.vocab_size must be set before building the model")
        self.config = config
        rng = nm.Xoshiro256(seed)
        d, h, z = config.embedding_dim, config.hidden_dim, config.latent_dim
        self.embedding = nm.Parameter(
            rng.normal_array((config.vocab_size, d), 0.02), "embedding"
        )
        self.enc_eq = init_ggnn_params(d, config.hops, rng, "enc_eq")
        self.enc_kg = (
            self.enc_eq
            if config.share_encoders
            else init_ggnn_params(d, config.hops, rng, "enc_kg")
        )

        def mat(name, shape):
            return nm.Parameter(rng.normal_array(shape, 0.02), name)

        # prior MLP: [g_e; g_k] -> 2d -> 2*latent
        self.prior_w1 = mat("prior.w1", (2 * d, 2 * d))
        self.prior_w2 = mat("prior.w2", (2 * d, 2 * z))
        # posterior: [g_e; g_k; GRU(y)] -> 2*latent
        self.post_gru = init_gru(d, h, rng, "post_gru")
        self.post_w = mat("post.w_q", (2 * d + h, 2 * z))
        self.post_b = mat("post.b_q", (1, 2 * z))
        # planner
        self.plan_w_beta = mat("plan.w_beta", (h, 2))
        self.plan_v_eq = mat("plan.v_e", (h, 1))
        self.plan_w_eq = mat("plan.w_e", (h, h))
        self.plan_u_eq = mat("plan.u_e", (d, h))
        self.plan_v_kg = mat("plan.v_k", (h, 1))
        self.plan_w_kg = mat("plan.w_k", (h, h))
        self.plan_u_kg = mat("plan.u_k", (d, h))
        # decoder
        self.dec_w_h0 = mat("dec.w_h0", (z + 2 * d, h))
        self.dec_w_in = mat("dec.w_d", (2 * d, d))
        self.dec_b_in = mat("dec.b_d", (1, d))
        self.dec_gru = init_gru(d, h, rng, "dec_gru")
        self.dec_w_out = mat("dec.w_out", (h, config.vocab_size))
        self.dec_b_out = mat("dec.b_out", (1, config.vocab_size))

        self.params: Dict[str, nm.Parameter] = {}
        for p in (
            self.embedding,
            self.prior_w1,
            self.prior_w2,
            self.post_w,
            self.post_b,
            self.plan_w_beta,
            self.plan_v_eq,
            self.plan_w_eq,
            self.plan_u_eq,
            self.plan_v_kg,
            self.plan_w_kg,
            self.plan_u_kg,
            self.dec_w_h0,
            self.dec_w_in,
            self.dec_b_in,
            self.dec_w_out,
            self.dec_b_out,
        ):
            self.params[p.name] = p
        for group in (self.enc_eq, self.enc_kg, self.post_gru, self.dec_gru):
            self.params.update(group.named())

    # -- parameter I/O

    def state_arrays(self):
        return {name: p.data for name, p in self.params.items()}

    def load_state_arrays(self, arrays):
        for name, p in self.params.items():
            if name not in arrays:
                raise KeyError(f"checkpoint is missing parameter {name!r}")
            if tuple(arrays[name].shape) != p.data.shape:
                raise ValueError(
                    f"checkpoint shape {arrays[name].shape} != model shape "
                    f"{p.data.shape} for {name!r}"
                )
            p.data = np.array(arrays[name], dtype=np.float64)

    # -- encoders

    def encode_equation(self, inputs):
        return ggnn_encode(inputs.adjacency, inputs.ids, self.embedding, self.enc_eq)

    def encode_knowledge(self, inputs):
        return ggnn_encode(inputs.adjacency, inputs.ids, self.embedding, self.enc_kg)

    # -- latent nets

    def prior_net(self, g_eq, g_kg):
        hidden = nm.tanh(nm.matmul(nm.concat([g_eq, g_kg], axis=1), self.prior_w1))
        out = nm.matmul(hidden, self.prior_w2)
        z = self.config.latent_dim
        return LatentGaussian(
            mu=nm.slice_(out, cols=slice(0, z)),
            log_sigma=nm.slice_(out, cols=slice(z, 2 * z)),
        )

    def encode_target(self, token_ids):
        if not token_ids:
            raise nm.ContractError("posterior target sequence must be non-empty")
        h = nm.Tensor(np.zeros((1, self.config.hidden_dim)))
        embedded = nm.embed_lookup(self.embedding, token_ids)
        for t in range(len(token_ids)):
            h = gru_step(self.post_gru, h, nm.slice_(embedded, rows=slice(t, t + 1)))
        return h

    def posterior_net(self, g_eq, g_kg, target_ids):
        target_state = self.encode_target(target_ids)
        out = nm.add(
            nm.matmul(nm.concat([g_eq, g_kg, target_state], axis=1), self.post_w),
            self.post_b,
        )
        z = self.config.latent_dim
        return LatentGaussian(
            mu=nm.slice_(out, cols=slice(0, z)),
            log_sigma=nm.slice_(out, cols=slice(z, 2 * z)),
        )

    # -- decoding

    def initial_hidden(self, z, g_eq, g_kg):
        return nm.matmul(nm.concat([z, g_eq, g_kg], axis=1), self.dec_w_h0)

    def plan_step(self, h, nodes_eq, nodes_kg):
        def attend(nodes, w, u, v):
            scores = nm.matmul(nm.tanh(nm.add(nm.matmul(nodes, u), nm.matmul(h, w))), v)
            alpha = nm.softmax(nm.transpose(scores))
            return alpha, nm.matmul(alpha, nodes)

        alpha_eq, c_eq = attend(nodes_eq, self.plan_w_eq, self.plan_u_eq, self.plan_v_eq)
        alpha_kg, c_kg = attend(nodes_kg, self.plan_w_kg, self.plan_u_kg, self.plan_v_kg)
        beta_full = nm.softmax(nm.matmul(h, self.plan_w_beta))
        beta = nm.slice_(beta_full, cols=slice(0, 1))
        one_minus_beta = nm.add_const(nm.scale(beta, -1.0), 1.0)
        context = nm.add(nm.mul(beta, c_eq), nm.mul(one_minus_beta, c_kg))
        return PlanState(context, beta, alpha_eq, alpha_kg, c_eq, c_kg)

    def decode_step(self, h, context, word_embedding):
        fused = nm.add(
            nm.matmul(nm.concat([context, word_embedding], axis=1), self.dec_w_in),
            self.dec_b_in,
        )
        h_next = gru_step(self.dec_gru, h, fused)
        logits = nm.add(nm.matmul(h_next, self.dec_w_out), self.dec_b_out)
        return h_next, nm.softmax(logits)

    def embed_token(self, token_id):
        return nm.embed_lookup(self.embedding, [token_id])


def kl_weight(step, ramp_steps):
    """Linear annealing weight, 0 at step 0 and 1 from ramp_steps on."""
    if ramp_steps <= 0:
        return 1.0
    return min(1.0, step / ramp_steps)


@dataclass
class SampleInputs:
    """Everything the loss needs for one record, precomputed once."""

    equation: GraphInputs
    knowledge: GraphInputs
    target_ids: List[int]
    sample: Optional[corpus_mod.MwpSample] = None


def prepare_inputs(sample, kg, vocab, max_len=None):
    sample.prepare()
    sym = build_symbolic_graph(sample.system)
    eq_levi = levi_transform(sym.graph)
    instance = cskg_mod.topic_instance(
        kg, sample.topic, cskg_mod.VariableBinding(sample.bind_x, sample.bind_y)
    )
    target_ids = vocab.encode(" ".join(sample.delex_tokens))
    if max_len is not None and len(target_ids) > max_len:
        import logging

        logging.getLogger(__name__).warning(
            "target length %d exceeds max_len %d; truncating", len(target_ids), max_len
        )
        target_ids = target_ids[:max_len]
    return SampleInputs(
        equation=graph_inputs(eq_levi, vocab),
        knowledge=graph_inputs(instance.levi, vocab),
        target_ids=target_ids,
        sample=sample,
    )


@dataclass
class LossStats:
    nll_per_token: float
    kl: float
    kl_weight: float
    token_accuracy: float


def training_loss(model, inputs, vocab, step, kl_ramp_steps, teacher_forcing, rng,
                  eps=None):
    """Annealed negative ELBO for one sample; returns (loss tensor, stats).

    The decoder input at each step is the gold token with probability
    ``teacher_forcing``, otherwise the model's argmax (scheduled sampling).
    ``eps`` fixes the reparameterization noise (used by deterministic evals);
    by default it is drawn from ``rng``.
    """
    bos = vocab.token_to_id[corpus_mod.BOS]
    eos = vocab.token_to_id[corpus_mod.EOS]
    targets = list(inputs.target_ids) + [eos]

    enc_eq = model.encode_equation(inputs.equation)
    enc_kg = model.encode_knowledge(inputs.knowledge)
    posterior = model.posterior_net(enc_eq.pooled, enc_kg.pooled, inputs.target_ids)
    prior = model.prior_net(enc_eq.pooled, enc_kg.pooled)
    kl = kl_divergence(posterior, prior)

    if eps is None:
        eps = rng.normal_array((1, model.config.latent_dim))
    z = reparameterize(posterior, eps)
    h = model.initial_hidden(z, enc_eq.pooled, enc_kg.pooled)

    nll_terms = []
    correct = 0
    prev_token = bos
    for gold in targets:
        plan = model.plan_step(h, enc_eq.g_star, enc_kg.g_star)
        h, dist = model.decode_step(h, plan.context, model.embed_token(prev_token))
        p_gold = nm.slice_(dist, cols=slice(gold, gold + 1))
        nll_terms.append(nm.scale(nm.log(p_gold), -1.0))
        predicted = int(np.argmax(dist.data[0]))
        if predicted == gold:
            correct += 1
        prev_token = gold if rng.random() < teacher_forcing else predicted

    nll_mean = nm.mean_rows(nm.transpose(nm.concat(nll_terms, axis=1)))
    weight = kl_weight(step, kl_ramp_steps)
    loss = nm.add(nll_mean, nm.scale(kl, weight))
    stats = LossStats(
        nll_per_token=float(nll_mean.data[0, 0]),
        kl=float(kl.data[0, 0]),
        kl_weight=weight,
        token_accuracy=correct / len(targets),
    )
    return loss, stats


# ---------------------------------------------------------------------------
# inference


@dataclass
class DecodedSequence:
    token_ids: List[int]
    score: float  # length-normalized log-probability


def greedy_decode(model, enc_eq, enc_kg, z, vocab, max_len):
    bos = vocab.token_to_id[corpus_mod.BOS]
    eos = vocab.token_to_id[corpus_mod.EOS]
    h = model.initial_hidden(z, enc_eq.pooled, enc_kg.pooled)
    token = bos
    out = []
    total = 0.0
    for _ in range(max_len):
        plan = model.plan_step(h, enc_eq.g_star, enc_kg.g_star)
        h, dist = model.decode_step(h, plan.context, model.embed_token(token))
        token = int(np.argmax(dist.data[0]))
        total += float(np.log(dist.data[0, token]))
        out.append(token)
        if token == eos:
            break
    return DecodedSequence(out, total / max(len(out), 1))


def beam_search(model, enc_eq, enc_kg, z, vocab, width, max_len):
    """Beam decoding with length-normalized log-probability scores."""
    if width < 1:
        raise nm.ContractError(f"beam width must be >= 1, got {width}")
    bos = vocab.token_to_id[corpus_mod.BOS]
    eos = vocab.token_to_id[corpus_mod.EOS]
    h0 = model.initial_hidden(z, enc_eq.pooled, enc_kg.pooled)
    # (tokens, cumulative logprob, hidden)
    beams = [([], 0.0, h0)]
    done = []
    for _ in range(max_len):
        candidates = []
        for tokens, logp, h in beams:
            prev = tokens[-1] if tokens else bos
            plan = model.plan_step(h, enc_eq.g_star, enc_kg.g_star)
            h_next, dist = model.decode_step(h, plan.context, model.embed_token(prev))
            logs = np.log(dist.data[0])
            top = np.argsort(-logs, kind="stable")[:width]
            for tok in top:
                candidates.append((tokens + [int(tok)], logp + float(logs[tok]), h_next))
        candidates.sort(key=lambda c: -c[1])
        beams = []
        for cand in candidates:
            if cand[0][-1] == eos:
                done.append(cand)
            else:
                beams.append(cand)
            if len(beams) == width:
                break
        if not beams or len(done) >= width:
            break
    done.extend(beams)
    results = [DecodedSequence(tokens, logp / len(tokens)) for tokens, logp, _ in done if tokens]
    results.sort(key=lambda r: -r.score)
    return results[:width]


@dataclass
class GeneratedProblem:
    text: str
    tokens: List[str]
    score: float
    solution_x: str
    solution_y: str


def generate(model, kg, vocab, equations, topic, bind_x, bind_y, n, seed,
             beam_width=5, max_len=None):
    """Generate n relexicalized word problems; deterministic under seed."""
    max_len = max_len or model.config.max_len
    system = parse_system(equations)
    solution = solve_system(system)
    sym = build_symbolic_graph(system)
    binding = cskg_mod.VariableBinding(bind_x, bind_y)
    instance = cskg_mod.topic_instance(kg, topic, binding)

    eq_in = graph_inputs(levi_transform(sym.graph), vocab)
    kg_in = graph_inputs(instance.levi, vocab)
    enc_eq = model.encode_equation(eq_in)
    enc_kg = model.encode_knowledge(kg_in)
    prior = model.prior_net(enc_eq.pooled, enc_kg.pooled)

    slot_map = {tok: _frac_str(v) for tok, v in sym.slot_values.items()}
    slot_map[corpus_mod.X_ENTITY] = bind_x
    slot_map[corpus_mod.Y_ENTITY] = bind_y

    rng = nm.Xoshiro256(seed)
    eos = vocab.token_to_id[corpus_mod.EOS]
    outputs = []
    for _ in range(n):
        eps = rng.normal_array((1, model.config.latent_dim))
        z = reparameterize(prior, eps)
        ranked = beam_search(model, enc_eq, enc_kg, z, vocab, beam_width, max_len)
        best = ranked[0]
        ids = [t for t in best.token_ids if t != eos]
        delex = vocab.decode(ids)
        text = corpus_mod.relexicalize(delex.split(), slot_map, strict=False)
        outputs.append(
            GeneratedProblem(
                text=text,
                tokens=delex.split(),
                score=best.score,
                solution_x=_frac_str(solution.x),
                solution_y=_frac_str(solution.y),
            )
        )
    return outputs


def _frac_str(v):
    return str(v.numerator) if v.denominator == 1 else f"{v.numerator}/{v.denominator}"
