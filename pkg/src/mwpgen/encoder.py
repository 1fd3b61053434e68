"""Gated graph neural encoder over a Levi graph.

Per hop t, with gamma the adjacency-weighted neighbor average of the
previous node states:

    z = sigmoid(gamma W_z + g U_z)
    r = sigmoid(gamma W_r + g U_r)
    g~ = tanh(gamma W_h + (r * g) U_h)
    g' = (1 - z) * g + z * g~

After the final hop the initial and propagated states are fused by a linear
augmentation, and a mean pool over nodes gives the graph vector. Node states
are rows, so every weight is applied as X @ W. The gates carry no biases.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import numerics as nm


class VocabError(KeyError):
    pass


@dataclass
class GgnnParams:
    w_z: nm.Parameter
    u_z: nm.Parameter
    w_r: nm.Parameter
    u_r: nm.Parameter
    w_h: nm.Parameter
    u_h: nm.Parameter
    w_star: nm.Parameter  # (2*dim, dim) augmentation
    hops: int

    def named(self):
        return {
            p.name: p
            for p in (self.w_z, self.u_z, self.w_r, self.u_r, self.w_h, self.u_h, self.w_star)
        }


def init_ggnn_params(dim, hops, rng, prefix):
    def mat(name, shape):
        return nm.Parameter(rng.normal_array(shape, 0.02), f"{prefix}.{name}")

    return GgnnParams(
        w_z=mat("w_z", (dim, dim)),
        u_z=mat("u_z", (dim, dim)),
        w_r=mat("w_r", (dim, dim)),
        u_r=mat("u_r", (dim, dim)),
        w_h=mat("w_h", (dim, dim)),
        u_h=mat("u_h", (dim, dim)),
        w_star=mat("w_star", (2 * dim, dim)),
        hops=hops,
    )


@dataclass
class GraphEncoding:
    g0: nm.Tensor       # initial node embeddings, (|V|, dim)
    gn: nm.Tensor       # node states after all hops
    g_star: nm.Tensor   # augmented per-node matrix
    pooled: nm.Tensor   # (1, dim) mean of g_star rows


def node_ids(levi, vocab):
    """Map every Levi node token to its vocabulary id."""
    ids = []
    for token in levi.tokens:
        i = vocab.token_to_id.get(token)
        if i is None:
            raise VocabError(f"node token {token!r} is not in the vocabulary")
        ids.append(i)
    return ids


def ggnn_encode(adjacency, ids, embedding, params):
    """Encode a Levi graph given its row-normalized adjacency.

    ``adjacency`` is a constant (|V|, |V|) tensor, ``ids`` the per-node
    vocabulary ids, ``embedding`` the shared embedding table parameter.
    """
    if adjacency.shape[0] != len(ids):
        raise nm.ShapeError(
            f"adjacency is {adjacency.shape} but the graph has {len(ids)} nodes"
        )
    g0 = nm.embed_lookup(embedding, ids)
    g = g0
    for _ in range(params.hops):
        gamma = nm.matmul(adjacency, g)
        z = nm.sigmoid(nm.add(nm.matmul(gamma, params.w_z), nm.matmul(g, params.u_z)))
        r = nm.sigmoid(nm.add(nm.matmul(gamma, params.w_r), nm.matmul(g, params.u_r)))
        g_cand = nm.tanh(
            nm.add(nm.matmul(gamma, params.w_h), nm.matmul(nm.mul(r, g), params.u_h))
        )
        one_minus_z = nm.add_const(nm.scale(z, -1.0), 1.0)
        g = nm.add(nm.mul(one_minus_z, g), nm.mul(z, g_cand))
    g_star = nm.matmul(nm.concat([g0, g], axis=1), params.w_star)
    return GraphEncoding(g0=g0, gn=g, g_star=g_star, pooled=nm.mean_rows(g_star))
