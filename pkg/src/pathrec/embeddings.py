"""Train and score TransE / TuckER embeddings over a frozen graph.

TransE scores a triple by -||v_h + v_r - v_t|| and trains with a margin
ranking loss against corrupted triples; TuckER scores with a trilinear form
over a learned core tensor and trains with binary cross-entropy. Loss and
gradient computations are plain functions over the parameter arrays so they
can be checked against finite differences.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InputError
from .graph import KnowledgeGraph
from .kg_builder import REL_RESPONSE

MAGIC = b"KGEB"
FORMAT_VERSION = 1
_MODEL_CODES = {"transe": 0, "tucker": 1}
_MODEL_NAMES = {v: k for k, v in _MODEL_CODES.items()}


@dataclass
class TrainConfig:
    dim: int = 300
    epochs: int = 30
    learning_rate: float = 0.05
    margin: float = 1.0
    negatives_per_positive: int = 4
    batch_size: int = 128
    seed: int = 0

    def validate(self) -> None:
        if self.dim < 1 or self.epochs < 1 or self.batch_size < 1:
            raise InputError("dim, epochs, batch_size must be positive")
        if self.learning_rate <= 0 or self.margin <= 0:
            raise InputError("learning_rate and margin must be positive")
        if self.negatives_per_positive < 1:
            raise InputError("negatives_per_positive must be positive")


@dataclass
class EmbeddingTable:
    model_kind: str
    dim: int
    entity_vecs: np.ndarray  # (n_entities, dim)
    relation_vecs: np.ndarray  # (n_relations, dim)
    core_tensor: np.ndarray | None = None  # (dim, dim, dim), tucker only
    response_rel: int = -1  # relation id backing user_affinity

    def _check_entity(self, e: int) -> None:
        if not 0 <= e < self.entity_vecs.shape[0]:
            raise InputError(f"unknown entity id {e}")

    def _check_relation(self, r: int) -> None:
        if not 0 <= r < self.relation_vecs.shape[0]:
            raise InputError(f"unknown relation id {r}")


def transe_score(table: EmbeddingTable, h: int, r: int, t: int) -> float:
    """-||v_h + v_r - v_t||; 0 is the best possible score."""
    if table.model_kind != "transe":
        raise InputError("transe_score requires a transe table")
    table._check_entity(h)
    table._check_entity(t)
    table._check_relation(r)
    diff = table.entity_vecs[h] + table.relation_vecs[r] - table.entity_vecs[t]
    return float(-np.linalg.norm(diff))


def tucker_score(table: EmbeddingTable, h: int, r: int, t: int) -> float:
    """Trilinear form sum_abc T[a,b,c] h[a] r[b] t[c]."""
    if table.model_kind != "tucker" or table.core_tensor is None:
        raise InputError("tucker_score requires a tucker table")
    table._check_entity(h)
    table._check_entity(t)
    table._check_relation(r)
    return float(
        np.einsum(
            "abc,a,b,c->",
            table.core_tensor,
            table.entity_vecs[h],
            table.relation_vecs[r],
            table.entity_vecs[t],
        )
    )


def score_triple(table: EmbeddingTable, h: int, r: int, t: int) -> float:
    if table.model_kind == "transe":
        return transe_score(table, h, r, t)
    return tucker_score(table, h, r, t)


def user_affinity(table: EmbeddingTable, u: int, e: int) -> float:
    """f(u, e) = <v_u + v_response, v_e>: the user translated by the response
    relation, matched against the candidate entity."""
    table._check_entity(u)
    table._check_entity(e)
    if table.response_rel < 0:
        raise InputError("table has no response relation configured")
    table._check_relation(table.response_rel)
    translated = table.entity_vecs[u] + table.relation_vecs[table.response_rel]
    return float(np.dot(translated, table.entity_vecs[e]))


# -- losses and gradients ----------------------------------------------------

def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _transe_scores(ent: np.ndarray, rel: np.ndarray, triples: np.ndarray) -> np.ndarray:
    diff = ent[triples[:, 0]] + rel[triples[:, 1]] - ent[triples[:, 2]]
    return -np.linalg.norm(diff, axis=1)


def transe_loss(
    ent: np.ndarray, rel: np.ndarray,
    positives: np.ndarray, negatives: np.ndarray, margin: float,
) -> float:
    """Mean margin ranking loss over aligned (positive, negative) pairs."""
    slack = margin - _transe_scores(ent, rel, positives) + _transe_scores(ent, rel, negatives)
    return float(np.mean(np.maximum(0.0, slack)))


def transe_grads(
    ent: np.ndarray, rel: np.ndarray,
    positives: np.ndarray, negatives: np.ndarray, margin: float,
) -> tuple[np.ndarray, np.ndarray, float]:
    """Gradients of transe_loss wrt entity and relation tables."""
    n = positives.shape[0]
    d_ent = np.zeros_like(ent)
    d_rel = np.zeros_like(rel)
    pos_scores = _transe_scores(ent, rel, positives)
    neg_scores = _transe_scores(ent, rel, negatives)
    slack = margin - pos_scores + neg_scores
    active = slack > 0
    loss = float(np.mean(np.maximum(0.0, slack)))
    for i in np.nonzero(active)[0]:
        for triples, sign in ((positives, 1.0), (negatives, -1.0)):
            h, r, t = triples[i]
            diff = ent[h] + rel[r] - ent[t]
            norm = np.linalg.norm(diff)
            if norm == 0.0:
                continue  # subgradient 0 at the kink
            unit = sign * diff / (norm * n)
            d_ent[h] += unit
            d_rel[r] += unit
            d_ent[t] -= unit
    return d_ent, d_rel, loss


def _tucker_scores(
    ent: np.ndarray, rel: np.ndarray, core: np.ndarray, triples: np.ndarray
) -> np.ndarray:
    return np.einsum(
        "abc,na,nb,nc->n", core,
        ent[triples[:, 0]], rel[triples[:, 1]], ent[triples[:, 2]],
    )


def tucker_loss(
    ent: np.ndarray, rel: np.ndarray, core: np.ndarray,
    positives: np.ndarray, negatives: np.ndarray,
) -> float:
    """Mean binary cross-entropy: positives labelled 1, negatives 0."""
    pos = _tucker_scores(ent, rel, core, positives)
    neg = _tucker_scores(ent, rel, core, negatives)
    # softplus(-s) = -log sigmoid(s); softplus(s) = -log(1 - sigmoid(s))
    terms = np.concatenate([np.logaddexp(0.0, -pos), np.logaddexp(0.0, neg)])
    return float(np.mean(terms))


def tucker_grads(
    ent: np.ndarray, rel: np.ndarray, core: np.ndarray,
    positives: np.ndarray, negatives: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, float]:
    """Gradients of tucker_loss wrt entity, relation, and core tensors."""
    n = positives.shape[0] + negatives.shape[0]
    d_ent = np.zeros_like(ent)
    d_rel = np.zeros_like(rel)
    d_core = np.zeros_like(core)
    loss = 0.0
    for triples, label in ((positives, 1.0), (negatives, 0.0)):
        scores = _tucker_scores(ent, rel, core, triples)
        loss += float(np.sum(np.logaddexp(0.0, -scores if label else scores)))
        dscore = (_sigmoid(scores) - label) / n
        for i in range(triples.shape[0]):
            h, r, t = triples[i]
            hv, rv, tv = ent[h], rel[r], ent[t]
            d_ent[h] += dscore[i] * np.einsum("abc,b,c->a", core, rv, tv)
            d_rel[r] += dscore[i] * np.einsum("abc,a,c->b", core, hv, tv)
            d_ent[t] += dscore[i] * np.einsum("abc,a,b->c", core, hv, rv)
            d_core += dscore[i] * np.einsum("a,b,c->abc", hv, rv, tv)
    return d_ent, d_rel, d_core, loss / n


# -- training ----------------------------------------------------------------

def _sample_negatives(
    positives: np.ndarray, n_entities: int, true_triples: set[tuple[int, int, int]],
    per_positive: int, rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """Corrupt head or tail uniformly, rejecting corruptions that are true
    triples. Pairs that cannot be corrupted within the retry budget are
    dropped."""
    rep_pos: list[np.ndarray] = []
    negs: list[tuple[int, int, int]] = []
    for row in positives:
        h, r, t = (int(x) for x in row)
        for _ in range(per_positive):
            for _attempt in range(50):
                corrupt_head = rng.random() < 0.5
                candidate = int(rng.integers(n_entities))
                neg = (candidate, r, t) if corrupt_head else (h, r, candidate)
                if neg not in true_triples:
                    rep_pos.append(row)
                    negs.append(neg)
                    break
    if not negs:
        empty = np.empty((0, 3), dtype=np.int64)
        return empty, empty
    return np.stack(rep_pos), np.array(negs, dtype=np.int64)


def train_embeddings(
    graph: KnowledgeGraph, config: TrainConfig, model_kind: str = "transe"
) -> tuple[EmbeddingTable, list[float]]:
    """SGD training; returns the table and the per-epoch mean loss trace.

    Fully deterministic for a given config seed.
    """
    config.validate()
    if model_kind not in _MODEL_CODES:
        raise InputError(f"unknown model kind {model_kind!r}")
    if not graph.frozen:
        raise InputError("graph must be frozen before training")
    triples = np.array(sorted(graph.triples), dtype=np.int64)
    if triples.size == 0:
        raise InputError("cannot train embeddings on an empty graph")

    rng = np.random.default_rng(config.seed)
    dim = config.dim
    scale = 0.5 / np.sqrt(dim)
    ent = rng.uniform(-scale, scale, size=(graph.num_entities(), dim))
    rel = rng.uniform(-scale, scale, size=(len(graph.relations), dim))
    core = rng.uniform(-scale, scale, size=(dim, dim, dim)) if model_kind == "tucker" else None

    true_triples = set(map(tuple, triples.tolist()))
    n = triples.shape[0]
    trace: list[float] = []
    for _epoch in range(config.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        epoch_pairs = 0
        for start in range(0, n, config.batch_size):
            batch = triples[order[start:start + config.batch_size]]
            pos, neg = _sample_negatives(
                batch, graph.num_entities(), true_triples,
                config.negatives_per_positive, rng,
            )
            if pos.shape[0] == 0:
                continue
            if model_kind == "transe":
                d_ent, d_rel, loss = transe_grads(ent, rel, pos, neg, config.margin)
            else:
                d_ent, d_rel, d_core, loss = tucker_grads(ent, rel, core, pos, neg)
                core -= config.learning_rate * d_core
            ent -= config.learning_rate * d_ent
            rel -= config.learning_rate * d_rel
            epoch_loss += loss * pos.shape[0]
            epoch_pairs += pos.shape[0]
        if model_kind == "transe":
            norms = np.linalg.norm(ent, axis=1, keepdims=True)
            np.divide(ent, norms, out=ent, where=norms > 0)
        trace.append(epoch_loss / max(1, epoch_pairs))

    response = graph.relation_id(REL_RESPONSE)
    table = EmbeddingTable(
        model_kind=model_kind,
        dim=dim,
        entity_vecs=ent,
        relation_vecs=rel,
        core_tensor=core,
        response_rel=-1 if response is None else response,
    )
    return table, trace


# -- persistence -------------------------------------------------------------

def save_table(table: EmbeddingTable, path: str | Path) -> None:
    """Binary layout: magic, version, model code, then little-endian dim /
    entity count / relation count / response relation, then id-ordered
    float64 rows (core tensor appended row-major for tucker)."""
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<BB", FORMAT_VERSION, _MODEL_CODES[table.model_kind]))
        fh.write(struct.pack(
            "<IIIi",
            table.dim,
            table.entity_vecs.shape[0],
            table.relation_vecs.shape[0],
            table.response_rel,
        ))
        fh.write(np.ascontiguousarray(table.entity_vecs, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(table.relation_vecs, dtype="<f8").tobytes())
        if table.model_kind == "tucker":
            fh.write(np.ascontiguousarray(table.core_tensor, dtype="<f8").tobytes())


def load_table(path: str | Path) -> EmbeddingTable:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != MAGIC:
        raise InputError(f"{path}: not an embedding file")
    version, model_code = struct.unpack_from("<BB", data, 4)
    if version != FORMAT_VERSION:
        raise InputError(f"{path}: unsupported version {version}")
    if model_code not in _MODEL_NAMES:
        raise InputError(f"{path}: unknown model code {model_code}")
    dim, n_ent, n_rel, response_rel = struct.unpack_from("<IIIi", data, 6)
    offset = 6 + struct.calcsize("<IIIi")

    def take(count: int) -> np.ndarray:
        nonlocal offset
        arr = np.frombuffer(data, dtype="<f8", count=count, offset=offset)
        offset += count * 8
        return arr.astype(np.float64)

    ent = take(n_ent * dim).reshape(n_ent, dim)
    rel = take(n_rel * dim).reshape(n_rel, dim)
    model_kind = _MODEL_NAMES[model_code]
    core = take(dim ** 3).reshape(dim, dim, dim) if model_kind == "tucker" else None
    if offset != len(data):
        raise InputError(f"{path}: trailing bytes")
    return EmbeddingTable(model_kind, dim, ent, rel, core, response_rel)


def export_json(table: EmbeddingTable, path: str | Path) -> None:
    """Debug-only JSON dump of the full table."""
    payload = {
        "model_kind": table.model_kind,
        "dim": table.dim,
        "response_rel": table.response_rel,
        "entity_vecs": table.entity_vecs.tolist(),
        "relation_vecs": table.relation_vecs.tolist(),
    }
    if table.core_tensor is not None:
        payload["core_tensor"] = table.core_tensor.tolist()
    Path(path).write_text(json.dumps(payload, sort_keys=True), encoding="utf-8")
