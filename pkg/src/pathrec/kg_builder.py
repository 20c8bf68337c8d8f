"""Build knowledge graphs from interaction tables and article text.

Two graphs come out of this module: ``uKG`` links articles to their highest
TF-IDF terms only, while ``cKG`` combines click edges, article metadata
edges, and the term edges over a single shared entity table. Both are
reverse-augmented and frozen before they are returned.
"""

from __future__ import annotations

import csv
import math
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from .errors import InputError
from .graph import ITEM_KIND, USER_KIND, KnowledgeGraph

REL_RESPONSE = "has_response"
REL_TOPIC = "has_topic"
REL_PRODUCT = "has_product"
REL_TOPIC_TAG = "has_topic_tag"
REL_PRODUCT_TAG = "has_product_tag"
REL_TERM = "has_term"

BUILDER_RELATIONS = (
    REL_RESPONSE,
    REL_TOPIC,
    REL_PRODUCT,
    REL_TOPIC_TAG,
    REL_PRODUCT_TAG,
    REL_TERM,
)

ATTRIBUTE_KINDS = {
    REL_TOPIC: "topic",
    REL_PRODUCT: "product",
    REL_TOPIC_TAG: "topic_tag",
    REL_PRODUCT_TAG: "product_tag",
}

# entity reference + relation name, resolved to ids at graph assembly
RawTriple = tuple[tuple[str, str], str, tuple[str, str]]

_TOKEN_SPLIT = re.compile(r"[^0-9a-z]+")
_MIN_TOKEN_LEN = 3

# Fixed list; only words of >= 3 characters matter since shorter tokens are
# dropped by length anyway.
STOPWORDS = frozenset("""
about above after again all also and any are been before being below between
both but can could did does doing down during each few for from further had
has have having her hers him his how into its itself just may might more most
must nor not now off once only other our ours out over own same shall she
should some such than that the their theirs them then there these they this
those through too under until very was were what when where which while who
whom why will with would you your yours
""".split())


@dataclass
class InteractionRow:
    subscriber_key: str
    article_key: str
    response: str  # "click" or "no_click"
    timestamp: str | None = None


@dataclass
class ArticleRecord:
    article_key: str
    text: str = ""
    topics: list[str] = field(default_factory=list)
    products: list[str] = field(default_factory=list)
    topic_tags: list[str] = field(default_factory=list)
    product_tags: list[str] = field(default_factory=list)


@dataclass(frozen=True)
class TermScore:
    term: str
    tfidf: float


def tokenize(text: str) -> list[str]:
    """Lowercase tokens split on non-alphanumerics, stopwords and short
    tokens dropped."""
    tokens = _TOKEN_SPLIT.split(text.lower())
    return [t for t in tokens if len(t) >= _MIN_TOKEN_LEN and t not in STOPWORDS]


def tfidf_top_terms(
    corpus: dict[str, str], k: int
) -> dict[str, list[TermScore]]:
    """Top-k TF-IDF terms per document.

    tf = count / doc token count; idf = ln((1 + N) / (1 + df)) + 1 with N the
    corpus size and df the number of documents containing the term. Ties are
    broken lexicographically.
    """
    if k < 1:
        raise InputError("k must be >= 1")
    tokenized = {key: tokenize(text) for key, text in corpus.items()}
    n_docs = len(corpus)
    df: Counter[str] = Counter()
    for tokens in tokenized.values():
        df.update(set(tokens))

    result: dict[str, list[TermScore]] = {}
    for key, tokens in tokenized.items():
        if not tokens:
            result[key] = []
            continue
        counts = Counter(tokens)
        total = len(tokens)
        scored = [
            TermScore(term, (cnt / total) * (math.log((1 + n_docs) / (1 + df[term])) + 1))
            for term, cnt in counts.items()
        ]
        scored.sort(key=lambda s: (-s.tfidf, s.term))
        result[key] = scored[:k]
    return result


def _validate_row(row: InteractionRow) -> str | None:
    if not row.subscriber_key:
        return "empty subscriber key"
    if not row.article_key:
        return "empty article key"
    if row.response not in ("click", "no_click"):
        return f"bad response {row.response!r}"
    return None


def ingest_interactions(
    rows: Iterable[InteractionRow],
) -> tuple[list[RawTriple], list[str]]:
    """One has_response triple per (subscriber, article) pair with at least
    one click. Malformed rows are skipped and reported with their position."""
    triples: list[RawTriple] = []
    seen: set[tuple[str, str]] = set()
    errors: list[str] = []
    for idx, row in enumerate(rows, start=1):
        problem = _validate_row(row)
        if problem is not None:
            errors.append(f"row {idx}: {problem}")
            continue
        if row.response != "click":
            continue
        pair = (row.subscriber_key, row.article_key)
        if pair in seen:
            continue
        seen.add(pair)
        triples.append(
            ((USER_KIND, row.subscriber_key), REL_RESPONSE, (ITEM_KIND, row.article_key))
        )
    return triples, errors


def ingest_article_metadata(articles: Iterable[ArticleRecord]) -> list[RawTriple]:
    """One triple per (article, attribute value), typed by the relation."""
    triples: list[RawTriple] = []
    for art in articles:
        if not art.article_key:
            raise InputError("article_key must be nonempty")
        item = (ITEM_KIND, art.article_key)
        for rel, values in (
            (REL_TOPIC, art.topics),
            (REL_PRODUCT, art.products),
            (REL_TOPIC_TAG, art.topic_tags),
            (REL_PRODUCT_TAG, art.product_tags),
        ):
            kind = ATTRIBUTE_KINDS[rel]
            for value in values:
                if value:
                    triples.append((item, rel, (kind, value)))
    return triples


def term_triples(
    articles: Iterable[ArticleRecord], terms_per_article: int
) -> list[RawTriple]:
    arts = list(articles)
    corpus = {a.article_key: a.text for a in arts}
    top = tfidf_top_terms(corpus, terms_per_article)
    triples: list[RawTriple] = []
    for art in arts:
        for score in top[art.article_key]:
            triples.append(((ITEM_KIND, art.article_key), REL_TERM, ("term", score.term)))
    return triples


def _assemble(raw: Iterable[RawTriple], extra_entities: Iterable[tuple[str, str]] = ()) -> KnowledgeGraph:
    graph = KnowledgeGraph()
    for name in BUILDER_RELATIONS:
        graph.register_relation(name)
    for kind, key in extra_entities:
        graph.register_entity(kind, key)
    for (hk, hkey), rel, (tk, tkey) in raw:
        head = graph.register_entity(hk, hkey)
        tail = graph.register_entity(tk, tkey)
        graph.add_triple(head, graph.relation_id(rel), tail)
    graph.augment_reverse_edges()
    graph.freeze()
    return graph


def build_ukg(articles: list[ArticleRecord], terms_per_article: int = 5) -> KnowledgeGraph:
    """Article-term graph from text only, reverse-augmented and frozen."""
    entities = [(ITEM_KIND, a.article_key) for a in articles]
    return _assemble(term_triples(articles, terms_per_article), entities)


def build_ckg(
    rows: list[InteractionRow],
    articles: list[ArticleRecord],
    terms_per_article: int = 5,
) -> tuple[KnowledgeGraph, list[str]]:
    """Combined graph over one shared entity table; returns (graph, row errors)."""
    click_triples, errors = ingest_interactions(rows)
    raw = click_triples + ingest_article_metadata(articles)
    raw += term_triples(articles, terms_per_article)
    return _assemble(raw), errors


# -- CSV interfaces ----------------------------------------------------------

def _split_list_cell(cell: str) -> list[str]:
    return [part.strip() for part in cell.split(";") if part.strip()]


def read_interactions_csv(path: str | Path) -> list[InteractionRow]:
    """interactions.csv: subscriber_id,article_id,response,timestamp."""
    rows: list[InteractionRow] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        required = {"subscriber_id", "article_id", "response"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise InputError(f"{path}: header must contain {sorted(required)}")
        for rec in reader:
            rows.append(
                InteractionRow(
                    subscriber_key=(rec.get("subscriber_id") or "").strip(),
                    article_key=(rec.get("article_id") or "").strip(),
                    response=(rec.get("response") or "").strip(),
                    timestamp=(rec.get("timestamp") or "").strip() or None,
                )
            )
    return rows


def read_articles_csv(path: str | Path) -> list[ArticleRecord]:
    """articles.csv: article_id,topics,products,topic_tags,product_tags,text
    with ';'-separated list cells."""
    articles: list[ArticleRecord] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "article_id" not in reader.fieldnames:
            raise InputError(f"{path}: header must contain article_id")
        for rec in reader:
            key = (rec.get("article_id") or "").strip()
            if not key:
                raise InputError(f"{path}: empty article_id")
            articles.append(
                ArticleRecord(
                    article_key=key,
                    text=rec.get("text") or "",
                    topics=_split_list_cell(rec.get("topics") or ""),
                    products=_split_list_cell(rec.get("products") or ""),
                    topic_tags=_split_list_cell(rec.get("topic_tags") or ""),
                    product_tags=_split_list_cell(rec.get("product_tags") or ""),
                )
            )
    return articles
