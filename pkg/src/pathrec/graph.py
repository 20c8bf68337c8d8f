"""In-memory typed knowledge graph with adjacency indexes and reverse edges.

Entities get dense integer ids in registration order; relations are created
in forward/reverse pairs so every edge can be walked in both directions once
the graph has been reverse-augmented. A graph is append-only while it is
being built and immutable after ``freeze()``, which makes it safe to share
across concurrent readers.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, TextIO

from .errors import InputError

# Sentinel relation id for the self-loop action taken at dead-end nodes.
# Never registered in a graph; a STAY hop is valid only if it stays in place.
STAY_RELATION = -1

REVERSE_SUFFIX = "_rev"

USER_KIND = "subscriber"
ITEM_KIND = "educational_article"


@dataclass(frozen=True)
class Relation:
    """A typed edge label. Forward/reverse partners point at each other."""

    index: int
    name: str
    is_reverse: bool
    inverse: int


@dataclass
class ReasoningPath:
    """Alternating entity/relation walk, with the probability and reward
    accumulated while it was generated.

    ``relations[i]`` connects ``entities[i]`` to ``entities[i + 1]``; STAY
    hops are recorded but do not count toward ``hops``.
    """

    entities: tuple[int, ...]
    relations: tuple[int, ...] = ()
    probability: float = 1.0
    reward: float = 0.0

    @property
    def hops(self) -> int:
        return sum(1 for r in self.relations if r != STAY_RELATION)

    def end(self) -> int:
        return self.entities[-1]


class KnowledgeGraph:
    """Deduplicated triple set over typed entities, indexed by head."""

    def __init__(self) -> None:
        self.entities: list[tuple[str, str]] = []  # id -> (kind, key)
        self._entity_ids: dict[tuple[str, str], int] = {}
        self.relations: list[Relation] = []
        self._relation_ids: dict[str, int] = {}
        self.triples: set[tuple[int, int, int]] = set()
        self._out: dict[int, list[tuple[int, int]]] = {}
        self._kind_members: dict[str, list[int]] = {}
        self.frozen = False

    # -- construction -------------------------------------------------------

    def _check_mutable(self) -> None:
        if self.frozen:
            raise InputError("graph is frozen; no further mutation allowed")

    def register_entity(self, kind: str, key: str) -> int:
        """Return the id for (kind, key), registering it on first sight."""
        self._check_mutable()
        if not key:
            raise InputError("entity key must be nonempty")
        if ":" in kind:
            raise InputError(f"entity kind may not contain ':': {kind!r}")
        if "\t" in key or "\n" in key:
            raise InputError(f"entity key may not contain tab/newline: {key!r}")
        ident = self._entity_ids.get((kind, key))
        if ident is not None:
            return ident
        ident = len(self.entities)
        self.entities.append((kind, key))
        self._entity_ids[(kind, key)] = ident
        self._out[ident] = []
        self._kind_members.setdefault(kind, []).append(ident)
        return ident

    def register_relation(self, name: str) -> int:
        """Return the id for a relation name, creating its reverse partner.

        Passing a ``*_rev`` name registers the base relation and returns the
        reverse partner's id, so load paths need no special casing.
        """
        self._check_mutable()
        if not name:
            raise InputError("relation name must be nonempty")
        if name.endswith(REVERSE_SUFFIX):
            forward = self.register_relation(name[: -len(REVERSE_SUFFIX)])
            return self.relations[forward].inverse
        ident = self._relation_ids.get(name)
        if ident is not None:
            return ident
        fwd = len(self.relations)
        rev = fwd + 1
        self.relations.append(Relation(fwd, name, False, rev))
        self.relations.append(Relation(rev, name + REVERSE_SUFFIX, True, fwd))
        self._relation_ids[name] = fwd
        self._relation_ids[name + REVERSE_SUFFIX] = rev
        return fwd

    def add_triple(self, head: int, rel: int, tail: int) -> None:
        """Insert (head, rel, tail); re-adding an existing triple is a no-op."""
        self._check_mutable()
        self._check_entity(head)
        self._check_entity(tail)
        if not 0 <= rel < len(self.relations):
            raise InputError(f"unregistered relation id {rel}")
        triple = (head, rel, tail)
        if triple in self.triples:
            return
        self.triples.add(triple)
        self._out[head].append((rel, tail))

    def augment_reverse_edges(self) -> None:
        """Add (t, r_rev, h) for every (h, r, t). Idempotent."""
        self._check_mutable()
        for head, rel, tail in list(self.triples):
            self.add_triple(tail, self.relations[rel].inverse, head)

    def freeze(self) -> None:
        """Sort adjacency lists and forbid further mutation."""
        for head, edges in self._out.items():
            self._out[head] = sorted(edges)
        self.frozen = True

    # -- lookups ------------------------------------------------------------

    def _check_entity(self, e: int) -> None:
        if not 0 <= e < len(self.entities):
            raise InputError(f"unregistered entity id {e}")

    def entity_id(self, kind: str, key: str) -> int | None:
        return self._entity_ids.get((kind, key))

    def entity_kind(self, e: int) -> str:
        self._check_entity(e)
        return self.entities[e][0]

    def entity_key(self, e: int) -> str:
        self._check_entity(e)
        return self.entities[e][1]

    def entity_label(self, e: int) -> str:
        kind, key = self.entities[e]
        return f"{kind}:{key}"

    def entities_of_kind(self, kind: str) -> list[int]:
        return list(self._kind_members.get(kind, ()))

    def relation_id(self, name: str) -> int | None:
        return self._relation_ids.get(name)

    def relation_name(self, rel: int) -> str:
        if rel == STAY_RELATION:
            return "stay"
        return self.relations[rel].name

    def num_entities(self) -> int:
        return len(self.entities)

    def num_triples(self) -> int:
        return len(self.triples)

    def out_edges(self, e: int) -> list[tuple[int, int]]:
        """Outgoing (relation, tail) pairs sorted by (relation id, tail id)."""
        self._check_entity(e)
        edges = self._out[e]
        if self.frozen:
            return list(edges)
        return sorted(edges)

    def out_degree(self, e: int) -> int:
        self._check_entity(e)
        return len(self._out[e])

    # -- path validation ----------------------------------------------------

    def validate_path(self, path: ReasoningPath) -> bool:
        """True iff lengths are consistent and every hop is a graph triple
        (or an in-place STAY hop). Never raises for malformed paths."""
        ents, rels = path.entities, path.relations
        if len(ents) != len(rels) + 1 or not ents:
            return False
        if any(not 0 <= e < len(self.entities) for e in ents):
            return False
        for i, rel in enumerate(rels):
            head, tail = ents[i], ents[i + 1]
            if rel == STAY_RELATION:
                if head != tail:
                    return False
            elif (head, rel, tail) not in self.triples:
                return False
        return True

    # -- flat-file dump/load ------------------------------------------------

    def dump_triples(self, out: TextIO) -> None:
        """Write one `head_kind:head_key<TAB>relation<TAB>tail_kind:tail_key`
        line per triple, sorted by (head, rel, tail) id."""
        for head, rel, tail in sorted(self.triples):
            out.write(
                f"{self.entity_label(head)}\t{self.relations[rel].name}"
                f"\t{self.entity_label(tail)}\n"
            )

    @classmethod
    def load_triples(cls, lines: Iterable[str]) -> "KnowledgeGraph":
        """Rebuild a graph from dump lines; ids follow appearance order."""
        graph = cls()
        for lineno, raw in enumerate(lines, start=1):
            line = raw.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise InputError(f"line {lineno}: expected 3 tab-separated fields")
            head_kind, _, head_key = parts[0].partition(":")
            tail_kind, _, tail_key = parts[2].partition(":")
            if not head_key or not tail_key:
                raise InputError(f"line {lineno}: entity must be kind:key")
            head = graph.register_entity(head_kind, head_key)
            tail = graph.register_entity(tail_kind, tail_key)
            rel = graph.register_relation(parts[1])
            graph.add_triple(head, rel, tail)
        return graph
