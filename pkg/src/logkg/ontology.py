"""Declarative log ontology: loading, consistency checks and hierarchy queries.

The ontology is read from a JSON descriptor with top-level keys ``classes``
(object keyed by class name), ``relationships`` (list) and
``structural_triples`` (list of 3-element lists). A default descriptor ships
in ``logkg/data/ontology.json``.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from functools import cached_property
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

from .errors import DescriptorParseError, SchemaInconsistency, UnknownClass

DATATYPES = ("string", "integer", "float", "boolean", "datetime")
DEFAULT_PREFIX = "olx"
DEFAULT_NAMESPACE_IRI = "http://example.org/ontology/olx#"

Triple3 = tuple[str, str, str]


@dataclass(frozen=True)
class PropertyDef:
    name: str
    datatype: str = "string"
    required: bool = False
    max_cardinality: int | None = None


@dataclass(frozen=True)
class ClassDef:
    name: str
    parent: str | None = None
    abstract: bool = False
    properties: tuple[PropertyDef, ...] = ()
    external_alignment: str | None = None


@dataclass(frozen=True)
class RelationshipDef:
    name: str
    source_class: str
    target_class: str
    min_cardinality: int = 0
    max_cardinality: int | None = None


@dataclass(frozen=True, eq=False)
class OntologySchema:
    classes: Mapping[str, ClassDef]
    relationships: frozenset[RelationshipDef] = frozenset()
    structural_triples: frozenset[Triple3] = frozenset()
    namespace_prefix: str = DEFAULT_PREFIX
    namespace_iri: str = DEFAULT_NAMESPACE_IRI
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, OntologySchema):
            return NotImplemented
        return (
            dict(self.classes) == dict(other.classes)
            and self.relationships == other.relationships
            and self.structural_triples == other.structural_triples
            and self.namespace_prefix == other.namespace_prefix
            and self.namespace_iri == other.namespace_iri
        )

    __hash__ = None  # type: ignore[assignment]

    def ancestors(self, name: str) -> list[str]:
        """``name`` followed by its parents up to the root."""
        if name not in self.classes:
            raise UnknownClass(name)
        chain = [name]
        parent = self.classes[name].parent
        while parent is not None:
            chain.append(parent)
            parent = self.classes[parent].parent
        return chain

    def descendants(self, name: str) -> list[str]:
        """``name`` and every class below it, sorted."""
        if name not in self.classes:
            raise UnknownClass(name)
        return sorted(c for c in self.classes if name in self.ancestors(c))

    def properties_of(self, name: str) -> dict[str, PropertyDef]:
        """Flattened property map, inherited properties included."""
        key = ("props", name)
        if key not in self._cache:
            props: dict[str, PropertyDef] = {}
            for cls in reversed(self.ancestors(name)):
                for p in self.classes[cls].properties:
                    props[p.name] = p
            self._cache[key] = props
        return self._cache[key]

    def relationships_named(self, name: str) -> list[RelationshipDef]:
        return sorted(
            (r for r in self.relationships if r.name == name),
            key=lambda r: (r.source_class, r.target_class),
        )

    @cached_property
    def relationship_names(self) -> frozenset[str]:
        return frozenset(r.name for r in self.relationships)

    @cached_property
    def concrete_classes(self) -> list[str]:
        return sorted(c for c, d in self.classes.items() if not d.abstract)

    def iri(self, local: str) -> str:
        return self.namespace_iri + local


def is_subclass_of(schema: OntologySchema, sub: str, sup: str) -> bool:
    """Reflexive-transitive closure of the parent relation."""
    if sup not in schema.classes:
        raise UnknownClass(sup)
    return sup in schema.ancestors(sub)


def allowed_triples(schema: OntologySchema) -> set[Triple3]:
    """Relationship triples expanded over the class hierarchy.

    Both endpoints expand to every concrete descendant (the declared class
    itself included when it is not abstract).
    """
    out: set[Triple3] = set()
    for rel in schema.relationships:
        sources = [c for c in schema.descendants(rel.source_class) if not schema.classes[c].abstract]
        targets = [c for c in schema.descendants(rel.target_class) if not schema.classes[c].abstract]
        out.update((s, rel.name, t) for s in sources for t in targets)
    return out


# ---------------------------------------------------------------------------
# descriptor I/O
# ---------------------------------------------------------------------------


def _require(doc: Mapping[str, Any], key: str, where: str) -> Any:
    if key not in doc:
        raise DescriptorParseError(f"{where}: missing key {key!r}")
    return doc[key]


def _parse_property(raw: Any, where: str) -> PropertyDef:
    if not isinstance(raw, dict):
        raise DescriptorParseError(f"{where}: property must be an object")
    unknown = set(raw) - {"name", "datatype", "required", "max_cardinality"}
    if unknown:
        raise DescriptorParseError(f"{where}: unknown property keys {sorted(unknown)}")
    name = _require(raw, "name", where)
    datatype = raw.get("datatype", "string")
    if datatype not in DATATYPES:
        raise DescriptorParseError(f"{where}: datatype {datatype!r} not in {DATATYPES}")
    max_card = raw.get("max_cardinality")
    if max_card is not None and (not isinstance(max_card, int) or isinstance(max_card, bool) or max_card < 1):
        raise DescriptorParseError(f"{where}: max_cardinality must be a positive integer")
    return PropertyDef(
        name=str(name),
        datatype=datatype,
        required=bool(raw.get("required", False)),
        max_cardinality=max_card,
    )


def _parse_relationship(raw: Any, where: str) -> RelationshipDef:
    if not isinstance(raw, dict):
        raise DescriptorParseError(f"{where}: relationship must be an object")
    unknown = set(raw) - {"name", "source_class", "target_class", "min_cardinality", "max_cardinality"}
    if unknown:
        raise DescriptorParseError(f"{where}: unknown relationship keys {sorted(unknown)}")
    min_card = raw.get("min_cardinality", 0)
    max_card = raw.get("max_cardinality")
    if not isinstance(min_card, int) or min_card < 0:
        raise DescriptorParseError(f"{where}: min_cardinality must be a non-negative integer")
    if max_card is not None:
        if not isinstance(max_card, int) or max_card < 1:
            raise DescriptorParseError(f"{where}: max_cardinality must be a positive integer")
        if min_card > max_card:
            raise SchemaInconsistency(f"{where}: min_cardinality {min_card} > max_cardinality {max_card}")
    return RelationshipDef(
        name=str(_require(raw, "name", where)),
        source_class=str(_require(raw, "source_class", where)),
        target_class=str(_require(raw, "target_class", where)),
        min_cardinality=min_card,
        max_cardinality=max_card,
    )


def schema_from_dict(doc: Any) -> OntologySchema:
    if not isinstance(doc, dict):
        raise DescriptorParseError("descriptor must be a JSON object")
    unknown = set(doc) - {"classes", "relationships", "structural_triples", "namespace_prefix", "namespace_iri"}
    if unknown:
        raise DescriptorParseError(f"unknown top-level keys {sorted(unknown)}")
    raw_classes = _require(doc, "classes", "descriptor")
    if not isinstance(raw_classes, dict):
        raise DescriptorParseError("'classes' must be an object keyed by class name")

    classes: dict[str, ClassDef] = {}
    for name, body in raw_classes.items():
        where = f"class {name}"
        if not isinstance(body, dict):
            raise DescriptorParseError(f"{where}: must be an object")
        unknown = set(body) - {"parent", "abstract", "properties", "external_alignment"}
        if unknown:
            raise DescriptorParseError(f"{where}: unknown keys {sorted(unknown)}")
        props = body.get("properties", [])
        if not isinstance(props, list):
            raise DescriptorParseError(f"{where}: 'properties' must be a list")
        classes[name] = ClassDef(
            name=name,
            parent=body.get("parent"),
            abstract=bool(body.get("abstract", False)),
            properties=tuple(_parse_property(p, f"{where}.properties[{i}]") for i, p in enumerate(props)),
            external_alignment=body.get("external_alignment"),
        )

    raw_rels = doc.get("relationships", [])
    if not isinstance(raw_rels, list):
        raise DescriptorParseError("'relationships' must be a list")
    rels = [_parse_relationship(r, f"relationships[{i}]") for i, r in enumerate(raw_rels)]

    raw_struct = doc.get("structural_triples", [])
    if not isinstance(raw_struct, list):
        raise DescriptorParseError("'structural_triples' must be a list")
    struct: set[Triple3] = set()
    for i, t in enumerate(raw_struct):
        if not (isinstance(t, list) and len(t) == 3 and all(isinstance(x, str) for x in t)):
            raise DescriptorParseError(f"structural_triples[{i}]: expected [class, relation, class]")
        struct.add((t[0], t[1], t[2]))

    schema = OntologySchema(
        classes=classes,
        relationships=frozenset(rels),
        structural_triples=frozenset(struct),
        namespace_prefix=doc.get("namespace_prefix", DEFAULT_PREFIX),
        namespace_iri=doc.get("namespace_iri", DEFAULT_NAMESPACE_IRI),
    )
    _check_consistency(schema)
    return schema


def _check_consistency(schema: OntologySchema) -> None:
    classes = schema.classes
    for name, cls in classes.items():
        if cls.parent is not None and cls.parent not in classes:
            raise SchemaInconsistency(f"class {name}: parent {cls.parent!r} is not defined")
    for name in classes:
        seen = {name}
        parent = classes[name].parent
        while parent is not None:
            if parent in seen:
                raise SchemaInconsistency(f"cyclic hierarchy through {name!r}")
            seen.add(parent)
            parent = classes[parent].parent
    for name in classes:
        owners: dict[str, str] = {}
        for cls in schema.ancestors(name):
            for p in classes[cls].properties:
                if p.name in owners:
                    raise SchemaInconsistency(
                        f"class {name}: property {p.name!r} declared by both {owners[p.name]} and {cls}"
                    )
                owners[p.name] = cls
    for rel in schema.relationships:
        for end in (rel.source_class, rel.target_class):
            if end not in classes:
                raise SchemaInconsistency(f"relationship {rel.name}: class {end!r} is not defined")
    for s, _, o in schema.structural_triples:
        for end in (s, o):
            if end not in classes:
                raise SchemaInconsistency(f"structural triple references undefined class {end!r}")


def schema_to_dict(schema: OntologySchema) -> dict[str, Any]:
    """Inverse of :func:`schema_from_dict` (deterministic ordering)."""
    classes: dict[str, Any] = {}
    for name in sorted(schema.classes):
        cls = schema.classes[name]
        body: dict[str, Any] = {"parent": cls.parent, "abstract": cls.abstract}
        body["properties"] = [
            {
                "name": p.name,
                "datatype": p.datatype,
                "required": p.required,
                "max_cardinality": p.max_cardinality,
            }
            for p in cls.properties
        ]
        if cls.external_alignment is not None:
            body["external_alignment"] = cls.external_alignment
        classes[name] = body
    rels = sorted(schema.relationships, key=lambda r: (r.name, r.source_class, r.target_class))
    return {
        "namespace_prefix": schema.namespace_prefix,
        "namespace_iri": schema.namespace_iri,
        "classes": classes,
        "relationships": [
            {
                "name": r.name,
                "source_class": r.source_class,
                "target_class": r.target_class,
                "min_cardinality": r.min_cardinality,
                "max_cardinality": r.max_cardinality,
            }
            for r in rels
        ],
        "structural_triples": [list(t) for t in sorted(schema.structural_triples)],
    }


def load_ontology(descriptor: str | Path | Mapping[str, Any] | None = None) -> OntologySchema:
    """Load a schema from a descriptor path, a parsed document, or the shipped default."""
    if descriptor is None:
        text = default_descriptor_text()
    elif isinstance(descriptor, Mapping):
        return schema_from_dict(dict(descriptor))
    else:
        try:
            text = Path(descriptor).read_text(encoding="utf-8")
        except OSError as exc:
            raise DescriptorParseError(f"cannot read descriptor {descriptor}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DescriptorParseError(f"malformed descriptor JSON: {exc}") from exc
    return schema_from_dict(doc)


def default_descriptor_text() -> str:
    return resources.files("logkg.data").joinpath("ontology.json").read_text(encoding="utf-8")


def descriptor_hash(schema: OntologySchema) -> str:
    payload = json.dumps(schema_to_dict(schema), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()
