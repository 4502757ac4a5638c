"""Relational states, three-valued formula evaluation, and abstraction.

States are finite first-order structures: a universe of entity ids with
relation, function and constant interpretations, plus optional continuous
payloads (poses, configurations, trajectories) attached to entities.
Abstraction maps a structure over a fine vocabulary to one over a coarser
vocabulary through defining formulas, with a representation function that
assigns each abstract entity the set of concrete values it stands for.

Truth is three-valued: individual atoms may be marked indeterminate, and
evaluation follows Kleene semantics so indeterminacy propagates through
connectives and quantifiers.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator, Mapping, Sequence, Union

PAYLOAD_TOLERANCE = 1e-9


class LogicError(Exception):
    """Base error for structure and formula problems."""


class FormulaError(LogicError):
    """Malformed formula: unbound variable or unknown symbol."""


class AbstractionError(LogicError):
    """Abstraction query or representation function is inconsistent."""


class RegionError(LogicError):
    """Region cannot produce samples."""


class EmptyRegionError(RegionError):
    """Region declared for an abstract entity contains no values."""


class Unknown:
    """Singleton third truth value. Never coerce it to bool."""

    _instance = None

    def __new__(cls) -> "Unknown":
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "Unknown"

    def __bool__(self) -> bool:
        raise TypeError("Unknown truth value cannot be used as a bool")


UNKNOWN = Unknown()

Truth = Union[bool, Unknown]


def kleene_not(value: Truth) -> Truth:
    if value is UNKNOWN:
        return UNKNOWN
    return not value


def kleene_all(values: Iterable[Truth]) -> Truth:
    """Conjunction: False dominates, Unknown beats True."""
    saw_unknown = False
    for v in values:
        if v is UNKNOWN:
            saw_unknown = True
        elif not v:
            return False
    return UNKNOWN if saw_unknown else True


def kleene_any(values: Iterable[Truth]) -> Truth:
    """Disjunction: True dominates, Unknown beats False."""
    saw_unknown = False
    for v in values:
        if v is UNKNOWN:
            saw_unknown = True
        elif v:
            return True
    return UNKNOWN if saw_unknown else False


# ---------------------------------------------------------------------------
# Terms and formulas
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Ent:
    """A literal universe element appearing in a formula."""

    entity: str


@dataclass(frozen=True)
class App:
    """Function application term."""

    function: str
    args: tuple = ()


Term = Union[Var, Ent, App]


@dataclass(frozen=True)
class Atom:
    relation: str
    args: tuple = ()


@dataclass(frozen=True)
class Eq:
    left: Term
    right: Term


@dataclass(frozen=True)
class Not:
    body: "Formula"


@dataclass(frozen=True)
class And:
    parts: tuple = ()


@dataclass(frozen=True)
class Or:
    parts: tuple = ()


@dataclass(frozen=True)
class Exists:
    var: str
    body: "Formula"
    sort: str | None = None


@dataclass(frozen=True)
class Forall:
    var: str
    body: "Formula"
    sort: str | None = None


Formula = Union[Atom, Eq, Not, And, Or, Exists, Forall]

TRUE = And(())


def conj(*parts: Formula) -> Formula:
    return parts[0] if len(parts) == 1 else And(tuple(parts))


def disj(*parts: Formula) -> Formula:
    return parts[0] if len(parts) == 1 else Or(tuple(parts))


def substitute(formula: Formula, mapping: Mapping[str, str]) -> Formula:
    """Replace free variables by literal entities. Bound variables shadow."""

    def sub_term(term: Term, bound: frozenset) -> Term:
        if isinstance(term, Var):
            if term.name in bound or term.name not in mapping:
                return term
            return Ent(mapping[term.name])
        if isinstance(term, App):
            return App(term.function, tuple(sub_term(a, bound) for a in term.args))
        return term

    def sub(f: Formula, bound: frozenset) -> Formula:
        if isinstance(f, Atom):
            return Atom(f.relation, tuple(sub_term(a, bound) for a in f.args))
        if isinstance(f, Eq):
            return Eq(sub_term(f.left, bound), sub_term(f.right, bound))
        if isinstance(f, Not):
            return Not(sub(f.body, bound))
        if isinstance(f, And):
            return And(tuple(sub(p, bound) for p in f.parts))
        if isinstance(f, Or):
            return Or(tuple(sub(p, bound) for p in f.parts))
        if isinstance(f, (Exists, Forall)):
            inner = sub(f.body, bound | {f.var})
            return type(f)(f.var, inner, f.sort)
        raise FormulaError(f"not a formula: {f!r}")

    return sub(formula, frozenset())


def free_variables(formula: Formula) -> frozenset:
    def term_vars(term: Term) -> set:
        if isinstance(term, Var):
            return {term.name}
        if isinstance(term, App):
            return set().union(*(term_vars(a) for a in term.args)) if term.args else set()
        return set()

    def walk(f: Formula, bound: frozenset) -> set:
        if isinstance(f, Atom):
            out: set = set()
            for a in f.args:
                out |= term_vars(a)
            return out - bound
        if isinstance(f, Eq):
            return (term_vars(f.left) | term_vars(f.right)) - bound
        if isinstance(f, Not):
            return walk(f.body, bound)
        if isinstance(f, (And, Or)):
            out = set()
            for p in f.parts:
                out |= walk(p, bound)
            return out
        if isinstance(f, (Exists, Forall)):
            return walk(f.body, bound | {f.var})
        raise FormulaError(f"not a formula: {f!r}")

    return frozenset(walk(formula, frozenset()))


# ---------------------------------------------------------------------------
# Vocabulary and structures
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Vocabulary:
    """Relation, function and constant symbols with arities.

    ``computed`` names the subset of relation symbols whose truth is derived
    by a callable ``fn(structure, *entity_ids) -> Truth`` instead of being
    stored in the structure (geometric tests, resource checks).  Semantics
    callables are excluded from equality and hashing.
    """

    relations: tuple = ()
    functions: tuple = ()
    constants: tuple = ()
    computed: Mapping[str, Callable[..., Truth]] = field(
        default_factory=dict, compare=False, repr=False
    )

    def __post_init__(self) -> None:
        names = [n for n, _ in self.relations] + [n for n, _ in self.functions]
        names += list(self.constants)
        if len(names) != len(set(names)):
            raise LogicError("vocabulary symbol names must be unique")
        for name, arity in list(self.relations) + list(self.functions):
            if arity < 0:
                raise LogicError(f"negative arity for {name}")
        rel_names = {n for n, _ in self.relations}
        for name in self.computed:
            if name not in rel_names:
                raise LogicError(f"computed semantics for undeclared relation {name}")

    def relation_arity(self, name: str) -> int:
        for n, a in self.relations:
            if n == name:
                return a
        raise FormulaError(f"unknown relation symbol {name!r}")

    def function_arity(self, name: str) -> int:
        for n, a in self.functions:
            if n == name:
                return a
        raise FormulaError(f"unknown function symbol {name!r}")

    def has_relation(self, name: str) -> bool:
        return any(n == name for n, _ in self.relations)

    def is_computed(self, name: str) -> bool:
        return name in self.computed


def entity_sort(entity_id: str) -> str:
    """Sort prefix convention: everything before the first colon."""
    return entity_id.split(":", 1)[0] if ":" in entity_id else ""


def _payload_close(a, b) -> bool:
    if a is None or b is None:
        return a is b
    if isinstance(a, tuple) and isinstance(b, tuple):
        if len(a) != len(b):
            return False
        return all(abs(x - y) <= PAYLOAD_TOLERANCE for x, y in zip(a, b))
    if hasattr(a, "waypoints") and hasattr(b, "waypoints"):
        if len(a.waypoints) != len(b.waypoints):
            return False
        return all(
            _payload_close(p, q) for p, q in zip(a.waypoints, b.waypoints)
        )
    return a == b


class LogicalStructure:
    """A finite first-order model, immutable after construction.

    Atoms of a stored relation can be marked indeterminate; those tuples
    evaluate to ``UNKNOWN``.  Structural equality canonically orders tuples
    and compares payloads with absolute tolerance ``PAYLOAD_TOLERANCE``;
    the hash ignores payloads so equal structures hash equal.
    """

    __slots__ = (
        "vocabulary",
        "universe",
        "relations",
        "unknown",
        "functions",
        "constants",
        "payloads",
        "_key",
        "_hash",
    )

    def __init__(
        self,
        vocabulary: Vocabulary,
        universe: Iterable[str],
        relations: Mapping[str, Iterable[Sequence[str]]] | None = None,
        unknown: Mapping[str, Iterable[Sequence[str]]] | None = None,
        functions: Mapping[str, Mapping[tuple, str]] | None = None,
        constants: Mapping[str, str] | None = None,
        payloads: Mapping[str, object] | None = None,
    ) -> None:
        self.vocabulary = vocabulary
        self.universe = frozenset(universe)

        def canon(mapping, label):
            out = {}
            for name, tuples in (mapping or {}).items():
                arity = vocabulary.relation_arity(name)
                if vocabulary.is_computed(name):
                    raise LogicError(f"{label} interpretation for computed relation {name}")
                canon_tuples = set()
                for t in tuples:
                    tt = tuple(t)
                    if len(tt) != arity:
                        raise LogicError(f"arity mismatch for {name}{tt}")
                    missing = [e for e in tt if e not in self.universe]
                    if missing:
                        raise LogicError(f"tuple element(s) {missing} outside universe in {name}")
                    canon_tuples.add(tt)
                if canon_tuples:
                    out[name] = frozenset(canon_tuples)
            return out

        self.relations = canon(relations, "stored")
        self.unknown = canon(unknown, "indeterminate")
        for name, marked in self.unknown.items():
            clash = marked & self.relations.get(name, frozenset())
            if clash:
                raise LogicError(f"atoms {sorted(clash)} of {name} both stored and indeterminate")

        funcs = {}
        for name, table in (functions or {}).items():
            arity = vocabulary.function_arity(name)
            entries = {}
            for args, value in table.items():
                targs = tuple(args)
                if len(targs) != arity:
                    raise LogicError(f"arity mismatch for function {name}{targs}")
                for e in targs + (value,):
                    if e not in self.universe:
                        raise LogicError(f"function {name} references {e} outside universe")
                entries[targs] = value
            funcs[name] = entries
        self.functions = funcs

        consts = dict(constants or {})
        for name, value in consts.items():
            if name not in vocabulary.constants:
                raise LogicError(f"unknown constant symbol {name}")
            if value not in self.universe:
                raise LogicError(f"constant {name} bound to {value} outside universe")
        self.constants = consts

        pay = {}
        for eid, value in (payloads or {}).items():
            if eid not in self.universe:
                raise LogicError(f"payload for {eid} outside universe")
            if isinstance(value, (list, tuple)):
                value = tuple(float(x) for x in value)
            pay[eid] = value
        self.payloads = pay
        self._key = None
        self._hash = None

    # -- queries ---------------------------------------------------------

    def holds(self, relation: str, args: Sequence[str]) -> Truth:
        targs = tuple(args)
        arity = self.vocabulary.relation_arity(relation)
        if len(targs) != arity:
            raise FormulaError(f"arity mismatch querying {relation}{targs}")
        if targs in self.unknown.get(relation, frozenset()):
            return UNKNOWN
        return targs in self.relations.get(relation, frozenset())

    def function_value(self, name: str, args: Sequence[str]):
        self.vocabulary.function_arity(name)
        return self.functions.get(name, {}).get(tuple(args), UNKNOWN)

    def constant_value(self, name: str) -> str:
        if name not in self.vocabulary.constants:
            raise FormulaError(f"unknown constant symbol {name}")
        try:
            return self.constants[name]
        except KeyError:
            raise FormulaError(f"constant {name} has no interpretation") from None

    def payload(self, entity: str):
        return self.payloads.get(entity)

    def entities(self, sort: str | None = None) -> list:
        if sort is None:
            return sorted(self.universe)
        return sorted(e for e in self.universe if entity_sort(e) == sort)

    # -- functional updates ----------------------------------------------

    def with_updates(
        self,
        set_: Iterable[tuple] = (),
        clear: Iterable[tuple] = (),
        mark_unknown: Iterable[tuple] = (),
    ) -> "LogicalStructure":
        """New structure with atoms set true, cleared, or marked indeterminate."""
        rels = {n: set(ts) for n, ts in self.relations.items()}
        unk = {n: set(ts) for n, ts in self.unknown.items()}

        def touch(rel, args):
            t = tuple(args)
            rels.setdefault(rel, set()).discard(t)
            unk.setdefault(rel, set()).discard(t)
            return t

        for rel, args in clear:
            touch(rel, args)
        for rel, args in set_:
            t = touch(rel, args)
            rels[rel].add(t)
        for rel, args in mark_unknown:
            t = touch(rel, args)
            unk[rel].add(t)
        return LogicalStructure(
            self.vocabulary,
            self.universe,
            rels,
            unk,
            self.functions,
            self.constants,
            self.payloads,
        )

    def with_payloads(self, updates: Mapping[str, object]) -> "LogicalStructure":
        pay = dict(self.payloads)
        pay.update(updates)
        return LogicalStructure(
            self.vocabulary,
            self.universe,
            self.relations,
            self.unknown,
            self.functions,
            self.constants,
            pay,
        )

    def with_entities(self, additions: Mapping[str, object]) -> "LogicalStructure":
        """Extend the universe with (temporary) entities carrying payloads."""
        universe = set(self.universe) | set(additions)
        pay = dict(self.payloads)
        for eid, value in additions.items():
            if value is not None:
                pay[eid] = value
        return LogicalStructure(
            self.vocabulary,
            universe,
            self.relations,
            self.unknown,
            self.functions,
            self.constants,
            pay,
        )

    # -- identity ----------------------------------------------------------

    def _discrete_key(self):
        if self._key is None:
            key = (
                tuple(sorted(self.universe)),
                tuple(sorted((n, tuple(sorted(ts))) for n, ts in self.relations.items() if ts)),
                tuple(sorted((n, tuple(sorted(ts))) for n, ts in self.unknown.items() if ts)),
                tuple(
                    sorted(
                        (n, tuple(sorted(t.items())))
                        for n, t in self.functions.items()
                        if t
                    )
                ),
                tuple(sorted(self.constants.items())),
            )
            object.__setattr__(self, "_key", key)
        return self._key

    def __eq__(self, other) -> bool:
        if not isinstance(other, LogicalStructure):
            return NotImplemented
        if self.vocabulary != other.vocabulary:
            return False
        if self._discrete_key() != other._discrete_key():
            return False
        if set(self.payloads) != set(other.payloads):
            return False
        return all(_payload_close(v, other.payloads[k]) for k, v in self.payloads.items())

    def __hash__(self) -> int:
        if self._hash is None:
            object.__setattr__(self, "_hash", hash(self._discrete_key()))
        return self._hash

    def __repr__(self) -> str:
        atoms = [f"{n}{t}" for n, ts in sorted(self.relations.items()) for t in sorted(ts)]
        marked = [f"{n}{t}?" for n, ts in sorted(self.unknown.items()) for t in sorted(ts)]
        return f"LogicalStructure(|U|={len(self.universe)}, {' '.join(atoms + marked)})"

    def __setattr__(self, name, value):  # pragma: no cover - guards misuse
        if hasattr(self, "_hash") and name not in ("_key", "_hash"):
            raise AttributeError("LogicalStructure is immutable")
        object.__setattr__(self, name, value)


AtomUpdate = tuple  # (op, relation, args) with op in {"set", "clear", "unknown"}


def apply_updates(structure: LogicalStructure, updates: Iterable[AtomUpdate]) -> LogicalStructure:
    """Apply grounded atom updates to a structure."""
    set_, clear, unknown = [], [], []
    for op, rel, args in updates:
        if op == "set":
            set_.append((rel, args))
        elif op == "clear":
            clear.append((rel, args))
        elif op == "unknown":
            unknown.append((rel, args))
        else:
            raise LogicError(f"unknown atom update op {op!r}")
    return structure.with_updates(set_=set_, clear=clear, mark_unknown=unknown)


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------


def evaluate(
    formula: Formula,
    structure: LogicalStructure,
    binding: Mapping[str, str] | None = None,
) -> Truth:
    """Tarskian evaluation with Kleene three-valued semantics.

    Quantifiers range over the (finite) universe, optionally restricted to a
    sort prefix.  All free variables must be bound and all symbols must be
    interpreted, else ``FormulaError``.
    """
    bind = dict(binding or {})

    def term_value(term: Term, env: Mapping[str, str]):
        if isinstance(term, Var):
            try:
                return env[term.name]
            except KeyError:
                raise FormulaError(f"unbound variable {term.name!r}") from None
        if isinstance(term, Ent):
            if term.entity not in structure.universe:
                raise FormulaError(f"entity {term.entity!r} not in universe")
            return term.entity
        if isinstance(term, App):
            args = [term_value(a, env) for a in term.args]
            if any(a is UNKNOWN for a in args):
                return UNKNOWN
            return structure.function_value(term.function, args)
        raise FormulaError(f"not a term: {term!r}")

    def ev(f: Formula, env: Mapping[str, str]) -> Truth:
        if isinstance(f, Atom):
            args = [term_value(a, env) for a in f.args]
            if any(a is UNKNOWN for a in args):
                return UNKNOWN
            fn = structure.vocabulary.computed.get(f.relation)
            if fn is not None:
                if len(args) != structure.vocabulary.relation_arity(f.relation):
                    raise FormulaError(f"arity mismatch for computed {f.relation}")
                return fn(structure, *args)
            return structure.holds(f.relation, args)
        if isinstance(f, Eq):
            left = term_value(f.left, env)
            right = term_value(f.right, env)
            if left is UNKNOWN or right is UNKNOWN:
                return UNKNOWN
            return left == right
        if isinstance(f, Not):
            return kleene_not(ev(f.body, env))
        if isinstance(f, And):
            return kleene_all(ev(p, env) for p in f.parts)
        if isinstance(f, Or):
            return kleene_any(ev(p, env) for p in f.parts)
        if isinstance(f, (Exists, Forall)):
            domain = structure.entities(f.sort) if f.sort else structure.entities()
            values = (ev(f.body, {**env, f.var: e}) for e in domain)
            return kleene_any(values) if isinstance(f, Exists) else kleene_all(values)
        raise FormulaError(f"not a formula: {f!r}")

    return ev(formula, bind)


# ---------------------------------------------------------------------------
# Regions and the representation function
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExtensionalRegion:
    """Finite set of concrete entity ids."""

    members: tuple = ()

    def contains(self, entity_id: str, payload=None) -> bool:
        return entity_id in self.members

    def finite_members(self):
        return self.members

    def measure(self) -> float:
        return float(len(self.members))

    def sample(self, rng: random.Random):
        if not self.members:
            raise EmptyRegionError("extensional region is empty")
        return rng.choice(self.members)


@dataclass(frozen=True)
class BoxRegion:
    """Axis-aligned box over continuous payloads (closed bounds)."""

    low: tuple
    high: tuple

    def __post_init__(self) -> None:
        if len(self.low) != len(self.high):
            raise RegionError("box bounds dimension mismatch")
        if any(l > h for l, h in zip(self.low, self.high)):
            raise RegionError("box low bound exceeds high bound")

    def contains(self, entity_id: str, payload=None) -> bool:
        if not isinstance(payload, tuple) or len(payload) != len(self.low):
            return False
        return all(l - PAYLOAD_TOLERANCE <= x <= h + PAYLOAD_TOLERANCE
                   for x, l, h in zip(payload, self.low, self.high))

    def finite_members(self):
        return None

    def measure(self) -> float:
        out = 1.0
        for l, h in zip(self.low, self.high):
            out *= (h - l)
        return out

    def sample(self, rng: random.Random) -> tuple:
        return tuple(rng.uniform(l, h) for l, h in zip(self.low, self.high))


@dataclass(frozen=True)
class ConvexPolygonRegion:
    """Convex polygon over 2d payloads; vertices in counterclockwise order."""

    vertices: tuple

    def __post_init__(self) -> None:
        if len(self.vertices) < 3:
            raise RegionError("polygon needs at least three vertices")

    def _edges(self):
        n = len(self.vertices)
        return [(self.vertices[i], self.vertices[(i + 1) % n]) for i in range(n)]

    def contains(self, entity_id: str, payload=None) -> bool:
        if not isinstance(payload, tuple) or len(payload) < 2:
            return False
        x, y = payload[0], payload[1]
        for (ax, ay), (bx, by) in self._edges():
            if (bx - ax) * (y - ay) - (by - ay) * (x - ax) < -PAYLOAD_TOLERANCE:
                return False
        return True

    def finite_members(self):
        return None

    def measure(self) -> float:
        area = 0.0
        for (ax, ay), (bx, by) in self._edges():
            area += ax * by - bx * ay
        return abs(area) / 2.0

    def _bbox(self):
        xs = [v[0] for v in self.vertices]
        ys = [v[1] for v in self.vertices]
        return min(xs), min(ys), max(xs), max(ys)

    def sample(self, rng: random.Random) -> tuple:
        x0, y0, x1, y1 = self._bbox()
        for _ in range(10000):
            p = (rng.uniform(x0, x1), rng.uniform(y0, y1))
            if self.contains("", p):
                return p
        raise RegionError("rejection sampling failed for polygon region")


@dataclass(frozen=True)
class TrajectorySpace:
    """Region standing for all collision-free trajectories.

    Not directly sampleable: trajectory values are produced by the motion
    planner.  Carries unit measure for cost estimation.
    """

    def contains(self, entity_id: str, payload=None) -> bool:
        return hasattr(payload, "waypoints")

    def finite_members(self):
        return None

    def measure(self) -> float:
        return 1.0

    def sample(self, rng: random.Random):
        raise RegionError("trajectory regions are refined by the motion planner")


Region = Union[ExtensionalRegion, BoxRegion, ConvexPolygonRegion, TrajectorySpace]


@dataclass(frozen=True)
class RepresentationFunction:
    """Maps each abstract entity to the region of concrete values it denotes."""

    regions: Mapping[str, Region] = field(default_factory=dict)
    workspace_measure: float = 1.0

    def region(self, abstract_entity: str) -> Region:
        try:
            return self.regions[abstract_entity]
        except KeyError:
            raise AbstractionError(f"no region declared for {abstract_entity!r}") from None

    def contains(self, abstract_entity: str, concrete_id: str, payload=None) -> bool:
        return self.region(abstract_entity).contains(concrete_id, payload)


class SampleStream:
    """Restartable generator of concrete values from one region.

    Finite (extensional) regions are enumerated exactly once per pass, in an
    order fixed by the seed; continuous regions yield i.i.d. uniform samples.
    """

    def __init__(self, region: Region, seed: int) -> None:
        self.region = region
        self.seed = seed
        self.drawn = 0
        self._rng: random.Random
        self._queue: list | None
        self.restart()

    def restart(self) -> None:
        self._rng = random.Random(self.seed)
        members = self.region.finite_members()
        if members is None:
            self._queue = None
        else:
            queue = list(members)
            self._rng.shuffle(queue)
            self._queue = queue

    def __iter__(self) -> "SampleStream":
        return self

    def __next__(self):
        if self._queue is not None:
            if not self._queue and self.drawn == 0:
                raise EmptyRegionError("region has no members")
            if not self._queue:
                raise StopIteration
            self.drawn += 1
            return self._queue.pop(0)
        self.drawn += 1
        return self.region.sample(self._rng)


def concretize(
    abstract_state: LogicalStructure,
    rho: RepresentationFunction,
    rng: random.Random,
) -> dict:
    """Per-entity sample streams for every abstract entity with a region."""
    streams = {}
    for entity in sorted(abstract_state.universe):
        if entity in rho.regions:
            streams[entity] = SampleStream(rho.regions[entity], rng.randrange(2**63))
    return streams


# ---------------------------------------------------------------------------
# Abstraction queries
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AbstractionQuery:
    """First-order query from a source to a target vocabulary.

    ``defining`` maps each target relation symbol to ``(arg_vars, formula)``
    over the source vocabulary.  ``indeterminate`` lists target symbols whose
    atoms are marked Unknown when no witness exists but the witness search
    could not exhaust a continuous region.
    """

    source: Vocabulary
    target: Vocabulary
    defining: Mapping[str, tuple] = field(default_factory=dict)
    kind: str = "entity"
    indeterminate: frozenset = frozenset()

    def __post_init__(self) -> None:
        if self.kind not in ("predicate_abstraction", "entity_abstraction", "entity", "predicate"):
            raise AbstractionError(f"unknown abstraction kind {self.kind!r}")
        for name, _ in self.target.relations:
            if name not in self.defining:
                raise AbstractionError(f"target symbol {name} lacks a defining formula")

    @property
    def is_predicate(self) -> bool:
        return self.kind.startswith("predicate")


def predicate_abstraction(source: Vocabulary, kept_relations: Sequence[str]) -> AbstractionQuery:
    """Drop every relation symbol not in ``kept_relations``; keep identities."""
    kept = []
    defining = {}
    for name, arity in source.relations:
        if name in kept_relations:
            kept.append((name, arity))
            vars_ = tuple(f"x{i}" for i in range(arity))
            defining[name] = (vars_, Atom(name, tuple(Var(v) for v in vars_)))
    missing = set(kept_relations) - {n for n, _ in kept}
    if missing:
        raise AbstractionError(f"kept symbols {sorted(missing)} not in source vocabulary")
    target = Vocabulary(relations=tuple(kept), functions=source.functions,
                        constants=source.constants, computed={})
    return AbstractionQuery(source=source, target=target, defining=defining,
                            kind="predicate_abstraction")


def entity_abstraction(
    source: Vocabulary,
    target: Vocabulary,
    defining: Mapping[str, tuple] | None = None,
    indeterminate: Iterable[str] = (),
) -> AbstractionQuery:
    """Entity abstraction; defaults to identity defining formulas by name."""
    df = dict(defining or {})
    for name, arity in target.relations:
        if name not in df:
            vars_ = tuple(f"x{i}" for i in range(arity))
            df[name] = (vars_, Atom(name, tuple(Var(v) for v in vars_)))
    return AbstractionQuery(source=source, target=target, defining=df,
                            kind="entity_abstraction",
                            indeterminate=frozenset(indeterminate))


def apply_abstraction(
    alpha: AbstractionQuery,
    rho: RepresentationFunction,
    concrete: LogicalStructure,
    universe: Sequence[str] | None = None,
) -> LogicalStructure:
    """Abstract a concrete structure.

    Entity abstraction uses existential witness semantics: an abstract atom
    holds iff some tuple of represented concrete entities satisfies the
    defining formula.  Witnesses are drawn from the concrete universe; if
    none is found and a slot's region is continuous (so the search was not
    exhaustive), symbols flagged indeterminate get an Unknown mark.
    """
    if alpha.is_predicate:
        kept = {n for n, _ in alpha.target.relations}
        return LogicalStructure(
            alpha.target,
            concrete.universe,
            {n: ts for n, ts in concrete.relations.items() if n in kept},
            {n: ts for n, ts in concrete.unknown.items() if n in kept},
            concrete.functions,
            concrete.constants,
            concrete.payloads,
        )

    abstract_universe = sorted(universe) if universe is not None else sorted(rho.regions)
    for entity in abstract_universe:
        if entity not in rho.regions:
            raise AbstractionError(f"rho region missing for abstract entity {entity!r}")

    candidates: dict = {}
    exhaustive: dict = {}
    for entity in abstract_universe:
        region = rho.regions[entity]
        candidates[entity] = [
            o for o in sorted(concrete.universe)
            if region.contains(o, concrete.payload(o))
        ]
        exhaustive[entity] = region.finite_members() is not None

    relations: dict = {}
    unknown_marks: dict = {}
    for name, arity in alpha.target.relations:
        if alpha.target.is_computed(name):
            continue
        vars_, formula = alpha.defining[name]
        if len(vars_) != arity:
            raise AbstractionError(f"defining formula arity mismatch for {name}")
        true_tuples, unk_tuples = set(), set()
        for combo in _tuples(abstract_universe, arity):
            slots = [candidates[a] for a in combo]
            saw_unknown = False

            def rec(i: int, env: dict) -> bool:
                nonlocal saw_unknown
                if i == arity:
                    v = evaluate(formula, concrete, env)
                    if v is UNKNOWN:
                        saw_unknown = True
                        return False
                    return bool(v)
                return any(rec(i + 1, {**env, vars_[i]: o}) for o in slots[i])

            if rec(0, {}):
                true_tuples.add(combo)
            elif saw_unknown:
                unk_tuples.add(combo)
            elif name in alpha.indeterminate and not all(exhaustive[a] for a in combo):
                unk_tuples.add(combo)
        if true_tuples:
            relations[name] = true_tuples
        if unk_tuples:
            unknown_marks[name] = unk_tuples

    constants: dict = {}
    for cname in alpha.target.constants:
        value = concrete.constants.get(cname)
        if value is None:
            continue
        for entity in abstract_universe:
            if rho.contains(entity, value, concrete.payload(value)):
                constants[cname] = entity
                break

    functions: dict = {}
    for fname, arity in alpha.target.functions:
        table = {}
        for combo in _tuples(abstract_universe, arity + 1):
            ins, out = combo[:-1], combo[-1]
            if ins in table:
                continue
            src_table = concrete.functions.get(fname, {})
            for cargs, cval in sorted(src_table.items()):
                if len(cargs) != arity:
                    continue
                if all(rho.contains(combo[i], cargs[i], concrete.payload(cargs[i]))
                       for i in range(arity)) and rho.contains(out, cval, concrete.payload(cval)):
                    table[ins] = out
                    break
        if table:
            functions[fname] = table

    return LogicalStructure(
        alpha.target,
        abstract_universe,
        relations,
        unknown_marks,
        functions,
        constants,
        payloads={},
    )


def _tuples(universe: Sequence[str], arity: int):
    if arity == 0:
        yield ()
        return
    for head in universe:
        for rest in _tuples(universe, arity - 1):
            yield (head,) + rest


def abstract_image(
    concrete_states: Iterable[LogicalStructure],
    alpha: AbstractionQuery,
    rho: RepresentationFunction,
) -> set:
    """Smallest set of abstract states representing the sampled concrete set."""
    return {apply_abstraction(alpha, rho, x) for x in concrete_states}


def structures_match_modulo_unknown(predicted: LogicalStructure, actual: LogicalStructure) -> bool:
    """True when the structures agree on every atom that neither marks Unknown."""
    if predicted.universe != actual.universe:
        return False
    names = {n for n, _ in predicted.vocabulary.relations}
    for name in names:
        if predicted.vocabulary.is_computed(name):
            continue
        arity = predicted.vocabulary.relation_arity(name)
        skip = predicted.unknown.get(name, frozenset()) | actual.unknown.get(name, frozenset())
        p_true = predicted.relations.get(name, frozenset())
        a_true = actual.relations.get(name, frozenset())
        for t in (p_true | a_true):
            if len(t) != arity or t in skip:
                continue
            if (t in p_true) != (t in a_true):
                return False
    return True
