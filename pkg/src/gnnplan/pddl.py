"""Frontend for a positive-STRIPS subset of PDDL.

The accepted fragment is: conjunctive positive preconditions and goals,
add/delete effects, and ``:typing``. Types are compiled away at parse time
into unary predicates: a typed object contributes unary init atoms for its
type and all ancestor types, and a typed schema parameter contributes a unary
precondition atom. Everything outside the fragment (negative preconditions,
equality, disjunction, quantifiers, conditional effects, numeric fluents) is
rejected with a located diagnostic. Names are case-insensitive and normalized
to lowercase.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple

# Predicate origins.
BASE = "base"
GOAL_VERSION = "goal-version"
DERIVED = "derived"

ROOT_TYPE = "object"

_SUPPORTED_REQUIREMENTS = (":strips", ":typing")
_FORMULA_KEYWORDS = ("or", "not", "imply", "forall", "exists", "when")


@dataclass(frozen=True)
class Diagnostic:
    """A located message about a PDDL text or a constructed task."""

    file: str
    line: int
    col: int
    category: str
    message: str

    def __str__(self) -> str:
        return f"{self.file}:{self.line}:{self.col}: {self.category}: {self.message}"


class ParseError(Exception):
    """Raised on the first malformed or unsupported construct."""

    def __init__(self, diagnostic: Diagnostic):
        super().__init__(str(diagnostic))
        self.diagnostic = diagnostic


class Atom(NamedTuple):
    """A predicate applied to arguments.

    Arguments are variables (leading ``?``) inside action schemas and object
    names in states, initial conditions and goals.
    """

    predicate: str
    args: tuple[str, ...]

    @property
    def arity(self) -> int:
        return len(self.args)

    def __str__(self) -> str:
        return f"{self.predicate}({','.join(self.args)})"


def atom(predicate: str, *args: str) -> Atom:
    """Convenience constructor: ``atom('on', 'a', 'b')``."""
    return Atom(predicate, tuple(args))


def parse_atom(text: str) -> Atom:
    """Inverse of ``str(atom)``: ``'on(a,b)' -> Atom('on', ('a', 'b'))``."""
    text = text.strip()
    open_paren = text.find("(")
    if open_paren < 0 or not text.endswith(")"):
        raise ValueError(f"malformed atom literal: {text!r}")
    name = text[:open_paren].strip().lower()
    body = text[open_paren + 1 : -1].strip()
    if not name:
        raise ValueError(f"malformed atom literal: {text!r}")
    args = tuple(a.strip().lower() for a in body.split(",")) if body else ()
    if any(not a for a in args):
        raise ValueError(f"malformed atom literal: {text!r}")
    return Atom(name, args)


@dataclass(frozen=True, order=True)
class PredicateSymbol:
    name: str
    arity: int
    origin: str = BASE


@dataclass(frozen=True)
class ActionSchema:
    """A lifted action: parameters plus precondition, add and delete sets."""

    name: str
    parameters: tuple[str, ...]
    precondition: frozenset[Atom]
    add: frozenset[Atom]
    delete: frozenset[Atom]


@dataclass(frozen=True)
class Domain:
    """A lifted task schema after typing has been compiled away.

    ``types`` keeps the (child, parent) pairs of the original hierarchy so
    typed instance files can still be parsed against the domain; it is
    excluded from equality because printing normalizes to the untyped form.
    """

    name: str
    predicates: tuple[PredicateSymbol, ...]
    schemas: tuple[ActionSchema, ...]
    types: tuple[tuple[str, str], ...] = field(default=(), compare=False)

    @cached_property
    def predicate(self) -> dict[str, PredicateSymbol]:
        return {p.name: p for p in self.predicates}

    @cached_property
    def schema(self) -> dict[str, ActionSchema]:
        return {s.name: s for s in self.schemas}

    def signature(self) -> dict[str, int]:
        """Predicate name to arity, in declaration order."""
        return {p.name: p.arity for p in self.predicates}

    def type_ancestors(self, typ: str) -> tuple[str, ...]:
        """The type itself plus all ancestors, excluding the root type."""
        parents = dict(self.types)
        chain: list[str] = []
        seen: set[str] = set()
        cur: str | None = typ
        while cur is not None and cur != ROOT_TYPE:
            if cur in seen:
                raise ValueError(f"cyclic type hierarchy at {cur!r}")
            seen.add(cur)
            chain.append(cur)
            cur = parents.get(cur)
        return tuple(chain)


@dataclass(frozen=True)
class Instance:
    name: str
    domain: Domain
    objects: tuple[str, ...]
    init: frozenset[Atom]
    goal: frozenset[Atom]


@dataclass(frozen=True)
class Token:
    value: str
    line: int
    col: int


def tokenize(text: str) -> list[Token]:
    """Split PDDL text into lowercased tokens with line/column positions."""
    tokens: list[Token] = []
    i, n = 0, len(text)
    line, col = 1, 1

    def advance() -> None:
        nonlocal i, line, col
        if text[i] == "\n":
            line, col = line + 1, 1
        else:
            col += 1
        i += 1

    while i < n:
        c = text[i]
        if c.isspace():
            advance()
        elif c == ";":
            while i < n and text[i] != "\n":
                advance()
        elif c in "()":
            tokens.append(Token(c, line, col))
            advance()
        else:
            start, sline, scol = i, line, col
            while i < n and not text[i].isspace() and text[i] not in "();":
                advance()
            tokens.append(Token(text[start:i].lower(), sline, scol))
    return tokens


class _Parser:
    def __init__(self, text: str, file: str):
        self.tokens = tokenize(text)
        self.file = file
        self.pos = 0

    def _position(self, token: Token | None = None) -> tuple[int, int]:
        if token is not None:
            return token.line, token.col
        if self.pos < len(self.tokens):
            tok = self.tokens[self.pos]
            return tok.line, tok.col
        if self.tokens:
            tok = self.tokens[-1]
            return tok.line, tok.col
        return 1, 1

    def error(self, category: str, message: str, token: Token | None = None) -> ParseError:
        line, col = self._position(token)
        return ParseError(Diagnostic(self.file, line, col, category, message))

    def peek(self) -> Token | None:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def next(self) -> Token:
        tok = self.peek()
        if tok is None:
            raise self.error("syntax", "unexpected end of input")
        self.pos += 1
        return tok

    def expect(self, value: str) -> Token:
        tok = self.next()
        if tok.value != value:
            raise self.error("syntax", f"expected {value!r}, found {tok.value!r}", tok)
        return tok

    def next_name(self) -> Token:
        tok = self.next()
        if tok.value in ("(", ")"):
            raise self.error("syntax", f"expected a name, found {tok.value!r}", tok)
        return tok

    def check(self, value: str) -> bool:
        tok = self.peek()
        return tok is not None and tok.value == value

    def expect_end(self) -> None:
        tok = self.peek()
        if tok is not None:
            raise self.error("syntax", f"trailing input after closing paren: {tok.value!r}", tok)

    def typed_list(self) -> list[tuple[str, str | None, Token]]:
        """Parse names up to ')', honoring ``name ... - type`` groups."""
        out: list[tuple[str, str | None, Token]] = []
        pending: list[tuple[str, Token]] = []
        while not self.check(")"):
            tok = self.next_name()
            if tok.value == "-":
                typ = self.next_name()
                if not pending:
                    raise self.error("syntax", "dangling type marker '-'", tok)
                out.extend((name, typ.value, t) for name, t in pending)
                pending = []
            else:
                pending.append((tok.value, tok))
        out.extend((name, None, t) for name, t in pending)
        return out


def _parse_atom_sexp(p: _Parser, open_tok: Token) -> Atom:
    """Parse the remainder of '(name args...)' after the open paren."""
    name = p.next_name()
    if name.value == "=":
        raise p.error("unsupported", "equality preconditions are not supported", name)
    if name.value in _FORMULA_KEYWORDS:
        raise p.error(
            "unsupported", f"{name.value!r} is outside the positive-STRIPS fragment", name
        )
    args: list[str] = []
    while not p.check(")"):
        args.append(p.next_name().value)
    p.expect(")")
    return Atom(name.value, tuple(args))


def _parse_conjunction(p: _Parser, *, what: str) -> list[tuple[Atom, Token]]:
    """Parse '(and atoms...)' or a single atom into a list of located atoms."""
    open_tok = p.expect("(")
    if p.check("and"):
        p.next()
        atoms: list[tuple[Atom, Token]] = []
        while not p.check(")"):
            tok = p.expect("(")
            atoms.append((_parse_atom_sexp(p, tok), tok))
        p.expect(")")
        return atoms
    if p.check("not"):
        tok = p.next()
        raise p.error("unsupported", f"negative {what} is not supported", tok)
    return [(_parse_atom_sexp(p, open_tok), open_tok)]


def _parse_effect(p: _Parser) -> tuple[list[tuple[Atom, Token]], list[tuple[Atom, Token]]]:
    """Parse an effect formula into located (add, delete) atom lists."""
    adds: list[tuple[Atom, Token]] = []
    dels: list[tuple[Atom, Token]] = []

    def literal(open_tok: Token) -> None:
        if p.check("not"):
            p.next()
            tok = p.expect("(")
            dels.append((_parse_atom_sexp(p, tok), tok))
            p.expect(")")
        else:
            adds.append((_parse_atom_sexp(p, open_tok), open_tok))

    open_tok = p.expect("(")
    if p.check("and"):
        p.next()
        while not p.check(")"):
            tok = p.expect("(")
            literal(tok)
        p.expect(")")
    else:
        literal(open_tok)
    return adds, dels


def _check_schema_atom(
    p: _Parser,
    located: tuple[Atom, Token],
    predicates: dict[str, PredicateSymbol],
    parameters: tuple[str, ...],
    schema_name: str,
) -> Atom:
    a, tok = located
    sym = predicates.get(a.predicate)
    if sym is None:
        raise p.error("semantic", f"unknown predicate {a.predicate!r} in action {schema_name!r}", tok)
    if sym.arity != a.arity:
        raise p.error(
            "semantic",
            f"predicate {a.predicate!r} expects {sym.arity} arguments, got {a.arity}",
            tok,
        )
    for arg in a.args:
        if arg.startswith("?"):
            if arg not in parameters:
                raise p.error(
                    "semantic", f"unbound variable {arg!r} in action {schema_name!r}", tok
                )
        else:
            raise p.error(
                "unsupported",
                f"constant {arg!r} in action {schema_name!r}; schemas must use variables only",
                tok,
            )
    return a


def parse_domain(text: str, file: str = "<domain>") -> Domain:
    """Parse a PDDL domain into the compiled, untyped representation."""
    p = _Parser(text, file)
    p.expect("(")
    p.expect("define")
    p.expect("(")
    p.expect("domain")
    name = p.next_name().value
    p.expect(")")

    types: list[tuple[str, str]] = []
    declared: list[PredicateSymbol] = []
    declared_at: dict[str, Token] = {}
    schemas: list[ActionSchema] = []

    while not p.check(")"):
        p.expect("(")
        section = p.next_name()
        if section.value == ":requirements":
            while not p.check(")"):
                req = p.next_name()
                if req.value not in _SUPPORTED_REQUIREMENTS:
                    raise p.error("unsupported", f"requirement {req.value!r} is not supported", req)
            p.expect(")")
        elif section.value == ":types":
            for typ, parent, tok in p.typed_list():
                if typ == ROOT_TYPE:
                    continue
                types.append((typ, parent or ROOT_TYPE))
            p.expect(")")
        elif section.value == ":predicates":
            while not p.check(")"):
                tok = p.expect("(")
                pname = p.next_name()
                variables = p.typed_list()
                p.expect(")")
                for var, _, vtok in variables:
                    if not var.startswith("?"):
                        raise p.error(
                            "syntax", f"predicate argument {var!r} must be a variable", vtok
                        )
                if pname.value in declared_at:
                    raise p.error("semantic", f"duplicate predicate {pname.value!r}", pname)
                declared.append(PredicateSymbol(pname.value, len(variables)))
                declared_at[pname.value] = pname
            p.expect(")")
        elif section.value == ":action":
            schemas.append(_parse_schema(p, declared, declared_at, types))
        else:
            raise p.error("unsupported", f"section {section.value!r} is not supported", section)
    p.expect(")")
    p.expect_end()

    predicates = list(declared)
    known = {s.name for s in predicates}
    for typ in _hierarchy_names(types):
        if typ in known:
            sym = next(s for s in predicates if s.name == typ)
            if sym.arity != 1:
                tok = declared_at[typ]
                raise p.error(
                    "semantic",
                    f"type {typ!r} collides with a predicate of arity {sym.arity}",
                    tok,
                )
        else:
            predicates.append(PredicateSymbol(typ, 1))
            known.add(typ)

    domain = Domain(name, tuple(predicates), tuple(schemas), tuple(types))
    for typ, _ in types:
        try:
            domain.type_ancestors(typ)
        except ValueError as exc:
            raise p.error("semantic", str(exc)) from None
    return domain


def _hierarchy_names(types: list[tuple[str, str]]) -> list[str]:
    """All type names in declaration order, parents included, root excluded."""
    seen: list[str] = []
    for child, parent in types:
        for t in (child, parent):
            if t != ROOT_TYPE and t not in seen:
                seen.append(t)
    return seen


def _parse_schema(
    p: _Parser,
    declared: list[PredicateSymbol],
    declared_at: dict[str, Token],
    types: list[tuple[str, str]],
) -> ActionSchema:
    name = p.next_name()
    table = {s.name: s for s in declared}
    for typ in _hierarchy_names(types):
        table.setdefault(typ, PredicateSymbol(typ, 1))

    parameters: list[str] = []
    typed_pre: list[Atom] = []
    pre_atoms: list[tuple[Atom, Token]] = []
    add_atoms: list[tuple[Atom, Token]] = []
    del_atoms: list[tuple[Atom, Token]] = []

    while not p.check(")"):
        key = p.next_name()
        if key.value == ":parameters":
            p.expect("(")
            for var, typ, tok in p.typed_list():
                if not var.startswith("?"):
                    raise p.error("syntax", f"parameter {var!r} must be a variable", tok)
                if var in parameters:
                    raise p.error("semantic", f"duplicate parameter {var!r}", tok)
                parameters.append(var)
                if typ is not None and typ != ROOT_TYPE:
                    if typ not in table:
                        raise p.error("semantic", f"unknown type {typ!r}", tok)
                    typed_pre.append(Atom(typ, (var,)))
            p.expect(")")
        elif key.value == ":precondition":
            pre_atoms = _parse_conjunction(p, what="precondition")
        elif key.value == ":effect":
            add_atoms, del_atoms = _parse_effect(p)
        else:
            raise p.error("unsupported", f"action section {key.value!r} is not supported", key)
    p.expect(")")

    params = tuple(parameters)
    pre = [_check_schema_atom(p, la, table, params, name.value) for la in pre_atoms]
    add = [_check_schema_atom(p, la, table, params, name.value) for la in add_atoms]
    dele = [_check_schema_atom(p, la, table, params, name.value) for la in del_atoms]
    overlap = set(add) & set(dele)
    if overlap:
        raise p.error(
            "semantic",
            f"action {name.value!r} adds and deletes the same atom: {sorted(map(str, overlap))[0]}",
            name,
        )
    return ActionSchema(
        name.value,
        params,
        frozenset(typed_pre) | frozenset(pre),
        frozenset(add),
        frozenset(dele),
    )


def parse_instance(text: str, domain: Domain, file: str = "<instance>") -> Instance:
    """Parse a PDDL problem against ``domain``; typed objects become init atoms."""
    p = _Parser(text, file)
    p.expect("(")
    p.expect("define")
    p.expect("(")
    p.expect("problem")
    name = p.next_name().value
    p.expect(")")

    objects: list[str] = []
    typing_atoms: list[Atom] = []
    init: list[Atom] = []
    goal: list[Atom] = []
    type_table = set(_hierarchy_names(list(domain.types)))

    while not p.check(")"):
        p.expect("(")
        section = p.next_name()
        if section.value == ":domain":
            dname = p.next_name()
            if dname.value != domain.name:
                raise p.error(
                    "semantic",
                    f"instance requires domain {dname.value!r}, got {domain.name!r}",
                    dname,
                )
            p.expect(")")
        elif section.value == ":objects":
            for obj, typ, tok in p.typed_list():
                if obj.startswith("?"):
                    raise p.error("syntax", f"object {obj!r} must not be a variable", tok)
                if obj in objects:
                    raise p.error("semantic", f"duplicate object {obj!r}", tok)
                objects.append(obj)
                if typ is not None and typ != ROOT_TYPE:
                    if typ not in type_table:
                        raise p.error("semantic", f"unknown type {typ!r}", tok)
                    typing_atoms.extend(Atom(t, (obj,)) for t in domain.type_ancestors(typ))
            p.expect(")")
        elif section.value == ":init":
            while not p.check(")"):
                tok = p.expect("(")
                a = _parse_atom_sexp(p, tok)
                _check_ground_atom(p, a, tok, domain, objects, where="init")
                init.append(a)
            p.expect(")")
        elif section.value == ":goal":
            for a, tok in _parse_conjunction(p, what="goal"):
                _check_ground_atom(p, a, tok, domain, objects, where="goal")
                goal.append(a)
            p.expect(")")
        else:
            raise p.error("unsupported", f"section {section.value!r} is not supported", section)
    p.expect(")")
    p.expect_end()

    return Instance(
        name=name,
        domain=domain,
        objects=tuple(sorted(objects)),
        init=frozenset(init) | frozenset(typing_atoms),
        goal=frozenset(goal),
    )


def _check_ground_atom(
    p: _Parser, a: Atom, tok: Token, domain: Domain, objects: list[str], where: str
) -> None:
    sym = domain.predicate.get(a.predicate)
    if sym is None:
        raise p.error("semantic", f"unknown predicate {a.predicate!r} in {where}", tok)
    if sym.arity != a.arity:
        raise p.error(
            "semantic",
            f"predicate {a.predicate!r} expects {sym.arity} arguments, got {a.arity}",
            tok,
        )
    for arg in a.args:
        if arg.startswith("?"):
            raise p.error("semantic", f"variable {arg!r} not allowed in {where}", tok)
        if arg not in objects:
            raise p.error("semantic", f"undeclared object {arg!r} in {where}", tok)


def validate(domain: Domain, instance: Instance | None = None) -> list[Diagnostic]:
    """Re-check structural invariants on constructed objects.

    Collects all violations instead of raising; useful for tasks built
    programmatically rather than parsed.
    """
    out: list[Diagnostic] = []

    def err(file: str, message: str) -> None:
        out.append(Diagnostic(file, 0, 0, "semantic", message))

    seen: set[str] = set()
    for sym in domain.predicates:
        if sym.name in seen:
            err("<domain>", f"duplicate predicate {sym.name!r}")
        seen.add(sym.name)
        if sym.arity < 0:
            err("<domain>", f"predicate {sym.name!r} has negative arity")

    for schema in domain.schemas:
        if len(set(schema.parameters)) != len(schema.parameters):
            err("<domain>", f"action {schema.name!r} has duplicate parameters")
        for group, atoms in (
            ("precondition", schema.precondition),
            ("add", schema.add),
            ("delete", schema.delete),
        ):
            for a in atoms:
                sym = domain.predicate.get(a.predicate)
                if sym is None:
                    err("<domain>", f"action {schema.name!r} {group} uses unknown predicate {a.predicate!r}")
                elif sym.arity != a.arity:
                    err(
                        "<domain>",
                        f"action {schema.name!r} {group} atom {a} has arity {a.arity}, expected {sym.arity}",
                    )
                for arg in a.args:
                    if arg.startswith("?") and arg not in schema.parameters:
                        err("<domain>", f"action {schema.name!r} has unbound variable {arg!r}")
        overlap = schema.add & schema.delete
        if overlap:
            err("<domain>", f"action {schema.name!r} adds and deletes {sorted(map(str, overlap))[0]}")

    if instance is not None:
        if instance.domain != domain:
            err("<instance>", "instance was built against a different domain")
        objects = set(instance.objects)
        for where, atoms in (("init", instance.init), ("goal", instance.goal)):
            for a in atoms:
                sym = domain.predicate.get(a.predicate)
                if sym is None:
                    err("<instance>", f"unknown predicate {a.predicate!r} in {where}")
                elif sym.arity != a.arity:
                    err("<instance>", f"atom {a} in {where} has arity {a.arity}, expected {sym.arity}")
                for arg in a.args:
                    if arg not in objects:
                        err("<instance>", f"undeclared object {arg!r} in {where}")
    return out


def _format_atom_sexp(a: Atom) -> str:
    return "(" + " ".join((a.predicate,) + a.args) + ")"


def _format_conjunction(atoms: frozenset[Atom], negated: frozenset[Atom] = frozenset()) -> str:
    parts = [_format_atom_sexp(a) for a in sorted(atoms)]
    parts += ["(not " + _format_atom_sexp(a) + ")" for a in sorted(negated)]
    return "(and " + " ".join(parts) + ")"


def pretty_print_domain(domain: Domain) -> str:
    """Print the compiled domain; parsing the output reproduces it."""
    lines = [f"(define (domain {domain.name})", "  (:requirements :strips)", "  (:predicates"]
    for sym in domain.predicates:
        variables = " ".join(f"?x{i}" for i in range(sym.arity))
        lines.append(f"    ({sym.name}{' ' + variables if variables else ''})")
    lines.append("  )")
    for schema in domain.schemas:
        lines.append(f"  (:action {schema.name}")
        lines.append(f"    :parameters ({' '.join(schema.parameters)})")
        lines.append(f"    :precondition {_format_conjunction(schema.precondition)}")
        lines.append(f"    :effect {_format_conjunction(schema.add, schema.delete)}")
        lines.append("  )")
    lines.append(")")
    return "\n".join(lines) + "\n"


def pretty_print_instance(instance: Instance) -> str:
    """Print the instance in normalized untyped form; parsing reproduces it."""
    lines = [
        f"(define (problem {instance.name})",
        f"  (:domain {instance.domain.name})",
        f"  (:objects {' '.join(instance.objects)})",
        "  (:init",
    ]
    for a in sorted(instance.init):
        lines.append(f"    {_format_atom_sexp(a)}")
    lines.append("  )")
    lines.append(f"  (:goal {_format_conjunction(instance.goal)})")
    lines.append(")")
    return "\n".join(lines) + "\n"
