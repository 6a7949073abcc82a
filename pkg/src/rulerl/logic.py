"""First-order action/state language: terms, atoms, rules, parsing and grounding.

The language splits predicates into *action* predicates (rule heads) and
*state* predicates (rule bodies).  Rules are definite clauses with a single
action atom as head.  A ``GroundAtomTable`` enumerates every ground atom the
language can express and assigns each a stable index; index 0 is reserved for
falsum and index 1 for verum, which the reasoning engine relies on.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass, field

import yaml

FALSE_SYMBOL = "__false__"
TRUE_SYMBOL = "__true__"


class ParseError(ValueError):
    """Raised on malformed rule / mode / language input; carries a position."""

    def __init__(self, message: str, position: int = 0):
        super().__init__(f"{message} (at position {position})")
        self.message = message
        self.position = position


class LanguageError(ValueError):
    """Raised when a structurally valid input violates the language."""


@dataclass(frozen=True)
class Predicate:
    name: str
    kind: str  # "action" or "state"
    dtypes: tuple[str, ...]

    def __post_init__(self):
        if not self.name:
            raise LanguageError("predicate name must be nonempty")
        if self.kind not in ("action", "state", "special"):
            raise LanguageError(f"bad predicate kind {self.kind!r}")

    @property
    def arity(self) -> int:
        return len(self.dtypes)

    def __str__(self) -> str:
        return f"{self.name}/{self.arity}"


@dataclass(frozen=True)
class Constant:
    symbol: str
    dtype: str

    is_variable = False

    def __str__(self) -> str:
        return self.symbol


@dataclass(frozen=True)
class Variable:
    symbol: str
    dtype: str

    is_variable = True

    def __str__(self) -> str:
        return self.symbol


Term = Constant | Variable


def is_variable_symbol(symbol: str) -> bool:
    """Initial uppercase letter marks a variable (fixed lexical rule)."""
    return bool(symbol) and symbol[0].isupper()


@dataclass(frozen=True)
class Atom:
    predicate: Predicate
    terms: tuple[Term, ...]

    def __post_init__(self):
        if len(self.terms) != self.predicate.arity:
            raise LanguageError(
                f"{self.predicate.name} expects {self.predicate.arity} terms, "
                f"got {len(self.terms)}"
            )
        for term, dtype in zip(self.terms, self.predicate.dtypes):
            if term.dtype != dtype:
                raise LanguageError(
                    f"{self.predicate.name}: term {term} has datatype "
                    f"{term.dtype}, expected {dtype}"
                )

    @property
    def is_ground(self) -> bool:
        return all(not t.is_variable for t in self.terms)

    def variables(self) -> list[Variable]:
        return [t for t in self.terms if t.is_variable]

    def __str__(self) -> str:
        if not self.terms:
            return self.predicate.name
        args = ",".join(str(t) for t in self.terms)
        return f"{self.predicate.name}({args})"


# Sentinel atoms occupying table indices 0 and 1.
FALSE_ATOM = Atom(Predicate(FALSE_SYMBOL, "special", ()), ())
TRUE_ATOM = Atom(Predicate(TRUE_SYMBOL, "special", ()), ())


@dataclass(frozen=True)
class ActionRule:
    """Definite clause: one action atom head, state atoms in the body."""

    head: Atom
    body: tuple[Atom, ...]
    weight: float | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.head.predicate.kind != "action":
            raise LanguageError(f"head {self.head} is not an action atom")
        for atom in self.body:
            if atom.predicate.kind != "state":
                raise LanguageError(f"body atom {atom} is not a state atom")
        if len(set(self.body)) != len(self.body):
            raise LanguageError("body atoms must be pairwise distinct")
        dtypes: dict[str, str] = {}
        for atom in (self.head, *self.body):
            for var in atom.variables():
                seen = dtypes.setdefault(var.symbol, var.dtype)
                if seen != var.dtype:
                    raise LanguageError(
                        f"variable {var.symbol} used with datatypes "
                        f"{seen} and {var.dtype}"
                    )

    @property
    def is_ground(self) -> bool:
        return self.head.is_ground and all(a.is_ground for a in self.body)

    def variables(self) -> list[Variable]:
        """Variables in order of first occurrence (head first)."""
        out: list[Variable] = []
        for atom in (self.head, *self.body):
            for var in atom.variables():
                if var not in out:
                    out.append(var)
        return out

    def __str__(self) -> str:
        body = ",".join(str(a) for a in self.body)
        text = f"{self.head}:-{body}."
        if self.weight is not None:
            text = f"{self.weight:g}:{text}"
        return text


Substitution = dict[Variable, Constant]


@dataclass(frozen=True)
class ModeDeclaration:
    kind: str  # "modeh" or "modeb"
    recall: int
    predicate: Predicate
    mode_dtypes: tuple[tuple[str, str], ...]  # (placemarker, datatype)

    def __post_init__(self):
        if self.kind not in ("modeh", "modeb"):
            raise LanguageError(f"bad mode kind {self.kind}")
        if self.recall < 1:
            raise LanguageError("recall must be >= 1")
        if len(self.mode_dtypes) != self.predicate.arity:
            raise LanguageError(
                f"mode for {self.predicate.name} has "
                f"{len(self.mode_dtypes)} placemarkers, arity is "
                f"{self.predicate.arity}"
            )
        for pm, _ in self.mode_dtypes:
            if pm not in ("+", "-", "#"):
                raise LanguageError(f"bad placemarker {pm!r}")

    def __str__(self) -> str:
        args = ",".join(f"{pm}{dt}" for pm, dt in self.mode_dtypes)
        return f"{self.kind}({self.recall}, {self.predicate.name}({args}))"


class Language:
    """Finite action-state language: predicates plus constants per datatype.

    Datatype declaration order matters: it fixes the grounding enumeration
    order used by ``build_atom_table`` (earlier datatypes vary slowest).
    """

    def __init__(
        self,
        name: str,
        datatypes: dict[str, list[str]],
        predicates: list[Predicate],
        actions: list[str] | None = None,
        action_of: dict[str, str] | None = None,
        distinct_datatypes: tuple[str, ...] = ("object",),
    ):
        self.name = name
        self.datatypes = {dt: list(consts) for dt, consts in datatypes.items()}
        self.predicates = list(predicates)
        self.actions = list(actions or [])
        self.action_of = dict(action_of or {})
        self.distinct_datatypes = tuple(distinct_datatypes)
        self._pred_by_name = {}
        for pred in self.predicates:
            if pred.name in self._pred_by_name:
                raise LanguageError(f"duplicate predicate {pred.name}")
            self._pred_by_name[pred.name] = pred
        self._const_by_key = {
            (sym, dt): Constant(sym, dt)
            for dt, syms in self.datatypes.items()
            for sym in syms
        }
        for pred in self.predicates:
            for dt in pred.dtypes:
                if dt not in self.datatypes:
                    raise LanguageError(
                        f"predicate {pred.name} uses undeclared datatype {dt}"
                    )
        for pname, action in self.action_of.items():
            if action not in self.actions:
                raise LanguageError(f"{pname} maps to unknown action {action}")

    @property
    def action_predicates(self) -> list[Predicate]:
        return [p for p in self.predicates if p.kind == "action"]

    @property
    def state_predicates(self) -> list[Predicate]:
        return [p for p in self.predicates if p.kind == "state"]

    def predicate(self, name: str) -> Predicate:
        try:
            return self._pred_by_name[name]
        except KeyError:
            raise LanguageError(f"unknown predicate {name}") from None

    def has_predicate(self, name: str) -> bool:
        return name in self._pred_by_name

    def constant(self, symbol: str, dtype: str) -> Constant:
        try:
            return self._const_by_key[(symbol, dtype)]
        except KeyError:
            raise LanguageError(
                f"unknown constant {symbol} of datatype {dtype}"
            ) from None

    def constants(self, dtype: str) -> list[Constant]:
        return [Constant(s, dtype) for s in self.datatypes.get(dtype, [])]

    def datatype_precedence(self, dtype: str) -> int:
        return list(self.datatypes).index(dtype)

    @classmethod
    def from_dict(cls, cfg: dict) -> "Language":
        preds = []
        action_of = {}
        for spec in cfg["predicates"]:
            pred = Predicate(spec["name"], spec["kind"], tuple(spec["datatypes"]))
            preds.append(pred)
            if pred.kind == "action":
                action_of[pred.name] = spec["action"]
        return cls(
            name=cfg.get("name", "language"),
            datatypes=cfg["datatypes"],
            predicates=preds,
            actions=cfg.get("actions", []),
            action_of=action_of,
            distinct_datatypes=tuple(cfg.get("distinct_datatypes", ["object"])),
        )

    @classmethod
    def from_yaml(cls, path) -> "Language":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(yaml.safe_load(fh))


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------

_ATOM_RE = re.compile(r"\s*([a-zA-Z_][a-zA-Z0-9_]*)\s*(\()?")
_WEIGHT_RE = re.compile(r"\s*([0-9]*\.?[0-9]+(?:[eE][+-]?[0-9]+)?)\s*:(?!-)")


def _parse_atom(text: str, pos: int, language: Language,
                var_dtypes: dict[str, str]) -> tuple[Atom, int]:
    match = _ATOM_RE.match(text, pos)
    if not match:
        raise ParseError("expected an atom", pos)
    name = match.group(1)
    if not language.has_predicate(name):
        raise ParseError(f"unknown predicate {name}", match.start(1))
    pred = language.predicate(name)
    pos = match.end()
    terms: list[Term] = []
    if match.group(2):  # opening paren present
        while True:
            tmatch = _ATOM_RE.match(text, pos)
            if not tmatch or tmatch.group(2):
                raise ParseError("expected a term", pos)
            symbol = tmatch.group(1)
            index = len(terms)
            if index >= pred.arity:
                raise ParseError(
                    f"too many arguments for {pred.name}/{pred.arity}",
                    tmatch.start(1),
                )
            dtype = pred.dtypes[index]
            if is_variable_symbol(symbol):
                seen = var_dtypes.setdefault(symbol, dtype)
                if seen != dtype:
                    raise ParseError(
                        f"variable {symbol} used with datatypes {seen} and {dtype}",
                        tmatch.start(1),
                    )
                terms.append(Variable(symbol, dtype))
            else:
                if symbol not in language.datatypes.get(dtype, []):
                    raise ParseError(
                        f"unknown constant {symbol} of datatype {dtype}",
                        tmatch.start(1),
                    )
                terms.append(Constant(symbol, dtype))
            pos = tmatch.end()
            if pos < len(text) and text[pos] == ",":
                pos += 1
                continue
            if pos < len(text) and text[pos] == ")":
                pos += 1
                break
            raise ParseError("expected ',' or ')'", pos)
    if len(terms) != pred.arity:
        raise ParseError(
            f"arity mismatch for {pred.name}: expected {pred.arity}, got {len(terms)}",
            pos,
        )
    return Atom(pred, tuple(terms)), pos


def parse_rule(text: str, language: Language) -> ActionRule:
    """Parse one ``[weight:]head:-b1,...,bn.`` rule.

    The optional weight prefix is kept on the returned rule's ``weight``
    field (``None`` when absent).  Raises :class:`ParseError` with a position
    on any malformed or undeclared input.
    """
    weight = None
    pos = 0
    wmatch = _WEIGHT_RE.match(text)
    if wmatch:
        weight = float(wmatch.group(1))
        pos = wmatch.end()
    var_dtypes: dict[str, str] = {}
    head, pos = _parse_atom(text, pos, language, var_dtypes)
    if head.predicate.kind != "action":
        raise ParseError(f"head predicate {head.predicate.name} is not an action predicate", 0)
    if not text[pos:].lstrip().startswith(":-"):
        raise ParseError("expected ':-' after head", pos)
    pos = text.index(":-", pos) + 2
    body: list[Atom] = []
    rest = text[pos:].strip()
    if rest != ".":
        while True:
            atom, pos = _parse_atom(text, pos, language, var_dtypes)
            if atom.predicate.kind != "state":
                raise ParseError(f"body atom {atom} is not a state atom", pos)
            body.append(atom)
            tail = text[pos:].lstrip()
            pos = len(text) - len(tail)
            if tail.startswith(","):
                pos += 1
                continue
            if tail.startswith("."):
                pos += 1
                break
            raise ParseError("expected ',' or '.'", pos)
    else:
        pos = len(text)
    trailing = text[pos:].strip()
    if trailing:
        raise ParseError(f"unexpected trailing input {trailing!r}", pos)
    try:
        return ActionRule(head, tuple(body), weight=weight)
    except LanguageError as exc:
        raise ParseError(str(exc)) from exc


def parse_rules(text: str, language: Language) -> list[ActionRule]:
    """Parse a rule file: one rule per line, ``#`` comments and blanks allowed."""
    rules = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        try:
            rules.append(parse_rule(stripped, language))
        except ParseError as exc:
            raise ParseError(f"line {lineno}: {exc.message}", exc.position) from exc
    return rules


def rules_to_text(rules: list[ActionRule]) -> str:
    return "\n".join(str(r) for r in rules) + "\n"


_MODE_RE = re.compile(
    r"\s*(modeh|modeb)\s*\(\s*(-?\d+)\s*,\s*([a-zA-Z_][a-zA-Z0-9_]*)\s*\(([^()]*)\)\s*\)\s*\.?\s*$"
)


def parse_mode_declarations(text: str, language: Language) -> list[ModeDeclaration]:
    """Parse a mode file: one ``modeb(r, p(pm dt, ...))`` declaration per line.

    Since ``#`` is the constant placemarker, only whole-line comments are
    recognized here.
    """
    modes = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        match = _MODE_RE.match(stripped)
        if not match:
            raise ParseError(f"line {lineno}: malformed mode declaration", 0)
        kind, recall_s, pname, args = match.groups()
        recall = int(recall_s)
        if recall < 1:
            raise ParseError(f"line {lineno}: recall must be >= 1", 0)
        if not language.has_predicate(pname):
            raise ParseError(f"line {lineno}: unknown predicate {pname}", 0)
        pred = language.predicate(pname)
        mode_dtypes = []
        for part in args.split(","):
            part = part.strip()
            if not part or part[0] not in "+-#":
                raise ParseError(f"line {lineno}: malformed placemarker {part!r}", 0)
            pm, dtype = part[0], part[1:].strip()
            if dtype not in language.datatypes:
                raise ParseError(f"line {lineno}: unknown datatype {dtype}", 0)
            mode_dtypes.append((pm, dtype))
        try:
            modes.append(ModeDeclaration(kind, recall, pred, tuple(mode_dtypes)))
        except LanguageError as exc:
            raise ParseError(f"line {lineno}: {exc}", 0) from exc
    return modes


# ---------------------------------------------------------------------------
# Grounding
# ---------------------------------------------------------------------------

def canonicalize(rule: ActionRule) -> ActionRule:
    """Rename variables to O1, O2, ... in order of first occurrence.

    Makes alpha-equivalent rules structurally equal so refinement can
    deduplicate them.
    """
    renaming: dict[Variable, Variable] = {}
    for i, var in enumerate(rule.variables(), start=1):
        renaming[var] = Variable(f"O{i}", var.dtype)

    def rename(atom: Atom) -> Atom:
        return Atom(
            atom.predicate,
            tuple(renaming.get(t, t) if t.is_variable else t for t in atom.terms),
        )

    return ActionRule(rename(rule.head), tuple(rename(a) for a in rule.body),
                      weight=rule.weight)


def canonical_key(rule: ActionRule) -> str:
    """Alpha-equivalence key that also ignores body-atom order.

    The exact form is the lexicographically smallest canonicalized rule
    string over all body permutations; bodies too long for that fall back
    to a sort-then-rename heuristic.
    """
    body = list(rule.body)
    if len(body) <= 7:
        return min(
            str(canonicalize(ActionRule(rule.head, perm)))
            for perm in itertools.permutations(body)
        )
    ordered = canonicalize(rule)
    ordered = ActionRule(ordered.head, tuple(sorted(ordered.body, key=str)))
    return str(canonicalize(ordered))


def enumerate_substitutions(
    rule: ActionRule,
    language: Language,
    distinct_objects: bool = True,
) -> list[Substitution]:
    """Every datatype-consistent assignment of constants to the rule's variables.

    Order is deterministic: variables in first-occurrence order, constants in
    declaration order, enumerated as a standard cross product.  With
    ``distinct_objects`` (default), two different variables of a datatype in
    ``language.distinct_datatypes`` never share a constant.
    """
    variables = rule.variables()
    if not variables:
        return [{}]
    pools = [language.constants(v.dtype) for v in variables]
    subs = []
    for combo in itertools.product(*pools):
        if distinct_objects:
            picked: dict[str, set[str]] = {}
            ok = True
            for var, const in zip(variables, combo):
                if var.dtype in language.distinct_datatypes:
                    used = picked.setdefault(var.dtype, set())
                    if const.symbol in used:
                        ok = False
                        break
                    used.add(const.symbol)
            if not ok:
                continue
        subs.append(dict(zip(variables, combo)))
    return subs


def substitute(atom: Atom, sub: Substitution) -> Atom:
    terms = []
    for term in atom.terms:
        if term.is_variable:
            if term not in sub:
                raise LanguageError(f"unbound variable {term} in {atom}")
            terms.append(sub[term])
        else:
            terms.append(term)
    return Atom(atom.predicate, tuple(terms))


def ground_rule(rule: ActionRule, sub: Substitution) -> ActionRule:
    """Apply a substitution binding every variable of the rule."""
    head = substitute(rule.head, sub)
    # Grounding may collapse distinct body atoms onto one; keep first occurrence.
    body: list[Atom] = []
    for atom in rule.body:
        ground = substitute(atom, sub)
        if ground not in body:
            body.append(ground)
    return ActionRule(head, tuple(body), weight=rule.weight)


class GroundAtomTable:
    """Ordered universe of ground atoms; index 0 is falsum, index 1 verum.

    Ordering: falsum, verum, then action atoms, then state atoms.  Within
    each block predicates follow language declaration order; within a
    predicate, groundings are enumerated with argument positions ordered by
    datatype precedence (earlier-declared datatypes vary slowest, ties broken
    by position).  This reproduces the published worked example of the index
    tensor encoding.
    """

    def __init__(self, atoms: list[Atom], n_action: int, language: Language):
        self.atoms = list(atoms)
        self.language = language
        self.n_action = n_action
        self.action_start = 2
        self.state_start = 2 + n_action
        self._index = {}
        for i, atom in enumerate(self.atoms):
            if atom in self._index:
                raise LanguageError(f"duplicate ground atom {atom}")
            self._index[atom] = i

    def __len__(self) -> int:
        return len(self.atoms)

    @property
    def g(self) -> int:
        return len(self.atoms)

    @property
    def g_action(self) -> int:
        return self.n_action

    def index(self, atom: Atom) -> int:
        try:
            return self._index[atom]
        except KeyError:
            raise LanguageError(f"atom {atom} not in ground-atom table") from None

    def __contains__(self, atom: Atom) -> bool:
        return atom in self._index

    def action_atoms(self) -> list[Atom]:
        return self.atoms[self.action_start:self.state_start]

    def state_atoms(self) -> list[Atom]:
        return self.atoms[self.state_start:]


def _predicate_groundings(pred: Predicate, language: Language,
                          distinct_objects: bool) -> list[Atom]:
    positions = sorted(
        range(pred.arity),
        key=lambda i: (language.datatype_precedence(pred.dtypes[i]), i),
    )
    pools = [language.constants(pred.dtypes[i]) for i in positions]
    atoms = []
    for combo in itertools.product(*pools):
        terms: list[Constant | None] = [None] * pred.arity
        for pos, const in zip(positions, combo):
            terms[pos] = const
        if distinct_objects:
            seen: dict[str, set[str]] = {}
            ok = True
            for term in terms:
                if term.dtype in language.distinct_datatypes:
                    used = seen.setdefault(term.dtype, set())
                    if term.symbol in used:
                        ok = False
                        break
                    used.add(term.symbol)
            if not ok:
                continue
        atoms.append(Atom(pred, tuple(terms)))
    return atoms


def build_atom_table(
    language: Language,
    distinct_objects: bool = True,
    max_atoms: int = 100_000,
) -> GroundAtomTable:
    """Enumerate the full ground-atom universe of the language.

    Deterministic and stable across runs; errors out if the universe would
    exceed ``max_atoms``.
    """
    atoms: list[Atom] = [FALSE_ATOM, TRUE_ATOM]
    n_action = 0
    for pred in language.action_predicates:
        ground = _predicate_groundings(pred, language, distinct_objects)
        atoms.extend(ground)
        n_action += len(ground)
    for pred in language.state_predicates:
        atoms.extend(_predicate_groundings(pred, language, distinct_objects))
    if len(atoms) > max_atoms:
        raise LanguageError(
            f"ground-atom universe has {len(atoms)} atoms, exceeding the "
            f"cap of {max_atoms}"
        )
    return GroundAtomTable(atoms, n_action, language)
