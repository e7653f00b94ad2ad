"""Context-free grammars for pipeline configuration spaces.

A grammar file holds one rule per line::

    PIPE := SCALE CLF
    SCALE := "minmax" | "std"
    CLF := "sgd" ALPHA
    ALPHA := range(1e-7, 1e-1, log, 3)

Quoted tokens are terminals, bare upper-case tokens are non-terminals and
``range(low, high, uniform|log[, count][, int])`` stands for a hyperparameter
interval that :func:`expand_ranges` turns into a list of terminal values.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterator, Sequence

NONTERMINAL_RE = re.compile(r"[A-Z][A-Z0-9_]*\Z")


class GrammarError(ValueError):
    """Raised for malformed or inconsistent grammars."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        if line is not None:
            message = f"line {line}, column {column or 1}: {message}"
        super().__init__(message)


class DerivationError(ValueError):
    pass


@dataclass(frozen=True)
class Symbol:
    name: str
    terminal: bool

    def __str__(self) -> str:
        return f'"{self.name}"' if self.terminal else self.name


def T(name: str) -> Symbol:
    return Symbol(name, True)


def N(name: str) -> Symbol:
    return Symbol(name, False)


@dataclass(frozen=True)
class RangeSpec:
    low: float
    high: float
    scale: str = "uniform"
    count: int | None = None
    integer: bool = False
    # source text of the endpoints; kept so that "32768" does not become "32768.0"
    low_text: str | None = None
    high_text: str | None = None

    def __post_init__(self):
        if self.scale not in ("uniform", "log"):
            raise GrammarError(f"unknown range scale {self.scale!r}")
        if not self.low < self.high:
            raise GrammarError(f"invalid range: low {self.low} >= high {self.high}")
        if self.scale == "log" and self.low <= 0:
            raise GrammarError(f"invalid log range: low {self.low} <= 0")
        if self.count is not None and self.count < 1:
            raise GrammarError(f"range count must be positive, got {self.count}")

    def __str__(self) -> str:
        parts = [self.low_text or repr(self.low), self.high_text or repr(self.high), self.scale]
        if self.count is not None:
            parts.append(str(self.count))
        if self.integer:
            parts.append("int")
        return f"range({', '.join(parts)})"


Alternative = tuple  # tuple[Symbol, ...] or a 1-tuple holding a RangeSpec


@dataclass(frozen=True)
class Rule:
    lhs: str
    alternatives: tuple[Alternative, ...]

    def __post_init__(self):
        if not self.alternatives:
            raise GrammarError(f"rule {self.lhs} has no alternatives")
        for alt in self.alternatives:
            if not alt:
                raise GrammarError(f"rule {self.lhs} has an empty alternative")


@dataclass(frozen=True)
class Grammar:
    start: str
    rules: dict[str, Rule] = field(hash=False)

    def __post_init__(self):
        validate(self)

    def alternatives(self, name: str) -> tuple[Alternative, ...]:
        return self.rules[name].alternatives

    @cached_property
    def counts(self) -> dict[str, int]:
        return production_counts(self)

    @property
    def expanded(self) -> bool:
        return not any(
            isinstance(sym, RangeSpec) for rule in self.rules.values() for alt in rule.alternatives for sym in alt
        )

    def __str__(self) -> str:
        lines = []
        if self.start != next(iter(self.rules)):
            lines.append(f"%start {self.start}")
        for rule in self.rules.values():
            alts = " | ".join(" ".join(str(s) for s in alt) for alt in rule.alternatives)
            lines.append(f"{rule.lhs} := {alts}")
        return "\n".join(lines) + "\n"


def validate(g: Grammar) -> None:
    """Check start symbol, undefined references, reachability and recursion."""
    if g.start not in g.rules:
        raise GrammarError(f"undefined non-terminal {g.start}")
    for rule in g.rules.values():
        for alt in rule.alternatives:
            for sym in alt:
                if isinstance(sym, Symbol) and not sym.terminal and sym.name not in g.rules:
                    raise GrammarError(f"undefined non-terminal {sym.name}")
                if isinstance(sym, RangeSpec) and len(alt) != 1:
                    raise GrammarError(f"range must be a whole alternative in rule {rule.lhs}")

    seen = {g.start}
    stack = [g.start]
    while stack:
        for name in _references(g.rules[stack.pop()]):
            if name not in seen:
                seen.add(name)
                stack.append(name)
    unreachable = [name for name in g.rules if name not in seen]
    if unreachable:
        raise GrammarError(f"unreachable rule {unreachable[0]}")

    # iterative DFS colouring, so deep chains do not hit the recursion limit
    state: dict[str, int] = {}
    for top in g.rules:
        if state.get(top):
            continue
        state[top] = 1
        stack2 = [(top, iter(_references(g.rules[top])))]
        while stack2:
            name, refs = stack2[-1]
            nxt = next(refs, None)
            if nxt is None:
                state[name] = 2
                stack2.pop()
            elif state.get(nxt) == 1:
                raise GrammarError(f"recursive grammar: {nxt} derives itself")
            elif not state.get(nxt):
                state[nxt] = 1
                stack2.append((nxt, iter(_references(g.rules[nxt]))))


def _references(rule: Rule) -> list[str]:
    out = []
    for alt in rule.alternatives:
        for sym in alt:
            if isinstance(sym, Symbol) and not sym.terminal and sym.name not in out:
                out.append(sym.name)
    return out


# --------------------------------------------------------------------- parsing

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<comment>\#.*)
  | (?P<define>:=)
  | (?P<bar>\|)
  | (?P<string>"(?:[^"\\]|\\.)*")
  | (?P<range>range\s*\([^)]*\))
  | (?P<word>[^\s|"#]+)
    """,
    re.VERBOSE,
)


def _tokenize(line: str, lineno: int) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(line):
        m = _TOKEN_RE.match(line, pos)
        if m is None:
            what = "unterminated string" if line[pos] == '"' else f"unexpected character {line[pos]!r}"
            raise GrammarError(what, lineno, pos + 1)
        kind = m.lastgroup
        if kind not in ("ws", "comment"):
            tokens.append((kind, m.group(), pos + 1))
        pos = m.end()
    return tokens


def _parse_range(text: str, lineno: int, col: int) -> RangeSpec:
    inner = text[text.index("(") + 1 : -1]
    args = [a.strip() for a in inner.split(",")]
    if len(args) < 3 or len(args) > 5:
        raise GrammarError(f"range expects 3 to 5 arguments, got {len(args)}", lineno, col)
    try:
        low, high = float(args[0]), float(args[1])
    except ValueError:
        raise GrammarError(f"range bounds must be numbers: {text}", lineno, col) from None
    scale = args[2]
    count = None
    integer = False
    for extra in args[3:]:
        if extra == "int":
            integer = True
        elif extra.isdigit() and count is None and not integer:
            count = int(extra)
        else:
            raise GrammarError(f"bad range argument {extra!r}", lineno, col)
    try:
        return RangeSpec(low, high, scale, count, integer, args[0], args[1])
    except GrammarError as exc:
        raise GrammarError(str(exc), lineno, col) from None


def parse_grammar(text: str) -> Grammar:
    """Parse grammar source into an (unexpanded) :class:`Grammar`."""
    if not text or not text.strip():
        raise GrammarError("empty grammar")
    rules: dict[str, Rule] = {}
    start = None
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        if stripped.startswith("%start"):
            parts = stripped.split()
            if len(parts) != 2 or not NONTERMINAL_RE.match(parts[1]):
                raise GrammarError("malformed %start directive", lineno, 1)
            start = parts[1]
            continue
        tokens = _tokenize(line, lineno)
        if not tokens:
            continue
        if len(tokens) < 2 or tokens[0][0] != "word" or tokens[1][0] != "define":
            raise GrammarError("expected 'NAME :='", lineno, tokens[0][2])
        lhs = tokens[0][1]
        if not NONTERMINAL_RE.match(lhs):
            raise GrammarError(f"invalid non-terminal name {lhs!r}", lineno, tokens[0][2])
        if lhs in rules:
            raise GrammarError(f"duplicate rule for {lhs}", lineno, tokens[0][2])

        alternatives = []
        current: list = []
        col = tokens[1][2]
        for kind, value, col in tokens[2:] + [("bar", "|", len(line) + 1)]:
            if kind == "bar":
                if not current:
                    raise GrammarError(f"empty alternative in rule {lhs}", lineno, col)
                if any(isinstance(s, RangeSpec) for s in current) and len(current) > 1:
                    raise GrammarError("range must be a whole alternative", lineno, col)
                alternatives.append(tuple(current))
                current = []
            elif kind == "string":
                current.append(T(_unescape(value[1:-1])))
            elif kind == "range":
                current.append(_parse_range(value, lineno, col))
            elif kind == "word":
                if not NONTERMINAL_RE.match(value):
                    raise GrammarError(f"invalid symbol {value!r} (quote terminals)", lineno, col)
                current.append(N(value))
            else:
                raise GrammarError(f"unexpected {value!r}", lineno, col)
        rules[lhs] = Rule(lhs, tuple(alternatives))

    if not rules:
        raise GrammarError("grammar has no rules")
    return Grammar(start or next(iter(rules)), rules)


def _unescape(s: str) -> str:
    return re.sub(r"\\(.)", r"\1", s)


def load_grammar(path, default_count: int = 3, seed: int = 0) -> Grammar:
    with open(path, encoding="utf-8") as fh:
        return expand_ranges(parse_grammar(fh.read()), default_count, seed)


# ------------------------------------------------------------------- expansion


def _fmt(value: float) -> str:
    # 12 significant digits hide float noise such as 0.30000000000000004
    return repr(float(f"{value:.12g}"))


def _round_half_down(x: float) -> int:
    return math.ceil(x - 0.5)


def range_values(spec: RangeSpec, default_count: int = 3) -> list[str]:
    """Deterministic grid of terminal values for one hyperparameter range."""
    n = spec.count if spec.count is not None else default_count
    if n == 1:
        points = [spec.low]
    elif spec.scale == "uniform":
        points = [spec.low + (spec.high - spec.low) * i / (n - 1) for i in range(n)]
    else:
        ratio = spec.high / spec.low
        points = [spec.low * ratio ** (i / (n - 1)) for i in range(n)]

    if spec.integer:
        out: list[str] = []
        for p in points:
            s = str(_round_half_down(p))
            if s not in out:
                out.append(s)
        return out

    out = [_fmt(p) for p in points]
    out[0] = spec.low_text or out[0]
    if n > 1:
        out[-1] = spec.high_text or out[-1]
    return out


def expand_ranges(g: Grammar, default_count: int = 3, seed: int = 0) -> Grammar:
    """Replace every range alternative with terminal alternatives.

    ``seed`` is accepted for a stochastic sampling mode; the grid used here
    does not consume it.
    """
    if default_count < 2:
        raise GrammarError(f"default_count must be >= 2, got {default_count}")
    rules = {}
    for name, rule in g.rules.items():
        alts = []
        for alt in rule.alternatives:
            if len(alt) == 1 and isinstance(alt[0], RangeSpec):
                alts.extend((T(v),) for v in range_values(alt[0], default_count))
            else:
                alts.append(alt)
        rules[name] = Rule(name, tuple(alts))
    return Grammar(g.start, rules)


# ------------------------------------------------------------------ derivation


@dataclass(frozen=True)
class DerivationState:
    """A leftmost partial derivation.

    ``paths`` runs parallel to ``sentential_form``: for every symbol it holds
    the chain of ``NAME[alt]`` steps that produced it.
    """

    sentential_form: tuple[Symbol, ...]
    trace: tuple[tuple[str, int], ...] = ()
    paths: tuple[str, ...] = ()

    @property
    def complete(self) -> bool:
        return self.leftmost() is None

    def leftmost(self) -> int | None:
        for i, sym in enumerate(self.sentential_form):
            if not sym.terminal:
                return i
        return None

    def __str__(self) -> str:
        return " ".join(str(s) for s in self.sentential_form)


def start_state(g: Grammar) -> DerivationState:
    return DerivationState((N(g.start),), (), ("",))


def apply_rule(s: DerivationState, alt_index: int, g: Grammar) -> DerivationState:
    i = s.leftmost()
    if i is None:
        raise DerivationError("state already complete")
    name = s.sentential_form[i].name
    alts = g.alternatives(name)
    if not 0 <= alt_index < len(alts):
        raise DerivationError(f"alternative index {alt_index} out of range for {name} ({len(alts)} alternatives)")
    alt = alts[alt_index]
    if isinstance(alt[0], RangeSpec):
        raise DerivationError("grammar has unexpanded ranges")
    prefix = s.paths[i]
    step = f"{prefix}/{name}[{alt_index}]" if prefix else f"{name}[{alt_index}]"
    return DerivationState(
        s.sentential_form[:i] + alt + s.sentential_form[i + 1 :],
        s.trace + ((name, alt_index),),
        s.paths[:i] + (step,) * len(alt) + s.paths[i + 1 :],
    )


def applicable_alternatives(s: DerivationState, g: Grammar) -> int:
    i = s.leftmost()
    if i is None:
        return 0
    return len(g.alternatives(s.sentential_form[i].name))


def replay(trace: Sequence[tuple[str, int]], g: Grammar) -> DerivationState:
    state = start_state(g)
    for name, idx in trace:
        lead = state.leftmost()
        if lead is None or state.sentential_form[lead].name != name:
            raise DerivationError(f"trace step {name}[{idx}] does not match state {state}")
        state = apply_rule(state, idx, g)
    return state


@dataclass(frozen=True)
class PipelineConfig:
    terminals: tuple[str, ...]
    structured: tuple[tuple[str, str], ...]

    @property
    def canonical_key(self) -> str:
        return " ".join(self.terminals)

    def as_dict(self) -> dict[str, str]:
        return dict(self.structured)


def to_config(s: DerivationState) -> PipelineConfig:
    if not s.complete:
        raise DerivationError("state is incomplete")
    terminals = tuple(sym.name for sym in s.sentential_form)
    return PipelineConfig(terminals, tuple(zip(s.paths, terminals)))


# ----------------------------------------------------------------- enumeration


def production_counts(g: Grammar) -> dict[str, int]:
    """Number of complete derivations of every non-terminal."""
    validate(g)
    if not g.expanded:
        raise GrammarError("counting productions needs an expanded grammar")
    counts: dict[str, int] = {}

    def count(name: str) -> int:
        if name not in counts:
            total = 0
            for alt in g.alternatives(name):
                prod = 1
                for sym in alt:
                    if not sym.terminal:
                        prod *= count(sym.name)
                total += prod
            counts[name] = total
        return counts[name]

    # post-order over the acyclic reference graph keeps recursion depth small
    for name in reversed(list(g.rules)):
        count(name)
    return counts


def count_productions(g: Grammar) -> int:
    """Exact number of complete leftmost derivations."""
    return production_counts(g)[g.start]


def count_productions_from(s: DerivationState, g: Grammar) -> int:
    counts = g.counts
    total = 1
    for sym in s.sentential_form:
        if not sym.terminal:
            total *= counts[sym.name]
    return total


def enumerate_productions(g: Grammar) -> Iterator[DerivationState]:
    """Yield every complete derivation in lowest-alternative-first order."""
    stack = [start_state(g)]
    while stack:
        state = stack.pop()
        n = applicable_alternatives(state, g)
        if n == 0:
            yield state
            continue
        for i in reversed(range(n)):
            stack.append(apply_rule(state, i, g))
