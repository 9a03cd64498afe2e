"""Signatures, states, locations, update sets, and the firing of updates.

A state maps locations (function name plus argument tuple) to values;
anything never written reads as `undef`. Firing a consistent update set
produces a fresh state in which exactly the updated locations changed —
every other location keeps its previous value.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterable, List, Optional, Tuple

from .errors import ArityMismatch, InconsistentUpdateSet, KindViolation, UnknownFunction
from .values import UNDEF, SetV, Value, encode_value, show_value, value_key


class FunctionKind(Enum):
    STATIC = "static"
    CONTROLLED = "controlled"
    MONITORED = "monitored"
    ABSTRACT = "abstract"


@dataclass(frozen=True)
class FuncDecl:
    name: str
    arity: int
    kind: FunctionKind
    codomain: Optional[SetV] = None  # hint for abstract functions
    auto: bool = field(default=False, compare=False)  # implicitly declared (e.g. self)


@dataclass(frozen=True)
class Signature:
    entries: Tuple[FuncDecl, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "_by_name", {d.name: d for d in self.entries})

    def get(self, name: str) -> Optional[FuncDecl]:
        return self._by_name.get(name)

    def __contains__(self, name: str) -> bool:
        return name in self._by_name

    def names(self) -> List[str]:
        return [d.name for d in self.entries]

    def of_kind(self, kind: FunctionKind) -> List[FuncDecl]:
        return [d for d in self.entries if d.kind == kind]


@dataclass(frozen=True)
class Location:
    fname: str
    args: Tuple[Value, ...] = ()

    def key(self) -> tuple:
        return (self.fname, tuple(value_key(a) for a in self.args))

    def show(self) -> str:
        if not self.args:
            return self.fname
        return f"{self.fname}({', '.join(show_value(a) for a in self.args)})"


@dataclass(frozen=True)
class Update:
    loc: Location
    val: Value


@dataclass(frozen=True)
class UpdateSet:
    updates: frozenset

    @staticmethod
    def of(items: Iterable[Update]) -> "UpdateSet":
        return UpdateSet(frozenset(items))

    @staticmethod
    def empty() -> "UpdateSet":
        return _EMPTY

    def union(self, other: "UpdateSet") -> "UpdateSet":
        return UpdateSet(self.updates | other.updates)

    def __len__(self) -> int:
        return len(self.updates)

    def __iter__(self):
        return iter(sorted(self.updates, key=lambda u: (u.loc.key(), value_key(u.val))))

    def locations(self) -> set:
        return {u.loc for u in self.updates}


_EMPTY = UpdateSet(frozenset())


class State:
    """A signature plus finite content; unwritten dynamic locations read undef.

    Instances are treated as immutable: `fire`, `with_content`, and the
    monitored-injection helpers all return fresh states.
    """

    __slots__ = ("sig", "content", "statics")

    def __init__(
        self,
        sig: Signature,
        content: Optional[Dict[Location, Value]] = None,
        statics: Optional[Dict[Location, Value]] = None,
    ) -> None:
        self.sig = sig
        # A location holding undef is indistinguishable from an absent one,
        # so normalize away explicit undef entries.
        self.content: Dict[Location, Value] = {
            k: v for k, v in (content or {}).items() if v is not UNDEF
        }
        self.statics: Dict[Location, Value] = {
            k: v for k, v in (statics or {}).items() if v is not UNDEF
        }

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, State):
            return NotImplemented
        return (
            self.sig == other.sig
            and self.content == other.content
            and self.statics == other.statics
        )

    def __repr__(self) -> str:
        pairs = ", ".join(
            f"{loc.show()}={show_value(v)}"
            for loc, v in sorted(self.content.items(), key=lambda kv: kv[0].key())
        )
        return f"State({pairs})"

    def with_content(self, extra: Dict[Location, Value]) -> "State":
        merged = dict(self.content)
        merged.update(extra)
        return State(self.sig, merged, self.statics)

    def static_value(self, loc: Location) -> Value:
        return self.statics.get(loc, UNDEF)


def _check_loc(sig: Signature, loc: Location) -> FuncDecl:
    decl = sig.get(loc.fname)
    if decl is None:
        raise UnknownFunction(f"unknown function {loc.fname!r}")
    if decl.arity != len(loc.args):
        raise ArityMismatch(
            f"{loc.fname!r} has arity {decl.arity}, got {len(loc.args)} argument(s)"
        )
    return decl


def lookup(state: State, loc: Location) -> Value:
    """Read a controlled or monitored location; absent locations read undef."""
    decl = _check_loc(state.sig, loc)
    if decl.kind not in (FunctionKind.CONTROLLED, FunctionKind.MONITORED):
        raise KindViolation(f"{loc.fname!r} is {decl.kind.value}, not a dynamic location")
    return state.content.get(loc, UNDEF)


def conflicts(us: UpdateSet) -> List[Tuple[Location, set]]:
    """Locations assigned two or more distinct values, with those values."""
    seen: Dict[Location, set] = {}
    for u in us.updates:
        seen.setdefault(u.loc, set()).add(u.val)
    out = [(loc, vals) for loc, vals in seen.items() if len(vals) > 1]
    out.sort(key=lambda kv: kv[0].key())
    return out


def fire(state: State, us: UpdateSet) -> State:
    """Apply a consistent update set; untouched locations keep their values."""
    clashes = conflicts(us)
    if clashes:
        raise InconsistentUpdateSet(clashes)
    for u in us.updates:
        decl = _check_loc(state.sig, u.loc)
        if decl.kind != FunctionKind.CONTROLLED:
            raise KindViolation(f"cannot update {u.loc.fname!r}: kind is {decl.kind.value}")
    new_content = dict(state.content)
    for u in us.updates:
        new_content[u.loc] = u.val
    return State(state.sig, new_content, state.statics)


def _canonical_pairs(content: Dict[Location, Value]) -> list:
    items = []
    for loc, v in content.items():
        if v is UNDEF:
            continue  # an explicit undef write is indistinguishable from absence
        items.append([loc.fname, [encode_value(a) for a in loc.args], encode_value(v)])
    items.sort(key=json.dumps)
    return items


def state_digest(state: State) -> str:
    """Stable hash of the sorted (location, value) content list."""
    blob = json.dumps(_canonical_pairs(state.content), separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def controlled_digest(state: State) -> str:
    """Digest over controlled content only; monitored input is excluded."""
    controlled = {
        loc: v
        for loc, v in state.content.items()
        if state.sig.get(loc.fname) is not None
        and state.sig.get(loc.fname).kind == FunctionKind.CONTROLLED
    }
    blob = json.dumps(_canonical_pairs(controlled), separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]
