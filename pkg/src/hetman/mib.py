"""Virtual management database: object identifiers, typed values, stores.

Agents hold one store per simulated network; the manager walks and caches
them through the gateway. Values are immutable and carry their own range
checks so wire codecs and engines can trust anything they are handed.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterator, Optional

U32_MAX = 2**32 - 1
I64_MIN = -(2**63)
I64_MAX = 2**63 - 1
OCTETS_MAX = 65535


class MibError(Exception):
    """Base for all store and value errors."""


class OidParseError(MibError):
    def __init__(self, text: str, reason: str):
        super().__init__(f"bad oid {text!r}: {reason}")
        self.text = text
        self.reason = reason


class ValueParseError(MibError):
    def __init__(self, text: str, reason: str):
        super().__init__(f"bad value {text!r}: {reason}")
        self.text = text
        self.reason = reason


class DuplicateOid(MibError):
    pass


class DuplicateName(MibError):
    pass


class NoSuchObject(MibError):
    pass


class NoSuchValue(MibError):
    pass


class ReadOnly(MibError):
    pass


class WrongType(MibError):
    pass


class EndOfMib(MibError):
    pass


@dataclass(frozen=True, order=True)
class Oid:
    """Dotted object identifier; ordering is component-wise, prefix-first."""

    arcs: tuple[int, ...]

    def __post_init__(self):
        if not self.arcs:
            raise OidParseError("", "empty")
        for arc in self.arcs:
            if not isinstance(arc, int) or arc < 0 or arc > U32_MAX:
                raise OidParseError(str(self.arcs), "arc out of range")

    def text(self) -> str:
        return ".".join(str(a) for a in self.arcs)

    def child(self, *extra: int) -> "Oid":
        return Oid(self.arcs + tuple(extra))

    def is_prefix_of(self, other: "Oid") -> bool:
        return other.arcs[: len(self.arcs)] == self.arcs

    def __str__(self) -> str:
        return self.text()


def oid_parse(text: str) -> Oid:
    if text == "":
        raise OidParseError(text, "empty")
    arcs = []
    for part in text.split("."):
        if part == "":
            raise OidParseError(text, "empty arc")
        if not part.isdigit():
            raise OidParseError(text, "non-digit arc")
        arc = int(part)
        if arc > U32_MAX:
            raise OidParseError(text, "arc out of range")
        arcs.append(arc)
    return Oid(tuple(arcs))


def oid_compare(a: Oid, b: Oid) -> int:
    if a.arcs < b.arcs:
        return -1
    if a.arcs > b.arcs:
        return 1
    return 0


class ObjectValue:
    """Base of the six wire value kinds. Subclasses are frozen dataclasses."""

    kind: str = "?"

    def canonical(self) -> str:
        raise NotImplementedError


@dataclass(frozen=True)
class IntegerVal(ObjectValue):
    value: int
    kind = "i"

    def __post_init__(self):
        if not (I64_MIN <= self.value <= I64_MAX):
            raise WrongType(f"integer out of signed 64-bit range: {self.value}")

    def canonical(self) -> str:
        return f"i:{self.value}"


@dataclass(frozen=True)
class CounterVal(ObjectValue):
    value: int
    kind = "c"

    def __post_init__(self):
        if not (0 <= self.value <= U32_MAX):
            raise WrongType(f"counter out of unsigned 32-bit range: {self.value}")

    def plus(self, delta: int) -> "CounterVal":
        # Counters wrap modulo 2^32.
        return CounterVal((self.value + delta) % (U32_MAX + 1))

    def canonical(self) -> str:
        return f"c:{self.value}"


@dataclass(frozen=True)
class GaugeVal(ObjectValue):
    value: int
    kind = "g"

    def __post_init__(self):
        if not (0 <= self.value <= U32_MAX):
            raise WrongType(f"gauge out of unsigned 32-bit range: {self.value}")

    def plus(self, delta: int) -> "GaugeVal":
        # Gauges clamp at the range ends instead of wrapping.
        return GaugeVal(min(U32_MAX, max(0, self.value + delta)))

    def canonical(self) -> str:
        return f"g:{self.value}"


@dataclass(frozen=True)
class OctetsVal(ObjectValue):
    data: bytes
    kind = "s"

    def __post_init__(self):
        if len(self.data) > OCTETS_MAX:
            raise WrongType(f"octets longer than {OCTETS_MAX}")

    @classmethod
    def of_text(cls, text: str) -> "OctetsVal":
        return cls(text.encode("utf-8"))

    def text(self) -> str:
        return self.data.decode("utf-8", errors="replace")

    def canonical(self) -> str:
        return "s:" + self.data.hex()


@dataclass(frozen=True)
class OidVal(ObjectValue):
    oid: Oid
    kind = "o"

    def canonical(self) -> str:
        return "o:" + self.oid.text()


@dataclass(frozen=True)
class TimeTicksVal(ObjectValue):
    # Hundredths of a second, unsigned 32-bit.
    value: int
    kind = "t"

    def __post_init__(self):
        if not (0 <= self.value <= U32_MAX):
            raise WrongType(f"timeticks out of unsigned 32-bit range: {self.value}")

    def canonical(self) -> str:
        return f"t:{self.value}"


def value_parse(text: str) -> ObjectValue:
    """Parse the canonical text form (i:42, c:100, g:7, s:<hex>, o:1.2.3, t:500)."""
    if len(text) < 2 or text[1] != ":":
        raise ValueParseError(text, "missing kind prefix")
    kind, body = text[0], text[2:]
    try:
        if kind == "i":
            return IntegerVal(_parse_int(text, body, signed=True))
        if kind == "c":
            return CounterVal(_parse_int(text, body))
        if kind == "g":
            return GaugeVal(_parse_int(text, body))
        if kind == "t":
            return TimeTicksVal(_parse_int(text, body))
        if kind == "o":
            try:
                return OidVal(oid_parse(body))
            except OidParseError as exc:
                raise ValueParseError(text, exc.reason)
        if kind == "s":
            if len(body) % 2 != 0:
                raise ValueParseError(text, "odd hex length")
            try:
                return OctetsVal(bytes.fromhex(body))
            except ValueError:
                raise ValueParseError(text, "non-hex octets")
    except WrongType as exc:
        raise ValueParseError(text, str(exc))
    raise ValueParseError(text, f"unknown kind {kind!r}")


def _parse_int(text: str, body: str, signed: bool = False) -> int:
    stripped = body[1:] if signed and body.startswith("-") else body
    if not stripped.isdigit():
        raise ValueParseError(text, "non-digit number")
    return int(body)


VALUE_KINDS = {
    "i": IntegerVal,
    "c": CounterVal,
    "g": GaugeVal,
    "s": OctetsVal,
    "o": OidVal,
    "t": TimeTicksVal,
}


class Access(Enum):
    RO = "ro"
    RW = "rw"


class FcapsCategory(Enum):
    FAULT = "fault"
    CONFIGURATION = "configuration"
    ACCOUNTING = "accounting"
    PERFORMANCE = "performance"
    SECURITY = "security"


@dataclass(frozen=True)
class ObjectDescriptor:
    """Registration record for one managed object."""

    oid: Oid
    name: str
    kind: str
    access: Access = Access.RO
    category: FcapsCategory = FcapsCategory.CONFIGURATION

    def __post_init__(self):
        if self.kind not in VALUE_KINDS:
            raise WrongType(f"unknown value kind {self.kind!r}")
        if not self.name:
            raise MibError("descriptor name must be non-empty")


class MibStore:
    """One network's virtual database of descriptors and current values."""

    def __init__(self):
        self._descriptors: dict[tuple[int, ...], ObjectDescriptor] = {}
        self._names: dict[str, Oid] = {}
        self._values: dict[tuple[int, ...], ObjectValue] = {}
        self._assigned_cache: list[tuple[int, ...]] = []
        self._cache_ok = True

    def register(self, descriptor: ObjectDescriptor) -> None:
        key = descriptor.oid.arcs
        if key in self._descriptors:
            raise DuplicateOid(descriptor.oid.text())
        if descriptor.name in self._names:
            raise DuplicateName(descriptor.name)
        self._descriptors[key] = descriptor
        self._names[descriptor.name] = descriptor.oid

    def descriptor(self, oid: Oid) -> ObjectDescriptor:
        try:
            return self._descriptors[oid.arcs]
        except KeyError:
            raise NoSuchObject(oid.text())

    def descriptor_by_name(self, name: str) -> ObjectDescriptor:
        try:
            return self._descriptors[self._names[name].arcs]
        except KeyError:
            raise NoSuchObject(name)

    def get(self, oid: Oid) -> ObjectValue:
        if oid.arcs not in self._descriptors:
            raise NoSuchObject(oid.text())
        try:
            return self._values[oid.arcs]
        except KeyError:
            raise NoSuchValue(oid.text())

    def set(self, oid: Oid, value: ObjectValue, force: bool = False) -> None:
        """Write one value. force bypasses the access check for the owning agent."""
        desc = self.descriptor(oid)
        if desc.access is not Access.RW and not force:
            raise ReadOnly(oid.text())
        if value.kind != desc.kind:
            raise WrongType(f"{oid.text()}: expected {desc.kind}, got {value.kind}")
        if oid.arcs not in self._values:
            self._touch_cache(oid.arcs)
        self._values[oid.arcs] = value

    def unset(self, oid: Oid) -> None:
        """Drop a value (object stays registered). Used when a node goes dark."""
        if self._values.pop(oid.arcs, None) is not None:
            self._cache_ok = False

    def get_next(self, oid: Oid) -> tuple[Oid, ObjectValue]:
        """Next assigned oid strictly after the argument, in oid order."""
        assigned = self._assigned()
        idx = bisect.bisect_right(assigned, oid.arcs)
        if idx >= len(assigned):
            raise EndOfMib(oid.text())
        key = assigned[idx]
        return Oid(key), self._values[key]

    def walk(self, start: Optional[Oid] = None) -> Iterator[tuple[Oid, ObjectValue]]:
        if start is None:
            assigned = self._assigned()
            if not assigned:
                return
            cursor = Oid(assigned[0])
            yield cursor, self._values[assigned[0]]
        else:
            cursor = start
        while True:
            try:
                cursor, value = self.get_next(cursor)
            except EndOfMib:
                return
            yield cursor, value

    def assigned_count(self) -> int:
        return len(self._values)

    def descriptors(self) -> Iterator[ObjectDescriptor]:
        return iter(self._descriptors.values())

    def _assigned(self) -> list[tuple[int, ...]]:
        if not self._cache_ok:
            self._assigned_cache = sorted(self._values)
            self._cache_ok = True
        return self._assigned_cache

    def _touch_cache(self, key: tuple[int, ...]) -> None:
        if self._cache_ok:
            bisect.insort(self._assigned_cache, key)


def mib_register(store: MibStore, descriptor: ObjectDescriptor) -> None:
    store.register(descriptor)


def mib_get(store: MibStore, oid: Oid) -> ObjectValue:
    return store.get(oid)


def mib_set(store: MibStore, oid: Oid, value: ObjectValue, force: bool = False) -> None:
    store.set(oid, value, force=force)


def mib_get_next(store: MibStore, oid: Oid) -> tuple[Oid, ObjectValue]:
    return store.get_next(oid)
