"""Common information model: classes, instances, mapping rules, XML codec.

The manager normalizes every protocol's data into instances of a small fixed
schema. XML output is canonical (property order follows the class
declaration, attributes in fixed order, no insignificant whitespace), so
equal instances always serialize to identical bytes.
"""

from __future__ import annotations

import re
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from typing import Optional

from .mib import (
    CounterVal,
    GaugeVal,
    IntegerVal,
    ObjectValue,
    OctetsVal,
    OidVal,
    TimeTicksVal,
    MibError,
    oid_parse,
)

DIRECTIONS = ("to_generic", "from_generic", "both")
PROTOCOL_NAMES = ("snap", "telm", "cell")


class CimError(Exception):
    """Model-level failure; `code` is a stable identifier."""

    def __init__(self, code: str, detail: str = ""):
        super().__init__(f"{code}: {detail}" if detail else code)
        self.code = code
        self.detail = detail


class NoRule(CimError):
    def __init__(self, detail: str):
        super().__init__("no-rule", detail)


@dataclass(frozen=True)
class CimProperty:
    name: str
    kind: str
    units: Optional[str] = None
    writable: bool = False


@dataclass(frozen=True)
class CimClass:
    name: str
    key: str
    properties: tuple[CimProperty, ...]

    def __post_init__(self):
        names = [p.name for p in self.properties]
        if len(set(names)) != len(names):
            raise CimError("duplicate-property", self.name)
        if self.key not in names:
            raise CimError("missing-key", f"{self.name}: key {self.key} undeclared")

    def property(self, name: str) -> Optional[CimProperty]:
        for prop in self.properties:
            if prop.name == name:
                return prop
        return None


@dataclass(frozen=True)
class Origin:
    network: str
    agent: str
    protocol: str


@dataclass
class CimInstance:
    class_name: str
    properties: dict[str, ObjectValue] = field(default_factory=dict)
    origin: Optional[Origin] = None
    observed_at: Optional[float] = None

    def key_value(self, schema: "Schema") -> str:
        cls = schema.require(self.class_name)
        value = self.properties.get(cls.key)
        if not isinstance(value, OctetsVal):
            raise CimError("missing-key", f"{self.class_name} instance without {cls.key}")
        return value.text()


class Schema:
    """Fixed set of classes the manager understands."""

    def __init__(self, classes: list[CimClass]):
        self.classes = {cls.name: cls for cls in classes}

    def require(self, name: str) -> CimClass:
        try:
            return self.classes[name]
        except KeyError:
            raise CimError("unknown-class", name)

    def get(self, name: str) -> Optional[CimClass]:
        return self.classes.get(name)


def default_schema() -> Schema:
    return Schema([
        CimClass("Terminal", "id", (
            CimProperty("id", "s"),
            CimProperty("batteryPercent", "i", "percent"),
            CimProperty("attachment", "s"),
            CimProperty("utilizationPermille", "g", "permille"),
            CimProperty("errorCount", "c"),
            CimProperty("observedTicks", "t", "centiseconds"),
            CimProperty("adminLabel", "s", writable=True),
        )),
        CimClass("NetInterface", "id", (
            CimProperty("id", "s"),
            CimProperty("utilization", "g", "permille"),
            CimProperty("errorCount", "c"),
            CimProperty("uptimeTicks", "t", "centiseconds"),
            CimProperty("observedTicks", "t", "centiseconds"),
            CimProperty("adminLabel", "s", writable=True),
        )),
        CimClass("Link", "id", (
            CimProperty("id", "s"),
            CimProperty("endpointA", "s"),
            CimProperty("endpointB", "s"),
            CimProperty("state", "s"),
        )),
        CimClass("Alarm", "id", (
            CimProperty("id", "s"),
            CimProperty("severity", "s"),
            CimProperty("cause", "s"),
            CimProperty("source", "s"),
            CimProperty("observedTicks", "t", "centiseconds"),
        )),
        CimClass("UsageEntry", "id", (
            CimProperty("id", "s"),
            CimProperty("payer", "s"),
            CimProperty("service", "s"),
            CimProperty("quantityMilli", "i", "milliunits"),
            CimProperty("periodStart", "t", "centiseconds"),
            CimProperty("periodEnd", "t", "centiseconds"),
        )),
    ])


@dataclass(frozen=True)
class MappingRule:
    protocol: str
    native_name: str
    cim_class: str
    cim_property: str
    direction: str

    def __post_init__(self):
        if self.protocol not in PROTOCOL_NAMES:
            raise CimError("bad-rule", f"protocol {self.protocol!r}")
        if self.direction not in DIRECTIONS:
            raise CimError("bad-rule", f"direction {self.direction!r}")
        if not self.native_name:
            raise CimError("bad-rule", "empty native name")


class RuleTable:
    """Mapping rules with the two per-direction uniqueness guarantees."""

    def __init__(self, rules: list[MappingRule], schema: Schema):
        self.rules = list(rules)
        self._to: dict[tuple[str, str], MappingRule] = {}
        self._from: dict[tuple[str, str, str], MappingRule] = {}
        for rule in self.rules:
            cls = schema.require(rule.cim_class)
            if cls.property(rule.cim_property) is None:
                raise CimError("unknown-property",
                               f"{rule.cim_class}.{rule.cim_property}")
            if rule.direction in ("to_generic", "both"):
                key = (rule.protocol, rule.native_name)
                if key in self._to:
                    raise CimError("bad-rule", f"duplicate to_generic {key}")
                self._to[key] = rule
            if rule.direction in ("from_generic", "both"):
                key = (rule.cim_class, rule.cim_property, rule.protocol)
                if key in self._from:
                    raise CimError("bad-rule", f"duplicate from_generic {key}")
                self._from[key] = rule

    def to_generic(self, protocol: str, native_name: str) -> Optional[MappingRule]:
        return self._to.get((protocol, native_name))

    def from_generic(self, cim_class: str, cim_property: str,
                     protocol: str) -> Optional[MappingRule]:
        return self._from.get((cim_class, cim_property, protocol))

    def dump(self) -> str:
        lines = [f"{r.protocol}|{r.native_name}|{r.cim_class}.{r.cim_property}|{r.direction}"
                 for r in self.rules]
        return "\n".join(lines) + ("\n" if lines else "")


def parse_rules(text: str, schema: Schema) -> RuleTable:
    rules = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("|")
        if len(parts) != 4:
            raise CimError("bad-rule", f"line {lineno}: expected 4 fields")
        protocol, native, target, direction = parts
        cls_name, dot, prop = target.partition(".")
        if not dot:
            raise CimError("bad-rule", f"line {lineno}: target {target!r}")
        rules.append(MappingRule(protocol, native, cls_name, prop, direction))
    return RuleTable(rules, schema)


def map_to_cim(protocol: str, native_name: str, value: ObjectValue,
               rules: RuleTable) -> tuple[str, str, ObjectValue]:
    """Native item to (class, property, value); the value passes through."""
    rule = rules.to_generic(protocol, native_name)
    if rule is None:
        raise NoRule(f"({protocol}, {native_name})")
    return rule.cim_class, rule.cim_property, value


def map_from_cim(cim_class: str, cim_property: str, value: ObjectValue,
                 protocol: str, rules: RuleTable) -> tuple[str, ObjectValue]:
    rule = rules.from_generic(cim_class, cim_property, protocol)
    if rule is None:
        raise NoRule(f"({cim_class}.{cim_property}, {protocol})")
    return rule.native_name, value


@dataclass(frozen=True)
class Violation:
    code: str
    detail: str


# XML 1.0 plus lossless roundtrips: tab and newline are the only control
# chars allowed (parsers normalize \r away, which would break identity).
_XML_BAD = re.compile(r"[\x00-\x08\x0b-\x1f\x7f]")


def _octets_text(value: OctetsVal) -> Optional[str]:
    try:
        text = value.data.decode("utf-8")
    except UnicodeDecodeError:
        return None
    if _XML_BAD.search(text) or "\r" in text:
        return None
    return text


def cim_validate(instance: CimInstance, schema: Schema) -> list[Violation]:
    violations = []
    cls = schema.get(instance.class_name)
    if cls is None:
        return [Violation("unknown-class", instance.class_name)]
    if cls.key not in instance.properties:
        violations.append(Violation("missing-key", f"{cls.name}.{cls.key}"))
    for name, value in instance.properties.items():
        prop = cls.property(name)
        if prop is None:
            violations.append(Violation("unknown-property", f"{cls.name}.{name}"))
            continue
        if value.kind != prop.kind:
            violations.append(Violation(
                "wrong-kind", f"{cls.name}.{name}: {value.kind} != {prop.kind}"))
            continue
        if isinstance(value, OctetsVal) and _octets_text(value) is None:
            violations.append(Violation("non-text-octets", f"{cls.name}.{name}"))
    return violations


_ESCAPES = [("&", "&amp;"), ("<", "&lt;"), (">", "&gt;"),
            ('"', "&quot;"), ("'", "&apos;")]


def _escape(text: str) -> str:
    for raw, ent in _ESCAPES:
        text = text.replace(raw, ent)
    return text


def _render_property(value: ObjectValue) -> str:
    if isinstance(value, (IntegerVal, CounterVal, GaugeVal, TimeTicksVal)):
        return str(value.value)
    if isinstance(value, OidVal):
        return value.oid.text()
    text = _octets_text(value)
    if text is None:
        raise CimError("non-text-octets", value.canonical())
    return _escape(text)


def cim_to_xml(instance: CimInstance, schema: Schema) -> str:
    violations = cim_validate(instance, schema)
    if violations:
        first = violations[0]
        raise CimError(first.code, first.detail)
    cls = schema.require(instance.class_name)
    attrs = [f'CLASSNAME="{_escape(instance.class_name)}"']
    if instance.origin is not None:
        attrs.append(f'NETWORK="{_escape(instance.origin.network)}"')
        attrs.append(f'AGENT="{_escape(instance.origin.agent)}"')
        attrs.append(f'PROTOCOL="{_escape(instance.origin.protocol)}"')
    if instance.observed_at is not None:
        attrs.append(f'OBSERVED="{instance.observed_at!r}"')
    parts = [f'<CIM><INSTANCE {" ".join(attrs)}>']
    for prop in cls.properties:
        value = instance.properties.get(prop.name)
        if value is None:
            continue
        parts.append(f'<PROPERTY NAME="{prop.name}" TYPE="{prop.kind}">'
                     f'{_render_property(value)}</PROPERTY>')
    parts.append("</INSTANCE></CIM>")
    return "".join(parts)


def instances_to_xml(instances: list[CimInstance], schema: Schema) -> str:
    """Multi-instance document: the INSTANCE elements of each, one CIM root."""
    bodies = []
    for instance in instances:
        single = cim_to_xml(instance, schema)
        bodies.append(single[len("<CIM>"):-len("</CIM>")])
    return "<CIM>" + "".join(bodies) + "</CIM>"


def _parse_value(kind: str, text: str) -> ObjectValue:
    try:
        if kind == "i":
            return IntegerVal(int(text))
        if kind == "c":
            return CounterVal(int(text))
        if kind == "g":
            return GaugeVal(int(text))
        if kind == "t":
            return TimeTicksVal(int(text))
        if kind == "s":
            return OctetsVal(text.encode("utf-8"))
        if kind == "o":
            return OidVal(oid_parse(text))
    except (ValueError, MibError) as exc:
        raise CimError("malformed-xml", f"bad {kind} value {text!r}: {exc}")
    raise CimError("malformed-xml", f"unknown TYPE {kind!r}")


def _instance_from_element(elem: ET.Element, schema: Schema) -> CimInstance:
    class_name = elem.get("CLASSNAME")
    if not class_name:
        raise CimError("malformed-xml", "INSTANCE without CLASSNAME")
    cls = schema.require(class_name)
    origin = None
    if elem.get("NETWORK") is not None:
        origin = Origin(elem.get("NETWORK"), elem.get("AGENT", ""),
                        elem.get("PROTOCOL", ""))
    observed = elem.get("OBSERVED")
    observed_at = None
    if observed is not None:
        try:
            observed_at = float(observed)
        except ValueError:
            raise CimError("malformed-xml", f"OBSERVED {observed!r}")
    properties: dict[str, ObjectValue] = {}
    for child in elem:
        if child.tag != "PROPERTY":
            raise CimError("malformed-xml", f"unexpected element {child.tag}")
        name, kind = child.get("NAME"), child.get("TYPE")
        if not name or not kind:
            raise CimError("malformed-xml", "PROPERTY without NAME/TYPE")
        if len(child):
            raise CimError("malformed-xml", f"PROPERTY {name} has child elements")
        prop = cls.property(name)
        if prop is None:
            raise CimError("unknown-property", f"{class_name}.{name}")
        if prop.kind != kind:
            raise CimError("wrong-kind", f"{class_name}.{name}: TYPE {kind}")
        properties[name] = _parse_value(kind, child.text or "")
    return CimInstance(class_name, properties, origin, observed_at)


def xml_to_cim_all(text: str, schema: Schema) -> list[CimInstance]:
    try:
        root = ET.fromstring(text)
    except ET.ParseError as exc:
        raise CimError("malformed-xml", str(exc))
    if root.tag != "CIM":
        raise CimError("malformed-xml", f"root {root.tag!r}")
    # INSTANCE elements may sit at any depth (operation envelopes nest them).
    return [_instance_from_element(elem, schema)
            for elem in root.iter("INSTANCE")]


def xml_to_cim(text: str, schema: Schema) -> CimInstance:
    instances = xml_to_cim_all(text, schema)
    if not instances:
        raise CimError("malformed-xml", "no INSTANCE element")
    return instances[0]
