"""TELM: line protocol for the TMN-like fixed network.

One message per CRLF-terminated line:

    TELM/1 <verb> <path>;<tag>{;name=value}*

Verbs: GET, SET, RESP, EVT. The path addresses an element (slash-separated,
depth at most 8). Attribute values are canonical ObjectValue text, with two
shorthands: an empty value is a request marker (None), and a bare token of
[A-Za-z0-9_.-] decodes as the Octets of that text. Bare tokens can never
collide with canonical forms because ':' is outside the token charset.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Optional

from ..mib import ObjectValue, OctetsVal, ValueParseError, value_parse
from . import TelmError

VERBS = ("GET", "SET", "RESP", "EVT")
MAX_DEPTH = 8

_SEGMENT = re.compile(r"^[A-Za-z0-9_.-]+$")
_NAME = re.compile(r"^[A-Za-z0-9_]+$")
_BARE = re.compile(r"^[A-Za-z0-9_.-]+$")


@dataclass
class TelmMessage:
    """One TELM line; attr value None is a request marker (name=)."""

    verb: str
    path: str
    tag: int
    attrs: list[tuple[str, Optional[ObjectValue]]] = field(default_factory=list)


def _check_path(path: str) -> None:
    segments = path.split("/")
    if not (1 <= len(segments) <= MAX_DEPTH):
        raise TelmError("bad-path", path)
    for seg in segments:
        if not _SEGMENT.match(seg):
            raise TelmError("bad-path", path)


def _render_value(value: Optional[ObjectValue]) -> str:
    if value is None:
        return ""
    if isinstance(value, OctetsVal):
        try:
            text = value.data.decode("ascii")
        except UnicodeDecodeError:
            return value.canonical()
        if text and _BARE.match(text):
            return text
        return value.canonical()
    return value.canonical()


def _parse_value(text: str) -> Optional[ObjectValue]:
    if text == "":
        return None
    if len(text) >= 2 and text[1] == ":" and text[0] in "icgsot":
        try:
            return value_parse(text)
        except ValueParseError as exc:
            raise TelmError("bad-pair", f"{text!r}: {exc.reason}")
    if _BARE.match(text):
        return OctetsVal(text.encode("ascii"))
    raise TelmError("bad-pair", text)


def telm_encode(msg: TelmMessage) -> str:
    if msg.verb not in VERBS:
        raise TelmError("bad-verb", msg.verb)
    _check_path(msg.path)
    if not (0 <= msg.tag <= 0xFFFFFFFF):
        raise TelmError("missing-tag", str(msg.tag))
    parts = [f"TELM/1 {msg.verb} {msg.path};{msg.tag}"]
    for name, value in msg.attrs:
        if not _NAME.match(name):
            raise TelmError("bad-pair", name)
        parts.append(f";{name}={_render_value(value)}")
    return "".join(parts) + "\r\n"


def telm_decode(line: str) -> TelmMessage:
    if line.endswith("\r\n"):
        line = line[:-2]
    elif line.endswith("\n"):
        line = line[:-1]
    if not line.startswith("TELM/"):
        raise TelmError("bad-verb", "not a TELM line")
    head, _, rest = line.partition(" ")
    if head != "TELM/1":
        raise TelmError("bad-verb", f"version {head[5:]!r}")
    verb, _, body = rest.partition(" ")
    if verb not in VERBS:
        raise TelmError("bad-verb", verb)
    if not body:
        raise TelmError("bad-path", "")
    sections = body.split(";")
    path = sections[0]
    _check_path(path)
    if len(sections) < 2:
        raise TelmError("missing-tag", body)
    if not sections[1].isdigit() or int(sections[1]) > 0xFFFFFFFF:
        raise TelmError("missing-tag", sections[1])
    tag = int(sections[1])
    attrs: list[tuple[str, Optional[ObjectValue]]] = []
    for pair in sections[2:]:
        name, eq, value_text = pair.partition("=")
        if not eq or not _NAME.match(name):
            raise TelmError("bad-pair", pair)
        attrs.append((name, _parse_value(value_text)))
    return TelmMessage(verb, path, tag, attrs)
