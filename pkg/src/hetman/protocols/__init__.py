"""Wire codecs for the three mutually incompatible agent protocols.

snap: binary TLV over length-prefixed frames (IP/WLAN network agents).
telm: CRLF text lines with slash paths (fixed LAN / telecom elements).
cell: pipe-separated ASCII records keyed by 15-digit subscriber ids.

Every decoder is total: any byte string either parses or raises a
CodecError carrying a stable error code, never anything else.
"""

from __future__ import annotations


class CodecError(Exception):
    """Structured decode/encode failure; `code` is a stable identifier."""

    def __init__(self, code: str, detail: str = ""):
        super().__init__(f"{code}: {detail}" if detail else code)
        self.code = code
        self.detail = detail


class SnapError(CodecError):
    pass


class TelmError(CodecError):
    pass


class CellError(CodecError):
    pass


SEVERITIES = ("minor", "major", "critical")
