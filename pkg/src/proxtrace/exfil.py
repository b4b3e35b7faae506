"""Spurious-scan injection and forensic decoding of captured uploads.

``make_injected_scan`` produces the four conspicuous beacons fed to apps
under test. ``decode_layers`` peels gzip/base64/JSON layers off a captured
transmission, and ``detect_planted`` looks for the injected markers in the
result.
"""

from __future__ import annotations

import base64
import binascii
import gzip
import json
import re
import zlib
from dataclasses import dataclass
from typing import Any, Iterable, Union

from .beacon import AltBeacon, EddystoneUrl, Ens, IBeacon, MacAddress, encode_beacon, parse_uuid

PLANTED_MACS = ("AB:B1:E6:6E:1B:BA", "AB:B1:E7:7E:1B:BA", "AB:B1:E8:8E:1B:BA", "AB:B1:E9:9E:1B:BA")
PLANTED_UUID = "01022022-fa0f-0100-00ac-dd1c6502da1c"
PLANTED_MAJOR = 53479
PLANTED_MINOR = 42571

GZIP_MAGIC = b"\x1f\x8b"
MAX_DEPTH = 16
_B64_RE = re.compile(r"^[A-Za-z0-9+/_-]+={0,2}$")


class DepthExceeded(RecursionError):
    pass


@dataclass(frozen=True)
class ScanEntry:
    mac: MacAddress
    format: str
    payload: bytes
    rssi: int


def make_injected_scan(rssi: int = -12) -> list[ScanEntry]:
    specs = [
        ("iBeacon", IBeacon(parse_uuid(PLANTED_UUID), PLANTED_MAJOR, PLANTED_MINOR, -12)),
        ("AltBeacon", AltBeacon(bytes.fromhex("abb1e77e1bba" * 3 + "abb1"), -12, 0)),
        ("EddystoneUrl", EddystoneUrl("https://abb1e88e1bba.com/", -12)),
        ("Ens", Ens(bytes.fromhex("abb1e99e1bba" * 2 + "abb1e99e"), bytes(4))),
    ]
    return [ScanEntry(MacAddress.parse(mac), fmt, encode_beacon(spec), rssi)
            for mac, (fmt, spec) in zip(PLANTED_MACS, specs)]


# -- lenient structured-text parsing ---------------------------------------------

class _Lenient:
    """JSON reader for hand-edited captures.

    Accepts missing and trailing commas, redaction placeholders such as
    ``<LATITUDE>`` or ``20.934XXXX`` (kept as literal strings), and string
    values broken across lines (the break and its indentation are removed).
    """

    _NUM = re.compile(r"-?\d+(\.\d+)?([eE][+-]?\d+)?")

    def __init__(self, text: str):
        self.s = text
        self.i = 0

    def parse(self):
        value = self.value()
        self.ws()
        if self.i != len(self.s):
            raise ValueError(f"trailing data at offset {self.i}")
        return value

    def ws(self):
        while self.i < len(self.s) and self.s[self.i] in " \t\r\n":
            self.i += 1

    def peek(self):
        self.ws()
        return self.s[self.i] if self.i < len(self.s) else ""

    def value(self):
        c = self.peek()
        if c == "{":
            return self.obj()
        if c == "[":
            return self.arr()
        if c == '"':
            return self.string()
        if c == "<":
            end = self.s.index(">", self.i)
            tok = self.s[self.i:end + 1]
            self.i = end + 1
            return tok
        for word, val in (("true", True), ("false", False), ("null", None)):
            if self.s.startswith(word, self.i):
                self.i += len(word)
                return val
        m = self._NUM.match(self.s, self.i)
        if not m:
            raise ValueError(f"unexpected {c!r} at offset {self.i}")
        end = m.end()
        tail = re.compile(r"[A-Za-z0-9]+").match(self.s, end)
        if tail:
            # redacted number such as 20.934XXXXXXXX
            self.i = tail.end()
            return self.s[m.start():tail.end()]
        self.i = end
        text = m.group(0)
        return float(text) if any(ch in text for ch in ".eE") else int(text)

    def string(self):
        j = self.i + 1
        out = []
        while True:
            c = self.s[j]
            if c == '"':
                break
            if c == "\\":
                out.append(self.s[j:j + 2] if self.s[j + 1] != "u" else self.s[j:j + 6])
                j += len(out[-1])
                continue
            if c == "\n":
                j += 1
                while self.s[j] in " \t":
                    j += 1
                continue
            out.append(c)
            j += 1
        self.i = j + 1
        return json.loads('"' + "".join(out) + '"')

    def obj(self):
        self.i += 1
        out = {}
        while True:
            c = self.peek()
            if c == "}":
                self.i += 1
                return out
            if c == ",":
                self.i += 1
                continue
            key = self.string() if c == '"' else self.value()
            if self.peek() != ":":
                raise ValueError(f"expected ':' at offset {self.i}")
            self.i += 1
            out[str(key)] = self.value()

    def arr(self):
        self.i += 1
        out = []
        while True:
            c = self.peek()
            if c == "]":
                self.i += 1
                return out
            if c == ",":
                self.i += 1
                continue
            out.append(self.value())


def parse_structured(text: str):
    """Strict JSON first, then the lenient reader; ValueError if neither works."""
    try:
        return json.loads(text)
    except ValueError:
        pass
    try:
        return _Lenient(text).parse()
    except (ValueError, IndexError) as exc:
        raise ValueError(f"not structured text: {exc}") from None


# -- layered decoding ------------------------------------------------------------------

PayloadTree = Union[dict, list, str, int, float, bool, None, bytes]


def _looks_structured(s: str) -> bool:
    t = s.strip()
    return len(t) >= 2 and (t[0], t[-1]) in (("{", "}"), ("[", "]"))


def _b64_candidate(s: str, min_len: int = 16) -> bool:
    return len(s) >= min_len and len(s) % 4 == 0 and bool(_B64_RE.match(s))


def _printable(text: str) -> bool:
    return all(c.isprintable() or c in "\r\n\t" for c in text)


_FAILED = object()


class _Decoder:
    """Depth counts decoders applied along one path, not tree nesting."""

    def __init__(self, max_depth: int):
        self.max_depth = max_depth

    def _deeper(self, depth: int) -> int:
        if depth >= self.max_depth:
            raise DepthExceeded(f"more than {self.max_depth} nested encoding layers")
        return depth + 1

    def blob(self, data: bytes, depth: int, strict: bool):
        """A byte blob; with ``strict`` return _FAILED unless it decoded to something sensible."""
        if data[:2] == GZIP_MAGIC:
            try:
                inner = gzip.decompress(data)
            except (OSError, EOFError, zlib.error):
                pass
            else:
                return self.blob(inner, self._deeper(depth), False)
        try:
            text = data.decode("utf-8")
        except UnicodeDecodeError:
            return _FAILED if strict else data
        if not _printable(text):
            return _FAILED if strict else data
        # a whole document may be any JSON value, not only an object or array
        try:
            doc = json.loads(text)
        except ValueError:
            return self.text(text, depth, document=True)
        return self.tree(doc, self._deeper(depth))

    def text(self, s: str, depth: int, document: bool = False):
        # short strings inside a tree are left alone; a whole document is always tried
        if _looks_structured(s):
            try:
                doc = parse_structured(s)
            except ValueError:
                pass
            else:
                return self.tree(doc, self._deeper(depth))
        t = s.strip()
        if _b64_candidate(t, 4 if document else 16):
            try:
                raw = base64.b64decode(t.replace("-", "+").replace("_", "/"), validate=True)
            except (binascii.Error, ValueError):
                raw = None
            if raw:
                decoded = self.blob(raw, self._deeper(depth), strict=True)
                if decoded is not _FAILED:
                    return decoded
        return s

    def tree(self, value, depth: int):
        if isinstance(value, dict):
            return {k: self.tree(v, depth) for k, v in value.items()}
        if isinstance(value, list):
            return [self.tree(v, depth) for v in value]
        if isinstance(value, str):
            return self.text(value, depth)
        if isinstance(value, (bytes, bytearray)):
            return self.blob(bytes(value), depth, strict=False)
        return value


def decode_layers(data: Union[bytes, str, Any], max_depth: int = MAX_DEPTH) -> PayloadTree:
    """Peel gzip, base64 and structured-text layers until nothing changes.

    Bytes are treated as a whole document; strings and trees are walked
    leaf by leaf. Bytes that decode to nothing meaningful come back as a
    raw bytes leaf.
    """
    return _Decoder(max_depth).tree(data, 0)


def encode_layers(tree: PayloadTree, layers: Iterable[str]) -> bytes:
    """Serialise ``tree`` as JSON and wrap it, innermost layer first."""
    data = json.dumps(tree, separators=(",", ":")).encode()
    for layer in layers:
        if layer == "gzip":
            data = gzip.compress(data, mtime=0)
        elif layer == "base64":
            data = base64.b64encode(data)
        else:
            raise ValueError(f"unknown layer {layer!r}")
    return data


# -- marker search -----------------------------------------------------------------

@dataclass(frozen=True)
class Finding:
    marker: str
    path: tuple
    record: Any

    @property
    def path_text(self) -> str:
        return format_path(self.path)


def format_path(path: Iterable) -> str:
    out = ""
    for p in path:
        out += f"[{p}]" if isinstance(p, int) else (f".{p}" if out else str(p))
    return out


def resolve(tree: PayloadTree, path: Iterable):
    node = tree
    for p in path:
        node = node[p]
    return node


def detect_planted(tree: PayloadTree, markers: Iterable[str]) -> list[Finding]:
    """Depth-first search of string leaves for each marker, case-insensitively."""
    markers = list(markers)
    if not markers:
        return []
    lowered = [m.lower() for m in markers]
    found = []

    def walk(node, path, record):
        if isinstance(node, dict):
            for k, v in node.items():
                walk(v, path + (k,), node)
        elif isinstance(node, list):
            for i, v in enumerate(node):
                walk(v, path + (i,), record)
        elif isinstance(node, str):
            text = node.lower()
            for m, low in zip(markers, lowered):
                if low in text:
                    found.append(Finding(m, path, record))

    walk(tree, (), tree)
    return found


# -- files ---------------------------------------------------------------------------

def read_records(text: str) -> list[PayloadTree]:
    """A whole-file structured document, or else one record per line."""
    try:
        return [decode_layers(parse_structured(text))]
    except ValueError:
        pass
    return [decode_layers(line.strip().encode()) for line in text.splitlines() if line.strip()]


def to_jsonable(tree: PayloadTree):
    if isinstance(tree, dict):
        return {k: to_jsonable(v) for k, v in tree.items()}
    if isinstance(tree, list):
        return [to_jsonable(v) for v in tree]
    if isinstance(tree, bytes):
        return {"$bytes": base64.b64encode(tree).decode()}
    return tree


def findings_report(records: list[PayloadTree], markers: list[str]) -> dict:
    rows = []
    for i, rec in enumerate(records):
        for f in detect_planted(rec, markers):
            rows.append({"record": i, "marker": f.marker, "path": f.path_text, "snapshot": to_jsonable(f.record)})
    return {"records": len(records), "markers": markers, "findings": rows}
