"""BLE advertisement codecs for the four beacon formats used in the lab.

Layouts follow the public format descriptions:

* iBeacon: manufacturer data, company 0x004C, type 0x02, length 0x15
* AltBeacon: manufacturer data with beacon code 0xBEAC
* Eddystone-URL: service data for 16-bit UUID 0xFEAA, frame type 0x10
* Exposure Notification: service data for 16-bit UUID 0xFD6F

Every payload is a plain ``bytes`` object holding consecutive AD structures
``(length, type, value)`` and is at most 31 bytes long.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Iterable, Iterator, Union

MAX_ADV_LEN = 31

AD_FLAGS = 0x01
AD_COMPLETE_16BIT_UUIDS = 0x03
AD_SERVICE_DATA_16 = 0x16
AD_MANUFACTURER = 0xFF

APPLE_COMPANY_ID = 0x004C
RADIUS_COMPANY_ID = 0x0118
ALTBEACON_CODE = b"\xbe\xac"
EDDYSTONE_UUID = 0xFEAA
EDDYSTONE_URL_FRAME = 0x10
ENS_UUID = 0xFD6F

URL_SCHEMES = ("http://www.", "https://www.", "http://", "https://")
URL_EXPANSIONS = (
    ".com/", ".org/", ".edu/", ".net/", ".info/", ".biz/", ".gov/",
    ".com", ".org", ".edu", ".net", ".info", ".biz", ".gov",
)
MAX_URL_BODY = 17


class BeaconError(ValueError):
    pass


class InvalidField(BeaconError):
    pass


class UrlTooLong(BeaconError):
    pass


_MAC_RE = re.compile(r"^[0-9A-Fa-f]{2}(:[0-9A-Fa-f]{2}){5}$")


@dataclass(frozen=True, order=True)
class MacAddress:
    octets: bytes

    def __post_init__(self):
        if len(self.octets) != 6:
            raise InvalidField(f"MAC address needs 6 octets, got {len(self.octets)}")

    @classmethod
    def parse(cls, text: str) -> "MacAddress":
        if not _MAC_RE.match(text.strip()):
            raise InvalidField(f"not a MAC address: {text!r}")
        return cls(bytes.fromhex(text.strip().replace(":", "")))

    def __str__(self) -> str:
        return ":".join(f"{b:02X}" for b in self.octets)


@dataclass(frozen=True)
class IBeacon:
    uuid: bytes
    major: int
    minor: int
    measured_power: int = -59


@dataclass(frozen=True)
class AltBeacon:
    beacon_id: bytes
    ref_rssi: int = -59
    mfg_reserved: int = 0
    company_id: int = RADIUS_COMPANY_ID


@dataclass(frozen=True)
class EddystoneUrl:
    url: str
    tx_power: int = 0


@dataclass(frozen=True)
class Ens:
    ephid: bytes
    metadata: bytes = bytes(4)


@dataclass(frozen=True)
class Unknown:
    raw: bytes


BeaconSpec = Union[IBeacon, AltBeacon, EddystoneUrl, Ens]
BeaconKind = Union[IBeacon, AltBeacon, EddystoneUrl, Ens, Unknown]


def format_uuid(raw: bytes) -> str:
    h = raw.hex()
    return f"{h[:8]}-{h[8:12]}-{h[12:16]}-{h[16:20]}-{h[20:]}"


def parse_uuid(text: str) -> bytes:
    raw = bytes.fromhex(text.replace("-", ""))
    if len(raw) != 16:
        raise InvalidField(f"UUID must be 16 bytes: {text!r}")
    return raw


# -- AD structures -----------------------------------------------------------

def ad_structure(ad_type: int, value: bytes) -> bytes:
    return bytes([len(value) + 1, ad_type]) + value


def iter_ad_structures(payload: bytes) -> Iterator[tuple[int, bytes]]:
    """Yield ``(type, value)`` pairs; raises BeaconError on malformed input."""
    i = 0
    while i < len(payload):
        length = payload[i]
        if length == 0:
            raise BeaconError(f"zero-length AD structure at offset {i}")
        if i + 1 + length > len(payload):
            raise BeaconError(f"AD structure at offset {i} overruns payload")
        yield payload[i + 1], bytes(payload[i + 2:i + 1 + length])
        i += 1 + length


def is_well_formed(payload: bytes) -> bool:
    if len(payload) > MAX_ADV_LEN:
        return False
    try:
        total = sum(1 + 1 + len(v) for _, v in iter_ad_structures(payload))
    except BeaconError:
        return False
    return total == len(payload)


def _i8(value: int, name: str) -> bytes:
    if not -128 <= value <= 127:
        raise InvalidField(f"{name} out of int8 range: {value}")
    return value.to_bytes(1, "big", signed=True)


def _u16(value: int, name: str) -> bytes:
    if not 0 <= value <= 0xFFFF:
        raise InvalidField(f"{name} out of u16 range: {value}")
    return value.to_bytes(2, "big")


# -- Eddystone URL compression -------------------------------------------------

def encode_url(url: str) -> bytes:
    """Compress a URL into scheme byte + encoded body."""
    for code, scheme in sorted(enumerate(URL_SCHEMES), key=lambda p: -len(p[1])):
        if url.startswith(scheme):
            break
    else:
        raise InvalidField(f"unsupported URL scheme: {url!r}")
    rest = url[len(scheme):]
    body = bytearray()
    i = 0
    while i < len(rest):
        for idx, exp in enumerate(URL_EXPANSIONS):
            if rest.startswith(exp, i):
                body.append(idx)
                i += len(exp)
                break
        else:
            ch = ord(rest[i])
            if not 0x21 <= ch <= 0x7E:
                raise InvalidField(f"character {rest[i]!r} cannot be encoded")
            body.append(ch)
            i += 1
    if len(body) > MAX_URL_BODY:
        raise UrlTooLong(f"encoded URL body is {len(body)} bytes (max {MAX_URL_BODY})")
    return bytes([code]) + bytes(body)


def decode_url(data: bytes) -> str:
    if not data or data[0] >= len(URL_SCHEMES):
        raise BeaconError("bad URL scheme byte")
    parts = [URL_SCHEMES[data[0]]]
    for b in data[1:]:
        if b < len(URL_EXPANSIONS):
            parts.append(URL_EXPANSIONS[b])
        elif 0x21 <= b <= 0x7E:
            parts.append(chr(b))
        else:
            raise BeaconError(f"reserved URL byte 0x{b:02x}")
    return "".join(parts)


# -- encode / decode -----------------------------------------------------------

def encode_beacon(spec: BeaconSpec) -> bytes:
    if isinstance(spec, IBeacon):
        if len(spec.uuid) != 16:
            raise InvalidField("iBeacon uuid must be 16 bytes")
        mfg = (APPLE_COMPANY_ID.to_bytes(2, "little") + b"\x02\x15" + spec.uuid
               + _u16(spec.major, "major") + _u16(spec.minor, "minor")
               + _i8(spec.measured_power, "measured_power"))
        return ad_structure(AD_FLAGS, b"\x06") + ad_structure(AD_MANUFACTURER, mfg)
    if isinstance(spec, AltBeacon):
        if len(spec.beacon_id) != 20:
            raise InvalidField("AltBeacon beacon_id must be 20 bytes")
        if not 0 <= spec.mfg_reserved <= 0xFF:
            raise InvalidField("mfg_reserved must fit in one byte")
        mfg = (spec.company_id.to_bytes(2, "little") + ALTBEACON_CODE + spec.beacon_id
               + _i8(spec.ref_rssi, "ref_rssi") + bytes([spec.mfg_reserved]))
        return ad_structure(AD_FLAGS, b"\x06") + ad_structure(AD_MANUFACTURER, mfg)
    if isinstance(spec, EddystoneUrl):
        uuid = EDDYSTONE_UUID.to_bytes(2, "little")
        frame = uuid + bytes([EDDYSTONE_URL_FRAME]) + _i8(spec.tx_power, "tx_power") + encode_url(spec.url)
        return (ad_structure(AD_FLAGS, b"\x06") + ad_structure(AD_COMPLETE_16BIT_UUIDS, uuid)
                + ad_structure(AD_SERVICE_DATA_16, frame))
    if isinstance(spec, Ens):
        if len(spec.ephid) != 16:
            raise InvalidField("ENS ephid must be 16 bytes")
        if len(spec.metadata) != 4:
            raise InvalidField("ENS metadata must be 4 bytes")
        uuid = ENS_UUID.to_bytes(2, "little")
        return (ad_structure(AD_FLAGS, b"\x1a") + ad_structure(AD_COMPLETE_16BIT_UUIDS, uuid)
                + ad_structure(AD_SERVICE_DATA_16, uuid + spec.ephid + spec.metadata))
    raise TypeError(f"not a beacon spec: {spec!r}")


def _decode_manufacturer(value: bytes):
    if len(value) == 25 and value[:4] == b"\x4c\x00\x02\x15":
        return IBeacon(
            uuid=value[4:20],
            major=int.from_bytes(value[20:22], "big"),
            minor=int.from_bytes(value[22:24], "big"),
            measured_power=int.from_bytes(value[24:25], "big", signed=True),
        )
    if len(value) == 26 and value[2:4] == ALTBEACON_CODE:
        return AltBeacon(
            beacon_id=value[4:24],
            ref_rssi=int.from_bytes(value[24:25], "big", signed=True),
            mfg_reserved=value[25],
            company_id=int.from_bytes(value[:2], "little"),
        )
    return None


def _decode_service(value: bytes):
    if len(value) < 2:
        return None
    uuid = int.from_bytes(value[:2], "little")
    if uuid == ENS_UUID and len(value) == 22:
        return Ens(ephid=value[2:18], metadata=value[18:22])
    if uuid == EDDYSTONE_UUID and len(value) >= 5 and value[2] == EDDYSTONE_URL_FRAME:
        try:
            url = decode_url(value[4:])
        except BeaconError:
            return None
        return EddystoneUrl(url=url, tx_power=int.from_bytes(value[3:4], "big", signed=True))
    return None


def decode_beacon(payload: bytes) -> BeaconKind:
    """Classify a payload. Never raises: anything unrecognised is Unknown."""
    payload = bytes(payload)
    try:
        structures = list(iter_ad_structures(payload))
    except BeaconError:
        return Unknown(payload)
    for ad_type, value in structures:
        found = None
        if ad_type == AD_MANUFACTURER:
            found = _decode_manufacturer(value)
        elif ad_type == AD_SERVICE_DATA_16:
            found = _decode_service(value)
        if found is not None:
            return found
    return Unknown(payload)


def estimate_distance(measured_power: float, rssi: float, path_loss_exponent: float = 2.0) -> float:
    """Log-distance path loss inverted for range in metres."""
    if path_loss_exponent <= 0:
        raise ValueError("path_loss_exponent must be positive")
    return 10 ** ((measured_power - rssi) / (10 * path_loss_exponent))


def rssi_at(distance: float, tx_power: float, path_loss_exponent: float = 2.0) -> float:
    return tx_power - 10 * path_loss_exponent * math.log10(distance)


# -- golden vector files -------------------------------------------------------

def dump_hex(payloads: Iterable[bytes]) -> str:
    return "".join(p.hex().upper() + "\n" for p in payloads)


def load_hex(text: str) -> list[bytes]:
    out = []
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            out.append(bytes.fromhex(line))
    return out
