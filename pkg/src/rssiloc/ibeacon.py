"""iBeacon advertising-data codec.

Encoded layout (30 bytes)::

    Offset  Len  Value   Description
    0       1    0x02    flags AD length
    1       1    0x01    AD type: flags
    2       1    0x06    LE General Discoverable, BR/EDR not supported
    3       1    0x1A    manufacturer AD length (26)
    4       1    0xFF    AD type: manufacturer specific data
    5-6     2    4C 00   Apple company ID (little-endian)
    7       1    0x02    iBeacon type
    8       1    0x15    iBeacon data length (21)
    9-24    16   UUID    proximity UUID, as-is
    25-26   2    major   big-endian
    27-28   2    minor   big-endian
    29      1    power   measured power at 1 m, signed dBm
"""

from __future__ import annotations

import struct
import uuid as _uuid
from dataclasses import dataclass

from .errors import BadLength, InvalidPayload, NotIBeacon, Truncated

MAX_ADV_DATA = 31
IBEACON_ADV_LENGTH = 30

FLAGS_AD_LENGTH = 0x02
FLAGS_AD_TYPE = 0x01
FLAGS_VALUE = 0x06
MANUFACTURER_AD_LENGTH = 0x1A
MANUFACTURER_AD_TYPE = 0xFF
APPLE_COMPANY_ID = 0x004C
IBEACON_TYPE = 0x02
IBEACON_DATA_LENGTH = 0x15

_PREFIX = bytes(
    [FLAGS_AD_LENGTH, FLAGS_AD_TYPE, FLAGS_VALUE, MANUFACTURER_AD_LENGTH, MANUFACTURER_AD_TYPE]
) + struct.pack("<H", APPLE_COMPANY_ID) + bytes([IBEACON_TYPE, IBEACON_DATA_LENGTH])
_BODY = struct.Struct(">16sHHb")


@dataclass(frozen=True)
class IBeaconPayload:
    """Decoded iBeacon fields. ``measured_power`` is the calibrated RSSI at 1 m."""

    proximity_uuid: bytes
    major: int
    minor: int
    measured_power: int

    def __post_init__(self) -> None:
        if not isinstance(self.proximity_uuid, (bytes, bytearray)) or len(self.proximity_uuid) != 16:
            raise InvalidPayload("proximity_uuid must be exactly 16 bytes")
        for name in ("major", "minor"):
            value = getattr(self, name)
            if not isinstance(value, int) or not 0 <= value <= 0xFFFF:
                raise InvalidPayload(f"{name} must be in [0, 65535], got {value!r}")
        if not isinstance(self.measured_power, int) or not -128 <= self.measured_power <= 127:
            raise InvalidPayload(f"measured_power must be in [-128, 127], got {self.measured_power!r}")
        object.__setattr__(self, "proximity_uuid", bytes(self.proximity_uuid))

    @classmethod
    def from_uuid_string(cls, text: str, major: int, minor: int, measured_power: int) -> IBeaconPayload:
        try:
            raw = _uuid.UUID(text).bytes
        except ValueError as exc:
            raise InvalidPayload(f"bad UUID {text!r}") from exc
        return cls(raw, major, minor, measured_power)

    @property
    def uuid_string(self) -> str:
        return str(_uuid.UUID(bytes=self.proximity_uuid))


@dataclass(frozen=True)
class RawAdvertisement:
    """Advertising data as received, plus the radio's RSSI (never serialized)."""

    data: bytes
    rx_rssi: int | None = None

    def __post_init__(self) -> None:
        if len(self.data) > MAX_ADV_DATA:
            raise BadLength(f"advertising data is {len(self.data)} bytes, limit is {MAX_ADV_DATA}")
        object.__setattr__(self, "data", bytes(self.data))


def encode_ibeacon(payload: IBeaconPayload) -> bytes:
    return _PREFIX + _BODY.pack(
        payload.proximity_uuid, payload.major, payload.minor, payload.measured_power
    )


def decode_ibeacon(adv: RawAdvertisement | bytes) -> IBeaconPayload:
    """Decode advertising data laid out as above.

    Bytes after offset 29 are ignored (GAP payloads may be padded to 31).
    Raises Truncated when the buffer ends before a required byte,
    NotIBeacon on an AD type / company / beacon type mismatch, and
    BadLength when an AD length field disagrees with the layout.
    """
    if isinstance(adv, RawAdvertisement):
        buf = adv.data
    else:
        buf = bytes(adv)
        if len(buf) > MAX_ADV_DATA:
            raise BadLength(f"advertising data is {len(buf)} bytes, limit is {MAX_ADV_DATA}")

    def byte_at(i: int) -> int:
        if i >= len(buf):
            raise Truncated(f"need {IBEACON_ADV_LENGTH} bytes, buffer ends at {len(buf)}")
        return buf[i]

    if byte_at(0) != FLAGS_AD_LENGTH:
        raise BadLength(f"flags AD length 0x{buf[0]:02X}, expected 0x{FLAGS_AD_LENGTH:02X}")
    if byte_at(1) != FLAGS_AD_TYPE:
        raise NotIBeacon(f"first AD type 0x{buf[1]:02X} is not flags")
    byte_at(2)  # flags value is not constrained on decode
    if byte_at(3) != MANUFACTURER_AD_LENGTH:
        raise BadLength(f"manufacturer AD length 0x{buf[3]:02X}, expected 0x{MANUFACTURER_AD_LENGTH:02X}")
    if byte_at(4) != MANUFACTURER_AD_TYPE:
        raise NotIBeacon(f"AD type 0x{buf[4]:02X} is not manufacturer specific data")
    company = byte_at(5) | (byte_at(6) << 8)
    if company != APPLE_COMPANY_ID:
        raise NotIBeacon(f"company ID 0x{company:04X} is not Apple")
    if byte_at(7) != IBEACON_TYPE:
        raise NotIBeacon(f"beacon type 0x{buf[7]:02X} is not iBeacon")
    if byte_at(8) != IBEACON_DATA_LENGTH:
        raise BadLength(f"iBeacon data length 0x{buf[8]:02X}, expected 0x{IBEACON_DATA_LENGTH:02X}")
    byte_at(IBEACON_ADV_LENGTH - 1)
    uuid_bytes, major, minor, power = _BODY.unpack_from(buf, len(_PREFIX))
    return IBeaconPayload(uuid_bytes, major, minor, power)
