"""DNS hierarchy levels and transaction labels."""

from __future__ import annotations

import enum
from typing import Iterable


class DnsLevel(str, enum.Enum):
    CACHE = "cache"
    ROOT = "root"
    GTLD = "gtld"
    CCTLD = "cctld"
    SLD = "sld"
    HOST = "host"
    UNKNOWN = "unknown"

    @property
    def rank(self) -> int:
        """Height in the hierarchy; gTLD and ccTLD share a rank."""
        return _RANK[self]

    @classmethod
    def parse(cls, text: str) -> "DnsLevel":
        try:
            return cls(text.strip().lower())
        except ValueError:
            raise ValueError(f"unknown DNS level {text!r}") from None


_RANK = {
    DnsLevel.UNKNOWN: -1,
    DnsLevel.CACHE: 0,
    DnsLevel.HOST: 1,
    DnsLevel.SLD: 2,
    DnsLevel.CCTLD: 3,
    DnsLevel.GTLD: 3,
    DnsLevel.ROOT: 4,
}

# levels a resolver can contact, i.e. valid in a server registry
CONTACT_LEVELS = (DnsLevel.ROOT, DnsLevel.GTLD, DnsLevel.CCTLD, DnsLevel.SLD, DnsLevel.HOST)
# levels a workload may ask for
WORKLOAD_LEVELS = (DnsLevel.CACHE,) + CONTACT_LEVELS


def highest_level(levels: Iterable[DnsLevel]) -> DnsLevel:
    """Highest level among `levels`; CACHE when empty.

    gTLD wins a rank tie with ccTLD so the result does not depend on order.
    UNKNOWN only wins when nothing else is present.
    """
    best = None
    for level in levels:
        if best is None or (level.rank, level is DnsLevel.GTLD) > (best.rank, best is DnsLevel.GTLD):
            best = level
    return DnsLevel.CACHE if best is None else best


class Label(str, enum.Enum):
    BENIGN = "benign"
    ATTACK = "attack"

    @classmethod
    def parse(cls, text: str) -> "Label":
        try:
            return cls(text.strip().lower())
        except ValueError:
            raise ValueError(f"unknown label {text!r}") from None
