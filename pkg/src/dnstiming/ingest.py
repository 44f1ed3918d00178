"""Client/resolver log parsing, correlation and level tagging.

Log CSV (format ``log/1``), UTF-8, LF line endings::

    ts_us,dir,qid,domain,src,dst
    1000,Q,17,yahoo.com,10.0.0.2,10.0.0.53

``dir`` is ``Q`` (query) or ``R`` (response); ``ts_us`` is integer
microseconds since the epoch. Registry files map server addresses to levels,
one ``address,level,server_name`` line each (``level`` in root, gtld, cctld,
sld, host). Transactions serialise to ``transactions/1``; see
:func:`write_transactions`.
"""

from __future__ import annotations

import csv
import io
import warnings
from collections import defaultdict, deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, Sequence

from dnstiming.levels import CONTACT_LEVELS, DnsLevel, Label, highest_level
from dnstiming.traffic import Contact, Transaction

LOG_HEADER = ("ts_us", "dir", "qid", "domain", "src", "dst")
REGISTRY_HEADER = ("address", "level", "server_name")
TX_FORMAT = "#format=transactions/1"
TX_HEADER = ("qid", "domain", "rtt_us", "level", "label", "contacts")


class LogFormatError(ValueError):
    def __init__(self, line: int, field_name: str, message: str):
        super().__init__(f"line {line}: field {field_name!r}: {message}")
        self.line = line
        self.field = field_name


class AmbiguousCorrelationWarning(UserWarning):
    pass


@dataclass(frozen=True)
class LogRecord:
    timestamp_us: int
    direction: str  # "Q" or "R"
    query_id: int
    domain: str
    src_addr: str
    dst_addr: str
    line: int = field(default=0, compare=False)

    @property
    def key(self) -> tuple[int, str]:
        return (self.query_id, self.domain)

    @property
    def is_query(self) -> bool:
        return self.direction == "Q"


def _read_text(stream) -> str:
    if isinstance(stream, (bytes, bytearray)):
        return bytes(stream).decode("utf-8")
    if isinstance(stream, str):
        return stream
    data = stream.read()
    return data.decode("utf-8") if isinstance(data, (bytes, bytearray)) else data


def _int_field(value: str, line: int, name: str, lo: int | None = None, hi: int | None = None) -> int:
    try:
        out = int(value)
    except ValueError:
        raise LogFormatError(line, name, f"expected an integer, got {value!r}") from None
    if (lo is not None and out < lo) or (hi is not None and out > hi):
        raise LogFormatError(line, name, f"{out} out of range")
    return out


def parse_log(stream: bytes | str | IO) -> list[LogRecord]:
    """Parse a ``log/1`` CSV stream (bytes, text or a file object)."""
    text = _read_text(stream)
    if not text:
        return []
    rows = csv.reader(io.StringIO(text, newline=""))
    records = []
    for line, row in enumerate(rows, start=1):
        if line == 1:
            if tuple(row) != LOG_HEADER:
                raise LogFormatError(1, "header", f"expected {','.join(LOG_HEADER)}")
            continue
        if not row:
            continue
        if len(row) != len(LOG_HEADER):
            raise LogFormatError(line, "row", f"expected {len(LOG_HEADER)} fields, got {len(row)}")
        ts, direction, qid, domain, src, dst = row
        if direction not in ("Q", "R"):
            raise LogFormatError(line, "dir", f"expected Q or R, got {direction!r}")
        if not domain:
            raise LogFormatError(line, "domain", "empty")
        records.append(LogRecord(
            _int_field(ts, line, "ts_us"), direction, _int_field(qid, line, "qid", 0, 65535),
            domain, src, dst, line,
        ))
    return records


def format_log(records: Iterable[LogRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(LOG_HEADER)
    for r in records:
        w.writerow((r.timestamp_us, r.direction, r.query_id, r.domain, r.src_addr, r.dst_addr))
    return buf.getvalue()


def read_log(path: str | Path) -> list[LogRecord]:
    return parse_log(Path(path).read_bytes())


def write_log(path: str | Path, records: Iterable[LogRecord]) -> None:
    Path(path).write_bytes(format_log(records).encode("utf-8"))


class ServerRegistry(dict):
    """address -> (level, server_name)."""

    def lookup(self, address: str) -> tuple[DnsLevel, str]:
        return self.get(address, (DnsLevel.UNKNOWN, address))

    @classmethod
    def parse(cls, stream) -> "ServerRegistry":
        reg = cls()
        for line, row in enumerate(csv.reader(io.StringIO(_read_text(stream), newline="")), start=1):
            if not row or row[0].startswith("#") or (line == 1 and tuple(row) == REGISTRY_HEADER):
                continue
            if len(row) != 3:
                raise LogFormatError(line, "row", "expected address,level,server_name")
            address, level_text, name = row
            try:
                level = DnsLevel.parse(level_text)
            except ValueError as exc:
                raise LogFormatError(line, "level", str(exc)) from None
            if level not in CONTACT_LEVELS:
                raise LogFormatError(line, "level", f"{level.value} is not a server level")
            if address in reg:
                raise LogFormatError(line, "address", f"duplicate address {address!r}")
            reg[address] = (level, name)
        return reg

    @classmethod
    def load(cls, path: str | Path) -> "ServerRegistry":
        return cls.parse(Path(path).read_bytes())

    def format(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(REGISTRY_HEADER)
        for address, (level, name) in self.items():
            w.writerow((address, level.value, name))
        return buf.getvalue()


@dataclass(frozen=True)
class ContactPair:
    query: LogRecord
    response: LogRecord
    level: DnsLevel = DnsLevel.UNKNOWN

    @property
    def server_addr(self) -> str:
        return self.query.dst_addr

    @property
    def rtt_us(self) -> int:
        return self.response.timestamp_us - self.query.timestamp_us


@dataclass(frozen=True)
class ResolutionTree:
    client_query: LogRecord
    client_response: LogRecord
    contacts: tuple[ContactPair, ...] = ()


@dataclass
class Correlation:
    trees: list[ResolutionTree]
    unmatched_client: list[LogRecord]
    unmatched_resolver: list[LogRecord]
    ambiguous: list[LogRecord]

    def report(self) -> dict[str, int]:
        return {
            "trees": len(self.trees),
            "unmatched_client": len(self.unmatched_client),
            "unmatched_resolver": len(self.unmatched_resolver),
            "ambiguous": len(self.ambiguous),
        }


def _pair(records: Sequence[LogRecord]):
    """FIFO-pair queries with the first later response on the same key."""
    # responses sort before queries at equal timestamps: a pair needs elapsed time
    order = sorted(records, key=lambda r: (r.timestamp_us, r.is_query, r.line))
    open_q: dict[tuple[int, str], deque] = defaultdict(deque)
    pairs, orphans, ambiguous = [], [], []
    for rec in order:
        if rec.is_query:
            if open_q[rec.key]:
                ambiguous.append(rec)
            open_q[rec.key].append(rec)
        elif open_q[rec.key]:
            pairs.append((open_q[rec.key].popleft(), rec))
        else:
            orphans.append(rec)
    for q in open_q.values():
        orphans.extend(q)
    return pairs, orphans, ambiguous


def correlate(client_log: Sequence[LogRecord], resolver_log: Sequence[LogRecord],
              registry: ServerRegistry | None = None) -> Correlation:
    """Join client query/response pairs with the resolver contacts they caused.

    Client and resolver records are matched on (query ID, domain). A
    resolver pair becomes a contact of the client pair whose time window
    contains it; when several client windows qualify, the earliest client
    query wins. Records that never pair are returned, not dropped.
    """
    client_pairs, client_orphans, amb_c = _pair(client_log)
    resolver_pairs, resolver_orphans, amb_r = _pair(resolver_log)
    ambiguous = amb_c + amb_r
    if ambiguous:
        warnings.warn(f"{len(ambiguous)} queries reused an open (qid, domain) key; earlier pairing kept",
                      AmbiguousCorrelationWarning, stacklevel=2)

    windows: dict[tuple[int, str], list[int]] = defaultdict(list)
    client_pairs.sort(key=lambda p: (p[0].timestamp_us, p[0].line))
    for i, (q, _) in enumerate(client_pairs):
        windows[q.key].append(i)
    contacts: list[list[ContactPair]] = [[] for _ in client_pairs]
    registry = registry or ServerRegistry()
    for q, r in sorted(resolver_pairs, key=lambda p: (p[0].timestamp_us, p[0].line)):
        for i in windows.get(q.key, ()):
            cq, cr = client_pairs[i]
            if cq.timestamp_us <= q.timestamp_us and r.timestamp_us <= cr.timestamp_us:
                contacts[i].append(ContactPair(q, r, registry.lookup(q.dst_addr)[0]))
                break
        else:
            resolver_orphans.extend((q, r))

    trees = [ResolutionTree(q, r, tuple(c)) for (q, r), c in zip(client_pairs, contacts)]
    by_line = lambda rec: (rec.timestamp_us, rec.line)  # noqa: E731
    return Correlation(trees, sorted(client_orphans, key=by_line), sorted(resolver_orphans, key=by_line), ambiguous)


def tag_level(tree: ResolutionTree, registry: ServerRegistry) -> Transaction:
    """Client-side transaction tagged with the highest level contacted."""
    t0 = tree.client_query.timestamp_us
    contacts = []
    for c in sorted(tree.contacts, key=lambda c: (c.query.timestamp_us, c.query.line)):
        level, name = registry.lookup(c.server_addr)
        contacts.append(Contact(level, name, c.rtt_us, c.query.timestamp_us - t0))
    return Transaction(
        query_id=tree.client_query.query_id,
        domain=tree.client_query.domain,
        rtt_us=tree.client_response.timestamp_us - t0,
        level=highest_level(c.level for c in contacts),
        label=Label.BENIGN,
        contacts=tuple(contacts),
    )


def accumulate_rtt(tree_or_tx: ResolutionTree | Transaction) -> dict[DnsLevel, int]:
    """Accumulated RTT per contacted level.

    A level's value runs from its first query to the last upstream response,
    i.e. its own RTT plus every lower contact and the processing gaps in
    between. Contacts are taken as sequential.
    """
    if isinstance(tree_or_tx, ResolutionTree):
        spans = [(c.query.timestamp_us, c.response.timestamp_us, c.level) for c in tree_or_tx.contacts]
    else:
        spans = [(c.start_us, c.start_us + c.rtt_us, c.level) for c in tree_or_tx.contacts]
    if not spans:
        raise ValueError("a cache answer has no accumulated RTT")
    spans.sort(key=lambda s: s[0])
    end = max(s[1] for s in spans)
    out: dict[DnsLevel, int] = {}
    for start, _, level in spans:
        out.setdefault(level, end - start)
    return out


def ingest(client_log, resolver_log, registry: ServerRegistry) -> tuple[list[Transaction], Correlation]:
    corr = correlate(client_log, resolver_log, registry)
    return [tag_level(t, registry) for t in corr.trees], corr


# -- transactions/1 ---------------------------------------------------------

def _format_contacts(contacts: Iterable[Contact]) -> str:
    return ";".join(f"{c.level.value}/{c.server}/{c.start_us}/{c.rtt_us}" for c in contacts)


def _parse_contacts(text: str, line: int) -> tuple[Contact, ...]:
    out = []
    for item in filter(None, text.split(";")):
        parts = item.split("/")
        if len(parts) != 4:
            raise LogFormatError(line, "contacts", f"bad contact {item!r}")
        try:
            level = DnsLevel.parse(parts[0])
        except ValueError as exc:
            raise LogFormatError(line, "contacts", str(exc)) from None
        out.append(Contact(level, parts[1], _int_field(parts[3], line, "contacts", 0),
                           _int_field(parts[2], line, "contacts")))
    return tuple(out)


def format_transactions(transactions: Iterable[Transaction]) -> str:
    buf = io.StringIO()
    buf.write(TX_FORMAT + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TX_HEADER)
    for t in transactions:
        w.writerow((t.query_id, t.domain, t.rtt_us, t.level.value, t.label.value, _format_contacts(t.contacts)))
    return buf.getvalue()


def parse_transactions(stream) -> list[Transaction]:
    text = _read_text(stream)
    lines = text.split("\n", 1)
    if lines[0] != TX_FORMAT:
        raise LogFormatError(1, "format", f"expected {TX_FORMAT}")
    rows = csv.reader(io.StringIO(lines[1] if len(lines) > 1 else "", newline=""))
    out = []
    for line, row in enumerate(rows, start=2):
        if line == 2:
            if tuple(row) != TX_HEADER:
                raise LogFormatError(2, "header", f"expected {','.join(TX_HEADER)}")
            continue
        if not row:
            continue
        if len(row) != len(TX_HEADER):
            raise LogFormatError(line, "row", f"expected {len(TX_HEADER)} fields, got {len(row)}")
        qid, domain, rtt, level, label, contacts = row
        try:
            lvl, lab = DnsLevel.parse(level), Label.parse(label)
        except ValueError as exc:
            raise LogFormatError(line, "level/label", str(exc)) from None
        out.append(Transaction(_int_field(qid, line, "qid", 0, 65535), domain,
                               _int_field(rtt, line, "rtt_us", 1), lvl, lab, _parse_contacts(contacts, line)))
    return out


def write_transactions(path: str | Path, transactions: Iterable[Transaction]) -> None:
    Path(path).write_bytes(format_transactions(transactions).encode("utf-8"))


def read_transactions(path: str | Path) -> list[Transaction]:
    return parse_transactions(Path(path).read_bytes())


# -- synthetic captures -----------------------------------------------------

CLIENT_ADDR = "10.0.0.2"
RESOLVER_ADDR = "10.0.0.53"
RESOLVER_UPLINK = "192.0.2.53"


def _address_book(transactions: Iterable[Transaction]) -> dict[tuple[DnsLevel, str], str]:
    book: dict[tuple[DnsLevel, str], str] = {}
    for t in transactions:
        for c in t.contacts:
            key = (c.level, c.server)
            if key not in book:
                n = len(book) + 1
                book[key] = f"198.18.{n // 256}.{n % 256}"
    return book


def to_logs(transactions: Sequence[Transaction], spacing_us: int = 1_000_000, start_us: int = 1_600_000_000_000_000
            ) -> tuple[list[LogRecord], list[LogRecord], ServerRegistry]:
    """Render benign transactions as the two captures plus a registry.

    Client query ``i`` is sent at ``start_us + i * spacing_us``. Upstream
    queries reuse the client's (qid, domain), mirroring how the captures are
    joined.
    """
    book = _address_book(transactions)
    registry = ServerRegistry({addr: key for key, addr in book.items()})
    client, resolver = [], []
    for i, t in enumerate(transactions):
        t0 = start_us + i * spacing_us
        client.append(LogRecord(t0, "Q", t.query_id, t.domain, CLIENT_ADDR, RESOLVER_ADDR))
        client.append(LogRecord(t0 + t.rtt_us, "R", t.query_id, t.domain, RESOLVER_ADDR, CLIENT_ADDR))
        for c in t.contacts:
            addr = book[(c.level, c.server)]
            resolver.append(LogRecord(t0 + c.start_us, "Q", t.query_id, t.domain, RESOLVER_UPLINK, addr))
            resolver.append(LogRecord(t0 + c.start_us + c.rtt_us, "R", t.query_id, t.domain, addr, RESOLVER_UPLINK))
    return client, resolver, registry
