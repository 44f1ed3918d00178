"""Seeded simulation of benign DNS transactions and race-condition spoofing.

Each upstream server's response time is modelled as
``offset + Poisson(lambda) + Uniform(0, jitter)`` milliseconds. A resolved
client query pays the client/resolver leg (the same draw a cache hit would
cost) plus every upstream contact and the resolver's processing gaps between
contacts. All RTTs are integer microseconds.
"""

from __future__ import annotations

import configparser
import enum
import io
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from dnstiming.levels import CONTACT_LEVELS, WORKLOAD_LEVELS, DnsLevel, Label

MODEL_FORMAT = "levelmodel/1"
WORKLOAD_FORMAT = "workload/1"
WILDCARD = "*"
PROFILES = ("local", "cloud", "iucc", "separated")


class ConfigError(ValueError):
    """A level model or workload is missing an entry or holds bad values."""


class TtlMode(str, enum.Enum):
    LONG = "long"  # every answer comes from the cache
    ZERO = "zero"  # every answer needs resolution
    MIXED = "mixed"  # shares as configured


@dataclass(frozen=True)
class ServerTiming:
    offset_ms: float
    lambda_ms: float
    jitter_ms: float = 0.0

    def __post_init__(self):
        if not (self.offset_ms >= 0 and self.lambda_ms > 0 and self.jitter_ms >= 0):
            raise ConfigError(f"bad server timing {self}")


@dataclass(frozen=True)
class CacheTiming:
    """Client/resolver leg. ``mean_ms`` defaults to the measured ping."""

    ping_mean_ms: float
    mean_ms: float | None = None
    spread_ms: float = 0.0

    def __post_init__(self):
        if self.mean_ms is None:
            object.__setattr__(self, "mean_ms", self.ping_mean_ms)
        if not (self.ping_mean_ms > 0 and self.mean_ms > 0 and self.spread_ms >= 0):
            raise ConfigError(f"bad cache timing {self}")


@dataclass(frozen=True)
class AttackTiming:
    min_ms: float
    max_ms: float

    def __post_init__(self):
        if not (0 <= self.min_ms <= self.max_ms):
            raise ConfigError(f"bad attack timing {self}")


@dataclass
class LevelModel:
    """Per-level, per-server RTT parameters for one vantage point.

    ``servers`` maps ``(level, server_name)`` to timings; the server name
    ``"*"`` matches any server at that level (used for SLD/host servers,
    which are per-domain).
    """

    name: str
    cache: CacheTiming
    servers: dict[tuple[DnsLevel, str], ServerTiming]
    process: ServerTiming = field(default_factory=lambda: ServerTiming(0.1, 0.5, 0.4))
    attack: AttackTiming | None = None

    def entry(self, level: DnsLevel, server: str) -> ServerTiming:
        timing = self.servers.get((level, server)) or self.servers.get((level, WILDCARD))
        if timing is None:
            raise ConfigError(f"level model {self.name!r} has no entry for level={level.value} server={server!r}")
        return timing

    def servers_at(self, level: DnsLevel) -> list[str]:
        return [s for (lvl, s) in self.servers if lvl is level and s != WILDCARD]

    def has_level(self, level: DnsLevel) -> bool:
        return any(lvl is level for lvl, _ in self.servers)

    @classmethod
    def loads(cls, text: str) -> "LevelModel":
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        try:
            cp.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(f"unreadable level model: {exc}") from None
        fmt = cp.get("model", "format", fallback=None)
        if fmt != MODEL_FORMAT:
            raise ConfigError(f"expected format {MODEL_FORMAT}, got {fmt!r}")
        try:
            cache = CacheTiming(**_floats(cp["cache"]))
            attack = AttackTiming(**_floats(cp["attack"])) if cp.has_section("attack") else None
            process = ServerTiming(**_floats(cp["process"])) if cp.has_section("process") else None
            servers = {}
            for section in cp.sections():
                if section in ("model", "cache", "attack", "process"):
                    continue
                level_name, _, server = section.partition(" ")
                level = DnsLevel.parse(level_name)
                if level not in CONTACT_LEVELS or not server:
                    raise ConfigError(f"bad server section [{section}]")
                servers[(level, server.strip())] = ServerTiming(**_floats(cp[section]))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad level model: {exc}") from None
        model = cls(name=cp.get("model", "name", fallback="custom"), cache=cache, servers=servers, attack=attack)
        if process is not None:
            model.process = process
        return model

    @classmethod
    def load(cls, path: str | Path) -> "LevelModel":
        return cls.loads(Path(path).read_text(encoding="utf-8"))

    def dumps(self) -> str:
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        cp["model"] = {"format": MODEL_FORMAT, "name": self.name}
        cp["cache"] = {
            "ping_mean_ms": repr(self.cache.ping_mean_ms),
            "mean_ms": repr(self.cache.mean_ms),
            "spread_ms": repr(self.cache.spread_ms),
        }
        if self.attack is not None:
            cp["attack"] = {"min_ms": repr(self.attack.min_ms), "max_ms": repr(self.attack.max_ms)}
        cp["process"] = _timing_dict(self.process)
        for (level, server), timing in self.servers.items():
            cp[f"{level.value} {server}"] = _timing_dict(timing)
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()


def _floats(section: Mapping[str, str]) -> dict[str, float]:
    return {key: float(value) for key, value in section.items()}


def _timing_dict(t: ServerTiming) -> dict[str, str]:
    return {"offset_ms": repr(t.offset_ms), "lambda_ms": repr(t.lambda_ms), "jitter_ms": repr(t.jitter_ms)}


def load_profile(name: str) -> LevelModel:
    """Load one of the bundled level models (see ``PROFILES``)."""
    if name not in PROFILES:
        raise ConfigError(f"unknown profile {name!r}; choose from {', '.join(PROFILES)}")
    text = resources.files("dnstiming.profiles").joinpath(f"{name}.ini").read_text(encoding="utf-8")
    return LevelModel.loads(text)


@dataclass(frozen=True)
class DomainShares:
    name: str
    shares: Mapping[DnsLevel, float]


@dataclass(frozen=True)
class Workload:
    domains: tuple[DomainShares, ...]
    total_queries: int
    ttl_mode: TtlMode = TtlMode.MIXED

    def validate(self) -> None:
        if not self.domains:
            raise ConfigError("workload has no domains")
        if self.total_queries <= 0:
            raise ConfigError("total_queries must be positive")
        for d in self.domains:
            bad = [lvl for lvl in d.shares if lvl not in WORKLOAD_LEVELS]
            if bad:
                raise ConfigError(f"{d.name}: level {bad[0].value} cannot appear in a workload")
            if any(not 0 <= s <= 1 for s in d.shares.values()):
                raise ConfigError(f"{d.name}: shares must lie in [0, 1]")
            if abs(sum(d.shares.values()) - 1.0) > 1e-9:
                raise ConfigError(f"{d.name}: level shares sum to {sum(d.shares.values())!r}, not 1")

    def effective_shares(self, domain: DomainShares) -> dict[DnsLevel, float]:
        shares = {lvl: float(domain.shares.get(lvl, 0.0)) for lvl in WORKLOAD_LEVELS}
        if self.ttl_mode is TtlMode.LONG:
            return {lvl: float(lvl is DnsLevel.CACHE) for lvl in WORKLOAD_LEVELS}
        if self.ttl_mode is TtlMode.ZERO:
            rest = 1.0 - shares[DnsLevel.CACHE]
            if rest <= 0:
                raise ConfigError(f"{domain.name}: zero TTL leaves no resolvable share")
            shares = {lvl: (0.0 if lvl is DnsLevel.CACHE else s / rest) for lvl, s in shares.items()}
        return shares

    @classmethod
    def loads(cls, text: str) -> "Workload":
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        try:
            cp.read_string(text)
            fmt = cp.get("workload", "format", fallback=None)
            if fmt != WORKLOAD_FORMAT:
                raise ConfigError(f"expected format {WORKLOAD_FORMAT}, got {fmt!r}")
            domains = []
            for section in cp.sections():
                if section == "workload":
                    continue
                kind, _, name = section.partition(" ")
                if kind != "domain" or not name.strip():
                    raise ConfigError(f"bad section [{section}]")
                shares = {DnsLevel.parse(k): float(v) for k, v in cp[section].items()}
                domains.append(DomainShares(name.strip(), shares))
            workload = cls(
                domains=tuple(domains),
                total_queries=cp.getint("workload", "total_queries"),
                ttl_mode=TtlMode(cp.get("workload", "ttl_mode", fallback="mixed")),
            )
        except (configparser.Error, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"bad workload: {exc}") from None
        workload.validate()
        return workload

    @classmethod
    def load(cls, path: str | Path) -> "Workload":
        return cls.loads(Path(path).read_text(encoding="utf-8"))

    def dumps(self) -> str:
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        cp["workload"] = {
            "format": WORKLOAD_FORMAT,
            "total_queries": str(self.total_queries),
            "ttl_mode": self.ttl_mode.value,
        }
        for d in self.domains:
            cp[f"domain {d.name}"] = {lvl.value: repr(float(s)) for lvl, s in d.shares.items()}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()


@dataclass(frozen=True)
class Contact:
    """One upstream query made by the resolver.

    ``start_us`` is when the resolver sent it, relative to the client query.
    """

    level: DnsLevel
    server: str
    rtt_us: int
    start_us: int = 0


@dataclass(frozen=True)
class Transaction:
    query_id: int
    domain: str
    rtt_us: int
    level: DnsLevel
    label: Label = Label.BENIGN
    contacts: tuple[Contact, ...] = ()


# Average share of answers per level in the local (L) and cloud (C)
# captures, in percent. Neither row sums to exactly 100.
REFERENCE_LEVEL_SHARES = {
    "local": {
        DnsLevel.CACHE: 41.651,
        DnsLevel.ROOT: 23.257,
        DnsLevel.GTLD: 13.432,
        DnsLevel.CCTLD: 1.644,
        DnsLevel.SLD: 19.87,
        DnsLevel.HOST: 0.13,
    },
    "cloud": {
        DnsLevel.CACHE: 16.76,
        DnsLevel.ROOT: 32.88,
        DnsLevel.GTLD: 19.38,
        DnsLevel.CCTLD: 2.872,
        DnsLevel.SLD: 28.072,
        DnsLevel.HOST: 0.07,
    },
}

GENERIC_DOMAINS = (
    "google.com", "youtube.com", "facebook.com", "baidu.com", "wikipedia.org", "yahoo.com",
    "amazon.com", "twitter.com", "instagram.com", "linkedin.com", "reddit.com", "netflix.com",
    "microsoft.com", "apple.com", "bing.com", "live.com", "office.com", "quora.com", "abc.com",
    "cnn.com", "nytimes.com", "ebay.com", "paypal.com", "github.com", "stackoverflow.com",
    "wordpress.com", "tumblr.com", "pinterest.com", "imdb.com", "espn.com", "adobe.com",
    "dropbox.com", "msn.com", "bbc.com", "craigslist.org", "mozilla.org", "archive.org",
    "w3.org", "cloudflare.com", "spotify.com", "booking.com", "walmart.com", "weather.com",
    "etsy.com", "imgur.com", "medium.com", "vimeo.com", "salesforce.com", "hulu.com",
    "tripadvisor.com", "speedtest.net", "sourceforge.net", "php.net", "slideshare.net",
)
COUNTRY_DOMAINS = ("sina.com.cn", "lemonde.fr", "unam.mx", "yandex.ru", "pchome.com.tw", "bbc.co.uk")


def reference_shares(profile: str) -> dict[DnsLevel, float]:
    """Measured level mix for ``profile``, normalised to sum to one."""
    row = REFERENCE_LEVEL_SHARES["cloud" if profile == "cloud" else "local"]
    total = sum(row.values())
    return {lvl: v / total for lvl, v in row.items()}


def reference_workload(profile: str = "local", total_queries: int = 100_000,
                   ttl_mode: TtlMode = TtlMode.MIXED) -> Workload:
    """Top-site workload whose aggregate level mix matches the measured one.

    Generic (.com/.org/.net) domains resolve through gTLD servers and the
    six country domains through their ccTLD. The number of generic domains
    is chosen so that, with uniform domain popularity, the aggregate gTLD
    and ccTLD shares land on the published proportions.
    """
    target = reference_shares(profile)
    tld = target[DnsLevel.GTLD] + target[DnsLevel.CCTLD]
    n_total = round(len(COUNTRY_DOMAINS) * tld / target[DnsLevel.CCTLD])
    n_generic = n_total - len(COUNTRY_DOMAINS)
    if not 0 < n_generic <= len(GENERIC_DOMAINS):
        raise ConfigError("cannot build a domain mix for these shares")

    def shares(tld_level):
        s = dict(target)
        s[DnsLevel.GTLD] = s[DnsLevel.CCTLD] = 0.0
        s[tld_level] = tld
        return s

    domains = [DomainShares(d, shares(DnsLevel.GTLD)) for d in GENERIC_DOMAINS[:n_generic]]
    domains += [DomainShares(d, shares(DnsLevel.CCTLD)) for d in COUNTRY_DOMAINS]
    return Workload(tuple(domains), total_queries, ttl_mode)


def _draw_ms(offset, lam, jitter, rng: np.random.Generator, size=None) -> np.ndarray:
    return offset + rng.poisson(lam, size) + rng.random(size) * jitter


def _to_us(ms) -> np.ndarray:
    return np.maximum(np.rint(np.asarray(ms, dtype=float) * 1000.0), 1).astype(np.int64)


def sample_level_rtt(model: LevelModel, level: DnsLevel, server: str, rng: np.random.Generator) -> int:
    """Draw one response time (µs) for ``server`` at ``level``."""
    t = model.entry(level, server)
    return int(_to_us(_draw_ms(t.offset_ms, t.lambda_ms, t.jitter_ms, rng)))


def sample_cache_rtt(model: LevelModel, rng: np.random.Generator, size=None) -> np.ndarray:
    c = model.cache
    return _to_us(rng.normal(c.mean_ms, c.spread_ms, size) if c.spread_ms > 0 else np.full(size or (), c.mean_ms))


def _tld_suffix(domain: str) -> str:
    return domain.rstrip(".").rsplit(".", 1)[-1].lower()


def _chain(level: DnsLevel, tld_kind: DnsLevel) -> tuple[DnsLevel, ...]:
    if level is DnsLevel.ROOT:
        return (DnsLevel.ROOT, tld_kind, DnsLevel.SLD)
    if level in (DnsLevel.GTLD, DnsLevel.CCTLD):
        return (level, DnsLevel.SLD)
    if level is DnsLevel.SLD:
        return (DnsLevel.SLD,)
    if level is DnsLevel.HOST:
        return (DnsLevel.HOST,)
    return ()


def _server_name(level: DnsLevel, domain: str) -> str:
    return f"ns.{domain}" if level is DnsLevel.SLD else f"host.{domain}"


def simulate_benign(workload: Workload, model: LevelModel, seed: int) -> list[Transaction]:
    """Generate ``workload.total_queries`` benign transactions.

    Each query picks a domain uniformly, then a level from that domain's
    shares. A query tagged with level L walks the hierarchy from L down to
    the SLD (root queries also visit the domain's TLD server). Query IDs are
    sequential modulo 65536.
    """
    workload.validate()
    rng = np.random.default_rng(seed)
    n = workload.total_queries
    names = [d.name for d in workload.domains]
    cctlds = model.servers_at(DnsLevel.CCTLD)
    tld_kind = [DnsLevel.CCTLD if _tld_suffix(d) in cctlds else DnsLevel.GTLD for d in names]

    table = np.array([[workload.effective_shares(d)[lvl] for lvl in WORKLOAD_LEVELS] for d in workload.domains])
    cum = np.cumsum(table, axis=1)
    for row, shares in zip(cum, table):
        row[np.flatnonzero(shares > 0)[-1]:] = 1.0
    _check_model_covers(model, workload, table, tld_kind)

    dom = rng.integers(len(names), size=n)
    u = rng.random(n)
    lvl_idx = (u[:, None] >= cum[dom]).sum(axis=1)
    leg = sample_cache_rtt(model, rng, n)

    # flatten every upstream contact so draws vectorise per field
    chains = [_chain(WORKLOAD_LEVELS[li], tld_kind[di]) for li, di in zip(lvl_idx.tolist(), dom.tolist())]
    owner = np.repeat(np.arange(n), [len(c) for c in chains])
    c_level = [lvl for c in chains for lvl in c]
    m = len(c_level)
    servers: list[str] = [""] * m
    pools = {lvl: model.servers_at(lvl) for lvl in (DnsLevel.ROOT, DnsLevel.GTLD, DnsLevel.CCTLD)}
    picks = rng.integers(1 << 30, size=m)
    for j, (lvl, i) in enumerate(zip(c_level, owner.tolist())):
        domain = names[dom[i]]
        if lvl is DnsLevel.CCTLD and _tld_suffix(domain) in cctlds:
            servers[j] = _tld_suffix(domain)
        elif lvl in pools:
            servers[j] = pools[lvl][picks[j] % len(pools[lvl])]
        else:
            servers[j] = _server_name(lvl, domain)
    params = np.array([astuple_timing(model.entry(lvl, s)) for lvl, s in zip(c_level, servers)]).reshape(m, 3)
    c_rtt = _to_us(_draw_ms(params[:, 0], params[:, 1], params[:, 2], rng, m))
    p = model.process
    gaps = _to_us(_draw_ms(p.offset_ms, p.lambda_ms, p.jitter_ms, rng, m))

    out = []
    j = 0
    for i in range(n):
        chain = chains[i]
        level = WORKLOAD_LEVELS[lvl_idx[i]]
        leg_us = int(leg[i])
        if not chain:
            out.append(Transaction(i % 65536, names[dom[i]], leg_us, level))
            continue
        t = leg_us // 2
        contacts = []
        for k in range(len(chain)):
            if k:
                t += int(gaps[j + k])
            r = int(c_rtt[j + k])
            contacts.append(Contact(chain[k], servers[j + k], r, t))
            t += r
        j += len(chain)
        rtt = t + leg_us - leg_us // 2
        out.append(Transaction(i % 65536, names[dom[i]], rtt, level, Label.BENIGN, tuple(contacts)))
    return out


def astuple_timing(t: ServerTiming) -> tuple[float, float, float]:
    return (t.offset_ms, t.lambda_ms, t.jitter_ms)


def _check_model_covers(model, workload, table, tld_kind) -> None:
    for d, row, kind in zip(workload.domains, table, tld_kind):
        for lvl, share in zip(WORKLOAD_LEVELS, row):
            if share <= 0:
                continue
            for needed in _chain(lvl, kind):
                if not model.has_level(needed):
                    raise ConfigError(
                        f"level model {model.name!r} has no {needed.value} servers "
                        f"(needed by {d.name} at level {lvl.value})")


def simulate_attack(benign: Sequence[Transaction], model: LevelModel, seed: int) -> list[Transaction]:
    """One spoofed answer per benign query, racing the resolver.

    Attack RTTs are uniform over the model's attack window (whole
    microseconds, at least 1 µs). Spoofed answers involve no resolution, so
    they carry level CACHE and no contacts.
    """
    if model.attack is None:
        raise ConfigError(f"level model {model.name!r} has no attack entry")
    lo = max(int(round(model.attack.min_ms * 1000)), 1)
    hi = max(int(round(model.attack.max_ms * 1000)), lo)
    rtts = np.random.default_rng(seed).integers(lo, hi + 1, size=len(benign))
    return [
        Transaction(t.query_id, t.domain, int(r), DnsLevel.CACHE, Label.ATTACK)
        for t, r in zip(benign, rtts)
    ]


def level_counts(transactions: Iterable[Transaction]) -> dict[DnsLevel, int]:
    counts: dict[DnsLevel, int] = {}
    for t in transactions:
        counts[t.level] = counts.get(t.level, 0) + 1
    return counts


def with_total(workload: Workload, total_queries: int) -> Workload:
    return replace(workload, total_queries=total_queries)


def rtt_array(transactions: Iterable[Transaction]) -> np.ndarray:
    return np.fromiter((t.rtt_us for t in transactions), dtype=np.int64)


def single_domain_workload(name: str, shares: Mapping[DnsLevel, float], total_queries: int,
                           ttl_mode: TtlMode = TtlMode.MIXED) -> Workload:
    return Workload((DomainShares(name, dict(shares)),), total_queries, ttl_mode)

