import random
import warnings

import pytest
from hypothesis import given, strategies as st

from conftest import simulated
from dnstiming.ingest import (
    AmbiguousCorrelationWarning, ContactPair, LogFormatError, LogRecord, ResolutionTree, ServerRegistry,
    accumulate_rtt, correlate, format_log, format_transactions, ingest, parse_log, parse_transactions, tag_level,
    to_logs,
)
from dnstiming.levels import DnsLevel
from dnstiming.traffic import Contact, Transaction

HEADER = "ts_us,dir,qid,domain,src,dst\n"
CLIENT, RESOLVER = "10.0.0.2", "10.0.0.53"
REGISTRY = ServerRegistry({
    "198.41.0.4": (DnsLevel.ROOT, "a.root-servers.net"),
    "192.5.6.30": (DnsLevel.GTLD, "a.gtld-servers.net"),
    "208.80.154.238": (DnsLevel.SLD, "ns0.wikimedia.org"),
})


def rec(ts, d, qid=7, domain="www.wikipedia.org", src=CLIENT, dst=RESOLVER):
    return LogRecord(ts, d, qid, domain, src, dst)


def contact(ts_q, ts_r, addr, qid=7, domain="www.wikipedia.org"):
    return [rec(ts_q, "Q", qid, domain, RESOLVER, addr), rec(ts_r, "R", qid, domain, addr, RESOLVER)]


# -- parse_log --------------------------------------------------------------------------


def test_parse_empty():
    assert parse_log(b"") == []
    assert parse_log(HEADER) == []


def test_parse_one_line_round_trip():
    text = HEADER + "1600000000000000,Q,4711,www.wikipedia.org,10.0.0.2,10.0.0.53\n"
    records = parse_log(text.encode())
    assert len(records) == 1
    assert records[0].line == 2
    assert format_log(records) == text


def test_non_integer_qid_names_field():
    text = HEADER + "1,Q,abc,x.org,a,b\n"
    with pytest.raises(LogFormatError) as info:
        parse_log(text)
    assert info.value.field == "qid" and info.value.line == 2
    assert "'qid'" in str(info.value)


@pytest.mark.parametrize("line, field", [
    ("1,X,1,x.org,a,b", "dir"),
    ("one,Q,1,x.org,a,b", "ts_us"),
    ("1,Q,70000,x.org,a,b", "qid"),
    ("1,Q,1,x.org,a", "row"),
    ("1,Q,1,,a,b", "domain"),
])
def test_malformed_lines(line, field):
    with pytest.raises(LogFormatError) as info:
        parse_log(HEADER + line + "\n")
    assert info.value.field == field


def test_missing_header():
    with pytest.raises(LogFormatError, match="header"):
        parse_log("1,Q,1,x.org,a,b\n")


records_st = st.lists(st.builds(
    LogRecord, st.integers(0, 2**53), st.sampled_from("QR"), st.integers(0, 65535),
    st.from_regex(r"[a-z0-9-]{1,12}(\.[a-z]{2,6}){1,2}", fullmatch=True),
    st.from_regex(r"\d{1,3}(\.\d{1,3}){3}", fullmatch=True), st.from_regex(r"[0-9a-f:.]{1,20}", fullmatch=True),
), max_size=30)


@given(records_st)
def test_log_round_trip(records):
    assert parse_log(format_log(records)) == records


# -- registry ---------------------------------------------------------------------------


def test_registry_parse_and_lookup():
    reg = ServerRegistry.parse("address,level,server_name\n1.2.3.4,root,a.root\n5.6.7.8,cctld,ru\n")
    assert reg.lookup("1.2.3.4") == (DnsLevel.ROOT, "a.root")
    assert reg.lookup("9.9.9.9") == (DnsLevel.UNKNOWN, "9.9.9.9")
    assert ServerRegistry.parse(reg.format()) == reg


def test_registry_rejects_duplicates_and_cache():
    with pytest.raises(LogFormatError, match="duplicate"):
        ServerRegistry.parse("1.2.3.4,root,a\n1.2.3.4,sld,b\n")
    with pytest.raises(LogFormatError, match="not a server level"):
        ServerRegistry.parse("1.2.3.4,cache,a\n")


# -- correlate ---------------------------------------------------------------------------


def test_cache_case_has_no_contacts():
    corr = correlate([rec(0, "Q"), rec(1800, "R")], [])
    assert len(corr.trees) == 1 and corr.trees[0].contacts == ()
    tx = tag_level(corr.trees[0], REGISTRY)
    assert tx.level is DnsLevel.CACHE and tx.rtt_us == 1800


def test_two_contacts_in_window():
    client = [rec(0, "Q"), rec(120_000, "R")]
    resolver = contact(1_000, 41_000, "198.41.0.4") + contact(42_000, 72_000, "192.5.6.30")
    corr = correlate(client, resolver, REGISTRY)
    (tree,) = corr.trees
    assert [c.level for c in tree.contacts] == [DnsLevel.ROOT, DnsLevel.GTLD]
    assert [c.rtt_us for c in tree.contacts] == [40_000, 30_000]
    assert corr.report() == {"trees": 1, "unmatched_client": 0, "unmatched_resolver": 0, "ambiguous": 0}


def test_orphan_resolver_response_reported():
    client = [rec(0, "Q"), rec(50_000, "R")]
    resolver = [rec(10_000, "R", 7, "www.wikipedia.org", "198.41.0.4", RESOLVER)]
    corr = correlate(client, resolver, REGISTRY)
    assert corr.trees[0].contacts == ()
    assert corr.unmatched_resolver == resolver


def test_unanswered_client_query_reported():
    corr = correlate([rec(0, "Q"), rec(5, "Q", qid=8)], [])
    assert corr.trees == [] and len(corr.unmatched_client) == 2


def test_out_of_window_contact_is_orphan():
    client = [rec(0, "Q"), rec(50_000, "R")]
    resolver = contact(60_000, 70_000, "198.41.0.4")
    corr = correlate(client, resolver, REGISTRY)
    assert corr.trees[0].contacts == () and len(corr.unmatched_resolver) == 2


def test_ambiguous_key_warns_and_earlier_wins():
    client = [rec(0, "Q"), rec(10, "Q"), rec(100, "R"), rec(200, "R")]
    with pytest.warns(AmbiguousCorrelationWarning):
        corr = correlate(client, [])
    assert [(t.client_query.timestamp_us, t.client_response.timestamp_us) for t in corr.trees] == [(0, 100), (10, 200)]
    assert len(corr.ambiguous) == 1


def test_interleaved_records_are_key_matched():
    client = [rec(100, "R", qid=1), rec(0, "Q", qid=1), rec(50, "Q", qid=2), rec(90, "R", qid=2)]
    corr = correlate(client, [])
    assert sorted(t.client_response.timestamp_us - t.client_query.timestamp_us for t in corr.trees) == [40, 100]


# -- tag_level / accumulate_rtt -----------------------------------------------------------


def _tree(*spans):
    """Client window 0..1s with contacts (start_ms, rtt_ms, address)."""
    contacts = []
    for start, rtt, addr in spans:
        q, r = contact(start * 1000, (start + rtt) * 1000, addr)
        contacts.append(ContactPair(q, r, REGISTRY.lookup(addr)[0]))
    return ResolutionTree(rec(0, "Q"), rec(1_000_000, "R"), tuple(contacts))


def test_tag_root_walk():
    tree = _tree((1, 40, "198.41.0.4"), (45, 30, "192.5.6.30"), (80, 20, "208.80.154.238"))
    tx = tag_level(tree, REGISTRY)
    assert tx.level is DnsLevel.ROOT and tx.rtt_us == 1_000_000 and len(tx.contacts) == 3


def test_tag_sld_only_and_unknown():
    assert tag_level(_tree((1, 30, "208.80.154.238")), REGISTRY).level is DnsLevel.SLD
    assert tag_level(_tree((1, 30, "203.0.113.9")), REGISTRY).level is DnsLevel.UNKNOWN
    mixed = _tree((1, 30, "203.0.113.9"), (40, 30, "208.80.154.238"))
    assert tag_level(mixed, REGISTRY).level is DnsLevel.SLD


def test_accumulate_examples():
    assert accumulate_rtt(_tree((0, 30, "208.80.154.238"))) == {DnsLevel.SLD: 30_000}
    assert accumulate_rtt(_tree((0, 40, "198.41.0.4"), (45, 30, "192.5.6.30"))) == {
        DnsLevel.ROOT: 75_000, DnsLevel.GTLD: 30_000}
    chain = _tree((0, 40, "198.41.0.4"), (40, 30, "192.5.6.30"), (70, 20, "208.80.154.238"))
    assert accumulate_rtt(chain)[DnsLevel.ROOT] == 40_000 + 30_000 + 20_000


def test_accumulate_needs_contacts():
    with pytest.raises(ValueError, match="cache"):
        accumulate_rtt(_tree())


@given(st.lists(st.tuples(st.integers(0, 300), st.integers(1, 200), st.sampled_from(list(REGISTRY) + ["1.1.1.1"])),
                min_size=1, max_size=6), st.randoms())
def test_tag_order_insensitive_and_root_dominates(spans, rnd):
    tree = _tree(*spans)
    shuffled = list(tree.contacts)
    rnd.shuffle(shuffled)
    other = ResolutionTree(tree.client_query, tree.client_response, tuple(shuffled))
    assert tag_level(tree, REGISTRY).level is tag_level(other, REGISTRY).level


@given(st.lists(st.tuples(st.integers(1, 80), st.integers(0, 20)), min_size=1, max_size=5))
def test_accumulated_top_level_bounds_every_contact(chain):
    # sequential contacts: (rtt_ms, gap_ms) pairs laid end to end
    spans, t = [], 0
    addrs = list(REGISTRY)
    for i, (rtt, gap) in enumerate(chain):
        spans.append((t, rtt, addrs[i % 3]))
        t += rtt + gap
    tree = _tree(*spans)
    acc = accumulate_rtt(tree)
    first = tree.contacts[0].level
    assert all(acc[first] >= c.rtt_us for c in tree.contacts)


# -- full pipeline and transactions/1 --------------------------------------------------------


def test_simulated_logs_round_trip_through_ingest():
    txs = list(simulated("local", 3000, 21))
    client, resolver, registry = to_logs(txs)
    rnd = random.Random(0)
    rnd.shuffle(client)
    rnd.shuffle(resolver)
    got, corr = ingest(client, resolver, registry)
    assert corr.report()["trees"] == len(txs) and not corr.unmatched_resolver
    assert sorted(got, key=lambda t: (t.domain, t.query_id, t.rtt_us)) == \
        sorted(txs, key=lambda t: (t.domain, t.query_id, t.rtt_us))


def test_correlation_injective():
    txs = list(simulated("cloud", 2000, 3))
    client, resolver, registry = to_logs(txs)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        corr = correlate(client, resolver, registry)
    used = [id(r) for t in corr.trees for r in (t.client_query, t.client_response)]
    used += [id(r) for t in corr.trees for c in t.contacts for r in (c.query, c.response)]
    assert len(used) == len(set(used)) == len(client) + len(resolver)


def test_transactions_round_trip():
    txs = list(simulated("local", 500, 1)) + [
        Transaction(3, "a,b.com", 5, DnsLevel.CACHE), Transaction(4, "x.ru", 9, DnsLevel.CCTLD,
                                                                  contacts=(Contact(DnsLevel.CCTLD, "ru", 4, 1),))]
    assert parse_transactions(format_transactions(txs)) == txs


def test_transactions_reject_bad_rows():
    with pytest.raises(LogFormatError, match="format"):
        parse_transactions("qid,domain\n")
    text = format_transactions([Transaction(1, "a.com", 5, DnsLevel.CACHE)]).replace(",5,", ",0,")
    with pytest.raises(LogFormatError, match="rtt_us"):
        parse_transactions(text)
