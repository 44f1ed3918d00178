import functools
import os

from hypothesis import HealthCheck, settings

from dnstiming.traffic import TtlMode, load_profile, reference_workload, simulate_attack, simulate_benign

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("thorough", max_examples=500, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@functools.lru_cache(maxsize=None)
def simulated(profile: str, queries: int, seed: int, ttl: str = "mixed"):
    """Benign transactions, cached across tests (transactions are immutable)."""
    return tuple(simulate_benign(reference_workload(profile, queries, TtlMode(ttl)), load_profile(profile), seed))


@functools.lru_cache(maxsize=None)
def attacked(profile: str, queries: int, seed: int, ttl: str = "long"):
    benign = simulated(profile, queries, seed, ttl)
    return benign, tuple(simulate_attack(benign, load_profile(profile), seed + 1))


# one line per acceptance criterion, printed at the end of the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
