"""Deterministic synthetic system-call trace generator.

Simulates a small server fleet (web server, database, PHP workers, a browser
and two monitors) as per-process first-order Markov chains over system calls.
The next call of a thread depends on (procname, current call, last return
status), which is exactly the structure an argument-aware sequence model can
exploit and an argument-blind one cannot. Threads run in bursts: a handful of
entry/exit call pairs with short gaps, then a long rest, so concurrent bursts
interleave in the merged stream.

All randomness comes from one random.Random stream consumed in event order,
so a (config, seed) pair always produces a byte-identical trace.
"""

from __future__ import annotations

import heapq
import math
import random
from bisect import bisect_left
from dataclasses import dataclass, field
from typing import Iterable, Iterator

from .errors import ConfigError
from .events import Event

_ROW_TOL = 1e-9

# exit codes drawn on simulated failures (errno-style negatives)
_FAILURE_RETS = (-11, -4, -110, -32, -104, -2)

# system calls whose entry carries an fd argument / whose success returns bytes
_FD_CALLS = frozenset(
    {"read", "write", "close", "sendto", "recvfrom", "recvmsg", "sendmsg",
     "fsync", "lseek", "ioctl", "getdents64", "writev", "fstat"}
)
_BYTE_RETURN_CALLS = frozenset(
    {"read", "write", "sendto", "recvfrom", "recvmsg", "sendmsg", "getdents64", "writev"}
)
_FD_RETURN_CALLS = frozenset({"open", "openat", "accept4", "socket", "epoll_wait"})
_PATH_CALLS = frozenset({"open", "openat", "stat", "lstat", "access"})

_FILENAME_POOL = (
    "/var/www/index.php", "/var/www/app.php", "/etc/hosts", "/proc/stat",
    "/proc/meminfo", "/var/lib/mysql/ibdata1", "/tmp/sess_a1", "/usr/share/zoneinfo/UTC",
)


@dataclass(frozen=True)
class ProcessChain:
    """First-order transitions over sysnames for one process, by return status."""

    start: dict[str, float]
    on_success: dict[str, dict[str, float]]
    on_failure: dict[str, dict[str, float]]

    def __post_init__(self):
        def check_row(row: dict[str, float], what: str):
            if not row:
                raise ConfigError(f"{what}: empty distribution")
            total = sum(row.values())
            if any(p <= 0 or not math.isfinite(p) for p in row.values()):
                raise ConfigError(f"{what}: probabilities must be positive and finite")
            if abs(total - 1.0) > _ROW_TOL:
                raise ConfigError(f"{what}: row sums to {total}, expected 1")

        check_row(self.start, "start")
        if set(self.on_failure) != set(self.on_success):
            raise ConfigError("on_failure must define the same rows as on_success")
        states = set(self.on_success)
        for name, row in list(self.on_success.items()) + list(self.on_failure.items()):
            check_row(row, f"row {name}")
            missing = (set(row) | set(self.start)) - states
            if missing:
                raise ConfigError(f"transitions reference undefined states: {sorted(missing)}")


@dataclass(frozen=True)
class WorkloadConfig:
    """Knobs of the synthetic workload; defaults mimic a loaded LAMP box."""

    seed: int = 0
    n_events: int = 100_000
    processes: tuple[tuple[str, float], ...] = (
        ("apache2", 0.30),
        ("mysqld", 0.26),
        ("php-fpm", 0.15),
        ("firefox", 0.13),
        ("htop", 0.09),
        ("bmon", 0.07),
    )
    syscall_chains: dict[str, ProcessChain] = field(default_factory=lambda: dict(DEFAULT_CHAINS))
    failure_rate: float = 0.10
    mean_inter_arrival_us: float = 50.0
    threads: dict[str, int] = field(
        default_factory=lambda: {"apache2": 4, "mysqld": 4, "php-fpm": 3, "firefox": 3, "htop": 1, "bmon": 1}
    )
    burst_len_mean: float = 10.0
    service_us_mean: float = 30.0
    intra_gap_us_mean: float = 20.0
    hostname: str = "web1"
    n_cpus: int = 4

    def __post_init__(self):
        if self.n_events < 1:
            raise ConfigError(f"n_events must be >= 1, got {self.n_events}")
        if not self.processes:
            raise ConfigError("at least one process is required")
        for name, w in self.processes:
            if not (w > 0 and math.isfinite(w)):
                raise ConfigError(f"weight of {name} must be positive and finite, got {w}")
            if name not in self.syscall_chains:
                raise ConfigError(f"no syscall chain for process {name}")
            if self.threads.get(name, 1) < 1:
                raise ConfigError(f"thread count of {name} must be >= 1")
        if not 0.0 <= self.failure_rate <= 1.0:
            raise ConfigError(f"failure_rate must be in [0, 1], got {self.failure_rate}")
        for fname in ("mean_inter_arrival_us", "burst_len_mean", "service_us_mean", "intra_gap_us_mean"):
            if not getattr(self, fname) > 0:
                raise ConfigError(f"{fname} must be positive")
        if self.n_cpus < 1:
            raise ConfigError("n_cpus must be >= 1")


class _Sampler:
    """Cumulative-distribution sampler with insertion-order determinism."""

    __slots__ = ("names", "cum")

    def __init__(self, dist: dict[str, float]):
        self.names = list(dist)
        acc, cum = 0.0, []
        for p in dist.values():
            acc += p
            cum.append(acc)
        cum[-1] = 1.0
        self.cum = cum

    def sample(self, rng: random.Random) -> str:
        return self.names[bisect_left(self.cum, rng.random())]


class _Thread:
    __slots__ = (
        "proc", "pid", "tid", "start", "success", "failure", "rest_ns",
        "cur_sys", "burst_left", "cpu", "clock_ns",
    )

    def __init__(self, proc, pid, tid, chain: ProcessChain, rest_ns: float):
        self.proc = proc
        self.pid = pid
        self.tid = tid
        self.start = _Sampler(chain.start)
        self.success = {k: _Sampler(v) for k, v in chain.on_success.items()}
        self.failure = {k: _Sampler(v) for k, v in chain.on_failure.items()}
        self.rest_ns = rest_ns
        self.cur_sys: str | None = None
        self.burst_left = 0
        self.cpu = 0
        self.clock_ns = 0


def _entry_args(rng: random.Random, sysname: str) -> dict[str, str]:
    if sysname in _PATH_CALLS:
        return {"filename": _FILENAME_POOL[rng.randrange(len(_FILENAME_POOL))], "flags": str(rng.randrange(4))}
    if sysname in _FD_CALLS:
        return {"fd": str(rng.randrange(3, 512))}
    return {}


def _success_ret(rng: random.Random, sysname: str) -> int:
    if sysname in _BYTE_RETURN_CALLS:
        return rng.randrange(1, 16385)
    if sysname in _FD_RETURN_CALLS:
        return rng.randrange(3, 1024)
    if sysname in ("poll", "ppoll", "select"):
        return rng.randrange(0, 4)
    return 0


def iter_events(config: WorkloadConfig) -> Iterator[Event]:
    """Lazily yield the trace defined by config; see generate()."""
    rng = random.Random(config.seed)
    weight_total = sum(w for _, w in config.processes)
    rate_total = 1.0 / (config.mean_inter_arrival_us * 1000.0)  # events per ns

    threads: list[_Thread] = []
    for p_idx, (name, weight) in enumerate(config.processes):
        k = config.threads.get(name, 1)
        pid = 1000 + 211 * p_idx
        thread_rate = rate_total * (weight / weight_total) / k
        # per-thread rest gap solving: events_per_cycle / cycle_duration = thread_rate
        per_cycle = 2.0 * config.burst_len_mean
        active_ns = config.burst_len_mean * (config.intra_gap_us_mean + config.service_us_mean) * 1000.0
        rest_ns = max(per_cycle / thread_rate - active_ns, config.intra_gap_us_mean * 1000.0)
        for j in range(k):
            threads.append(_Thread(name, pid, pid + j, config.syscall_chains[name], rest_ns))

    heap: list[tuple[int, int, int, bool]] = []  # (time_ns, tiebreak, thread_idx, is_entry)
    counter = 0
    committed = 0
    n = config.n_events

    def begin_burst(th: _Thread):
        th.burst_left = max(1, min(int(rng.expovariate(1.0 / config.burst_len_mean)) + 1,
                                   int(4 * config.burst_len_mean)))
        th.cpu = rng.randrange(config.n_cpus)

    def push(time_ns: int, t_idx: int, is_entry: bool):
        nonlocal counter
        heapq.heappush(heap, (time_ns, counter, t_idx, is_entry))
        counter += 1

    for t_idx, th in enumerate(threads):
        if committed >= n:
            break
        th.cur_sys = th.start.sample(rng)
        begin_burst(th)
        th.clock_ns = int(rng.expovariate(1.0) * th.rest_ns)
        committed += 2
        push(th.clock_ns, t_idx, True)

    last_ns = -1
    t0: int | None = None

    while heap:
        sched_ns, _, t_idx, is_entry = heapq.heappop(heap)
        th = threads[t_idx]
        emit_ns = max(sched_ns, last_ns + 1)
        last_ns = emit_ns
        if t0 is None:
            t0 = emit_ns

        if is_entry:
            args = _entry_args(rng, th.cur_sys)
            yield Event(
                timestamp_ns=emit_ns - t0,
                hostname=config.hostname,
                cpu_id=th.cpu,
                procname=th.proc,
                pid=th.pid,
                tid=th.tid,
                sysname=th.cur_sys,
                entry=True,
                ret=None,
                extra_args=args,
            )
            service_ns = max(1, int(rng.expovariate(1.0) * config.service_us_mean * 1000.0))
            push(emit_ns + service_ns, t_idx, False)
        else:
            failed = rng.random() < config.failure_rate
            ret = _FAILURE_RETS[rng.randrange(len(_FAILURE_RETS))] if failed else _success_ret(rng, th.cur_sys)
            yield Event(
                timestamp_ns=emit_ns - t0,
                hostname=config.hostname,
                cpu_id=th.cpu,
                procname=th.proc,
                pid=th.pid,
                tid=th.tid,
                sysname=th.cur_sys,
                entry=False,
                ret=ret,
                extra_args={},
            )
            row = (th.failure if failed else th.success)[th.cur_sys]
            th.cur_sys = row.sample(rng)
            th.burst_left -= 1
            if committed < n:
                if th.burst_left > 0:
                    gap_ns = max(1, int(rng.expovariate(1.0) * config.intra_gap_us_mean * 1000.0))
                else:
                    gap_ns = max(1, int(rng.expovariate(1.0) * th.rest_ns))
                    begin_burst(th)
                committed += 2
                push(emit_ns + gap_ns, t_idx, True)


def generate(config: WorkloadConfig) -> list[Event]:
    """Materialize the whole synthetic trace (entry/exit-paired, time-ordered).

    The event count is config.n_events rounded up to the nearest even number:
    a call is only admitted when both its entry and exit fit the budget, so
    every entry is closed before its thread reopens the same call.
    """
    return list(iter_events(config))


@dataclass(frozen=True)
class StatsReport:
    """Relative procname/sysname frequencies, sorted descending."""

    n_events: int
    procnames: tuple[tuple[str, float], ...]
    sysnames: tuple[tuple[str, float], ...]

    def to_dict(self) -> dict:
        return {
            "n_events": self.n_events,
            "procnames": {k: v for k, v in self.procnames},
            "sysnames": {k: v for k, v in self.sysnames},
        }

    def to_text(self) -> str:
        lines = [f"events: {self.n_events}", "", "procname distribution:"]
        lines += [f"  {name:<12s} {freq:8.4f}" for name, freq in self.procnames]
        lines += ["", "sysname distribution:"]
        lines += [f"  {name:<12s} {freq:8.4f}" for name, freq in self.sysnames]
        return "\n".join(lines) + "\n"


def stats(events: Iterable[Event]) -> StatsReport:
    """Empirical distribution report; raises on an empty stream."""
    proc_counts: dict[str, int] = {}
    sys_counts: dict[str, int] = {}
    n = 0
    for e in events:
        n += 1
        proc_counts[e.procname] = proc_counts.get(e.procname, 0) + 1
        sys_counts[e.sysname] = sys_counts.get(e.sysname, 0) + 1
    if n == 0:
        raise ValueError("cannot compute stats of an empty event stream")
    order = lambda d: tuple(sorted(((k, v / n) for k, v in d.items()), key=lambda kv: (-kv[1], kv[0])))
    return StatsReport(n_events=n, procnames=order(proc_counts), sysnames=order(sys_counts))


def _chain(start: dict[str, float], rows: dict[str, tuple[dict[str, float], dict[str, float]]]) -> ProcessChain:
    return ProcessChain(
        start=start,
        on_success={k: v[0] for k, v in rows.items()},
        on_failure={k: v[1] for k, v in rows.items()},
    )


# Per-process transition tables. Success rows model the happy path; failure
# rows route through a back-off (sched_yield) before resuming, so the return
# status carries signal that the bare sysname stream cannot reveal.
DEFAULT_CHAINS: dict[str, ProcessChain] = {
    "apache2": _chain(
        {"poll": 0.5, "futex": 0.3, "accept4": 0.2},
        {
            "poll": ({"accept4": 0.45, "recvfrom": 0.25, "futex": 0.20, "poll": 0.10},
                     {"sched_yield": 0.80, "clock_gettime": 0.20}),
            "accept4": ({"recvfrom": 0.85, "futex": 0.15}, {"sched_yield": 0.85, "poll": 0.15}),
            "recvfrom": ({"stat": 0.30, "open": 0.25, "sendto": 0.25, "futex": 0.20},
                         {"sched_yield": 0.80, "close": 0.20}),
            "stat": ({"open": 0.75, "sendto": 0.25}, {"sched_yield": 0.60, "sendto": 0.40}),
            "open": ({"read": 0.90, "fstat": 0.10}, {"sched_yield": 0.80, "sendto": 0.20}),
            "fstat": ({"read": 1.0}, {"close": 1.0}),
            "read": ({"read": 0.25, "sendto": 0.45, "close": 0.30},
                     {"sched_yield": 0.80, "close": 0.20}),
            "sendto": ({"sendto": 0.20, "close": 0.35, "recvfrom": 0.20, "poll": 0.25},
                       {"sched_yield": 0.80, "close": 0.20}),
            "close": ({"poll": 0.55, "futex": 0.35, "writev": 0.10}, {"sched_yield": 1.0}),
            "futex": ({"poll": 0.45, "futex": 0.35, "recvfrom": 0.20},
                      {"sched_yield": 0.80, "futex": 0.20}),
            "writev": ({"poll": 0.70, "close": 0.30}, {"sched_yield": 1.0}),
            "clock_gettime": ({"poll": 1.0}, {"poll": 1.0}),
            "sched_yield": ({"poll": 0.60, "futex": 0.25, "recvfrom": 0.15}, {"sched_yield": 1.0}),
        },
    ),
    "mysqld": _chain(
        {"futex": 0.6, "poll": 0.4},
        {
            "futex": ({"futex": 0.40, "read": 0.25, "poll": 0.20, "write": 0.15},
                      {"sched_yield": 0.85, "nanosleep": 0.15}),
            "read": ({"lseek": 0.30, "write": 0.25, "futex": 0.35, "fsync": 0.10},
                     {"sched_yield": 0.80, "futex": 0.20}),
            "lseek": ({"read": 0.60, "write": 0.40}, {"read": 1.0}),
            "write": ({"fsync": 0.35, "futex": 0.45, "sendto": 0.20},
                      {"sched_yield": 0.80, "fsync": 0.20}),
            "fsync": ({"futex": 0.60, "write": 0.20, "lseek": 0.20}, {"sched_yield": 0.80, "write": 0.20}),
            "poll": ({"recvfrom": 0.55, "futex": 0.45}, {"sched_yield": 0.70, "futex": 0.30}),
            "recvfrom": ({"futex": 0.50, "read": 0.30, "sendto": 0.20}, {"sched_yield": 1.0}),
            "sendto": ({"poll": 0.50, "futex": 0.50}, {"sched_yield": 1.0}),
            "nanosleep": ({"futex": 1.0}, {"futex": 1.0}),
            "sched_yield": ({"futex": 0.70, "poll": 0.30}, {"nanosleep": 1.0}),
        },
    ),
    "php-fpm": _chain(
        {"poll": 0.7, "futex": 0.3},
        {
            "poll": ({"recvfrom": 0.50, "futex": 0.25, "access": 0.25}, {"sched_yield": 1.0}),
            "recvfrom": ({"access": 0.40, "socket": 0.30, "futex": 0.30}, {"sched_yield": 1.0}),
            "access": ({"lstat": 0.50, "open": 0.50}, {"sched_yield": 0.50, "sendto": 0.50}),
            "lstat": ({"open": 0.70, "access": 0.30}, {"sched_yield": 0.60, "sendto": 0.40}),
            "open": ({"read": 1.0}, {"sched_yield": 0.70, "sendto": 0.30}),
            "read": ({"read": 0.35, "close": 0.65}, {"sched_yield": 1.0}),
            "close": ({"socket": 0.30, "sendto": 0.40, "poll": 0.30}, {"sched_yield": 1.0}),
            "socket": ({"connect": 1.0}, {"sched_yield": 1.0}),
            "connect": ({"sendto": 0.60, "recvfrom": 0.40}, {"sched_yield": 0.70, "close": 0.30}),
            "sendto": ({"recvfrom": 0.45, "close": 0.30, "poll": 0.25}, {"sched_yield": 1.0}),
            "futex": ({"poll": 0.55, "recvfrom": 0.45}, {"sched_yield": 0.80, "futex": 0.20}),
            "sched_yield": ({"poll": 0.75, "futex": 0.25}, {"sched_yield": 1.0}),
        },
    ),
    "firefox": _chain(
        {"futex": 0.7, "poll": 0.3},
        {
            "futex": ({"futex": 0.45, "poll": 0.22, "recvmsg": 0.15, "madvise": 0.08, "clock_gettime": 0.10},
                      {"sched_yield": 0.80, "nanosleep": 0.20}),
            "poll": ({"recvmsg": 0.40, "futex": 0.35, "clock_gettime": 0.25}, {"sched_yield": 1.0}),
            "recvmsg": ({"sendmsg": 0.30, "futex": 0.40, "recvmsg": 0.30}, {"sched_yield": 1.0}),
            "sendmsg": ({"recvmsg": 0.50, "futex": 0.50}, {"sched_yield": 1.0}),
            "madvise": ({"mmap": 0.50, "futex": 0.50}, {"futex": 1.0}),
            "mmap": ({"munmap": 0.40, "futex": 0.60}, {"madvise": 1.0}),
            "munmap": ({"futex": 1.0}, {"futex": 1.0}),
            "clock_gettime": ({"futex": 0.50, "poll": 0.50}, {"poll": 1.0}),
            "nanosleep": ({"futex": 1.0}, {"futex": 1.0}),
            "sched_yield": ({"futex": 0.65, "recvmsg": 0.35}, {"nanosleep": 1.0}),
        },
    ),
    "htop": _chain(
        {"openat": 0.8, "nanosleep": 0.2},
        {
            "openat": ({"read": 0.90, "close": 0.10}, {"sched_yield": 0.60, "getdents64": 0.40}),
            "read": ({"read": 0.30, "close": 0.70}, {"sched_yield": 0.70, "close": 0.30}),
            "close": ({"openat": 0.60, "getdents64": 0.30, "nanosleep": 0.10}, {"openat": 1.0}),
            "getdents64": ({"openat": 0.70, "getdents64": 0.30}, {"sched_yield": 0.70, "close": 0.30}),
            "nanosleep": ({"clock_gettime": 0.50, "openat": 0.50}, {"openat": 1.0}),
            "clock_gettime": ({"openat": 1.0}, {"openat": 1.0}),
            "sched_yield": ({"openat": 0.80, "nanosleep": 0.20}, {"nanosleep": 1.0}),
        },
    ),
    "bmon": _chain(
        {"poll": 0.5, "recvmsg": 0.5},
        {
            "recvmsg": ({"recvmsg": 0.40, "ioctl": 0.30, "poll": 0.30}, {"sched_yield": 1.0}),
            "ioctl": ({"recvmsg": 0.50, "poll": 0.50}, {"sched_yield": 1.0}),
            "poll": ({"recvmsg": 0.60, "nanosleep": 0.40}, {"sched_yield": 1.0}),
            "nanosleep": ({"poll": 0.60, "recvmsg": 0.40}, {"poll": 1.0}),
            "sched_yield": ({"poll": 0.60, "recvmsg": 0.40}, {"nanosleep": 1.0}),
        },
    ),
}


def default_config(seed: int = 0, n_events: int = 100_000, **overrides) -> WorkloadConfig:
    return WorkloadConfig(seed=seed, n_events=n_events, **overrides)


def sysname_inventory(config: WorkloadConfig) -> list[str]:
    """All sysnames reachable under the config, sorted."""
    names: set[str] = set()
    for chain in config.syscall_chains.values():
        names.update(chain.start)
        for row in list(chain.on_success.values()) + list(chain.on_failure.values()):
            names.update(row)
        names.update(chain.on_success)
    return sorted(names)
