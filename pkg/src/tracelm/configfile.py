"""Plain sectioned key/value config files.

Workload files have a [workload] section plus one [process:NAME] section per
simulated process; transition rows are written as `name:prob` pairs:

    [process:apache2]
    weight = 0.30
    threads = 4
    start = poll:0.5 futex:0.3 accept4:0.2
    chain.poll.success = accept4:0.45 recvfrom:0.25 futex:0.20 poll:0.10
    chain.poll.failure = poll:0.80 clock_gettime:0.20

Experiment files use [data]/[model]/[train]/[run] sections of scalar values;
CLI flags override file values.
"""

from __future__ import annotations

import configparser
from pathlib import Path

from .errors import ConfigError
from .synth import ProcessChain, WorkloadConfig

_WORKLOAD_SCALARS = {
    "seed": int,
    "n_events": int,
    "failure_rate": float,
    "mean_inter_arrival_us": float,
    "burst_len_mean": float,
    "service_us_mean": float,
    "intra_gap_us_mean": float,
    "hostname": str,
    "n_cpus": int,
}


def _new_parser() -> configparser.ConfigParser:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str  # keep sysname case as written
    return parser


def _parse_dist(text: str, where: str) -> dict[str, float]:
    out: dict[str, float] = {}
    for item in text.split():
        name, sep, prob = item.partition(":")
        if not sep or not name:
            raise ConfigError(f"{where}: expected name:prob pairs, got {item!r}")
        try:
            out[name] = float(prob)
        except ValueError:
            raise ConfigError(f"{where}: bad probability {prob!r}") from None
    if not out:
        raise ConfigError(f"{where}: empty distribution")
    return out


def _format_dist(dist: dict[str, float]) -> str:
    return " ".join(f"{name}:{prob!r}" for name, prob in dist.items())


def parse_workload_config(text: str) -> WorkloadConfig:
    parser = _new_parser()
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"bad workload config: {exc}") from None

    kwargs: dict = {}
    if parser.has_section("workload"):
        for key, value in parser.items("workload"):
            conv = _WORKLOAD_SCALARS.get(key)
            if conv is None:
                raise ConfigError(f"unknown [workload] key {key!r}")
            try:
                kwargs[key] = conv(value)
            except ValueError:
                raise ConfigError(f"[workload] {key}: cannot parse {value!r}") from None

    processes: list[tuple[str, float]] = []
    threads: dict[str, int] = {}
    chains: dict[str, ProcessChain] = {}
    for section in parser.sections():
        if not section.startswith("process:"):
            if section != "workload":
                raise ConfigError(f"unknown section [{section}]")
            continue
        name = section[len("process:"):]
        items = dict(parser.items(section))
        try:
            weight = float(items.pop("weight"))
        except KeyError:
            raise ConfigError(f"[{section}] is missing `weight`") from None
        threads[name] = int(items.pop("threads", "1"))
        start = _parse_dist(items.pop("start", ""), f"[{section}] start") if "start" in parser[section] else None
        if start is None:
            raise ConfigError(f"[{section}] is missing `start`")
        on_success: dict[str, dict[str, float]] = {}
        on_failure: dict[str, dict[str, float]] = {}
        for key, value in items.items():
            parts = key.split(".")
            if len(parts) != 3 or parts[0] != "chain" or parts[2] not in ("success", "failure"):
                raise ConfigError(f"[{section}] unknown key {key!r}")
            row = _parse_dist(value, f"[{section}] {key}")
            (on_success if parts[2] == "success" else on_failure)[parts[1]] = row
        processes.append((name, weight))
        chains[name] = ProcessChain(start=start, on_success=on_success, on_failure=on_failure)

    if processes:
        kwargs["processes"] = tuple(processes)
        kwargs["syscall_chains"] = chains
        kwargs["threads"] = threads
    return WorkloadConfig(**kwargs)


def load_workload_config(path: str | Path) -> WorkloadConfig:
    return parse_workload_config(Path(path).read_text(encoding="utf-8"))


def dump_workload_config(cfg: WorkloadConfig) -> str:
    lines = ["[workload]"]
    for key in _WORKLOAD_SCALARS:
        lines.append(f"{key} = {getattr(cfg, key)}")
    for name, weight in cfg.processes:
        chain = cfg.syscall_chains[name]
        lines += ["", f"[process:{name}]", f"weight = {weight!r}",
                  f"threads = {cfg.threads.get(name, 1)}", f"start = {_format_dist(chain.start)}"]
        for sysname, row in chain.on_success.items():
            lines.append(f"chain.{sysname}.success = {_format_dist(row)}")
        for sysname, row in chain.on_failure.items():
            lines.append(f"chain.{sysname}.failure = {_format_dist(row)}")
    return "\n".join(lines) + "\n"


def save_workload_config(cfg: WorkloadConfig, path: str | Path) -> None:
    Path(path).write_text(dump_workload_config(cfg), encoding="utf-8")


def load_experiment_config(path: str | Path) -> dict[str, dict[str, str]]:
    """Read [data]/[model]/[train]/[run] sections into plain string maps."""
    parser = _new_parser()
    try:
        parser.read_string(Path(path).read_text(encoding="utf-8"))
    except (configparser.Error, OSError) as exc:
        raise ConfigError(f"bad experiment config {path}: {exc}") from None
    allowed = {"data", "model", "train", "run"}
    out: dict[str, dict[str, str]] = {}
    for section in parser.sections():
        if section not in allowed:
            raise ConfigError(f"unknown section [{section}] (expected one of {sorted(allowed)})")
        out[section] = dict(parser.items(section))
    return out
