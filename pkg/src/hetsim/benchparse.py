"""Parsers for raw microbenchmark tool output (sysbench text, fio JSON)."""

from __future__ import annotations

import json
import re
from pathlib import Path

from .model import BenchmarkVector

_CPU_EVENTS_RE = re.compile(r"events per second:\s*([0-9][0-9.]*)")
_MEM_RATE_RE = re.compile(r"MiB transferred \(([0-9][0-9.]*)\s*MiB/sec\)")


class ParseError(ValueError):
    pass


def parse_sysbench_cpu(text: str) -> float:
    """Extract the `events per second:` figure from sysbench cpu output."""
    m = _CPU_EVENTS_RE.search(text)
    if m is None:
        raise ParseError("no 'events per second:' line in sysbench cpu output")
    return float(m.group(1))


def parse_sysbench_memory(text: str) -> float:
    """Extract the MiB/sec transfer rate from sysbench memory output."""
    m = _MEM_RATE_RE.search(text)
    if m is None:
        raise ParseError("no 'MiB transferred (... MiB/sec)' line in sysbench memory output")
    return float(m.group(1))


def parse_fio_iops(text: str | dict) -> tuple[float, float]:
    """Return (read_iops, write_iops) from fio JSON output, summed over jobs."""
    data = json.loads(text) if isinstance(text, str) else text
    jobs = data.get("jobs")
    if not jobs:
        raise ParseError("fio output contains no jobs")
    read = sum(float(j.get("read", {}).get("iops", 0.0)) for j in jobs)
    write = sum(float(j.get("write", {}).get("iops", 0.0)) for j in jobs)
    return read, write


def benchmark_from_outputs(
    cpu_text: str, mem_text: str, seq_fio: str | dict, rnd_fio: str | dict
) -> BenchmarkVector:
    """Assemble a BenchmarkVector from the four raw tool outputs."""
    seq_read, seq_write = parse_fio_iops(seq_fio)
    rnd_read, rnd_write = parse_fio_iops(rnd_fio)
    return BenchmarkVector(
        cpu_events_per_s=parse_sysbench_cpu(cpu_text),
        ram_mib_per_s=parse_sysbench_memory(mem_text),
        seq_read_iops=seq_read,
        seq_write_iops=seq_write,
        rnd_read_iops=rnd_read,
        rnd_write_iops=rnd_write,
    )


def benchmark_from_files(cpu: str | Path, mem: str | Path, seq: str | Path, rnd: str | Path) -> BenchmarkVector:
    return benchmark_from_outputs(
        Path(cpu).read_text(), Path(mem).read_text(), Path(seq).read_text(), Path(rnd).read_text()
    )
