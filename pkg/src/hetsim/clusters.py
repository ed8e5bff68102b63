"""Synthetic benchmark profiles for two 15-node demo cluster shapes.

Each shape is a list of performance bands; node benchmark values are drawn
uniformly inside the band ranges, so the bands are clearly separated on CPU
and memory speed while all IOPS figures are effectively identical (the shared
storage type of the modeled setups).
"""

from __future__ import annotations

import numpy as np

from .model import BenchmarkVector, NodeSpec

# (node count, cpus, mem_gb, cpu events/s range, RAM MiB/s range)
_SHAPES: dict[str, list[tuple[int, int, float, tuple[float, float], tuple[float, float]]]] = {
    "5;5;5": [
        (5, 8, 32.0, (367.0, 384.0), (13800.0, 14300.0)),
        (5, 8, 32.0, (458.0, 468.0), (17500.0, 17700.0)),
        (5, 8, 32.0, (523.0, 525.0), (19800.0, 19900.0)),
    ],
    "5;4;4;2": [
        (9, 6, 16.0, (368.0, 384.0), (13100.0, 14200.0)),
        (4, 8, 32.0, (469.0, 470.0), (17700.0, 17800.0)),
        (2, 16, 64.0, (522.0, 524.0), (19800.0, 19800.0)),
    ],
}

# IOPS ranges shared by every band (single-value ranges are constants).
_RND_WRITE = (107.0, 108.0)
_RND_READ = (102.0, 102.0)
_SEQ_WRITE = (483.0, 483.0)
_SEQ_READ = (481.0, 481.0)

CLUSTER_SHAPES = tuple(_SHAPES)


def _draw(rng: np.random.Generator, lo: float, hi: float) -> float:
    return lo if lo == hi else float(rng.uniform(lo, hi))


def demo_cluster(shape: str, seed: int = 0) -> list[NodeSpec]:
    """Synthesize a cluster description for one of the known shapes."""
    if shape not in _SHAPES:
        raise ValueError(f"unknown cluster shape {shape!r}; choose from {CLUSTER_SHAPES}")
    rng = np.random.default_rng(seed)
    nodes: list[NodeSpec] = []
    idx = 0
    for count, cpus, mem_gb, cpu_range, ram_range in _SHAPES[shape]:
        for _ in range(count):
            bench = BenchmarkVector(
                cpu_events_per_s=_draw(rng, *cpu_range),
                ram_mib_per_s=_draw(rng, *ram_range),
                seq_read_iops=_draw(rng, *_SEQ_READ),
                seq_write_iops=_draw(rng, *_SEQ_WRITE),
                rnd_read_iops=_draw(rng, *_RND_READ),
                rnd_write_iops=_draw(rng, *_RND_WRITE),
            )
            nodes.append(NodeSpec(node_id=f"node{idx:02d}", cpus=cpus, mem_gb=mem_gb, bench=bench))
            idx += 1
    return nodes
