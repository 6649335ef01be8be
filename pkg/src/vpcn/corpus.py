"""Seeded random instances inside the oracle envelope."""
from __future__ import annotations

import random
from itertools import combinations
from typing import Any

from vpcn.ingest import Instance, instance_from_dict

NODE_NAMES = ("A", "B", "C", "D", "E", "F")
PPM_CHOICES = (0, 0, 10_000, 50_000, 125_000)


def random_instance_dict(rng: random.Random, max_nodes: int = 4, max_channels: int = 5,
                         max_transactions: int = 3, max_amount: int = 20,
                         max_level: int = 1) -> dict[str, Any]:
    sizes = range(2, max_nodes + 1)
    n = rng.choices(sizes, weights=sizes)[0]      # favour larger networks
    nodes = list(NODE_NAMES[:n])
    pairs = list(combinations(nodes, 2))
    rng.shuffle(pairs)
    channels = []
    for a, b in pairs[:rng.randint(min(n - 1, max_channels), min(max_channels, len(pairs)))]:
        if rng.random() < 0.5:
            a, b = b, a
        channels.append({
            "endpoints": [a, b],
            "balance_1": rng.randint(0, 2 * max_amount),
            "balance_2": rng.randint(0, 2 * max_amount),
            "base_fee_1": rng.randint(0, 3),
            "prop_fee_ppm_1": rng.choice(PPM_CHOICES),
            "base_fee_2": rng.randint(0, 3),
            "prop_fee_ppm_2": rng.choice(PPM_CHOICES),
        })
    linked = {frozenset(ch["endpoints"]) for ch in channels}
    far = [(a, b) for a in nodes for b in nodes if a != b and frozenset((a, b)) not in linked]
    demand = []
    for _ in range(rng.randint(min(1, max_transactions), max_transactions)):
        s, r = rng.sample(nodes, 2)
        if far and rng.random() < 0.6:
            s, r = rng.choice(far)
        demand.append({"source": s, "receiver": r, "amount": rng.randint(1, max_amount)})
    overrides = []
    for a, b in rng.sample([(a, b) for a in nodes for b in nodes if a != b], k=min(2, n * (n - 1))):
        if rng.random() < 0.3:
            overrides.append({"endpoints": [a, b], "base_fee_1": rng.randint(0, 2),
                              "prop_fee_ppm_1": rng.choice(PPM_CHOICES),
                              "creation_cost": rng.randint(0, 6)})
    if rng.random() < 0.4:
        vc_defaults = {"creation_cost": rng.randint(0, 3)}      # zero-fee virtual channels
    else:
        vc_defaults = {"base_fee_1": rng.randint(0, 2), "prop_fee_ppm_1": rng.choice(PPM_CHOICES),
                       "base_fee_2": rng.randint(0, 2), "prop_fee_ppm_2": rng.choice(PPM_CHOICES),
                       "creation_cost": rng.randint(0, 6)}
    return {
        "nodes": nodes,
        "payment_channels": channels,
        "vc_defaults": vc_defaults,
        "vc_overrides": overrides,
        "demand": demand,
        "budget": rng.randint(0, 12),
        "max_level": rng.randint(0, max_level),
    }


def random_instance(seed: int, **kwargs) -> Instance:
    return instance_from_dict(random_instance_dict(random.Random(seed), **kwargs))


def corpus(count: int, seed: int = 0, **kwargs) -> list[Instance]:
    return [random_instance(seed * 100_003 + k, **kwargs) for k in range(count)]
