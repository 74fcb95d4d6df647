#!/usr/bin/env python3
"""Writes the randomized oracle fixtures under tests/fixtures/random/.

Each fixture has at most 10 nodes, up to 4 behaviors, explicit parameter
values, valid BPR triples and a configuration drawn from the supported modes.
Output is deterministic; rerunning reproduces the committed files.
"""
import json
import pathlib
import random

OUT = pathlib.Path(__file__).resolve().parent.parent / "tests" / "fixtures" / "random"


def mat(rng, rows, cols, scale=1.0):
    return [[round(rng.uniform(-scale, scale), 6) for _ in range(cols)] for _ in range(rows)]


def growth_bound(k, layers, config):
    """Upper bound on |fused representation| per unit of embedding magnitude.

    Row-normalized propagation has infinity-norm at most 1, so each relation
    contributes at most 2x (neighbor plus self) per layer.
    """
    finals, fused = [], []
    seed = 1.0
    for b in range(k):
        if config["in_mode"] == "full":
            relations = b + 1
        elif config["in_mode"] == "strict":
            relations = 1
        else:
            relations = k
        factor = 2 * relations if config["self_loop_mode"] == "per-relation" else relations + 1
        layer, total = seed, seed
        for _ in range(layers):
            layer *= factor
            total += layer
        finals.append(layer)
        fused.append(total)
        if config["pre_mode"] == "full":
            seed = sum(finals) + 1.0
        elif config["pre_mode"] == "strict":
            seed = finals[-1] + 1.0
        else:
            seed = 1.0
    return max(fused)


def fixture(index):
    rng = random.Random(1000 + index)
    while True:
        m = rng.randint(1, 6)
        n = rng.randint(2, 10 - m)
        if m + n <= 10:
            break
    k = rng.randint(1, 4)
    d = rng.randint(1, 4)
    layers = rng.randint(1, 3)
    density = rng.uniform(0.2, 0.7)
    interactions = []
    for _ in range(k):
        interactions.append([[1 if rng.random() < density else 0 for _ in range(n)] for _ in range(m)])
    # Keep at least one target interaction.
    interactions[-1][rng.randrange(m)][rng.randrange(n)] = 1

    config = {
        "pre_mode": rng.choice(["full", "strict", "none"]),
        "in_mode": rng.choice(["full", "strict", "none"]),
        "post_mode": rng.choice(["decoupled", "decoupled", "fused"]),
        "self_loop_mode": rng.choice(["per-relation", "once"]),
        "degree_mode": rng.choice(["per-behavior", "joint"]),
        "stop_grad_mode": rng.choice(["target-only", "all", "none"]),
        "gate_sharing": rng.choice(["shared", "per-task"]),
        "fitting_on": rng.random() < 0.75,
        "head": rng.choice(["dfme", "dfme", "dfme", "bilinear"]),
        "similarity": rng.choice(["inner", "inner", "cosine"]),
        "tau": round(rng.uniform(0.1, 0.8), 3),
        "alpha": round(rng.uniform(0.05, 1.0), 3),
        "beta": round(rng.uniform(0.001, 0.5), 3),
        "gamma": round(rng.uniform(0.0, 1.0), 3),
        "mu": round(rng.uniform(0.0, 0.05), 4),
    }
    if index == 0:
        config.update({"pre_mode": "full", "in_mode": "full", "post_mode": "decoupled",
                       "self_loop_mode": "per-relation", "head": "dfme", "fitting_on": True})

    scale = 2.0 / growth_bound(k, layers, config)
    params = {"user_embedding": mat(rng, m, d, scale), "item_embedding": mat(rng, n, d, scale)}
    if config["head"] == "dfme":
        if config["gate_sharing"] == "shared":
            params["gate_weight"] = mat(rng, k, 2 * d)
            params["gate_bias"] = mat(rng, 1, k, 0.3)
        else:
            for t in range(k):
                params[f"gate_weight/{t}"] = mat(rng, k, 2 * d)
                params[f"gate_bias/{t}"] = mat(rng, 1, k, 0.3)
        if config["fitting_on"] and k > 1:
            params["fit_relation"] = mat(rng, k, d)
            for l in range(1, layers + 1):
                params[f"fit_transform/{l}"] = mat(rng, d, d)

    triples = []
    for b in range(k):
        rows = []
        for u in range(m):
            pos = [v for v in range(n) if interactions[b][u][v]]
            neg = [v for v in range(n) if not interactions[b][u][v]]
            if pos and neg:
                rows.append([u, rng.choice(pos), rng.choice(neg)])
        triples.append(rows)
    return {"users": m, "items": n, "dim": d, "layers": layers,
            "behaviors": [f"b{i}" for i in range(k)], "interactions": interactions,
            "parameters": params, "triples": triples, "config": config}


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    for i in range(20):
        with open(OUT / f"r{i:02d}.json", "w") as f:
            json.dump(fixture(i), f, separators=(",", ":"))
            f.write("\n")


if __name__ == "__main__":
    main()
