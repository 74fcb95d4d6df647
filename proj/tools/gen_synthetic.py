#!/usr/bin/env python3
"""Writes data/synthetic/{view,cart,buy}.tsv.

1,000 users and 500 items drawn from a shared low-rank preference model.
Each buy is preceded by a cart of the same item, and each cart by a view,
with strictly increasing timestamps along that chain. Buys are sparse, so
most of the signal about a user's next purchase sits in the upstream
behaviors.

Deterministic: rerunning reproduces the committed files byte for byte.
"""
import math
import pathlib
import random

USERS = 1000
ITEMS = 500
RANK = 6
SEED = 20261014

OUT = pathlib.Path(__file__).resolve().parent.parent / "data" / "synthetic"


def sigmoid(x):
    return 1.0 / (1.0 + math.exp(-x))


def main():
    rng = random.Random(SEED)
    users = [[rng.gauss(0, 1) for _ in range(RANK)] for _ in range(USERS)]
    items = [[rng.gauss(0, 1) for _ in range(RANK)] for _ in range(ITEMS)]
    popularity = [rng.gauss(0, 0.5) for _ in range(ITEMS)]

    views, carts, buys = [], [], []
    for u in range(USERS):
        affinity = [sum(a * b for a, b in zip(users[u], items[v])) / math.sqrt(RANK) + popularity[v]
                    for v in range(ITEMS)]
        weights = [math.exp(1.5 * a) for a in affinity]
        count = rng.randint(15, 40)
        chosen = set()
        while len(chosen) < count:
            chosen.add(rng.choices(range(ITEMS), weights=weights)[0])
        seen = sorted(chosen, key=lambda v: -affinity[v])

        clock = rng.randint(0, 10_000)
        viewed = []
        for v in seen:
            clock += rng.randint(1, 50)
            viewed.append((v, clock))
        rng.shuffle(viewed)

        carted = [(v, t) for v, t in viewed if rng.random() < sigmoid(1.2 * affinity[v] - 2.2)]
        if len(carted) < 2:
            extra = sorted((p for p in viewed if p not in carted), key=lambda p: -affinity[p[0]])
            carted += extra[:2 - len(carted)]
        bought = [(v, t) for v, t in carted if rng.random() < sigmoid(1.5 * affinity[v] - 3.0)]
        if len(bought) < 2:
            spare = sorted((p for p in carted if p not in bought), key=lambda p: -affinity[p[0]])
            bought += spare[:2 - len(bought)]

        for v, t in viewed:
            views.append((u, v, t))
        cart_time = {}
        for v, t in carted:
            cart_time[v] = t + rng.randint(1, 500)
            carts.append((u, v, cart_time[v]))
        for v, _ in bought:
            buys.append((u, v, cart_time[v] + rng.randint(1, 500)))

    OUT.mkdir(parents=True, exist_ok=True)
    for name, rows in (("view", views), ("cart", carts), ("buy", buys)):
        rows.sort()
        with open(OUT / f"{name}.tsv", "w") as f:
            for u, v, t in rows:
                f.write(f"u{u:04d}\ti{v:03d}\t{t}\n")
        print(f"{name}: {len(rows)} interactions")


if __name__ == "__main__":
    main()
