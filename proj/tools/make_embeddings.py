#!/usr/bin/env python3
"""Writes data/embeddings.txt, the small word-vector file the agents load.

Each word gets a random vector. Words naming a location, and objects that
belong at that location, also share a common direction per location, so
the file carries a little of the co-occurrence structure real pretrained
vectors have. Output is deterministic for a given --seed.
"""

import argparse
import json
import math
import os
import random

TEMPLATE = """welcome ! tidy up the house : put every object where it belongs .
-= =- you are in on see inside is open closed a an and nothing , exit leads to
carrying floor your score has gone by one point all pick from take into insert go
look around check what north south east west inventory ? '"""

HERE = os.path.dirname(os.path.abspath(__file__))
ROOT = os.path.dirname(HERE)


def words(name):
    return name.lower().replace("_", " ").split()


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--dim", type=int, default=50)
    ap.add_argument("--seed", type=int, default=1234)
    ap.add_argument("--dataset", default=os.path.join(ROOT, "data", "twc_dataset.json"))
    ap.add_argument("--kg", default=os.path.join(ROOT, "data", "conceptnet_mini.tsv"))
    ap.add_argument("--out", default=os.path.join(ROOT, "data", "embeddings.txt"))
    args = ap.parse_args()

    rng = random.Random(args.seed)
    d = args.dim

    def gauss_vec(scale):
        return [rng.gauss(0.0, scale) for _ in range(d)]

    with open(args.dataset) as f:
        data = json.load(f)

    vocab = []

    def add(w):
        if w not in seen:
            seen.add(w)
            vocab.append(w)

    seen = set()
    for tok in TEMPLATE.split():
        # "-=" and "=-" are rendered as single punctuation tokens
        for ch in tok if tok in ("-=", "=-") else [tok]:
            add(ch)
    for r in data["rooms"]:
        for w in words(r):
            add(w)
    for fx in data["fixtures"]:
        for w in words(fx["name"]):
            add(w)
    for o in data["objects"]:
        for w in words(o["name"]):
            add(w)
        for group in o.get("attributes", []):
            for a in group:
                add(a)
    with open(args.kg) as f:
        for line in f:
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            h, _, t = line.split("\t")
            for w in words(h) + words(t):
                add(w)

    centers = {fx["name"]: gauss_vec(1.0 / math.sqrt(d)) for fx in data["fixtures"]}
    assoc = {w: [] for w in vocab}
    for fx in data["fixtures"]:
        head = words(fx["name"])[-1]
        assoc[head].append(fx["name"])
    for o in data["objects"]:
        for g in o["goals"]:
            for w in words(o["name"]):
                assoc[w].append(g["location"])

    lines = []
    for w in vocab:
        own = gauss_vec(1.0 / math.sqrt(d))
        if assoc[w]:
            shared = [sum(centers[f][i] for f in assoc[w]) / len(assoc[w]) for i in range(d)]
            v = [0.7 * own[i] + 0.7 * shared[i] for i in range(d)]
        else:
            v = own
        lines.append(w + " " + " ".join("%.6f" % x for x in v))

    with open(args.out, "w") as f:
        f.write("\n".join(lines) + "\n")


if __name__ == "__main__":
    main()
