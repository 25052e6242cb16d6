#!/usr/bin/env python3
"""Regenerates the planted metric fixtures under fixtures/metrics/.

Every fixture is deterministic: rerunning produces byte-identical files.
"""
import json
import pathlib
import random
import re

ROOT = pathlib.Path(__file__).resolve().parent.parent
FIX = ROOT / "fixtures"
OUT = FIX / "metrics"


def label_ids(name):
    text = (FIX / "taxonomies" / f"{name}.toml").read_text()
    return re.findall(r'^id = "([^"]*)"', text, flags=re.M)


def write(name, rows):
    with open(OUT / name, "w") as f:
        for r in rows:
            f.write(json.dumps(r) + "\n")


def accuracy_424():
    # 424 exclusive CAP documents, 317 predicted correctly.
    ids = label_ids("cap")
    rng = random.Random(424)
    truth, pred = [], []
    wrong = set(rng.sample(range(424), 424 - 317))
    for i in range(424):
        t = ids[i % len(ids)]
        p = t
        if i in wrong:
            p = rng.choice([x for x in ids if x != t])
        doc = f"acc-{i:03d}"
        truth.append({"id": doc, "text": f"synthetic document {i}", "true_labels": [t]})
        pred.append({"id": doc, "labels": [p]})
    write("accuracy424_truth.jsonl", truth)
    write("accuracy424_pred.jsonl", pred)


def balanced_binary():
    # Policy class: 741 of 1000 found; Other class: 987 of 1000 kept out.
    truth, pred = [], []
    cells = [("policy", "policy", 741), ("policy", "other", 259), ("other", "policy", 13), ("other", "other", 987)]
    i = 0
    for t, p, count in cells:
        for _ in range(count):
            doc = f"bin-{i:04d}"
            truth.append({"id": doc, "text": f"synthetic document {i}", "true_labels": [t]})
            pred.append({"id": doc, "labels": [p]})
            i += 1
    write("balanced_truth.jsonl", truth)
    write("balanced_pred.jsonl", pred)


# (truth size, predicted size, documents, exact set match)
CROSSTAB = [
    (1, 1, 803, True), (1, 2, 34, False), (1, 3, 7, False), (1, 4, 1, False),
    (2, 1, 36, False), (2, 2, 98, True), (2, 3, 3, False),
    (3, 1, 6, False), (3, 2, 4, False), (3, 3, 2, True),
    (4, 1, 1, False), (4, 2, 1, False),
    (1, 1, 2, False), (6, 3, 2, False),
]


def crosstab_1000():
    ids = label_ids("flourishing")
    rng = random.Random(1000)
    truth, pred = [], []
    i = 0
    for ts, ps, count, exact in CROSSTAB:
        for _ in range(count):
            t = rng.sample(ids, ts)
            if exact:
                p = list(t)
            else:
                # Share at most min(ts, ps) - 1 labels so the sets differ.
                keep = rng.randint(0, min(ts, ps) - 1)
                p = t[:keep] + rng.sample([x for x in ids if x not in t], ps - keep)
            doc = f"ml-{i:04d}"
            truth.append({"id": doc, "text": f"synthetic document {i}", "true_labels": t})
            pred.append({"id": doc, "labels": p})
            i += 1
    order = list(range(len(truth)))
    rng.shuffle(order)
    write("crosstab1000_truth.jsonl", [truth[k] for k in order])
    write("crosstab1000_pred.jsonl", [pred[k] for k in order])


if __name__ == "__main__":
    OUT.mkdir(parents=True, exist_ok=True)
    accuracy_424()
    balanced_binary()
    crosstab_1000()
