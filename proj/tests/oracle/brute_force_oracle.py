#!/usr/bin/env python3
"""Independent recomputation of the oracle-scale acceptance numbers.

Reads the fixture corpus and a variants.tsv written by `qeprobe perturb`,
rescores every variant with a from-scratch implementation of the built-in
scorers and prints the values the acceptance binary pins.

    qeprobe perturb --config data/fixture/oracle.json --out /tmp/v
    python3 tests/oracle/brute_force_oracle.py data/fixture/fixture_ro-en.tsv /tmp/v/variants.tsv
"""

import csv
import itertools
import json
import math
import re
import string
import sys

MASK = (1 << 64) - 1
WS = re.compile(r"[ \t\n\v\f\r]+")
MPP = ["MPP%d" % i for i in range(1, 7)]
MAP = ["MAP%d" % i for i in range(1, 9)]


def words(text):
    return [w for w in WS.split(text) if w]


def key(token):
    core = token.strip(string.punctuation)
    return (token, 0.2) if core == "" else (core.lower(), 1.0)


def similarity(mt, ref):
    a = [key(t) for t in words(mt)]
    b = [key(t) for t in words(ref)]
    d = [[0.0] * (len(b) + 1) for _ in range(len(a) + 1)]
    for i in range(1, len(a) + 1):
        d[i][0] = d[i - 1][0] + a[i - 1][1]
    for j in range(1, len(b) + 1):
        d[0][j] = d[0][j - 1] + b[j - 1][1]
    for i in range(1, len(a) + 1):
        for j in range(1, len(b) + 1):
            (ka, wa), (kb, wb) = a[i - 1], b[j - 1]
            sub = 0.0 if ka == kb else max(wa, wb)
            d[i][j] = min(d[i - 1][j - 1] + sub, d[i - 1][j] + wa, d[i][j - 1] + wb)
    norm = max(sum(w for _, w in a), sum(w for _, w in b))
    if norm == 0:
        return 1.0
    return min(1.0, max(0.0, 1.0 - d[len(a)][len(b)] / norm))


def copy_aware(src, mt, ref):
    toks = words(mt)
    src_toks = set(words(src))
    novel = sum(1 for t in toks if t not in src_toks)
    return similarity(mt, ref) * novel / len(toks)


def splitmix(x):
    x = (x + 0x9E3779B97F4A7C15) & MASK
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK
    return x ^ (x >> 31)


def fnv1a(data):
    h = 0xCBF29CE484222325
    for byte in data:
        h = ((h ^ byte) * 0x100000001B3) & MASK
    return h


def random_score(seed, lp, src, mt):
    h = splitmix(splitmix(seed) ^ fnv1a(f"{lp}\t{src}\t{mt}".encode()))
    return (h >> 11) / float(1 << 53)


def load_corpus(path, threshold=0.7):
    with open(path, newline="", encoding="utf-8") as f:
        rows = list(csv.DictReader(f, delimiter="\t", quoting=csv.QUOTE_NONE))
    raw = [float(r["score"]) for r in rows]
    lo, hi = min(raw), max(raw)
    keep = {}
    for r in rows:
        if (float(r["score"]) - lo) / (hi - lo) >= threshold:
            keep[int(r["index"])] = r
    return keep


def load_variants(path):
    cells = {}
    with open(path, encoding="utf-8") as f:
        next(f)
        for line in f:
            idx, kind, rep, text = line.rstrip("\n").split("\t", 3)
            cells.setdefault((int(idx), kind), []).append(text)
    return cells


def mean(xs):
    return math.fsum(xs) / len(xs)


def pearson(x, y):
    mx, my = mean(x), mean(y)
    sxy = math.fsum((a - mx) * (b - my) for a, b in zip(x, y))
    sxx = math.fsum((a - mx) ** 2 for a in x)
    syy = math.fsum((b - my) ** 2 for b in y)
    if sxx == 0 or syy == 0:
        return None
    return sxy / math.sqrt(sxx * syy)


def tau_b(x, y):
    c = d = tx = ty = 0
    for i, j in itertools.combinations(range(len(x)), 2):
        dx, dy = x[i] - x[j], y[i] - y[j]
        if dx == 0 and dy == 0:
            continue
        if dx == 0:
            tx += 1
        elif dy == 0:
            ty += 1
        elif (dx > 0) == (dy > 0):
            c += 1
        else:
            d += 1
    return (c - d) / math.sqrt((c + d + tx) * (c + d + ty))


def evaluate(corpus, cells, score):
    base = {i: score(r["source"], r["translation"], r["translation"], r["lang_pair"]) for i, r in corpus.items()}
    cell = {}
    for (i, kind), texts in cells.items():
        r = corpus[i]
        cell[(i, kind)] = mean([score(r["source"], t, r["translation"], r["lang_pair"]) for t in texts])
    delta, kind_mean = {}, {}
    for kind in MPP + MAP:
        applicable = sorted(i for (i, k) in cell if k == kind)
        if not applicable:
            continue
        delta[kind] = mean([base[i] - cell[(i, kind)] for i in applicable])
        kind_mean[kind] = mean([cell[(i, kind)] for i in applicable])
    fam = lambda ks, d: mean([d[k] for k in ks if k in d])
    # Synthetic "pearson": agreement with oracle-known quality, where the
    # unperturbed and MPP items are good (1) and MAP items bad (0).
    scores, labels = [], []
    for i in sorted(base):
        scores.append(base[i])
        labels.append(1.0)
        for kind in MPP + MAP:
            if (i, kind) in cell:
                scores.append(cell[(i, kind)])
                labels.append(1.0 if kind in MPP else 0.0)
    p = pearson(scores, labels)
    return {
        "delta": delta,
        "delta_map_minus_mpp": fam(MAP, delta) - fam(MPP, delta),
        "gap": fam(MPP, kind_mean) - fam(MAP, kind_mean),
        "synthetic_pearson": 0.0 if p is None else p,
        "n_applicable": {k: sum(1 for (_, kk) in cell if kk == k) for k in MPP + MAP},
    }


def main():
    corpus = load_corpus(sys.argv[1])
    cells = load_variants(sys.argv[2])
    scorers = {
        "constant": lambda s, t, r, lp: 0.5,
        "random": lambda s, t, r, lp: random_score(7, lp, s, t),
        "oracle": lambda s, t, r, lp: similarity(t, r),
        "copy-aware": lambda s, t, r, lp: copy_aware(s, t, r),
    }
    res = {name: evaluate(corpus, cells, f) for name, f in scorers.items()}
    names = sorted(res)
    gaps = [res[n]["gap"] for n in names]
    pears = [res[n]["synthetic_pearson"] for n in names]
    out = {
        "n_sentences": len(corpus),
        "n_variants": sum(len(v) for v in cells.values()),
        "oracle_delta_map_minus_mpp": res["oracle"]["delta_map_minus_mpp"],
        "map8_delta_copy_aware": res["copy-aware"]["delta"]["MAP8"],
        "map8_delta_oracle": res["oracle"]["delta"]["MAP8"],
        "gap": dict(zip(names, gaps)),
        "synthetic_pearson": dict(zip(names, pears)),
        "kendall_tau": tau_b(gaps, pears),
        "n_applicable": res["oracle"]["n_applicable"],
    }
    print(json.dumps(out, indent=2, default=lambda x: repr(x)))
    print("repr:", {k: repr(v) for k, v in out.items() if isinstance(v, float)})


if __name__ == "__main__":
    main()
