"""Regenerates the bundled fixture corpus. Deterministic; stdlib only.

Twelve semantic fields each own ten roots. Concepts combine one or two
roots of a field, sometimes with an affix, and their gloss vectors sit near
the mean of their gold morphemes. Roots enter the frequency tables at
staggered years so availability changes over time.

    python3 generate.py   # writes the files next to this script
"""

import math
import os
import random

R = random.Random(20240611)
DIM = 16
HERE = os.path.dirname(os.path.abspath(__file__))
FIELDS = ["water", "fire", "stone", "tree", "sky", "road", "sound", "light", "metal", "cloth", "grain", "bird"]
CONS = "bcdfgklmnprstvz"
VOWELS = "aeiou"


def unit(v):
    n = math.sqrt(sum(x * x for x in v)) or 1.0
    return [x / n for x in v]


def gauss_vec(scale=1.0):
    return [R.gauss(0.0, scale) for _ in range(DIM)]


def add(a, b, w=1.0):
    return [x + w * y for x, y in zip(a, b)]


def fmt(v):
    return " ".join(f"{x:.6f}" for x in v)


def syllable():
    return R.choice(CONS) + R.choice(VOWELS)


used = set()


def fresh_surface(n_syll):
    while True:
        s = "".join(syllable() for _ in range(n_syll))
        if R.random() < 0.4:
            s += R.choice(CONS)
        if s not in used:
            used.add(s)
            return s


centers = {f: unit(gauss_vec()) for f in FIELDS}
roots = []  # (surface, field, birth, vector)
for f in FIELDS:
    for _ in range(10):
        s = fresh_surface(R.choice([1, 2, 2, 3]))
        birth = R.choice([1800, 1810, 1820, 1830, 1840, 1850, 1860, 1870, 1880, 1890])
        roots.append((s, f, birth, unit(add(centers[f], gauss_vec(0.45)))))
affixes = []
for s in ["er", "ish", "ment", "ly", "ness", "ous", "al", "ize"]:
    used.add(s)
    affixes.append((s, unit(gauss_vec())))

vec = {}
defs = {}
for s, f, _, v in roots:
    vec[s] = v
    d = f"{f} root {s}"
    defs[s] = d
    vec[d] = unit(add(v, centers[f], 0.5))
for s, v in affixes:
    vec[s] = v

with open(os.path.join(HERE, "inventory.tsv"), "w") as out:
    for s, _, _, _ in roots:
        out.write(f"{s}\t{defs[s]}\t0\n")
    for s, _ in affixes:
        out.write(f"{s}\taffix {s}\t1\n")

# Frequency tables: decade-resolution books, year-resolution news.
with open(os.path.join(HERE, "freq_books.tsv"), "w") as out:
    for s, _, birth, _ in roots:
        base = R.randint(3, 40)
        for decade in range(birth, 2000, 10):
            tok = max(0, int(R.gauss(base, base / 3)))
            out.write(f"{s}\t{decade}\t{R.randint(0, 3)}\t{tok}\t{tok // 4}\n")
    out.write("zzzunknown\t1900\t1\t1\t1\n")
with open(os.path.join(HERE, "freq_news.tsv"), "w") as out:
    for s, _, birth, _ in roots[::3]:
        for year in range(max(birth, 1880), 1940, 7):
            out.write(f"{s}\t{year}\t0\t{R.randint(0, 20)}\t{R.randint(0, 5)}\n")

ARPA_C = {c: c.upper() for c in "bdfgklmnprstvz"}
ARPA_C["c"] = "K"
ARPA_V = {"a": "AA", "e": "EH", "i": "IY", "o": "OW", "u": "UW"}
with open(os.path.join(HERE, "pronunciations.txt"), "w") as out:
    out.write(";;; fixture pronouncing dictionary\n")
    for s, _, _, _ in roots:
        if R.random() < 0.85:
            phones = [ARPA_V[c] + str(R.choice([0, 1])) if c in ARPA_V else ARPA_C[c] for c in s]
            out.write(f"{s.upper()}  {' '.join(phones)}\n")
    out.write("BROKEN  12 !!\n")

# Concepts.
items = []
words = set()
for i in range(170):
    year = int(1822 + (i / 170) ** 0.8 * 113)
    year -= (year - 1822) % 4
    f = R.choice(FIELDS)
    avail = [r for r in roots if r[1] == f and r[2] <= year - 5]
    if not avail:
        avail = [r for r in roots if r[2] <= year - 5]
    kind = R.random()
    if kind < 0.45 and len(avail) >= 2:
        a, b = R.sample(avail, 2)
        gold = [a[0], b[0]]
    elif kind < 0.8:
        gold = [R.choice(avail)[0], R.choice(affixes)[0]]
    elif kind < 0.9 and len(avail) >= 2:
        a, b = R.sample(avail, 2)
        gold = [a[0], b[0], R.choice(affixes)[0]]
    else:
        gold = [R.choice(avail)[0]]
    word = "".join(gold)
    if word in words:
        continue
    words.add(word)
    other = R.choice(FIELDS)
    gloss = f"something of {f} like {other} number {i}"
    g = [0.0] * DIM
    for m in gold:
        g = add(g, vec[m])
    vec[gloss] = unit(add(unit(g), gauss_vec(0.35)))
    if R.random() < 0.5:
        vec[word] = unit(add(unit(g), gauss_vec(0.2)))
    items.append((word, gloss, gold, year, R.choice(["n", "v", "adj"]), f))

with open(os.path.join(HERE, "dataset.tsv"), "w") as out:
    for word, gloss, gold, year, pos, _ in items:
        out.write(f"{word}\t{gloss}\t{'+'.join(gold)}\t{year}\t{pos}\n")
    out.write("badrow\tno gold here\n")

with open(os.path.join(HERE, "seeds.tsv"), "w") as out:
    for word, _, gold, _, _, f in items:
        rows = []
        for m in gold:
            if R.random() < 0.75:
                rows.append(("synset", m))
        same = [r[0] for r in roots if r[1] == f]
        for m in R.sample(same, 4):
            rows.append(("relational", m))
        for m in R.sample([r[0] for r in roots], 2):
            rows.append(("relational", m))
        rows.append(("synset", R.choice(affixes)[0]))
        seen = set()
        for src, m in rows:
            if (src, m) not in seen:
                seen.add((src, m))
                out.write(f"{word}\t{src}\t{m}\n")

with open(os.path.join(HERE, "embeddings.txt"), "w") as out:
    for k in sorted(vec):
        out.write(f"{k}\t{fmt(vec[k])}\n")

# Year-specific distributional tables: morphemes plus field words.
for year in (1850, 1900):
    with open(os.path.join(HERE, f"dist_{year}.txt"), "w") as out:
        for s, f, birth, v in roots:
            if birth <= year:
                out.write(f"{s}\t{fmt(unit(add(v, gauss_vec(0.1))))}\n")
        for f in FIELDS:
            out.write(f"{f}\t{fmt(unit(add(centers[f], gauss_vec(0.1))))}\n")

print(f"{len(roots)} roots, {len(affixes)} affixes, {len(items)} concepts")
