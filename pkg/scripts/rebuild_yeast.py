"""Rebuild the 10-class UCI Yeast table from the KEEL one-vs-rest splits.

The ``keel-ds`` wheel ships only binary relabelings of Yeast. Every row of the
original table appears in the five full-size splits, and the smaller splits
separate the remaining five localization sites. Rows are matched by feature
vector; identical rows are interchangeable, so multiplicities are all that
matters.

    pip download keel-ds --no-deps -d /tmp/keel
    python -m zipfile -e /tmp/keel/keel_ds-*.whl /tmp/keel
    python scripts/rebuild_yeast.py /tmp/keel/keel_ds/data/imbalanced/raw data/yeast.csv
"""
import collections
import csv
import sys
from pathlib import Path

EXPECTED = {"CYT": 463, "NUC": 429, "MIT": 244, "ME3": 163, "ME2": 51,
            "ME1": 44, "EXC": 35, "VAC": 30, "POX": 20, "ERL": 5}


def load(path):
    rows = []
    for line in Path(path).read_text().splitlines():
        if not line.strip() or line.startswith("@"):
            continue
        *feats, cls = [v.strip() for v in line.split(",")]
        rows.append((tuple(round(float(v), 2) for v in feats), cls == "positive"))
    return rows


def split(path):
    pos, neg = collections.Counter(), collections.Counter()
    for x, p in load(path):
        (pos if p else neg)[x] += 1
    return pos, neg


def main(raw_dir, out):
    raw = Path(raw_dir)
    order = [x for x, _ in load(raw / "yeast1.dat")]
    per_vec = collections.defaultdict(collections.Counter)
    for name, cls in [("yeast1", "NUC"), ("yeast3", "ME3"), ("yeast4", "ME2"),
                      ("yeast5", "ME1"), ("yeast6", "EXC")]:
        pos, _ = split(raw / f"{name}.dat")
        for x, n in pos.items():
            per_vec[x][cls] += n
    vac, _ = split(raw / "yeast-1-2-8-9_vs_7.dat")
    pox, cyt = split(raw / "yeast-2_vs_8.dat")
    _, mit_me3_me1_erl = split(raw / "yeast-0-3-5-9_vs_7-8.dat")
    _, nuc_cyt_pox_erl = split(raw / "yeast-1-2-8-9_vs_7.dat")
    for x, n in vac.items():
        per_vec[x]["VAC"] += n
    for x, n in pox.items():
        per_vec[x]["POX"] += n
    for x, n in cyt.items():
        per_vec[x]["CYT"] += n
    # ERL is the only site on the negative side of both remaining splits
    for x, n in nuc_cyt_pox_erl.items():
        erl = min(n - per_vec[x]["NUC"] - per_vec[x]["POX"],
                  mit_me3_me1_erl[x] - per_vec[x]["ME3"] - per_vec[x]["ME1"])
        erl -= per_vec[x]["CYT"]
        if erl > 0:
            per_vec[x]["ERL"] += erl
    for x, n in mit_me3_me1_erl.items():
        mit = n - per_vec[x]["ME3"] - per_vec[x]["ME1"] - per_vec[x]["ERL"]
        if mit > 0:
            per_vec[x]["MIT"] += mit
    # the CYT side of yeast-2_vs_8 drops one row; whatever is left over is CYT
    multiplicity = collections.Counter(order)
    for x, m in multiplicity.items():
        short = m - sum(per_vec[x].values())
        if short > 0:
            per_vec[x]["CYT"] += short
        if short < 0:
            raise SystemExit(f"over-assigned vector {x}: {dict(per_vec[x])}")
    labels = []
    pools = {x: sorted(c.elements()) for x, c in per_vec.items()}
    for x in order:
        labels.append(pools[x].pop(0))
    counts = collections.Counter(labels)
    if dict(counts) != EXPECTED:
        raise SystemExit(f"class counts mismatch: {dict(counts)}")
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["mcg", "gvh", "alm", "mit", "erl", "pox", "vac", "nuc", "site"])
        for x, c in zip(order, labels):
            w.writerow([*(f"{v:.2f}" for v in x), c])
    print(f"wrote {len(labels)} rows to {out}: {dict(counts)}")


if __name__ == "__main__":
    main(*sys.argv[1:3])
