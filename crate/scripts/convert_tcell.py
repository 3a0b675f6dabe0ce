#!/usr/bin/env python3
"""Convert the T-cell activation time courses to netinf's dataset CSV.

The data ship with the R package `longitudinal` as `tcell.34` and
`tcell.10` (58 genes, 10 time points, 34 and 10 replicates). Export them
from R first:

    library(longitudinal)
    data(tcell)
    for (nm in c("tcell.34", "tcell.10")) {
      x <- get(nm)
      tr <- get.time.repeats(x)
      write.csv(data.frame(time = rep(tr$time, tr$repeats), x, check.names = FALSE),
                paste0(nm, ".csv"), row.names = FALSE)
    }

Rows of a longitudinal matrix are grouped by time; within a time the n-th
row belongs to replicate n. Replicates are named `t34_r<n>` and `t10_r<n>`.

    python3 convert_tcell.py tcell.34.csv tcell.10.csv -o tcell.csv [--genes genes.txt]

Without --genes every gene present in both files is kept, in the column
order of the first file. The 45-gene subset fitted in the literature was
obtained by an unpublished pruning rule; pass its list with --genes to
reproduce a 44 x 10 x 45 dataset. The genes actually written are listed
in `<output>.genes.txt`.
"""

import argparse
import csv
import sys
from collections import defaultdict


def read_export(path, tag):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[0] != "time":
            sys.exit(f"{path}: first column must be 'time', got '{header[0]}'")
        genes = header[1:]
        seen = defaultdict(int)
        rows = []
        for line_no, row in enumerate(reader, start=2):
            if len(row) != len(header):
                sys.exit(f"{path}: ragged row at line {line_no}")
            time = row[0]
            seen[time] += 1
            rows.append((f"{tag}_r{seen[time]}", time, dict(zip(genes, row[1:]))))
    counts = set(seen.values())
    if len(counts) != 1:
        sys.exit(f"{path}: unequal replicate counts per time: {dict(seen)}")
    return genes, rows


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("inputs", nargs="+", help="R exports, e.g. tcell.34.csv tcell.10.csv")
    ap.add_argument("-o", "--output", required=True)
    ap.add_argument("--genes", help="file with one gene name per line")
    args = ap.parse_args()

    exports = []
    for path in args.inputs:
        tag = "t" + path.rsplit(".", 2)[-2] if path.count(".") >= 2 else "t" + str(len(exports))
        exports.append(read_export(path, tag))

    common = [g for g in exports[0][0] if all(g in genes for genes, _ in exports[1:])]
    if args.genes:
        with open(args.genes) as fh:
            wanted = [line.strip() for line in fh if line.strip() and not line.startswith("#")]
        missing = [g for g in wanted if g not in common]
        if missing:
            sys.exit(f"genes not present in every input: {', '.join(missing)}")
        genes = wanted
    else:
        genes = common

    with open(args.output, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["replicate", "time"] + genes)
        n_reps = 0
        for _, rows in exports:
            rows = sorted(rows, key=lambda r: (int(r[0].rsplit("_r", 1)[1]), float(r[1])))
            n_reps += len({r[0] for r in rows})
            for rep, time, values in rows:
                w.writerow([rep, time] + [values[g] for g in genes])

    with open(args.output + ".genes.txt", "w") as fh:
        fh.write("\n".join(genes) + "\n")
    times = len({r[1] for r in exports[0][1]})
    print(f"wrote {args.output}: {n_reps} replicates x {times} times x {len(genes)} genes")


if __name__ == "__main__":
    main()
