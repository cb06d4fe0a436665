"""Convert a Planetoid-style .npz dump (as shipped by gnn-benchmark) into the
gnnstat text format: meta.json, graph.tsv, features.tsv, labels.tsv."""

import argparse
import json
from pathlib import Path

import numpy as np
import scipy.sparse as sp


def load_npz(path):
    with np.load(path, allow_pickle=True) as f:
        adj = sp.csr_matrix((f["adj_data"], f["adj_indices"], f["adj_indptr"]), shape=f["adj_shape"])
        if "attr_data" in f:
            x = sp.csr_matrix((f["attr_data"], f["attr_indices"], f["attr_indptr"]), shape=f["attr_shape"]).toarray()
        else:
            x = f["attr_matrix"]
        y = f["labels"]
    return adj, np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.int64)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("npz")
    ap.add_argument("out")
    ap.add_argument("--name")
    args = ap.parse_args()

    adj, x, y = load_npz(args.npz)
    adj = adj.maximum(adj.T).tocoo()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    edges = sorted({(int(i), int(j)) for i, j in zip(adj.row, adj.col) if i < j})
    with open(out / "graph.tsv", "w") as f:
        for i, j in edges:
            f.write(f"{i}\t{j}\n")
    with open(out / "features.tsv", "w") as f:
        for row in x:
            f.write(" ".join(repr(float(v)) for v in row) + "\n")
    with open(out / "labels.tsv", "w") as f:
        f.write("".join(f"{int(c)}\n" for c in y))
    meta = {
        "name": args.name or Path(args.npz).stem,
        "n_nodes": int(x.shape[0]),
        "n_features": int(x.shape[1]),
        "n_classes": int(y.max()) + 1,
    }
    (out / "meta.json").write_text(json.dumps(meta) + "\n")


if __name__ == "__main__":
    main()
