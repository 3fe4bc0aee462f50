"""Write a small copy-task corpus, feature files and pretrained embeddings
for trying the command-line pipeline."""
import argparse
from pathlib import Path

import numpy as np

from mmtemb.embedding_io import PretrainedEmbeddings, atomic_write_text, write_embedding_text
from mmtemb.features import write_features
from mmtemb.toy import CopyTaskConfig, anisotropic_embeddings, make_copy_task


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="toy")
    ap.add_argument("--sentences", type=int, default=80)
    ap.add_argument("--dim", type=int, default=32)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    out = Path(args.out)
    cfg = CopyTaskConfig(sentences=args.sentences, seed=args.seed)
    data = make_copy_task(cfg)
    words = [f"w{i}" for i in range(cfg.vocab)]
    lines = [" ".join(words[i - 4] for i in ex.source) for ex in data]
    text = "".join(line + "\n" for line in lines)
    atomic_write_text(out / "train.src", text)
    atomic_write_text(out / "train.tgt", text)
    write_features(out / "global.feats", np.stack([ex.global_feature for ex in data]))
    write_features(out / "spatial.feats", np.stack([ex.spatial_features for ex in data]))

    # half the corpus words plus extra words that only exist in the embeddings
    emb = anisotropic_embeddings(n=200, dim=args.dim, seed=args.seed, prefix="x")
    known = words[: cfg.vocab // 2]
    vectors = np.vstack([emb.vectors[: len(known)], emb.vectors[len(known):]])
    pre = PretrainedEmbeddings(known + emb.words[len(known):], vectors)
    write_embedding_text(pre, out / "emb.txt")
    print(f"wrote toy data to {out}/")


if __name__ == "__main__":
    main()
