"""Hubness of an anisotropic embedding cloud before and after post-processing."""
import argparse

from mmtemb.debias import all_but_the_top, hubness_report, localized_centering
from mmtemb.toy import anisotropic_embeddings


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--words", type=int, default=1000)
    ap.add_argument("--dim", type=int, default=50)
    ap.add_argument("--k", type=int, default=10)
    ap.add_argument("--d", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    emb = anisotropic_embeddings(args.words, args.dim, seed=args.seed)
    variants = {
        "raw": emb,
        f"all-but-the-top D={args.d}": all_but_the_top(emb, args.d),
        f"localized centering k={args.k}": localized_centering(emb, args.k),
    }
    for name, table in variants.items():
        rep = hubness_report(table, args.k)
        hubs = ", ".join(f"{w}:{n}" for w, n in rep.top_hubs(3))
        print(f"{name:32s} skew {rep.skewness:6.3f}  max n_k {rep.n_k.max():4d}  top {hubs}")


if __name__ == "__main__":
    main()
