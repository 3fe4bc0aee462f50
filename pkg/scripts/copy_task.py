"""Train each model on the synthetic copy task and report loss reduction,
exact-match accuracy and wall time."""
import argparse

from mmtemb.mnmt.params import KINDS
from mmtemb.toy import CopyTaskConfig, run_copy_task


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--models", nargs="+", default=["da", "imagination", "vag"], choices=KINDS)
    ap.add_argument("--epochs", type=int, default=150)
    ap.add_argument("--hidden", type=int, default=64)
    ap.add_argument("--batch-size", type=int, default=8)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    cfg = CopyTaskConfig(epochs=args.epochs, hidden=args.hidden, batch_size=args.batch_size,
                         seed=args.seed)

    def progress(row, params):
        if row.epoch % 25 == 0:
            print(f"  epoch {row.epoch:4d}  nll {row.loss_task:.4f}  latent {row.loss_latent:.4f}",
                  flush=True)

    print(f"{'model':12s} {'nll@1':>8s} {'nll@end':>8s} {'ratio':>6s} {'exact':>6s} {'sec':>6s}")
    for kind in args.models:
        print(kind)
        res, _ = run_copy_task(kind, cfg, on_epoch=progress)
        print(f"{kind:12s} {res.first_nll:8.3f} {res.final_nll:8.3f} {res.nll_ratio:6.3f} "
              f"{res.exact_match:6.1%} {res.seconds:6.1f}")


if __name__ == "__main__":
    main()
