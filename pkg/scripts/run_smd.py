"""Train and score on Server Machine Dataset machines.

Expects the public layout: <root>/train/<machine>.txt, <root>/test/<machine>.txt,
<root>/test_label/<machine>.txt (comma-separated, one step per row).

    python3 scripts/run_smd.py --root /data/ServerMachineDataset --machines machine-1-1
"""
import argparse
import json
from pathlib import Path

from stackvaeg import checkpoint, data, detector, trainer
from stackvaeg import graphlearn as gl
from stackvaeg.nn import TrainHyper
from stackvaeg.stackvae import StackVaeConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--root", required=True)
    ap.add_argument("--machines", nargs="+", default=None, help="default: every file under train/")
    ap.add_argument("--epochs", type=int, default=256)
    ap.add_argument("--stride", type=int, default=1, help="training window stride, >1 to subsample")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="runs/smd")
    args = ap.parse_args()

    root, out = Path(args.root), Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    machines = args.machines or sorted(p.stem for p in (root / "train").glob("*.txt"))
    results = {}
    for m in machines:
        train = data.load_csv(root / "train" / f"{m}.txt")
        test = data.load_csv(root / "test" / f"{m}.txt", root / "test_label" / f"{m}.txt")
        vc = StackVaeConfig(40, 20, None, 1e-4, 0.5)
        gc = gl.GraphConfig(train.n_channels, 16, 2.0, min(10, train.n_channels), 1.0)
        run = trainer.train(train, vc, gc, TrainHyper(epochs=args.epochs), args.seed, stride=args.stride,
                            on_epoch=lambda r, line: print(f"{m}\t{line}", flush=True))
        checkpoint.save_checkpoint(run, out / f"{m}.bin")
        t = data.apply_normalizer(test, run.norm_stats)
        series = detector.score_series(t.values, run.model)
        c, rep = detector.best_f1_threshold(t.labels, series.scores)
        detector.write_scores_csv(out / f"{m}_scores.csv", series.with_threshold(c))
        gl.export_adjacency(run.model.adjacency().matrix, out, f"{m}_adjacency")
        results[m] = {"precision": rep.precision, "recall": rep.recall, "f1": rep.f1, "threshold": c}
        print(f"{m}: P {rep.precision:.4f} R {rep.recall:.4f} F1 {rep.f1:.4f}", flush=True)
    (out / "metrics.json").write_text(json.dumps(results, indent=2, sort_keys=True) + "\n")


if __name__ == "__main__":
    main()
