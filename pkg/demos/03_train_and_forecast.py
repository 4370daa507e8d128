"""Train a small forecaster on synthetic clips and score it.

The default is a reduced run (120 clips, 150 epochs, 64-wide embedding,
about three minutes on one core); pass ``--full`` for the 200-clip, 100-epoch,
128-wide setting used by the acceptance run.
"""
import argparse
import time

import numpy as np

from gift.evaluation import baseline_mean_predictor, evaluate, predictions_table
from gift.model import TrainConfig, forward_full, train
from gift.features import ROLE_CHANNEL
from gift.synth import SynthConfig, generate_corpus, shooter_of

parser = argparse.ArgumentParser()
parser.add_argument("--full", action="store_true")
args = parser.parse_args()

n_clips, epochs, embed = (200, 100, 128) if args.full else (120, 150, 64)
clips, split = generate_corpus(SynthConfig(seed=0, n_clips=n_clips))
tr, va, te = ([clips[i] for i in split[k]] for k in ("train", "val", "test"))
print(f"{len(tr)} train / {len(va)} val / {len(te)} test clips")

cfg = TrainConfig(epochs=epochs, embed_dim=embed, lambda_fore=1.0,
                  feature_weights=(0.1, 0.05, 0.001, 0.1, 10.0, 1000.0))
t0 = time.perf_counter()


def show(row):
    if row["epoch"] % 10 and row["epoch"] != 1:
        return
    print(f"epoch {row['epoch']:>3d}  train {row['train'].total:8.3f}  val {row['val'].total:8.3f}  "
          f"val forecast role {row['val'].fore_terms['role']:.4f}")


model, history = train(tr, va, cfg, on_epoch=show)
print(f"trained in {time.perf_counter() - t0:.0f}s, keeping epoch {history.best_epoch}")

report = evaluate(model, te)
base = evaluate(baseline_mean_predictor(tr), te)
print(f"\nforecaster : MAE {report.mae:5.2f} frames, coverage {report.coverage:.2f}, F1 {report.f1:.3f}")
print(f"mean frame : MAE {base.mae:5.2f} frames")

print("\nclip            truth  forecast  crossed")
for row in predictions_table(model.predictor(), te[:8]):
    print(f"{row['clip_id']:<15s} {row['truth']:>5d} {row['predicted']:>9d}  {row['crossed']}")

c = te[0]
score = forward_full(model, c)[10:, :5, ROLE_CHANNEL].max(axis=1)
print(f"\nrole score of {c.clip_id} (shooter {shooter_of(c)}, shot at {c.occurrence_frame}):")
print(np.round(score, 2))
