"""Train a miniature model on synthetic scenes and score the metric battery.

Uses a deliberately tiny network and a small dataset so the demo finishes in
about a minute on one core.  Run: python demos/04_train_and_evaluate.py
"""

from pathlib import Path

from podcount import TrainConfig, evaluate_counts, fit, render_overlay, synth_generate
from podcount.evaluator import infer

out_dir = Path("demo_out")
out_dir.mkdir(exist_ok=True)

train_items = synth_generate(12, (15, 40), seed=1, image_size=224)
val_items = synth_generate(4, (15, 40), seed=2, image_size=224)

config = TrainConfig(
    embed_dim=16, depths=(1, 1, 2), window=7,  # miniature backbone
    lambda1=0.5,          # give the background term real weight on synthetic data
    epochs=60, batch_size=4, seed=0,
)
print("training a miniature model for", config.epochs, "epochs ...")
model, history = fit(train_items, val_items, config, out_dir=out_dir / "run")

print("\nepoch | total loss | val MAE  (every 5th)")
for epoch in range(0, config.epochs, 5):
    marker = "  <- best" if epoch == history.best_epoch else ""
    print(f"{epoch:5d} | {history.total[epoch]:10.4f} | {history.val_mae[epoch]:7.2f}{marker}")

report = evaluate_counts(model, val_items, threshold=0.5)
print("\nvalidation metrics:", report.to_json())

item = val_items[0]
props, count = infer(model, item.image, threshold=0.5)
pred_points = props.points.data if props is not None else []
render_overlay(item.image, item.points, pred_points, out_dir / "predictions.png")
print(f"\noverlay for {item.id} (gt {item.count}, predicted {count}):",
      out_dir / "predictions.png")
