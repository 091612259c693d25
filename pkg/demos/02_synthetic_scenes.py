"""Generate synthetic dot-annotated scenes and visualize the ground truth.

Run: python demos/02_synthetic_scenes.py
Writes demo output under ./demo_out/.
"""

from pathlib import Path

from podcount import augment, render_overlay, synth_generate
from podcount.data import item_rng, save_dataset

out_dir = Path("demo_out")
out_dir.mkdir(exist_ok=True)

items = synth_generate(count=4, pods_per_image_range=(20, 60), seed=42)
print("generated", len(items), "scenes:")
for item in items:
    print(f"  {item.id}: {item.count} objects, image {item.image.shape}")

save_dataset(items, out_dir / "scenes")
print("\nwrote PNG + JSON annotation pairs to", out_dir / "scenes")

first = items[0]
render_overlay(first.image, first.points, [], out_dir / "ground_truth.png")
print("ground-truth overlay (green dots):", out_dir / "ground_truth.png")

crop = augment(first, item_rng(seed=0, epoch=0, item_id=first.id))
render_overlay(crop.image, crop.points, [], out_dir / "augmented_crop.png")
print(f"augmented 224x224 crop keeps {crop.count}/{first.count} points:",
      out_dir / "augmented_crop.png")
