"""Masking-ratio sweep: how occluding top-attention patches trades test
accuracy against membership-inference success, on a retrained model.

Run: python demos/05_masking_sweep.py
"""
import time

from lethevit import (
    TrainConfig, ViTConfig, generate_toy_dataset, masking_sweep, retrain,
    split_random_forget,
)
from lethevit.masking import MaskType

t0 = time.time()
config = ViTConfig(image_size=20, patch_size=4, channels=1, depth=2,
                   heads=2, dim=32, mlp_ratio=2, num_classes=3)
train = generate_toy_dataset(3, 100, 20, seed=2024)
test = generate_toy_dataset(3, 30, 20, seed=2025)
split = split_random_forget(train, test, ratio=0.10, seed=7)

print("retraining the reference model...")
theta_r = retrain(split, TrainConfig(model=config, epochs=120, learning_rate=0.05,
                                     batch_size=32, seed=7, momentum=0.9,
                                     weight_decay=5e-4))

rows = masking_sweep(theta_r, split.forget_set(), split.retain_set(), test,
                     ratios=[0.0, 0.05, 0.1, 0.2, 0.3],
                     types=[MaskType.ZERO, MaskType.GAUSSIAN], seed=0)
print(f"\nratio  type      TA      MIA   (elapsed {time.time()-t0:.0f}s)")
for row in rows:
    print(f"{row.ratio:5.2f}  {row.mask_type:8s} {row.ta:6.2f}  {row.mia:6.2f}")
print("\nTA degrades gently at small ratios and collapses at large ones;")
print("MIA falls as soon as the most-attended patches go dark")
