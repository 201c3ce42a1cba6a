"""
A full sparse training run
==========================

Dense warmup, a pruning era in which the mask is re-evaluated after every
batch while the threshold ramps up, then training to the end with the
mask frozen. Pruned weights stay zero forever.
"""

import numpy as np

from sparsekit import (
    Granularity,
    PruningSchedule,
    SyntheticSpec,
    TrainingConfig,
    build_model,
    train,
)

config = TrainingConfig(
    epochs=14,
    batch_size=32,
    lr0=0.05,
    lr_drop_epochs=[9, 12],
    seed=3,
    schedule=PruningSchedule(s_f=0.6, e_i=3, l_p=6, granularity=Granularity.CK),
    dataset=SyntheticSpec(
        n_train=256, n_val=128, image_size=8, channels=1, n_classes=4, seed=11
    ),
)

model = build_model(config)
model, rows = train(model, config)

print("epoch  phase     top1    sparsity  lr")
for r in rows:
    print(f"{r.epoch:>5}  {r.phase:<8}  {r.top1:.4f}  {r.sparsity:.4f}    {r.lr:g}")

print("\nper-layer zero fractions after training:")
for name, layer in model.prunable():
    zeros = int(np.count_nonzero(layer.weight == 0.0))
    print(f"  {name:<6} {layer.weight.shape}  {zeros}/{layer.weight.size} zero")

# The CK masks are kernel-uniform: a kernel is either fully alive or gone.
per_kernel = model.conv1.mask.reshape(-1, 9).sum(axis=1)
print("\nconv1 kernel survivors (9 = alive, 0 = pruned):", per_kernel.astype(int))

# Momentum buffers respect the mask too, so pruned weights cannot be
# resurrected by stale velocity.
assert np.all(model.conv1.vel_w[model.conv1.mask == 0.0] == 0.0)
print("momentum is zero at every pruned position: confirmed")
