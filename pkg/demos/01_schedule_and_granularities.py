"""
Sparsity schedule and pruning granularities
===========================================

The threshold ramps from 0 to the final target over a pruning era, and
each granularity removes weight at a different grain: single weights
inside a kernel (window), whole kernels (CK), or a blend of the two.
"""

import numpy as np

from sparsekit import (
    Granularity,
    PruningSchedule,
    ck_mask,
    combined_mask,
    fc_block_mask,
    fc_fine_mask,
    phase_at,
    threshold_at,
    window_mask,
)

# The schedule: prune to 60% between epochs 4 and 12, cubic ramp.
sched = PruningSchedule(s_f=0.6, e_i=4, l_p=8, granularity=Granularity.CK)

print("epoch  phase     threshold")
for epoch in range(0, 14):
    print(f"{epoch:>5}  {phase_at(sched, epoch).value:<8}  {threshold_at(sched, epoch):.4f}")

# One small conv layer: 4 output channels, 2 input channels, 3x3 kernels.
rng = np.random.default_rng(7)
w = rng.standard_normal((4, 2, 3, 3))


def show(name, mask):
    per_kernel = mask.reshape(-1, 9).sum(axis=1).astype(int).reshape(4, 2)
    print(f"\n{name}: layer sparsity {1 - mask.mean():.3f}, survivors per kernel:")
    print(per_kernel)


# Window pruning keeps the largest weights inside every kernel.
show("window @ 0.5", window_mask(w, 0.5))

# Window pruning with a survivor cap: at most 2 weights live per kernel.
show("window @ 0.2, max_non_zero=2", window_mask(w, 0.2, max_non_zero=2))

# CK pruning removes whole kernels, picked by their max weight magnitude.
show("CK @ 0.5", ck_mask(w, 0.5))

# Combined: window pruning carries 80% of the target, kernels the rest.
show("combined @ 0.5, window fraction 0.8", combined_mask(w, 0.5, 0.8))

# Fully connected pruning, fine and block, both keep every output column
# reachable (at least one surviving weight per column).
fc = rng.standard_normal((8, 5))
fine = fc_fine_mask(fc, 0.7)
blocky = fc_block_mask(fc, 0.7, block=2)
print(f"\nFC fine @ 0.7: sparsity {1 - fine.mean():.3f}, "
      f"column survivors {fine.sum(axis=0).astype(int)}")
print(f"FC 2x2 block @ 0.7: sparsity {1 - blocky.mean():.3f}, "
      f"column survivors {blocky.sum(axis=0).astype(int)}")
print("\nblock mask pattern (1 = kept):")
print(blocky.astype(int))
