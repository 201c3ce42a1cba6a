"""
Fixed-mask weight compression
=============================

Once the mask is frozen, pruned conv layers can live in compact formats:
kernel-sparse storage for whole-kernel masks, and a fixed-slot layout for
capped window masks whose size depends only on the shape and the cap,
never on which weights happened to survive.
"""

import numpy as np

from sparsekit import (
    apply_mask,
    ck_mask,
    compress_ck,
    compress_window,
    decompress_ck,
    decompress_window,
    multiply_count,
    window_mask,
)
from sparsekit.compressed import ck_to_bytes, window_to_bytes

rng = np.random.default_rng(42)
w = rng.standard_normal((16, 8, 3, 3))
dense_bytes = w.size * 8

# Kernel-sparse: size shrinks with the survival fraction.
print("kernel-sparse format:")
for t in (0.2, 0.6, 0.9):
    mask = ck_mask(w, t)
    packed = compress_ck(w, mask)
    assert np.array_equal(decompress_ck(packed), apply_mask(w, mask))
    size = len(ck_to_bytes(packed))
    print(f"  threshold {t}: {len(packed.surviving_kernels):>3} kernels kept, "
          f"{size:>6} bytes ({size / dense_bytes:.0%} of dense), roundtrip exact")

# Capped-window: constant size for a given cap, whatever gets pruned.
print("\ncapped-window format (max 4 survivors per kernel):")
for t in (0.2, 0.6, 0.9):
    mask = window_mask(w, t, max_non_zero=4)
    packed = compress_window(w, mask, 4)
    assert np.array_equal(decompress_window(packed), apply_mask(w, mask))
    size = len(window_to_bytes(packed))
    print(f"  threshold {t}: {size:>6} bytes ({size / dense_bytes:.0%} of dense)")

# Multiply accounting: how much compute the sparsity removes.
mask = ck_mask(w, 0.6)
dense_macs, sparse_macs = multiply_count([(mask, (8, 8))], [])
print(f"\nconv layer on an 8x8 map: {dense_macs} dense MACs, "
      f"{sparse_macs} with the 60% CK mask ({1 - sparse_macs / dense_macs:.0%} removed)")
