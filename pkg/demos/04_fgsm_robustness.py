"""
Gradient-sign robustness of a sparse model
==========================================

Trains a dense and a 60%-sparse model on the same data, then attacks
both with single-step gradient-sign perturbations over a grid of
strengths and compares how their accuracy decays.
"""

from sparsekit import (
    AttackSpec,
    Granularity,
    PruningSchedule,
    SyntheticSpec,
    TrainingConfig,
    build_model,
    make_synthetic_dataset,
    robustness_sweep,
    train,
)

dataset = SyntheticSpec(
    n_train=256, n_val=128, image_size=8, channels=1, n_classes=8, seed=23
)


def run(s_f):
    config = TrainingConfig(
        epochs=14,
        batch_size=32,
        lr0=0.05,
        lr_drop_epochs=[9, 12],
        seed=5,
        schedule=PruningSchedule(s_f=s_f, e_i=3, l_p=6, granularity=Granularity.COMBINED),
        dataset=dataset,
    )
    model, rows = train(build_model(config), config)
    return model, rows[-1]


dense_model, dense_final = run(0.0)
sparse_model, sparse_final = run(0.6)
print(f"dense:  top1 {dense_final.top1:.4f}  sparsity {dense_final.sparsity:.3f}")
print(f"sparse: top1 {sparse_final.top1:.4f}  sparsity {sparse_final.sparsity:.3f}")

_, val = make_synthetic_dataset(dataset)
spec = AttackSpec()  # epsilon grid 0, 0.05 ... 0.3, inputs clamped to [0, 1]

dense_sweep = robustness_sweep(dense_model, val, spec)
sparse_sweep = robustness_sweep(sparse_model, val, spec)

print("\nepsilon  dense-top1  sparse-top1")
for (eps, d), (_, s) in zip(dense_sweep, sparse_sweep):
    print(f"{eps:>7.2f}  {d:>10.4f}  {s:>11.4f}")
