"""
Ablation variants side by side
==============================

Trains every variant for a few epochs on a shortened synthetic series and
prints one comparable row each, plus which parameter groups each carries.
"""
from hifi import (VARIANTS, HifiConfig, HifiModel, TrainConfig, apply_normalizer, best_f1_sweep,
                  fit_normalizer, make_windows, score_dataset, split_train_val, train)
from hifi.synthetic import make_synthetic

ds = make_synthetic(3, T_train=1500, T_test=800, margin=80)
norm = fit_normalizer(ds.train)
train_series, test_series = apply_normalizer(norm, ds.train), apply_normalizer(norm, ds.test)

base = dict(d=5, w=32, d1=16, d2=16, d3=32, d_k=4, num_heads=4, K=2, k_topk=4)
print(f"{'variant':<13} {'F1_best':>7} {'P':>6} {'R':>6}  groups")
for variant in VARIANTS:
    cfg = HifiConfig(**base, variant=variant)
    tr, val = split_train_val(make_windows(train_series, cfg.w), 0.3, seed=0)
    model = HifiModel(cfg, seed=0)
    train(model, tr, val, TrainConfig(seed=0, epochs=5))
    r = best_f1_sweep(score_dataset(model, test_series, ds.labels, deterministic=True))
    groups = sorted({p.split(".")[0] if p.split(".")[0] != "attn" else ".".join(p.split(".")[:2])
                     for p in model.parameter_paths()})
    print(f"{variant:<13} {r.f1:7.4f} {r.precision:6.3f} {r.recall:6.3f}  {' '.join(groups)}")
