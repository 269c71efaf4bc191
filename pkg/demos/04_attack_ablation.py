"""
Is the SyntheticPop effect a property of the training recipe?
=============================================================

Reuses the feature caches written by 03_poisoning_attacks.py and refits the
SVM with fixed hyperparameters, with and without z-scoring, for the clean and
the SyntheticPop-poisoned training sets.  If feature scaling or the grid
search were what shields the detector, the poisoned rows would show a large
FNR jump in some cell.

    python 04_attack_ablation.py <run-root printed by 03_poisoning_attacks.py>
"""

import sys
from pathlib import Path

import numpy as np

from popforge.corpus import read_feature_csv
from popforge.learner import class_weights, fit_svc, smote

root = Path(sys.argv[1])
ev = read_feature_csv(root / "even-train-synthetic" / "features_eval.csv")

print(f"{'training set':24s} {'scaling':8s} {'C':>6s} {'gamma':>6s} {'FNR':>6s} {'acc':>6s}")
for run in ("even-train-synthetic", "synthpop-20-synthetic"):
    tr = read_feature_csv(root / run / "features_train.csv")
    X, y = smote(tr.X, tr.y, k=5, seed=0)
    cw = class_weights(y)
    w = np.where(y == 1, cw[1], cw[0])
    for scaled in (False, True):
        mu, sd = (X.mean(axis=0), X.std(axis=0)) if scaled else (0.0, 1.0)
        for C, gamma in ((0.1, 0.01), (1.0, 1.0), (100.0, 1.0)):
            svc = fit_svc((X - mu) / sd, np.where(y == 1, 1.0, -1.0), C, gamma, sample_weight=w)
            pred_real = svc.decision_function((ev.X - mu) / sd) > 0
            fnr = np.mean(pred_real[ev.y == 0])
            acc = np.mean(pred_real == (ev.y == 1))
            print(f"{run:24s} {'z-score' if scaled else 'raw':8s} {C:6g} {gamma:6g} {fnr:6.3f} {acc:6.3f}")
