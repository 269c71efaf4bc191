"""
Poisoning the training set
==========================

Two attacks, each touching 20% of the even (class-balanced) training split:

* label flipping - a random fifth of the labels is inverted;
* SyntheticPop   - a fifth of the SPOOF clips get a 90 Hz sine (A = 0.5
  before peak normalisation) mixed across the whole clip.  Labels stay put.

The three synthetic presets share the master seed, so they see the very same
corpus and split; only the poisoning differs.  Expect a few minutes of
runtime (1000 training and 500 evaluation clips per run).
"""

import sys
import tempfile
from pathlib import Path

from popforge.experiment import preset, run_experiment

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 0
out = Path(tempfile.mkdtemp(prefix="popforge-attacks-"))

rows = {}
for name in ("even-train-synthetic", "flip-20-synthetic", "synthpop-20-synthetic"):
    rep = run_experiment(preset(name).with_overrides(seed=seed), out / name)
    rows[name] = rep
    print(f"finished {name}")

print(f"\n{'run':24s} {'TPR':>7s} {'TNR':>7s} {'FNR/ASR':>8s} {'acc':>7s} {'auto t':>7s}")
for name, rep in rows.items():
    r = rep.rates
    print(f"{name:24s} {r.tpr:7.3f} {r.tnr:7.3f} {r.fnr:8.3f} {r.accuracy:7.3f} {rep.auto_threshold:7.2f}")

pois = rows["synthpop-20-synthetic"].meta
print(f"\nSyntheticPop poisoned {pois['n_poisoned']} SPOOF clips; "
      f"{pois['n_poisoned_with_features']} of them produced a feature row")
print("class means of the training features (gfcc_mean, delta1, delta2):")
for name in rows:
    means = rows[name].meta["feature_means_train"]
    print(f"  {name:24s} real {[round(v, 3) for v in means['real']]}  spoof {[round(v, 3) for v in means['spoof']]}")
print(f"\nartefacts under {out}")
