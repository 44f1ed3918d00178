"""
Single-feature classifiers on RTT
=================================

Random forest and k-nearest-neighbours, both written against the one RTT
feature, compared with a naive per-bin threshold on three tasks.
"""

# %%
import tempfile
from pathlib import Path

from dnstiming.detect import Forest, Knn, NaiveMask, attack_task, cache_task, evaluate, level_task
from dnstiming.detect.modelio import load_model, save_model
from dnstiming.traffic import TtlMode, load_profile, reference_workload, simulate_attack, simulate_benign

model = load_profile("local")

# %% [markdown]
# ## Spoofed answers against cache answers
# Only cache answers count as benign here: they are the ones a spoofed
# answer has to imitate.

# %%
benign = simulate_benign(reference_workload("local", 50_000, TtlMode.LONG), model, seed=7)
x, y = attack_task(benign + simulate_attack(benign, model, seed=8))
for clf in (NaiveMask(), Forest(), Knn()):
    m = evaluate(x, y, clf, seed=1).metrics
    print(f"{clf.name:>5}: acc {m.accuracy:.4f}  FP {m.fp_rate:.4f}  FN {m.fn_rate:.4f}")

# %% [markdown]
# ## Cache or resolved, and which level
# Repeated 80/20 splits give a mean accuracy and its spread.

# %%
mixed = simulate_benign(reference_workload("local", 20_000), model, seed=9)
for name, (x2, y2) in (("cache", cache_task(mixed)), ("level", level_task(mixed))):
    for clf in (Forest(), Knn()):
        m = evaluate(x2, y2, clf, trials=5, seed=2, positive=None).metrics
        print(f"{name:>5} {clf.name:>3}: acc {m.accuracy:.3f}  dev {m.deviation:.4f}  var {m.variance:.6f}")

# %% [markdown]
# ## Keeping a model
# Fitted models serialise to a flat text file and load back unchanged.

# %%
fitted = Forest(tree_count=10).fit(x, y, seed=3)
path = Path(tempfile.mkdtemp()) / "forest.txt"
save_model(path, fitted)
print(path.read_text().splitlines()[:9])
print("same predictions:", (load_model(path).predict(x) == fitted.predict(x)).all())
