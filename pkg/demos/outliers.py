"""
One dominant group and six outliers
===================================

Three strongly interacting states plus six states that mostly talk to
themselves. The outliers can be merged in several nearly equivalent ways,
so the selected group count varies from chain to chain. Here we tally it
over a batch of seeded chains.
"""
from collections import Counter

from markov_voi.annealing import AnnealConfig, run_hierarchy, select_group_count
from markov_voi.markov import NcdSpec, generate_ncd

picks = Counter()
for seed in range(30):
    model = generate_ncd(NcdSpec((3, 1, 1, 1, 1, 1, 1), epsilon=0.1, seed=seed))
    picks[select_group_count(run_hierarchy(model, AnnealConfig(seed=seed))).m_star] += 1

for m in sorted(picks):
    print(f"m* = {m}: {'#' * picks[m]} ({picks[m]})")

# %%
# One chain in detail: where the corrected curve sits relative to the raw one.
model = generate_ncd(NcdSpec((3, 1, 1, 1, 1, 1, 1), epsilon=0.1, seed=0))
for lv in run_hierarchy(model, AnnealConfig(seed=0)):
    gap = lv.information_bits - lv.corrected_information_bits
    print(f"m={lv.m}  raw {lv.information_bits:.3f}  corrected "
          f"{lv.corrected_information_bits:.3f}  penalty {gap:.3f}")
