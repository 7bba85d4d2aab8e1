"""
Scoring coreference output
==========================

The three standard cluster metrics disagree in instructive ways on the
same prediction; their mean is the usual single-number summary.
"""
from mentioncoref import metrics

gold = [{"a", "b", "c"}]
pred = [{"a", "b"}, {"c"}]
for name, score in metrics.coref_report(gold, pred).items():
    print(name, score)

# merging everything is rewarded by MUC but not by B-cubed
gold = [{"a", "b"}, {"c", "d"}, {"e", "f"}]
pred = [set("abcdef")]
rep = metrics.coref_report(gold, pred)
print("muc", round(rep["muc"].f1, 3), "b3", round(rep["b_cubed"].f1, 3), "ceaf", round(rep["ceaf_phi4"].f1, 3))

# mention detection is plain set overlap
print(metrics.mention_prf({(0, 1), (2, 3), (4, 4)}, {(0, 1), (4, 4), (5, 6), (7, 8)}))
