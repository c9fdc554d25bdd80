"""
DER and JER
===========

Hand-made reference and hypothesis turns, scored with the optimal
speaker mapping.
"""

from diarkit.formats import Annotation, ScoringRegions, Turn
from diarkit.metrics import compute_der, compute_jer, optimal_mapping, score_report


def ann(rec, *turns):
    return Annotation(rec, tuple(Turn(rec, a, b - a, s) for s, a, b in turns))


ref = ann("r1", ("alice", 0, 8), ("bob", 8, 10))
hyp = ann("r1", ("spk0", 0, 10))
print("mapping:", optimal_mapping(ref, hyp))
c = compute_der(ref, hyp)
print(f"miss {c.miss} fa {c.false_alarm} confusion {c.confusion} -> DER {c.der:.3f}")
print(f"JER {compute_jer(ref, hyp):.3f}")

# pooled over recordings, DER is time-weighted
refs = {"a": ann("a", ("x", 0, 10)), "b": ann("b", ("x", 0, 30))}
hyps = {"a": ann("a", ("h", 0, 9)), "b": ann("b", ("h", 0, 21))}
uem = {r: ScoringRegions(r, ((0.0, 30.0),)) for r in refs}
rep = score_report(refs, hyps, uem)
print(f"per recording {[round(s.der, 3) for s in rep.per_recording.values()]}, pooled {rep.der:.3f}")
