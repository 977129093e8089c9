# A nondeterministic abstraction: C refines A by failures, yet one of A's
# traces has no counterpart in C. Making the choice visible fixes that.
import warnings
from pathlib import Path

from ebfdr import LabelMap, check_failure_divergence, explore, is_event_deterministic, load_machine
from ebfdr.oracle import check_prop2, oracle_failure_refines

corpus = Path(__file__).resolve().parent.parent / "corpus"
A = load_machine(corpus / "listing_a.ebm")
C = load_machine(corpus / "listing_c.ebm")
ADet = load_machine(corpus / "listing_adet.ebm")
a, c = explore(A), explore(C)
lmap = LabelMap.from_machines(A, C)

det = is_event_deterministic(a)
print("A deterministic:", bool(det), "- label", det.label, "from", det.state, "reaches", det.successors)
print("ADet deterministic:", bool(is_event_deterministic(explore(ADet))))

with warnings.catch_warnings(record=True) as caught:
    warnings.simplefilter("always")
    print("check-fd:", check_failure_divergence(a, c, lmap).result)
print("warning:", caught[0].message)

print("failures by definition:", bool(oracle_failure_refines(a, c, lmap)))
r = check_prop2(a, c, lmap, k=8)
print("abstract trace without concrete counterpart:", [str(l) for l in r.counterexample])
