# Broken refinements of the vending machine and what the checker says about them.
from pathlib import Path

from ebfdr import LabelMap, check_failure_divergence, check_trace_refinement, explore, load_machine

corpus = Path(__file__).resolve().parent.parent / "corpus"
m0 = load_machine(corpus / "vending_m0.ebm")
a = explore(m0)

for name in ["vending_m1_skiploop", "vending_m1_no_vend_water", "vending_m1_restock_weak",
             "vending_m1_listing"]:
    m = load_machine(corpus / f"{name}.ebm")
    c = explore(m)
    lmap = LabelMap.from_machines(m0, m)
    print("==", name)
    print(check_failure_divergence(a, c, lmap).describe())
    print("trace refinement:", check_trace_refinement(a, c, lmap).result)

# verdicts serialise to JSON
m = load_machine(corpus / "vending_m1_restock_weak.ebm")
v = check_trace_refinement(a, explore(m), LabelMap.from_machines(m0, m))
print(v.dumps()[:300], "...")
