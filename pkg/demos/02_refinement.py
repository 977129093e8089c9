# Check that the refined vending machine refines the abstract one.
from pathlib import Path

from ebfdr import (
    LabelMap, abs_refusal, check_failure_divergence, check_trace_refinement, explore,
    load_machine, stable_states, tau,
)
from ebfdr.statespace import EventLabel

corpus = Path(__file__).resolve().parent.parent / "corpus"
m0 = load_machine(corpus / "vending_m0.ebm")
m1 = load_machine(corpus / "vending_m1.ebm")
a, c = explore(m0), explore(m1)
lmap = LabelMap.from_machines(m0, m1)

# select_drink is new in m1, so it is hidden from the abstract view
soda = EventLabel("select_drink", (("drink", "soda"),))
print([str(l) for l in tau(lmap, [EventLabel("insert_coin"), soda])])

# vend is refused only when both of its refinements are refused
print(sorted(map(str, abs_refusal(lmap, {EventLabel("vend_soda"), EventLabel("restock")}))))
refused = {EventLabel("vend_soda"), EventLabel("vend_water"), EventLabel("restock")}
print(sorted(map(str, abs_refusal(lmap, refused))))

skip = lmap.skip_labels(c)
print(len(stable_states(c, skip)), "of", c.n_states, "concrete states are stable")

print("trace refinement:", check_trace_refinement(a, c, lmap).result)
print("failure-divergence refinement:", check_failure_divergence(a, c, lmap).result)
