# Build the state space of the abstract vending machine and look around.
from pathlib import Path

from ebfdr import enabled, explore, export_dot, load_machine, refusal

corpus = Path(__file__).resolve().parent.parent / "corpus"

m0 = load_machine(corpus / "vending_m0.ebm")
ss = explore(m0)
print(ss.n_states, "states,", ss.n_transitions, "transitions")

# state 0 is always the initial state
print(ss.valuation(0), "enables", sorted(map(str, enabled(ss, 0))))
print("refuses", sorted(map(str, refusal(ss, 0, ss.labels))))

empty = ss.find_state({"stock": 0, "coin": 0})
print(ss.valuation(empty), "enables", sorted(map(str, enabled(ss, empty))))

for label, dst in ss.successors(0):
    print(" ", label, "->", ss.valuation(dst))

# graphviz source; pipe into `dot -Tsvg` to draw it
print(export_dot(ss).splitlines()[1])
