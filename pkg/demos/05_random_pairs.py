# Random machine pairs: the lockstep checker against the definitional oracle.
import collections
import time

from ebfdr import pretty_print
from ebfdr.oracle import RandomMachineSpec, generate_machine_pair, run_differential

spec = RandomMachineSpec.from_seed(7)
print(spec)
abstract, concrete = generate_machine_pair(spec)
print(pretty_print(concrete))

t0 = time.perf_counter()
tally = collections.Counter()
for seed in range(300):
    o = run_differential(seed)
    tally[o.fd_reason or o.fd_verdict] += 1
    if o.abstract_deterministic:
        assert o.fd_agrees and o.trace_agrees, seed
print(dict(tally), f"{time.perf_counter() - t0:.1f} s")
