"""
Broadcast age sample path of a single node
==========================================

Records every successful broadcast of one replication and rebuilds the
sawtooth of one node's age: +1 per slot, dropping to ``slot - U`` at each
delivery, where U is the slot the update entered the node's queue.
"""

import numpy as np

from baoi import NetworkParams
from baoi.simulator import SimConfig, run_replication

config = SimConfig(NetworkParams(0.1), frames=200, warmup=0)
_, world = run_replication(config, seed=4, trace=True)
rec = world.trace_records()  # node, slot, arrival_slot, origin_slot, baoi

node = int(np.bincount(rec[:, 0]).argmax())
rows = rec[rec[:, 0] == node]
print(f"node {node}: {len(rows)} deliveries in {config.frames} frames")

# rebuild the age path over the first 600 slots
age = np.zeros(600, dtype=int)
hits = {int(s): int(a) for s, a in zip(rows[:, 1], rows[:, 4]) if s < 600}
for s in range(600):
    age[s] = hits.get(s, (age[s - 1] if s else 0) + 1)
for s in range(0, 600, 25):
    print(f"slot {s:4d}  age {age[s]:4d}  " + "#" * (age[s] // 4))
