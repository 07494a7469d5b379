"""
The memory update, one step at a time
======================================

A DMU block feeds ``[x; S h]`` through a small tanh network. The last linear
layer has 2d outputs: the first d are the gate ``z``, the rest the candidate.
The new state mixes the old one and ``tanh(candidate)`` with ``sigmoid(z)``.
"""

import numpy as np

from dmu import autodiff as ad
from dmu.cells import DmuSpec, dmu_init

rng = np.random.default_rng(0)

# two inputs, one hidden layer of 5, memory of 4
m = dmu_init(DmuSpec(2, [5], 4), rng)
print([w.shape for w in m.weights])

# the gate bias starts at +3, so sigmoid(z) is close to 0.95 and the
# memory mostly keeps what it has
print(m.biases[-1].value.round(2))

h = m.initial_state(1)
x = ad.constant([[0.5, -1.0]])
for t in range(5):
    h = m.step(h, x)
    print(t, h.value.round(4))

# a larger offset pushes the gate toward 1 and freezes the state
frozen = dmu_init(DmuSpec(2, [5], 4, z_bias_offset=20.0), rng)
h0 = ad.constant(rng.uniform(-1, 1, (3, 4)))
h1 = frozen.step(h0, ad.constant(rng.uniform(-1, 1, (3, 2))))
print("largest move with offset 20:", np.abs(h1.value - h0.value).max())

# S shrinks the memory before it re-enters the network; it does not touch
# the carried state directly, only what the FNN sees
for S in (1.0, 0.5, 0.1):
    print(S, m.step(h0, ad.constant(np.zeros((3, 2))), S).value[0].round(4))
