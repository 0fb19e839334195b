"""
Capacity versus the uniform policy
==================================

A noisy channel, its uniform-policy mutual information, and the capacity
found by Blahut-Arimoto.
"""

import numpy as np

from repemp import Channel, Policy, capacity, mi_decomposition

# The Z-channel: input 0 is always read correctly, input 1 half the time.
P = np.array([[1.0, 0.0],
              [0.5, 0.5]])
ch = Channel.from_matrix(P)

uniform = mi_decomposition(ch, Policy.uniform(2))
bits, policy = capacity(ch)
print(f"uniform policy: {uniform.mi_bits:.4f} bits")
print(f"capacity:       {bits:.4f} bits at w = {np.round(policy.weights, 4)}")

# %%
# Sweep the weight on the reliable input to see the concave MI curve
# and where the optimum sits.

for w0 in np.linspace(0, 1, 11):
    mi = max(0.0, mi_decomposition(ch, Policy(np.array([w0, 1 - w0]))).mi_bits)
    print(f"w0={w0:.1f}  {'#' * int(round(mi * 100))} {mi:.3f}")

# %%
# Duplicated inputs do not change capacity; they just split the weight.

dup = Channel.from_matrix(np.vstack([P[:1], P[:1], P[1:]]))
bits2, policy2 = capacity(dup)
print(f"with a duplicated row: {bits2:.4f} bits, weights {np.round(policy2.weights, 3)}")
