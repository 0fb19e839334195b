"""
Comparing three libraries
=========================

Three small libraries over the same program pool, scored by how many
distinct, predictable libraries one round of modification can reach.
"""

import math

from repemp import data_path, load_scenario, rep_emp

sc = load_scenario(data_path("s33.toml"))
for name in ("Z_A", "Z_B", "Z_C"):
    print(name, sc.library(name).ids)

# Each library uses its own equivalence table: Z_A compares pitches up to
# the octave, so up-by-s and down-by-(12 - s) count as the same program.
reports = {name: rep_emp(sc.library(name), sc, equivalence=name) for name in ("Z_A", "Z_B", "Z_C")}

print(f"{'library':8} {'inputs':>6} {'N_eff':>5} {'H(Z)':>7} {'H(Z|w)':>7} {'RepEmp':>7}")
for name, r in reports.items():
    print(f"{name:8} {r.n_inputs:6d} {r.n_eff:5d} {r.diversity_bits:7.3f} {r.uncertainty_bits:7.3f} {r.mi_bits:7.3f}")

# %%
# Z_C reaches the most outcome classes, but most of its operations hit
# unstable latents and land on one of two styles by coin flip. Each such
# row carries one bit of noise, and the average over rows costs Z_C the
# top spot.

zc = reports["Z_C"]
assert math.isclose(zc.diversity_bits, math.log2(21))
print(f"mean row entropy of Z_C: {zc.uncertainty_bits} bits")

# %%
# The capacity estimator lets the policy avoid the noisy rows entirely.
# Z_C then ties Z_B at log2(18).

for name in ("Z_A", "Z_B", "Z_C"):
    r = rep_emp(sc.library(name), sc, estimator="capacity", equivalence=name)
    print(f"{name}: capacity {r.capacity_bits:.4f} bits")
