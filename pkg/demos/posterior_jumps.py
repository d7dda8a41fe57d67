"""Posterior given a partition and the latent variable: continuous part and atom jumps."""
import json

import numpy as np

from tiltcrm import Partition, expand_preset, posterior_description, sample_jumps, sample_u

rng = np.random.default_rng(11)
p = Partition.from_sizes([5, 3, 1])

for spec in (expand_preset("normalized_generalized_gamma", alpha=0.5, theta=1.0, b=1.0),
             expand_preset("generalized_dirichlet", theta=2.0, c=2)):
    u = sample_u(spec, p, rng).value
    desc = posterior_description(spec, p, u)
    print(f"{spec.family}\nu = {u:.4f}, exponential shift gamma + u = {desc.tilted_intensity_shift:.4f}")
    print("continuous part:", json.dumps(desc.to_dict()["continuous_part"]))
    for (label, size), law in zip(desc.atoms, desc.jump_laws()):
        print(f"  block {label} (size {size}): {json.dumps(law)}")
    jumps = sample_jumps(spec, p, u, rng, size=20_000)
    print("  mean jump per block:", np.round(jumps.mean(axis=0), 4))
    weights = jumps / jumps.sum(axis=1, keepdims=True)
    print("  mean share of the atoms' mass:", np.round(weights.mean(axis=0), 4), "\n")
