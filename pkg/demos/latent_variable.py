"""Draw the latent variable given a partition and check it against its density.

Shows the exact rejection sampler for the generalized gamma family next to the
numerical inverse-CDF sampler, as a coarse text histogram.
"""
import numpy as np

from tiltcrm import Partition, expand_preset, sample_u_generic, sample_u_tilde
from tiltcrm.latent import U_TILDE, generic_sampler

rng = np.random.default_rng(7)
spec = expand_preset("normalized_generalized_gamma", alpha=0.5, theta=1.0, b=1.0)
p = Partition.from_sizes([12, 9, 7, 5, 4, 3, 3, 2, 2, 1, 1, 1])

exact_draws = sample_u_tilde(spec, p, rng, size=50_000)
generic_draws = sample_u_generic(spec, p, U_TILDE, rng, size=50_000)
target = generic_sampler(spec, p, U_TILDE)

edges = target.draw(np.linspace(0.05, 0.95, 10))
mass = np.diff(target.cdf(edges))
h_exact = np.histogram(exact_draws, edges)[0] / exact_draws.size
h_generic = np.histogram(generic_draws, edges)[0] / generic_draws.size

print(f"n = {p.n}, K = {p.num_blocks}")
print(f"{'interval':>22} {'target':>8} {'rejection':>10} {'inverse-CDF':>12}")
for lo, hi, m, a, b in zip(edges[:-1], edges[1:], mass, h_exact, h_generic):
    bar = "#" * int(round(a * 400))
    print(f"[{lo:8.3f}, {hi:8.3f}) {m:8.4f} {a:10.4f} {b:12.4f}  {bar}")
