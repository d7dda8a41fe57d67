"""Exact and simulated distribution of the number of blocks, side by side.

Run with ``python demos/block_count_table.py [samples]``. The default of 2000
datasets per algorithm takes well under a minute; 10000 matches the usual
table size.
"""
import sys

import numpy as np

from tiltcrm import RunConfig, exact_size_distribution, expand_preset, run, summarize

samples = int(sys.argv[1]) if len(sys.argv) > 1 else 2000
spec = expand_preset("normalized_generalized_gamma", alpha=0.5, theta=1.0, b=1.0)
n = 50

exact = exact_size_distribution(spec, n)
print(f"{spec}\nn = {n}, E[K] = {exact.mean():.4f}\n")

summaries = {}
for alg in ("A1", "A2", "A3", "A4"):
    burn = samples if alg in ("A3", "A4") else 0
    res = run(RunConfig(spec, n, samples, alg, burn_in=burn, seed=2024))
    summaries[alg] = summarize(res, exact)

print(f"{'i':>3} {'exact':>9}" + "".join(f" {a + ' mean':>10} {'se':>9}" for a in summaries))
for i in range(1, n + 1):
    if exact[i] < 5e-7:
        continue
    row = f"{i:>3} {exact[i]:9.6f}"
    for s in summaries.values():
        row += f" {s.p_hat[i - 1]:10.6f} {s.se[i - 1]:9.6f}"
    print(row)

print()
for alg, s in summaries.items():
    print(f"{alg}: max |z| = {s.max_abs_z():.2f}, TV = {s.tv:.4f}")
print(f"largest exact probability at i = {int(np.argmax(exact.probabilities)) + 1}")
