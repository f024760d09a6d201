"""
Verifying gradients against finite differences
==============================================

The training losses are differentiated by the built-in reverse-mode engine.
Every backward rule is cross-checked coordinate by coordinate against a
central-difference oracle; this demo runs a few random small network
configurations end to end. The CLI exposes the full 20-configuration sweep
as ``posecount gradcheck``.
"""

from posecount.gradcheck import run_gradient_checks

results = run_gradient_checks(seed=123, num_configs=3)
for r in results:
    print(f"{r.description}\n    max relative error {r.max_rel_error:.3e}")
worst = max(r.max_rel_error for r in results)
print(f"\nworst: {worst:.3e} (tolerance 1e-4)")
