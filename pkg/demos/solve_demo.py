"""Solve a random quadratic system and verify the output.

Uses a short step constant so the demo finishes in seconds; the default
constant is far slower (see the README).
"""
import sys

import numpy as np

from rigidsolve.experiments import random_system
from rigidsolve.numerics import RandomStream
from rigidsolve.solver import boost_bb_solve, verify_approximate_zero

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 1
rng = RandomStream(seed)
F = random_system("kostlan", 2, 2, rng.child(0))
rep = boost_bb_solve(F, 1e-6, rng.child(1), report=True, step_constant=1.0)
print(f"seed {seed}: success={rep.success} attempts={rep.attempts} steps={rep.steps} "
      f"evals={rep.evals}")
if rep.success:
    z = rep.result / np.linalg.norm(rep.result)
    ver = verify_approximate_zero(F, z)
    print("zero:", np.round(z, 6))
    print(f"verified={ver['ok']} residual={ver['residual']:.2e}")
