"""Run a few of the Monte-Carlo identity checks and print their verdicts."""
from rigidsolve.experiments import run_experiment

runs = [
    ("weyl-identity", dict(n=2, degree=3, trials=10**5)),
    ("kappa-moments", dict(n=2, a=1.0, trials=10**5)),
    ("anomaly-product", dict(profile=(3, 4, 3), trials=10**5)),
    ("trace-moments", dict(r=3, trials=10**5)),
    ("abp-gamma", dict(n=2, degree=2, profile=(2,), abp_samples=20, zero_samples=20)),
]
for name, params in runs:
    res = run_experiment(name, seed=7, **params)
    print(f"{name:16s} {res.verdict}")
    for c in res.checks:
        print(f"    {c.label}: {c.estimate:.4g} +- {c.stderr:.2g} {c.relation} {c.target:.4g}")
