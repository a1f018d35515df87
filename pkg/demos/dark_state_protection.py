"""Energy retention with and without emitter dephasing.

Runs small ensembles for a few (N, gamma) cells and prints the final
retention together with the summed dark-state population.  Takes about a
minute on one core.

    python demos/dark_state_protection.py
"""
from moltc.ensemble import energy_retention, run_ensemble
from moltc.hamiltonian import ModelParams
from moltc.model import build_model
from moltc.polaritons import pointwise_diagonalize

DURATION = 250.0   # fs
N_TRAJ = 200

print(f"{'N':>3} {'gamma':>7} {'retention':>14} {'dark':>7}")
for n in (0, 8, 60):
    for gamma in (0.0, 0.09):
        params = ModelParams(n_emitters=n, gamma=gamma, duration=DURATION)
        model = build_model(params)
        surfaces = pointwise_diagonalize(model.curves, params)
        stats = run_ensemble(model, N_TRAJ, master_seed=1, stride=100, surfaces=surfaces)
        ret, se = energy_retention(stats, params, model.E0)
        print(f"{n:>3} {gamma:>7.3f} {ret[-1]:>8.3f}+-{se[-1]:.3f} {stats.dark[-1]:>7.3f}")
