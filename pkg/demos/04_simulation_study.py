"""
A contaminated simulation study, desk scale
============================================

Replicated draws from the measurement-error design: responses follow
the clean covariate, but a fraction rho of the recorded covariate
values are shifted by +20.  Each replicate is fit under the standard
loss and two robust losses; we score interval coverage and the MSE of
the coefficient estimates against the truth.

Desk scale here means few replicates and few draws so the script runs
in about a minute.  For a full-size run use the command line tool,
which parallelizes fits and writes csv output:

    ordrobust simulate --error normal --rho 0.2 --n 200 --reps 500 \
        --losses loglik,dp,gamma-gen --tunings 0.3 --draws 1000 \
        --seed 1 --workers 8 --out-dir results/
"""

import numpy as np

from ordrobust import (
    LossSpec,
    Prior,
    Theta,
    WlbConfig,
    get_link,
    score_estimates,
    simulate_contaminated,
    summarize,
    wlb_sample,
)

link = get_link("probit")
prior = Prior()
reps, n, B = 8, 200, 100
specs = {
    "loglik": LossSpec(kind="loglik"),
    "dp(0.3)": LossSpec(kind="dp", tuning=0.3),
    "gamma_general(0.3)": LossSpec(kind="gamma_general", tuning=0.3),
}


def derived_seed(entropy, key):
    ss = np.random.SeedSequence(entropy=entropy, spawn_key=key)
    return int(ss.generate_state(1, np.uint64)[0])


collected = {name: ([], []) for name in specs}
truth = None
for rep in range(reps):
    data, truth = simulate_contaminated(
        rho=0.2, error="normal", n=n, seed=derived_seed(5150, (rep, 0))
    )
    for sj, (name, spec) in enumerate(specs.items()):
        fit = wlb_sample(
            spec, data, prior, link,
            WlbConfig(n_draws=B, seed=derived_seed(5150, (rep, 1 + sj))),
        )
        table = summarize(fit, 0.95)
        ests, cis = collected[name]
        ests.append(Theta(beta=table.mean[:data.p], delta=table.mean[data.p:]))
        cis.append(np.column_stack([table.lower, table.upper]))

print(f"{reps} replicates, n = {n}, rho = 0.2, B = {B}")
print(f"true beta: {np.round(truth.beta, 2).tolist()}\n")
print(f"{'loss':<20}{'beta CP%':>10}{'mean log MSE(beta)':>20}")
for name in specs:
    ests, cis = collected[name]
    scores = score_estimates(ests, cis, truth)
    cp = 100.0 * float(scores["cp_beta"].mean())
    lmse = float(np.log(scores["mse_beta"]).mean())
    print(f"{name:<20}{cp:>10.1f}{lmse:>20.2f}")

# Even at this scale the pattern is stark: contaminated covariates
# wreck the standard intervals (coverage far below nominal) while the
# robust fits keep near-nominal coverage and an MSE several e-factors
# smaller.
