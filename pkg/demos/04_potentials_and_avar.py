# %% [markdown]
# # Potential operator and asymptotic variances
#
# Asymptotic variances are pairings mu(g1 U(g2)) with U(g) = int P_t g dt.
# Polynomial models have polynomial potentials; otherwise the pairing is
# estimated by Monte Carlo on stationary paths.

# %%
import numpy as np

from pbef.estimator import PredictorSpec
from pbef.functions import SmoothFunction
from pbef.model import CoxIngersollRoss, OrnsteinUhlenbeck
from pbef.potential import (PotentialMCConfig, avar_onelag, avar_simple, potential_pairing_exact,
                            potential_pairing_mc, potential_polynomial)

x = SmoothFunction.identity()
ou = OrnsteinUhlenbeck()
th = [1.0, 0.0, 1.0]

# %%
print("U(x) for OU:", potential_polynomial(ou, th, x).poly)
print("exact pairing:", potential_pairing_exact(ou, th, x, x).value)
for est in ("grid_quadrature", "exp_time"):
    cfg = PotentialMCConfig(K=20_000 if est == "grid_quadrature" else 200_000, t_max=12.0,
                            gamma=1 / 12, estimator=est, seed=1)
    e = potential_pairing_mc(ou, th, x, x, cfg)
    print(f"{est:16s} {e.value:.4f} +- {e.stderr:.4f}")

# %%
# Simple estimator of the OU mean: AVAR (xi/kappa)^2, attaining the spectral-gap bound.
mean_model = OrnsteinUhlenbeck(free=("eta",), fixed={"kappa": 2.0, "xi": 1.5})
rep = avar_simple(mean_model, [1.0], PredictorSpec(x, 0))
print("AVAR", rep.avar, "bound", rep.bound)

# %%
# 1-lag sandwich for CIR: closed form against common-random-number Monte Carlo.
cir = CoxIngersollRoss(free=("kappa", "eta"), fixed={"xi": 0.5})
exact = avar_onelag(cir, [1.0, 1.0], PredictorSpec(x, 1))
mc = avar_onelag(cir, [1.0, 1.0], PredictorSpec(x, 1), PotentialMCConfig(K=5000, t_max=8.0, seed=2), "mc")
print("closed form:\n", np.round(exact.avar, 4))
print("Monte Carlo:\n", np.round(mc.avar, 4), "\nstderr:\n", np.round(mc.stderr, 4))
print(mc.to_csv())
