# %% [markdown]
# # Models, generator and invariant law
#
# A diffusion here is a drift a(x; theta), a diffusion coefficient b(x; theta)
# and an invariant log-density. The generator L f = a f' + b^2 f'' / 2 and
# integrals against the invariant law are what every later step builds on.

# %%
import numpy as np

from pbef.functions import SmoothFunction
from pbef.model import (CoxIngersollRoss, OrnsteinUhlenbeck, generator_apply, invariant_moment,
                        kf_coefficient, lagged_moment, stationary_moment_check)

ou = OrnsteinUhlenbeck()          # theta = (kappa, eta, xi)
cir = CoxIngersollRoss()
x = SmoothFunction.identity()
x2 = SmoothFunction.monomial(2)

# %%
# L x = kappa (eta - x); at x = 2 with kappa = 1, eta = 0 this is -2
print("L x at 2:", generator_apply(ou, [1.0, 0.0, 1.0], x, 2.0))

# %%
# Invariant moments come from closed forms when available and quadrature otherwise.
th = [1.0, 0.0, np.sqrt(2)]
print("E x^2 (closed form):", invariant_moment(ou, th, x2))
print("E x^2 (quadrature): ", invariant_moment(ou, th, x2, method="quadrature"))

# %%
# K_f = mu(f L f) / Var f is the first-order rate of the lag-1 predictor.
print("K_x for OU:", kf_coefficient(ou, [1.7, 0.4, 0.8], x))
print("K_x for CIR:", kf_coefficient(cir, [1.2, 1.0, 0.5], x))

# %%
# Stationarity: mu(L f) vanishes for every f. Polynomial models also give exact lagged moments.
print("max |mu(L x^k)|, k = 1..3:", stationary_moment_check(cir, [1.5, 1.0, 0.6]))
for t in (0.1, 1.0, 3.0):
    print(f"Cov(X_0, X_{t}) =", lagged_moment(ou, [0.7, 0.0, 1.0], x, x, t), "vs", np.exp(-0.7 * t) / 1.4)
