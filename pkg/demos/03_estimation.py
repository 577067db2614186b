# %% [markdown]
# # Prediction-based estimation
#
# With q = 0 the estimating function only matches the invariant mean of f.
# With q = 1 it also matches the lag-1 projection, which identifies a second
# parameter. For OU with f(x) = x and exact coefficients the 1-lag root is
# the AR(1) least-squares fit mapped back to (eta, kappa).

# %%
import numpy as np

from pbef.estimator import (PredictorSpec, gamma_limit, projection_coefficients, solve_onelag, solve_simple,
                            w_limit)
from pbef.functions import SmoothFunction
from pbef.model import OrnsteinUhlenbeck
from pbef.simulate import SamplingScheme, simulate_path

x = SmoothFunction.identity()
model = OrnsteinUhlenbeck(free=("eta", "kappa"), fixed={"xi": 1.0})
theta0 = [1.0, 2.0]
path = simulate_path(model, theta0, SamplingScheme(100_000, 0.01, seed=11))

# %%
spec = PredictorSpec(x, q=1)
coef = projection_coefficients(model, theta0, spec, 0.01)
print("exact coefficients:", coef.a, " first-order:", projection_coefficients(model, theta0, spec, 0.01,
                                                                               "expansion_order1").a)

# %%
fit = solve_onelag(model, path, spec, theta_init=[0.5, 1.0])
print("theta_hat (eta, kappa):", fit.theta_hat.values, "iterations:", fit.n_iterations)
b, a = np.polyfit(path.values[:-1], path.values[1:], 1)
print("AR(1) regression mapped back:", a / (1 - b), -np.log(b) / 0.01)

# %%
# Population limits: gamma vanishes at theta0, W is its derivative there.
print("gamma(theta0; theta0):", gamma_limit(model, theta0, theta0, spec))
print("W(theta0):\n", w_limit(model, theta0, theta0, spec))

# %%
# The simple estimator for the mean is the sample mean.
mean_model = OrnsteinUhlenbeck(free=("eta",), fixed={"kappa": 2.0, "xi": 1.0})
res = solve_simple(mean_model, path, PredictorSpec(x, 0), [0.0])
print("simple estimate:", res.theta_hat.values[0], "sample mean:", path.values[1:].mean())
