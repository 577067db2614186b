# %% [markdown]
# # Replication study
#
# R independent paths per schedule entry, one estimate per path, and a
# comparison of the spread of sqrt(n delta)(theta_hat - theta0) with the
# predicted sandwich covariance. The same study runs from the command line:
#
#     pbef study --config demos/configs/ou_onelag.json --out-dir out

# %%
import json
from pathlib import Path

import numpy as np

from pbef.experiment import ExperimentConfig, emit_report, run_estimation_study, schedule_preset

cfg = ExperimentConfig.from_json(Path(__file__).with_name("configs") / "ou_onelag.json")
cfg.replications = 100
cfg.schedule = schedule_preset(1.0, [2_500, 10_000])
for entry in cfg.regime():
    print(entry)

# %%
report = run_estimation_study(cfg)
print("predicted:", np.round(report.predicted_avar, 3).tolist())
for s in report.summaries:
    print(f"n={s.n} delta={s.delta:.4f}: emp cov {np.round(s.emp_cov, 3).tolist()} "
          f"coverage {np.round(s.coverage_oracle, 3).tolist()}")

# %%
written = emit_report(report, "demo-out")
print([str(p) for p in written])
print(json.loads(written[-1].read_text())["summaries"][0]["fallback_rate"])
