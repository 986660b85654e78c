# %% [markdown]
# # Choosing 30 sensors
#
# Ten leads come from a Latin hypercube; four more rounds each test the next
# 40 landmarks and keep the five the current model predicts worst. The result
# is compared with a farthest-point "uniform" layout on the same recording.

# %%
import numpy as np

from bspm_osp.data import synth_generate
from bspm_osp.mesh import torso_mesh
from bspm_osp.pipeline import RunConfig, run_baseline, run_evaluate, run_select
from bspm_osp.placement import front_back_split

torso = torso_mesh()
cfg = RunConfig(seed=1)
ds = synth_generate(torso, n_sources=3, duration=200, noise_sd=0.01, seed=1)

# %%
sensors = run_select(ds, torso, cfg)
for it in sensors.diagnostics:
    errs = np.sort(it["abs_error_sums"])[::-1]
    print(f"round {it['iteration']}: picked {it['picked']}, top errors {errs[:5].round(2)}")

# %%
uniform = run_baseline(torso, cfg)
print("front/back split (selected):", front_back_split(ds.lead_coords, sensors.ids))
print("front/back split (uniform): ", front_back_split(ds.lead_coords, uniform.ids))

# %% [markdown]
# Both layouts are scored identically: same model family, same fit effort,
# same QRS window, same local GP settings.

# %%
for name, ss in (("gplmk", sensors), ("uniform", uniform)):
    rep, _, _ = run_evaluate(ds, ss.ids, cfg, name)
    print(f"{name:8s} R2 {rep.r2_percent:6.2f}%  MAE {rep.mae_mv:.4f} mV  on {rep.n_validation} leads, "
          f"window {rep.segment} ms")
