"""
Diffusion schedule arithmetic and dual-guidance mixing
======================================================

The image generator runs elsewhere, but all of its scalar bookkeeping is
decided here: how many noising steps a given image-to-image strength
implies, what the cumulative signal-retention table looks like, and how
the two conditioning pathways blend.
"""

import numpy as np

from brainrecon import schedule

# strength 0.75 over a 50-step schedule noises for 37 steps, then the
# remaining denoising runs under guidance
for strength in (0.25, 0.5, 0.75, 1.0):
    k = schedule.steps_from_strength(50, strength)
    print(f"strength {strength:4.2f} -> {k:2d} of 50 noising steps")

sched = schedule.DiffusionSchedule.nominal()
print(f"\nalpha_bar anchors: t=0 {sched.alpha_bar[0]:.6f}, "
      f"t=37 {sched.alpha_bar[37]:.6f}, t=50 {sched.alpha_bar[50]:.6f}")

# forward noising: how much of the original latent survives at t=37
rng = np.random.default_rng(0)
z0 = rng.normal(size=(2000, 64))
z0 /= np.linalg.norm(z0, axis=1, keepdims=True)  # unit-norm rows
eps = rng.normal(size=z0.shape)
z37 = schedule.noise(z0, 37, eps, sched)
ab = sched.alpha_bar[37]
expected = ab + (1 - ab) * z0.shape[1]
print(f"E||z_37||^2 observed {np.mean((z37**2).sum(axis=1)):.2f}, "
      f"predicted {expected:.2f}")

# guidance mixing is a plain convex combination of the two pathways
cfg = schedule.GuidanceConfig()  # 0.6 vision / 0.4 text
vision_term = np.array([1.0, 0.0, 2.0])
text_term = np.array([0.0, 1.0, 2.0])
print(f"\ndefault mix {cfg.w_vision}/{cfg.w_text}: "
      f"{schedule.mix_guidance(cfg, vision_term, text_term)}")

# ablations renormalize onto one pathway
vision_only = schedule.GuidanceConfig(w_vision=1.0, w_text=0.0)
print(f"vision only: {schedule.mix_guidance(vision_only, vision_term, text_term)}")

# the CSV table is what the `schedule` subcommand prints
lines = schedule.format_schedule_csv(sched).splitlines()
print("\nschedule table head:")
for line in lines[:5]:
    print(f"  {line}")
print(f"  ... ({len(lines) - 5} more rows)")
