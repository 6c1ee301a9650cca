"""
Penalized worst-case training objectives
========================================

The robust inner objective replaces the plain reconstruction loss with

    lam * rho^2 + E[ sup_v { loss(v) - lam * ||v - x||^2 } ]

searched by an attack inside the radius-rho ball.  Its value therefore sits
at or above the clean loss, collapses back to it when rho = 0, and the dual
variable lam self-tunes so the attack uses its budget.
"""

import numpy as np

from wasecom.channel import ChannelConfig, ChannelKind
from wasecom.data import generate_synthetic_images
from wasecom.models import ModelBundle, ModelDims, TaskKind
from wasecom.objectives import (RobustnessConfig, clean_inner_loss,
                                inner_dual_loss, update_duals)
from wasecom.perturb import PerturbMethod, PerturbSpec

data = generate_synthetic_images(64, side=6, seed=0)
bundle = ModelBundle(TaskKind.IMAGE, ModelDims(36, 12, 12, 24), seed=0)
batch = data.train[:16]
channel = ChannelConfig(ChannelKind.AWGN, 10.0)
spec = PerturbSpec(PerturbMethod.PGD, radius=0.4, epsilon_inf=1.0, steps=5)

clean = float(clean_inner_loss(bundle, batch, channel, np.random.default_rng(1)).data)
print(f"clean loss        : {clean:.5f}")

rob = RobustnessConfig(rho=0.4, mu=0.0, lam=1.0)
dual = inner_dual_loss(bundle, batch, channel, rob, spec,
                       np.random.default_rng(1), np.random.default_rng(2))
print(f"robust total      : {float(dual.total.data):.5f}")
print(f"  penalty lam*rho^2 = {dual.penalty_term:.5f}")
print(f"  worst-case E      = {dual.expectation_term:.5f}")
print(f"  mean attack cost  = {dual.mean_cost:.5f}  (budget rho^2 = {rob.rho**2})")

# With a zero radius the dual objective IS the clean loss, same floats.
degenerate = inner_dual_loss(bundle, batch, channel,
                             RobustnessConfig(rho=0.0, mu=0.0), spec,
                             np.random.default_rng(1), np.random.default_rng(2))
print("\nrho=0 equals clean:", float(degenerate.total.data) == clean)

# Dual ascent: lam falls while the attack underspends its budget, which in
# turn loosens the penalty until cost and budget meet.
for step in range(5):
    dual = inner_dual_loss(bundle, batch, channel, rob, spec,
                           np.random.default_rng(step), np.random.default_rng(99 + step))
    rob = update_duals(rob, 0.5, inner_cost=dual.mean_cost)
    print(f"step {step}: lam={rob.lam:.4f}  attack cost={dual.mean_cost:.5f}")
