"""
Budgeted adversarial perturbations
==================================

fgsm takes one signed-gradient step and projects onto the L2 ball;
pgd iterates normalized ascent steps and keeps the best iterate.  Both
maximize a per-sample differentiable loss over an L2 budget per row.
"""

import numpy as np

import wasecom.tensor as T
from wasecom.perturb import PerturbMethod, PerturbSpec, fgsm, pgd, project_ball
from wasecom.tensor import Tensor

# Concave bowl: the worst point inside any ball around x is the point
# closest to the optimum x*, so PGD has a known target to converge to.
target = np.array([[0.6, -0.2, 0.1, 0.4]])

def per_sample_loss(x: Tensor) -> Tensor:
    diff = x - Tensor(target)
    return T.scale(T.tsum(T.square(diff), axis=1), -1.0)

x0 = np.zeros((1, 4))
adv = pgd(per_sample_loss, x0, PerturbSpec(PerturbMethod.PGD, radius=0.3, steps=40))

# Analytic answer: walk the budget 0.3 toward the target direction.
expected = x0 + 0.3 * target / np.linalg.norm(target)
print("pgd found  :", np.round(adv, 4))
print("analytic   :", np.round(expected, 4))
print("gap        :", float(np.linalg.norm(adv - expected)))

# FGSM with a large sign step relies on the projection to set the norm.
one_step = fgsm(per_sample_loss, x0,
                PerturbSpec(PerturbMethod.FGSM, radius=0.3, epsilon_inf=1.0))
print("\nfgsm norm  :", float(np.linalg.norm(one_step - x0)), "(== budget)")

# project_ball is a no-op inside the ball and a pure rescale outside it.
far = x0 + np.array([[10.0, 0.0, 0.0, 0.0]])
print("projected  :", np.linalg.norm(project_ball(far, x0, 0.3) - x0, axis=1))
