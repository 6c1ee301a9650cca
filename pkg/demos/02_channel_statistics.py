"""
Stochastic channel layers and their calibration
===============================================

A transmitted code u passes through z = h * u + w: `h` is a per-sample
fade (1 for AWGN, Rayleigh-distributed otherwise) and `w` is Gaussian
noise whose variance tracks the configured SNR.  The draws below verify
the closed-form moments empirically.
"""

import numpy as np

from wasecom.channel import (ChannelConfig, ChannelKind, draw_realization,
                             empirical_snr_db, noise_variance)
from wasecom.tensor import Tensor
from wasecom.channel import apply_realization

rng = np.random.default_rng(0)
power = 1.0

print("snr_db   sigma^2     empirical")
for snr in (0, 6, 12, 18):
    cfg = ChannelConfig(ChannelKind.AWGN, float(snr))
    real = draw_realization(cfg, 50_000, 4, power, rng)
    print(f"{snr:6d}   {noise_variance(cfg, power):<9.4f}  {real.w.var():.4f}")

# Rayleigh fading with scale 1/sqrt(2): E[h] = sqrt(pi)/2 ~ 0.8862, E[h^2] = 1.
ray = draw_realization(ChannelConfig(ChannelKind.RAYLEIGH, 10.0), 200_000, 1, power, rng)
h = ray.h[:, 0]
print(f"\nRayleigh E[h]  = {h.mean():.4f}  (expect 0.8862)")
print(f"Rayleigh E[h^2]= {(h**2).mean():.4f}  (expect 1.0)")

# The same frozen realization can be replayed over different inputs, which
# is what lets the trainer re-run a perturbed batch through identical noise.
u = Tensor(rng.normal(size=(8, 4)))
real = draw_realization(ChannelConfig(ChannelKind.AWGN, 10.0), 8, 4, power, rng)
z1 = apply_realization(u, real)
z2 = apply_realization(u, real)
print("\nreplay is exact:", np.array_equal(z1.data, z2.data))
print("measured snr over the batch:", f"{empirical_snr_db(real, u.data):.2f} dB")
