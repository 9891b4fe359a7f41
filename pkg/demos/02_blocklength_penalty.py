"""How much rate the finite-blocklength penalty costs for a single link.

Compares the library rate with the closed form ln(1+SNR) - Q^-1(eps) sqrt(2 SNR/(1+SNR)) / sqrt(l).
Run: python3 demos/02_blocklength_penalty.py
"""

import math

import numpy as np

from starris_ee import FBLParams, qfunc_inv, rate_fbl

h = np.ones((1, 1, 1), complex)
print(f"{'SNR dB':>7s} {'l':>5s} {'eps':>7s} {'rate':>8s} {'Shannon':>8s} {'loss %':>7s}")
for snr_db in (0, 10, 20):
    snr = 10 ** (snr_db / 10)
    g = np.full((1, 1, 1), math.sqrt(snr), complex)
    for l in (128, 2048):
        for eps in (1e-7, 1e-3):
            r = rate_fbl(h, g, 0, FBLParams(l, eps, 1.0))
            ref = math.log1p(snr) - qfunc_inv(eps) * math.sqrt(2 * snr / (1 + snr)) / math.sqrt(l)
            assert abs(r - ref) < 1e-12
            shannon = math.log1p(snr)
            print(f"{snr_db:7d} {l:5d} {eps:7.0e} {r:8.4f} {shannon:8.4f} "
                  f"{100 * (1 - r / shannon):7.2f}")
