"""Finite-blocklength rate and energy-efficiency metrics.

All rates are in nats per channel use. ``channels`` is the stacked array of
effective channels ``(K, N_u, N_BS)`` and ``gammas`` the stacked precoders
``(K, N_BS, I)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import erfc, ndtri

from .linalg import hermitian, herm_t, inv_pd, logdet_pd


@dataclass(frozen=True)
class FBLParams:
    blocklength: float = 256
    epsilon: float = 1e-5
    noise_power: float = 1.0

    def __post_init__(self):
        if self.blocklength < 1:
            raise ValueError("blocklength must be >= 1")
        # 0.5 switches the dispersion penalty off (pure Shannon rate)
        if not 0 < self.epsilon <= 0.5:
            raise ValueError("epsilon must lie in (0, 0.5]")
        if self.noise_power <= 0:
            raise ValueError("noise_power must be > 0")

    @property
    def penalty_scale(self):
        """``Q^{-1}(eps) / sqrt(l)``, the factor in front of the dispersion root."""
        return qfunc_inv(self.epsilon) / np.sqrt(self.blocklength)


@dataclass(frozen=True)
class PowerParams:
    p_static: float = 1.0
    beta: float = 1.0
    p_budget: float = 1.0
    weights: tuple[float, ...] = ()
    rate_floors: tuple[float, ...] = ()

    def __post_init__(self):
        if self.p_static <= 0 or self.beta <= 0 or self.p_budget <= 0:
            raise ValueError("p_static, beta and p_budget must be > 0")
        w = tuple(float(x) for x in self.weights)
        r = tuple(float(x) for x in self.rate_floors)
        if any(x <= 0 for x in w):
            raise ValueError("weights must be > 0")
        if any(x < 0 for x in r):
            raise ValueError("rate floors must be >= 0")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "rate_floors", r)

    @classmethod
    def uniform(cls, n_users, *, p_static=1.0, beta=1.0, p_budget=1.0, weight=1.0, rate_floor=0.0):
        return cls(p_static, beta, p_budget, (weight,) * n_users, (rate_floor,) * n_users)

    def denominators(self, gammas):
        """``P_s + beta * ||Gamma_k||_F^2`` for every user."""
        return self.p_static + self.beta * np.sum(np.abs(gammas) ** 2, axis=(-2, -1))


def qfunc(x):
    """Gaussian tail probability."""
    return 0.5 * erfc(np.asarray(x) / np.sqrt(2.0))


def qfunc_inv(epsilon):
    """Inverse of the Gaussian Q-function."""
    eps = np.asarray(epsilon, dtype=float)
    if np.any((eps <= 0) | (eps >= 1)) or np.any(np.isnan(eps)):
        raise ValueError(f"epsilon must lie in (0, 1), got {epsilon}")
    out = -ndtri(eps)
    return float(out) if out.ndim == 0 else out


def _check_finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise ValueError("non-finite input")


def covariances(channels, gammas, sigma2):
    """Per-user total and interference-plus-noise covariances.

    Leading batch axes on ``channels`` and ``gammas`` are broadcast.

    Returns
    -------
    signal : (K, N_u, N_u) own-signal covariances ``H_k G_k G_k^H H_k^H``
    total : (K, N_u, N_u) ``sigma2 I + sum_i H_k G_i G_i^H H_k^H``
    interf : (K, N_u, N_u) ``total - signal``, accumulated without subtraction
    """
    _check_finite(channels, gammas)
    if sigma2 <= 0:
        raise ValueError("sigma2 must be > 0")
    k, n_u, _ = channels.shape[-3:]
    x = np.einsum("...kub,...ibs->...kius", channels, gammas)
    w = hermitian(x @ herm_t(x))  # (..., K, K, N_u, N_u): W[k, i]
    eye = sigma2 * np.eye(n_u)
    total = eye + w.sum(axis=-3)
    own = w[..., np.arange(k), np.arange(k), :, :]
    off = np.ones((k, k))
    np.fill_diagonal(off, 0.0)
    interf = eye + np.einsum("ki,...kiuv->...kuv", off, w)
    return own, hermitian(total), hermitian(interf)


def shannon_terms(channels, gammas, sigma2):
    """``ln|I + S_k^{-1} W_k|`` for every user."""
    _, total, interf = covariances(channels, gammas, sigma2)
    return np.maximum(logdet_pd(total) - logdet_pd(interf), 0.0)


def dispersion_args(channels, gammas, sigma2):
    """``2 tr(W_k T_k^{-1})`` for every user."""
    own, total, _ = covariances(channels, gammas, sigma2)
    val = 2.0 * np.real(np.trace(own @ inv_pd(total), axis1=-2, axis2=-1))
    return np.maximum(val, 0.0)


def rates(channels, gammas, fbl: FBLParams):
    """Finite-blocklength rate of every user (may be negative)."""
    own, total, interf = covariances(channels, gammas, fbl.noise_power)
    shannon = np.maximum(logdet_pd(total) - logdet_pd(interf), 0.0)
    eta = np.maximum(2.0 * np.real(np.trace(own @ inv_pd(total), axis1=-2, axis2=-1)), 0.0)
    return shannon - fbl.penalty_scale * np.sqrt(eta)


def shannon_term(channels, gammas, k, sigma2):
    return float(shannon_terms(channels, gammas, sigma2)[k])


def dispersion_arg(channels, gammas, k, sigma2):
    return float(dispersion_args(channels, gammas, sigma2)[k])


def rate_fbl(channels, gammas, k, fbl: FBLParams):
    return float(rates(channels, gammas, fbl)[k])


def energy_efficiency(rate, gamma_k, power: PowerParams):
    """Rate per unit consumed power, ``r / (P_s + beta ||Gamma_k||^2)``."""
    return rate / (power.p_static + power.beta * float(np.sum(np.abs(gamma_k) ** 2)))


def sum_weighted_ee(channels, gammas, fbl: FBLParams, power: PowerParams):
    r = rates(channels, gammas, fbl)
    val = np.sum(np.asarray(power.weights) * r / power.denominators(gammas), axis=-1)
    return float(val) if np.ndim(val) == 0 else val
