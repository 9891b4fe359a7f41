"""Concave minorizers of the finite-blocklength rate.

For user ``k`` and an expansion point ``(Gamma^(n), Theta^(n))`` the bound is

    r_k >= a_k + 2 sum_j Re tr(A_kj Gamma_j^H H_k^H)
             - tr(B_k (sigma2 I + sum_j H_k Gamma_j Gamma_j^H H_k^H))

It touches the rate at the expansion point and is concave both in the
precoders (channel fixed) and in the RIS coefficients (precoders fixed). The
additive constant is recalibrated numerically so the touching condition holds
to rounding.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .channel import LinkSet, RISProfile, Side, compose_all, side_vector
from .fbl import FBLParams, rates
from .linalg import hermitian, herm_t, inv_pd, logdet_pd

ETA_MIN = 1e-12


@dataclass(frozen=True)
class SurrogateCoeffs:
    user: int
    a: float
    a_mat: np.ndarray  # (K, N_u, I), entry j is A_kj
    b_mat: np.ndarray  # (N_u, N_u) Hermitian PSD
    eta: float
    expansion_rate: float
    penalty_active: bool = True
    offset: float = 0.0


@dataclass(frozen=True)
class ExpansionPoint:
    gammas: np.ndarray
    ris: RISProfile | None
    channels: np.ndarray
    links: LinkSet | None = None

    @classmethod
    def from_links(cls, links: LinkSet, ris: RISProfile, gammas):
        return cls(np.asarray(gammas, complex), ris, compose_all(links, ris), links)


def _sum_streams_term(a_mat, gammas, channel):
    # 2 sum_j Re tr(A_kj Gamma_j^H H^H), batched over leading axes of gammas/channel
    x = np.einsum("...ub,...jbs->...jus", channel, gammas)
    return 2.0 * np.real(np.sum(a_mat * np.conj(x), axis=(-3, -2, -1)))


def _quad_term(b_mat, gammas, channel, sigma2):
    x = np.einsum("...ub,...jbs->...jus", channel, gammas)
    t = sigma2 * np.eye(b_mat.shape[0]) + np.sum(x @ herm_t(x), axis=-3)
    return np.real(np.einsum("uv,...vu->...", b_mat, t))


def build_coeffs(point: ExpansionPoint, fbl: FBLParams, k: int, recalibrate=True):
    """Minorizer coefficients of user ``k`` at ``point``.

    When the dispersion argument at the point is below ``ETA_MIN`` (or the
    penalty vanishes because epsilon is 0.5) only the log-det part is kept.
    """
    h = point.channels[k]
    gammas = point.gammas
    for name, arr in (("channel", h), ("precoders", gammas)):
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"non-finite entries in the {name} of the expansion point")
    sigma2 = fbl.noise_power
    n_streams = gammas.shape[-1]
    x = np.einsum("ub,jbs->jus", h, gammas)  # H_k Gamma_j
    cov = hermitian(x @ herm_t(x))
    eye = sigma2 * np.eye(h.shape[0])
    interf = hermitian(eye + np.delete(cov, k, axis=0).sum(axis=0))
    total = hermitian(eye + cov.sum(axis=0))
    s_inv, t_inv = inv_pd(interf), inv_pd(total)
    own = cov[k]

    shannon = max(float(logdet_pd(total) - logdet_pd(interf)), 0.0)
    eta = max(2.0 * float(np.real(np.trace(own @ t_inv))), 0.0)
    c = fbl.penalty_scale
    penalty = c > 0 and eta >= ETA_MIN

    a_mat = np.zeros_like(x)
    a_mat[k] = s_inv @ x[k]
    b_mat = s_inv - t_inv
    a = shannon - float(np.real(np.trace(s_inv @ own)))
    if penalty:
        coef = c / np.sqrt(eta)
        others = np.arange(len(x)) != k
        a_mat[others] = coef * (t_inv @ x[others])
        b_mat = b_mat + coef * (t_inv @ interf @ t_inv)
        a -= c * (eta + 2 * n_streams) / (2.0 * np.sqrt(eta))
    for name, arr in (("A", a_mat), ("B", b_mat)):
        if not np.all(np.isfinite(arr)):
            raise FloatingPointError(f"non-finite entries in {name} coefficient of user {k}")

    r_k = shannon - c * np.sqrt(eta)
    coeffs = SurrogateCoeffs(k, float(a), a_mat, hermitian(b_mat), eta, float(r_k), penalty)
    if recalibrate:
        coeffs = recalibrate_constant(coeffs, point, fbl)
    return coeffs


def build_all(point: ExpansionPoint, fbl: FBLParams):
    return [build_coeffs(point, fbl, k) for k in range(point.channels.shape[0])]


def recalibrate_constant(coeffs: SurrogateCoeffs, point: ExpansionPoint, fbl: FBLParams):
    """Shift ``a`` so the bound equals the rate at the expansion point."""
    k = coeffs.user
    r_k = float(rates(point.channels, point.gammas, fbl)[k])
    value = eval_bound_in_gamma(coeffs, point.channels, point.gammas, fbl.noise_power, k)
    shift = r_k - value
    return replace(coeffs, a=coeffs.a + shift, expansion_rate=r_k, offset=coeffs.offset + shift)


def eval_bound_in_gamma(coeffs: SurrogateCoeffs, channels, gammas, sigma2, k=None):
    """Bound value for precoders ``gammas`` with the channels held fixed.

    ``gammas`` may carry leading batch axes.
    """
    k = coeffs.user if k is None else k
    h = channels[k]
    if h.shape[1] != gammas.shape[-2] or coeffs.a_mat.shape[-1] != gammas.shape[-1]:
        raise ValueError(f"precoder shape {gammas.shape[-2:]} does not match coefficients")
    return (coeffs.a + _sum_streams_term(coeffs.a_mat, gammas, h)
            - _quad_term(coeffs.b_mat, gammas, h, sigma2))


def eval_bound_in_theta(coeffs: SurrogateCoeffs, gammas, links: LinkSet, ris: RISProfile,
                        sigma2, k=None):
    """Bound value for RIS state ``ris`` with the precoders held fixed."""
    k = coeffs.user if k is None else k
    if ris.n_elements != links.g.shape[0]:
        raise ValueError("RIS profile does not match the link set")
    theta = side_vector(ris, links.side[k])
    h = (links.f[k] * theta) @ links.g + links.d[k]
    return float(coeffs.a + _sum_streams_term(coeffs.a_mat, gammas, h)
                 - _quad_term(coeffs.b_mat, gammas, h, sigma2))


# ---------------------------------------------------------------------------
# Quadratic models: bound = const + 2 Re(q^H z) - z^H P z
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GammaModel:
    """Bound of one user as a function of the precoders.

    ``gram`` is ``H_k^H B_k H_k``; the quadratic form acts column by column on
    every ``Gamma_j``. ``lin[j]`` is ``H_k^H A_kj``.
    """

    const: float
    lin: np.ndarray
    gram: np.ndarray

    def value(self, gammas):
        lin = 2.0 * np.real(np.sum(np.conj(self.lin) * gammas, axis=(-3, -2, -1)))
        quad = np.real(np.einsum("...jbs,bc,...jcs->...", np.conj(gammas), self.gram, gammas))
        return self.const + lin - quad

    def gradient(self, gammas):
        """Complex gradient ``d/dRe + i d/dIm`` with respect to every Gamma_j."""
        return 2.0 * self.lin - 2.0 * np.einsum("bc,jcs->jbs", self.gram, gammas)


def gamma_model(coeffs: SurrogateCoeffs, channels, sigma2):
    h = channels[coeffs.user]
    gram = hermitian(herm_t(h) @ coeffs.b_mat @ h)
    lin = np.einsum("bu,jus->jbs", herm_t(h), coeffs.a_mat)
    const = coeffs.a - sigma2 * float(np.real(np.trace(coeffs.b_mat)))
    return GammaModel(const, lin, gram)


@dataclass(frozen=True)
class ThetaModel:
    """Bound of one user as a function of its own side's coefficient vector."""

    const: float
    lin: np.ndarray  # (M,)
    gram: np.ndarray  # (M, M) Hermitian PSD
    side: Side

    def value(self, theta):
        theta = np.asarray(theta)
        return (self.const + 2.0 * np.real(np.conj(self.lin) @ theta.T)
                - np.real(np.einsum("...m,mn,...n->...", np.conj(theta), self.gram, theta)))

    def gradient(self, theta):
        return 2.0 * self.lin - 2.0 * self.gram @ theta


def theta_model(coeffs: SurrogateCoeffs, gammas, links: LinkSet, sigma2):
    k = coeffs.user
    f, g, d = links.f[k], links.g, links.d[k]
    b = coeffs.b_mat
    c_mat = np.einsum("jus,jbs->ub", coeffs.a_mat, np.conj(gammas))  # sum_j A_kj Gamma_j^H
    q_cov = np.einsum("jbs,jcs->bc", gammas, np.conj(gammas))  # sum_j Gamma_j Gamma_j^H
    fh = herm_t(f)
    lin_c = np.einsum("am,am->m", np.conj(f), c_mat @ herm_t(g))
    lin_d = np.einsum("am,am->m", np.conj(f), b @ d @ q_cov @ herm_t(g))
    gram = hermitian((fh @ b @ f) * (g @ q_cov @ herm_t(g)).T)
    const = (coeffs.a + 2.0 * float(np.real(np.sum(c_mat * np.conj(d))))
             - sigma2 * float(np.real(np.trace(b)))
             - float(np.real(np.trace(b @ d @ q_cov @ herm_t(d)))))
    return ThetaModel(const, lin_c - lin_d, gram, links.side[k])


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------


def rate_gradient_fd(channels, gammas, k, fbl: FBLParams, step=1e-5):
    """Central finite-difference gradient of user ``k``'s rate in the precoders."""
    grad = np.zeros_like(gammas)
    base = np.asarray(gammas, complex)
    for idx in np.ndindex(base.shape):
        for unit, part in ((1.0, 1.0), (1j, 1j)):
            plus, minus = base.copy(), base.copy()
            plus[idx] += step * unit
            minus[idx] -= step * unit
            diff = rates(channels, plus, fbl)[k] - rates(channels, minus, fbl)[k]
            grad[idx] += part * diff / (2 * step)
    return grad


def rate_theta_gradient_fd(links, ris, gammas, k, fbl: FBLParams, step=1e-5):
    """Finite-difference gradient of user ``k``'s rate in its side's RIS vector."""
    side = links.side[k]
    theta = side_vector(ris, side).copy()
    grad = np.zeros_like(theta)

    def rate_at(th):
        prof = replace(ris, theta_r=th) if side is Side.REFLECTION else replace(ris, theta_t=th)
        return rates(compose_all(links, prof), gammas, fbl)[k]

    for m in range(theta.size):
        for unit in (1.0, 1j):
            plus, minus = theta.copy(), theta.copy()
            plus[m] += step * unit
            minus[m] -= step * unit
            grad[m] += unit * (rate_at(plus) - rate_at(minus)) / (2 * step)
    return grad


@dataclass
class MinorizationReport:
    n_samples: int
    radius: float
    tangency_error: float = 0.0
    max_gap_gamma: float = 0.0
    max_gap_theta: float = 0.0
    gradient_mismatch: float = 0.0
    tol_gap: float = 1e-9
    tol_tangency: float = 1e-10
    tol_gradient: float = 1e-4
    notes: list = field(default_factory=list)

    @property
    def passed(self):
        return (self.tangency_error <= self.tol_tangency
                and self.max_gap_gamma <= self.tol_gap
                and self.max_gap_theta <= self.tol_gap
                and self.gradient_mismatch <= self.tol_gradient)

    def to_text(self):
        lines = [
            f"samples            {self.n_samples}",
            f"radius             {self.radius:g}",
            f"tangency_error     {self.tangency_error:.3e}  (tol {self.tol_tangency:g})",
            f"max_gap_gamma      {self.max_gap_gamma:.3e}  (tol {self.tol_gap:g})",
            f"max_gap_theta      {self.max_gap_theta:.3e}  (tol {self.tol_gap:g})",
            f"gradient_mismatch  {self.gradient_mismatch:.3e}  (tol {self.tol_gradient:g})",
            f"result             {'PASS' if self.passed else 'FAIL'}",
        ]
        return "\n".join(lines + list(self.notes)) + "\n"


def perturb_gammas(rng, gammas, radius, n_samples, p_budget=None):
    """Random precoders within relative distance ``radius`` of ``gammas``."""
    norm = np.linalg.norm(gammas)
    delta = rng.standard_normal((n_samples,) + gammas.shape) \
        + 1j * rng.standard_normal((n_samples,) + gammas.shape)
    delta /= np.linalg.norm(delta.reshape(n_samples, -1), axis=1)[:, None, None, None]
    scale = radius * max(norm, 1e-12) * rng.uniform(size=n_samples)
    out = gammas + scale[:, None, None, None] * delta
    if p_budget is not None:
        used = np.sum(np.abs(out) ** 2, axis=(1, 2, 3))
        shrink = np.sqrt(np.minimum(1.0, p_budget / used))
        out = out * shrink[:, None, None, None]
    return out


def perturb_ris(rng, ris: RISProfile, radius):
    """Random feasible RIS state within ``radius`` (per element) of ``ris``."""
    m = ris.n_elements

    def step():
        return radius * np.sqrt(rng.uniform(size=m)) * np.exp(2j * np.pi * rng.uniform(size=m))

    tr, tt = ris.theta_r + step(), ris.theta_t + step()
    mask_r, mask_t = ris.masks()
    tr, tt = tr * mask_r, tt * mask_t
    amp = np.sqrt(np.abs(tr) ** 2 + np.abs(tt) ** 2)
    scale = 1.0 / np.maximum(1.0, amp)
    return replace(ris, theta_r=tr * scale, theta_t=tt * scale)


def minorization_report(coeffs_gamma, coeffs_theta, point: ExpansionPoint, fbl: FBLParams,
                        n_samples, radius, seed, p_budget=None, gradient=True):
    """Sampling check of tangency, minorization and first-order agreement."""
    rng = np.random.default_rng(seed)
    sigma2 = fbl.noise_power
    h, gammas = point.channels, point.gammas
    r0 = rates(h, gammas, fbl)
    rep = MinorizationReport(n_samples, radius)

    for c in coeffs_gamma:
        k = c.user
        val = eval_bound_in_gamma(c, h, gammas, sigma2)
        rep.tangency_error = max(rep.tangency_error, abs(val - r0[k]) / (1 + abs(r0[k])))

    samples = perturb_gammas(rng, gammas, radius, n_samples, p_budget)
    r_s = rates(h[None], samples, fbl)
    for c in coeffs_gamma:
        gap = eval_bound_in_gamma(c, h, samples, sigma2) - r_s[:, c.user]
        rep.max_gap_gamma = max(rep.max_gap_gamma, float(np.max(gap)))

    if gradient:
        for c in coeffs_gamma:
            fd = rate_gradient_fd(h, gammas, c.user, fbl)
            an = gamma_model(c, h, sigma2).gradient(gammas)
            rel = np.linalg.norm(fd - an) / max(np.linalg.norm(an), 1e-12)
            rep.gradient_mismatch = max(rep.gradient_mismatch, float(rel))

    if point.links is not None and point.ris is not None and point.ris.n_elements:
        links, ris = point.links, point.ris
        for c in coeffs_theta:
            val = eval_bound_in_theta(c, gammas, links, ris, sigma2)
            rep.tangency_error = max(rep.tangency_error,
                                     abs(val - r0[c.user]) / (1 + abs(r0[c.user])))
        profiles = [perturb_ris(rng, ris, radius) for _ in range(n_samples)]
        chans = np.stack([compose_all(links, p) for p in profiles])
        r_t = rates(chans, gammas[None], fbl)
        for c in coeffs_theta:
            model = theta_model(c, gammas, links, sigma2)
            thetas = np.stack([side_vector(p, links.side[c.user]) for p in profiles])
            gap = model.value(thetas) - r_t[:, c.user]
            rep.max_gap_theta = max(rep.max_gap_theta, float(np.max(gap)))
            if gradient:
                theta0 = side_vector(ris, links.side[c.user])
                fd = rate_theta_gradient_fd(links, ris, gammas, c.user, fbl)
                an = model.gradient(theta0)
                rel = np.linalg.norm(fd - an) / max(np.linalg.norm(an), 1e-12)
                rep.gradient_mismatch = max(rep.gradient_mismatch, float(rel))
    return rep


def check_minorization(point: ExpansionPoint, fbl: FBLParams, n_samples=1000, radius=0.5,
                       seed=0, p_budget=None, gradient=True):
    """Build coefficients at ``point`` and run :func:`minorization_report`."""
    coeffs = build_all(point, fbl)
    return minorization_report(coeffs, coeffs, point, fbl, n_samples, radius, seed,
                               p_budget=p_budget, gradient=gradient)
