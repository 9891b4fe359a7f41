"""Physical channels and STAR-RIS state.

The effective channel from the base station to user ``k`` is

    H_k = F_k diag(theta) G + D_k

where ``theta`` is the reflection vector for users on the reflection side of the
surface and the refraction vector for users behind it.

Array conventions used throughout the package:

* ``links.g`` has shape ``(M, N_BS)``
* ``links.f`` has shape ``(K, N_u, M)``
* ``links.d`` has shape ``(K, N_u, N_BS)``
* stacked effective channels have shape ``(K, N_u, N_BS)``
"""

from __future__ import annotations

import enum
import zlib
from dataclasses import dataclass, field, replace

import numpy as np


class DimensionError(ValueError):
    """Raised when an operand does not have the expected shape."""


class GeometryError(ValueError):
    """Raised for degenerate scenario geometry (e.g. coincident nodes)."""


class RISMode(enum.Enum):
    ENERGY_SPLITTING = "es"
    MODE_SWITCHING = "ms"


class Side(enum.Enum):
    REFLECTION = "reflection"
    REFRACTION = "refraction"


class LinkClass(enum.Enum):
    DIRECT = "direct"
    BS_RIS = "bs_ris"
    RIS_USER = "ris_user"


@dataclass(frozen=True)
class Dimensions:
    n_bs: int = 2
    n_u: int = 2
    n_users: int = 6
    n_ris: int = 60
    n_streams: int | None = None

    def __post_init__(self):
        if self.n_streams is None:
            object.__setattr__(self, "n_streams", min(self.n_bs, self.n_u))
        for name in ("n_bs", "n_u", "n_users", "n_streams"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        # n_ris == 0 describes a system without a surface
        if self.n_ris < 0:
            raise ValueError("n_ris must be >= 0")
        if self.n_streams > min(self.n_bs, self.n_u):
            raise ValueError("n_streams must not exceed min(n_bs, n_u)")


@dataclass(frozen=True)
class RISProfile:
    """Reflection / refraction coefficients of a STAR-RIS.

    For mode switching, elements ``m < m_g`` (0-based) only reflect and the
    remaining ones only refract.
    """

    mode: RISMode
    theta_r: np.ndarray
    theta_t: np.ndarray
    m_g: int = 0

    def __post_init__(self):
        tr = np.asarray(self.theta_r, dtype=complex)
        tt = np.asarray(self.theta_t, dtype=complex)
        if tr.ndim != 1 or tr.shape != tt.shape:
            raise DimensionError("theta_r and theta_t must be 1-D vectors of equal length")
        object.__setattr__(self, "theta_r", tr)
        object.__setattr__(self, "theta_t", tt)
        if not 0 <= self.m_g <= tr.size:
            raise ValueError("m_g must lie in [0, M]")

    @property
    def n_elements(self):
        return self.theta_r.size

    @classmethod
    def off(cls, n_ris):
        z = np.zeros(n_ris, dtype=complex)
        return cls(RISMode.ENERGY_SPLITTING, z, z.copy())

    def masks(self):
        """Boolean masks of the elements that may be non-zero on each side."""
        m = self.n_elements
        if self.mode is RISMode.MODE_SWITCHING:
            idx = np.arange(m)
            return idx < self.m_g, idx >= self.m_g
        return np.ones(m, bool), np.ones(m, bool)


@dataclass(frozen=True)
class Violation:
    element: int
    kind: str  # "amplitude" or "mask"
    magnitude: float


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...] = ()

    @property
    def feasible(self):
        return not self.violations

    @property
    def max_violation(self):
        return max((v.magnitude for v in self.violations), default=0.0)


@dataclass(frozen=True)
class LinkSet:
    g: np.ndarray
    f: np.ndarray
    d: np.ndarray
    side: tuple[Side, ...]

    def __post_init__(self):
        g = np.asarray(self.g, dtype=complex)
        f = np.asarray(self.f, dtype=complex)
        d = np.asarray(self.d, dtype=complex)
        if g.ndim != 2:
            raise DimensionError("g must be an (M, N_BS) matrix")
        if f.ndim != 3 or d.ndim != 3:
            raise DimensionError("f and d must be stacked per user")
        k = len(self.side)
        if f.shape[0] != k or d.shape[0] != k:
            raise DimensionError("f, d and side disagree on the number of users")
        if f.shape[2] != g.shape[0]:
            raise DimensionError(f"f has {f.shape[2]} RIS columns, g has {g.shape[0]} rows")
        if d.shape[2] != g.shape[1]:
            raise DimensionError(f"d has {d.shape[2]} BS columns, g has {g.shape[1]}")
        if f.shape[1] != d.shape[1]:
            raise DimensionError("f and d disagree on the receive-antenna count")
        object.__setattr__(self, "g", g)
        object.__setattr__(self, "f", f)
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "side", tuple(Side(s) for s in self.side))

    @property
    def dims(self):
        k, n_u, n_bs = self.d.shape
        return Dimensions(n_bs=n_bs, n_u=n_u, n_users=k, n_ris=self.g.shape[0])

    def scaled(self, factor):
        """Scale every user-side channel (F_k, D_k) by ``factor``."""
        return replace(self, f=self.f * factor, d=self.d * factor)


def side_vector(ris: RISProfile, side: Side):
    return ris.theta_r if side is Side.REFLECTION else ris.theta_t


def compose_channel(links: LinkSet, ris: RISProfile, k: int):
    """Effective channel ``F_k diag(theta) G + D_k`` of user ``k``."""
    if ris.n_elements != links.g.shape[0]:
        raise DimensionError(
            f"ris has {ris.n_elements} elements, links.g has {links.g.shape[0]} rows"
        )
    theta = side_vector(ris, links.side[k])
    return (links.f[k] * theta) @ links.g + links.d[k]


def compose_all(links: LinkSet, ris: RISProfile):
    """Stacked effective channels, shape ``(K, N_u, N_BS)``."""
    if ris.n_elements != links.g.shape[0]:
        raise DimensionError(
            f"ris has {ris.n_elements} elements, links.g has {links.g.shape[0]} rows"
        )
    refl = np.array([s is Side.REFLECTION for s in links.side])
    theta = np.where(refl[:, None], ris.theta_r[None, :], ris.theta_t[None, :])
    return (links.f * theta[:, None, :]) @ links.g + links.d


def validate_ris(ris: RISProfile, tol=1e-8):
    """List every element that leaves the unit ball or breaks the MS mask."""
    out = []
    power = np.abs(ris.theta_r) ** 2 + np.abs(ris.theta_t) ** 2
    for m in np.flatnonzero(power > 1.0 + tol):
        out.append(Violation(int(m), "amplitude", float(power[m] - 1.0)))
    if ris.mode is RISMode.MODE_SWITCHING:
        mask_r, mask_t = ris.masks()
        leak = np.where(mask_r, np.abs(ris.theta_t), np.abs(ris.theta_r))
        for m in np.flatnonzero(leak > tol):
            out.append(Violation(int(m), "mask", float(leak[m])))
    return ValidationReport(tuple(sorted(out, key=lambda v: (v.element, v.kind))))


# ---------------------------------------------------------------------------
# Scenario and sampling
# ---------------------------------------------------------------------------


def _default_exponents():
    return {LinkClass.DIRECT: 3.75, LinkClass.BS_RIS: 2.2, LinkClass.RIS_USER: 2.2}


def _default_ref_db():
    return {c: 30.0 for c in LinkClass}


@dataclass(frozen=True)
class ScenarioConfig:
    """Geometry and propagation constants of one deployment.

    Arrays are uniform linear arrays with half-wavelength spacing: the BS and
    user arrays lie along the y axis, the RIS along the x axis (the RIS plane is
    the line ``y = ris_position[1]``). Users on the far side of that line from
    the BS are served by refraction.
    """

    dims: Dimensions = field(default_factory=lambda: Dimensions())
    bs_position: tuple[float, float] = (0.0, 0.0)
    ris_position: tuple[float, float] = (50.0, 10.0)
    user_positions: tuple[tuple[float, float], ...] = ()
    ricean_factor: float = 3.0
    pathloss_exponents: dict = field(default_factory=_default_exponents)
    pathloss_ref_db: dict = field(default_factory=_default_ref_db)
    noise_power: float = 10 ** ((-94.0 - 30.0) / 10)
    antenna_gain_db: float = 0.0
    blockage_db: float = 0.0

    def __post_init__(self):
        if self.ricean_factor < 0:
            raise ValueError("ricean_factor must be >= 0")
        if self.noise_power <= 0:
            raise ValueError("noise_power must be > 0")
        exps = {LinkClass(k): float(v) for k, v in self.pathloss_exponents.items()}
        refs = {LinkClass(k): float(v) for k, v in self.pathloss_ref_db.items()}
        if set(exps) != set(LinkClass) or set(refs) != set(LinkClass):
            raise ValueError("path-loss constants needed for every link class")
        if any(v <= 0 for v in exps.values()):
            raise ValueError("path-loss exponents must be > 0")
        object.__setattr__(self, "pathloss_exponents", exps)
        object.__setattr__(self, "pathloss_ref_db", refs)
        pos = tuple(tuple(float(c) for c in p) for p in self.user_positions)
        if len(pos) != self.dims.n_users:
            raise DimensionError(
                f"{len(pos)} user positions given for {self.dims.n_users} users"
            )
        object.__setattr__(self, "user_positions", pos)

    def sides(self):
        bs_sign = np.sign(self.bs_position[1] - self.ris_position[1])
        out = []
        for p in self.user_positions:
            s = np.sign(p[1] - self.ris_position[1])
            if s == 0 or bs_sign == 0:
                raise GeometryError("node lies on the RIS plane")
            out.append(Side.REFLECTION if s == bs_sign else Side.REFRACTION)
        return tuple(out)


def default_user_positions(n_users, ris_position=(50.0, 10.0), centre=(45.0, 0.0),
                           radius=10.0, layout_seed=0):
    """Half the users in a disc in front of the RIS, the rest mirrored behind it.

    With an odd count the extra user goes to the reflection side.
    """
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(layout_seed)))
    n_refl = (n_users + 1) // 2
    r = radius * np.sqrt(rng.uniform(size=n_users))
    phi = rng.uniform(0.0, 2 * np.pi, size=n_users)
    xy = np.column_stack([centre[0] + r * np.cos(phi), centre[1] + r * np.sin(phi)])
    # keep the disc strictly on the BS side of the plane
    xy[:, 1] = np.minimum(xy[:, 1], ris_position[1] - 1e-3)
    mirrored = xy.copy()
    mirrored[:, 1] = 2 * ris_position[1] - xy[:, 1]
    return tuple(map(tuple, np.vstack([xy[:n_refl], mirrored[n_refl:]])))


def default_scenario(dims: Dimensions | None = None, **kwargs):
    dims = dims or Dimensions()
    ris = kwargs.get("ris_position", (50.0, 10.0))
    if "user_positions" not in kwargs:
        kwargs["user_positions"] = default_user_positions(dims.n_users, ris_position=ris)
    return ScenarioConfig(dims=dims, **kwargs)


def pathloss_linear_gain(distance_m, link_class: LinkClass, scenario: ScenarioConfig):
    """Linear power gain ``10^(-(PL0 + 10 a log10 d - G_ant) / 10)``."""
    if not distance_m > 0:
        raise GeometryError(f"distance must be positive, got {distance_m}")
    link_class = LinkClass(link_class)
    loss_db = (scenario.pathloss_ref_db[link_class]
               + 10.0 * scenario.pathloss_exponents[link_class] * np.log10(distance_m)
               - scenario.antenna_gain_db)
    return 10.0 ** (-loss_db / 10.0)


def stream(seed, label):
    """Counter-based generator for the draw named ``label`` of trial ``seed``."""
    key = zlib.crc32(label.encode())
    ss = np.random.SeedSequence(entropy=int(seed) & (2**64 - 1), spawn_key=(key,))
    return np.random.Generator(np.random.Philox(ss))


def _cn(rng, shape):
    z = rng.standard_normal((2,) + tuple(shape))
    return (z[0] + 1j * z[1]) / np.sqrt(2.0)


def _steering(n, axis, direction):
    # unit-norm ULA response, half-wavelength spacing
    return np.exp(-1j * np.pi * np.arange(n) * float(np.dot(axis, direction))) / np.sqrt(n)


_Y_AXIS = np.array([0.0, 1.0])
_X_AXIS = np.array([1.0, 0.0])


def _unit(a, b):
    v = np.asarray(b, float) - np.asarray(a, float)
    d = float(np.hypot(*v))
    if d == 0:
        raise GeometryError(f"coincident positions {tuple(a)}")
    return v / d, d


def _rician(rng, los, kappa, gain):
    n_rx, n_tx = los.shape
    # unit-norm steering outer product rescaled to unit average entry power
    los = los * np.sqrt(n_rx * n_tx)
    if np.isinf(kappa):
        mix = los
    else:
        mix = np.sqrt(kappa / (1 + kappa)) * los + np.sqrt(1 / (1 + kappa)) * _cn(rng, los.shape)
    return np.sqrt(gain) * mix


def sample_links(scenario: ScenarioConfig, seed):
    """Draw one realisation of G, F_k, D_k. Pure function of ``(scenario, seed)``."""
    dims = scenario.dims
    bs, ris = scenario.bs_position, scenario.ris_position
    kappa = scenario.ricean_factor
    sides = scenario.sides()

    u_br, d_br = _unit(bs, ris)
    g_gain = pathloss_linear_gain(d_br, LinkClass.BS_RIS, scenario)
    los_g = np.outer(_steering(dims.n_ris, _X_AXIS, -u_br), np.conj(_steering(dims.n_bs, _Y_AXIS, u_br)))
    g = _rician(stream(seed, "G"), los_g, kappa, g_gain)

    f = np.empty((dims.n_users, dims.n_u, dims.n_ris), complex)
    d = np.empty((dims.n_users, dims.n_u, dims.n_bs), complex)
    block = 10 ** (-scenario.blockage_db / 10)
    for k, pos in enumerate(scenario.user_positions):
        u_ru, d_ru = _unit(ris, pos)
        gain = pathloss_linear_gain(d_ru, LinkClass.RIS_USER, scenario)
        los_f = np.outer(_steering(dims.n_u, _Y_AXIS, -u_ru), np.conj(_steering(dims.n_ris, _X_AXIS, u_ru)))
        f[k] = _rician(stream(seed, f"F{k}"), los_f, kappa, gain)

        _, d_bu = _unit(bs, pos)
        gain = pathloss_linear_gain(d_bu, LinkClass.DIRECT, scenario)
        if sides[k] is Side.REFRACTION:
            gain *= block
        d[k] = np.sqrt(gain) * _cn(stream(seed, f"D{k}"), (dims.n_u, dims.n_bs))
    return LinkSet(g=g, f=f, d=d, side=sides)
