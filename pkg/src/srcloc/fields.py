"""Steady advection-diffusion-decay source fields.

Scalar point queries raise on singular evaluation; the batched queries used by
the likelihood path clamp the source distance at EPS_SING instead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

# below this source distance a point query is considered singular
EPS_SING = 1e-9

FOUR_PI = 4.0 * math.pi


class SingularPointError(ValueError):
    """Raised when a field is queried inside the singular core of a source."""


@dataclass
class Source2D:
    """Planar point source: location, emission rate, wind, diffusivity, decay length."""

    x: float
    y: float
    q: float
    ux: float
    uy: float
    alpha: float
    lam: float

    def __post_init__(self):
        if self.q < 0.0:
            raise ValueError("q must be >= 0")
        if self.alpha <= 0.0:
            raise ValueError("alpha must be > 0")
        if self.lam <= 0.0:
            raise ValueError("lam must be > 0")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.q, self.ux, self.uy, self.alpha, self.lam])

    @classmethod
    def from_array(cls, a) -> "Source2D":
        a = np.asarray(a, dtype=float)
        return cls(*a.tolist())


@dataclass
class Source3D:
    """Point source in 3-space with convection vector v (see green_3d for the sign)."""

    x: float
    y: float
    z: float
    q: float
    vx: float
    vy: float
    vz: float
    alpha: float
    lam: float

    def __post_init__(self):
        if self.q < 0.0:
            raise ValueError("q must be >= 0")
        if self.alpha <= 0.0:
            raise ValueError("alpha must be > 0")
        if self.lam <= 0.0:
            raise ValueError("lam must be > 0")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z, self.q,
                         self.vx, self.vy, self.vz, self.alpha, self.lam])

    @classmethod
    def from_array(cls, a) -> "Source3D":
        a = np.asarray(a, dtype=float)
        return cls(*a.tolist())


def plume_2d(p, src: Source2D) -> float:
    """Planar plume intensity at p.

    phi = q / (4 pi alpha r) * exp(-r/lam - (dx*ux + dy*uy) / (2 alpha)),
    r = |p - p_s|.  Largest along the negative wind half-plane by this sign
    convention.  Raises SingularPointError for r < EPS_SING.
    """
    dx = float(p[0]) - src.x
    dy = float(p[1]) - src.y
    r = math.hypot(dx, dy)
    if r < EPS_SING:
        raise SingularPointError(f"query at distance {r:.3e} from source")
    expo = -r / src.lam - (dx * src.ux + dy * src.uy) / (2.0 * src.alpha)
    return src.q / (FOUR_PI * src.alpha * r) * math.exp(expo)


def green_3d(p, src: Source3D) -> float:
    """Free-space kernel of -alpha lap(phi) + v . grad(phi) + kappa phi = q delta.

    phi = q / (4 pi alpha r) * exp(v . d / (2 alpha) - r/lam), d = p - p_s,
    with kappa = alpha/lam^2 - |v|^2/(4 alpha).  Note the plus sign on the
    convection term; it is the opposite of the 2D plume convention.
    """
    dx = float(p[0]) - src.x
    dy = float(p[1]) - src.y
    dz = float(p[2]) - src.z
    r = math.sqrt(dx * dx + dy * dy + dz * dz)
    if r < EPS_SING:
        raise SingularPointError(f"query at distance {r:.3e} from source")
    expo = (src.vx * dx + src.vy * dy + src.vz * dz) / (2.0 * src.alpha) - r / src.lam
    return src.q / (FOUR_PI * src.alpha * r) * math.exp(expo)


def green_3d_from_m(p, x, y, z, q, vx, vy, vz, alpha, m) -> float:
    """Same kernel parameterized by the attenuation rate m instead of lam = 1/m."""
    dx = float(p[0]) - x
    dy = float(p[1]) - y
    dz = float(p[2]) - z
    r = math.sqrt(dx * dx + dy * dy + dz * dz)
    if r < EPS_SING:
        raise SingularPointError(f"query at distance {r:.3e} from source")
    expo = (vx * dx + vy * dy + vz * dz) / (2.0 * alpha) - m * r
    return q / (FOUR_PI * alpha * r) * math.exp(expo)


def kappa_from_lam(alpha, lam, v) -> float:
    """Decay rate kappa for which the kernel's radial attenuation is exp(-r/lam)."""
    v = np.asarray(v, dtype=float)
    return alpha / lam ** 2 - float(v @ v) / (4.0 * alpha)


def m_from_kappa(alpha, kappa, v) -> float:
    """Attenuation rate m = sqrt(kappa/alpha + |v|^2 / (4 alpha^2)); inverse of kappa_from_lam."""
    v = np.asarray(v, dtype=float)
    m2 = kappa / alpha + float(v @ v) / (4.0 * alpha ** 2)
    if m2 < 0.0:
        raise ValueError("kappa too negative: kernel would grow radially")
    return math.sqrt(m2)


def half_space_3d(p, src: Source3D) -> float:
    """Half-space z >= 0 field via the method of images: real source plus its
    mirror at (x, y, -z).  Requires src.z > 0.  With vz = 0 the normal
    derivative vanishes on z = 0 (no-flux ground)."""
    if src.z <= 0.0:
        raise ValueError("half-space source must satisfy z > 0")
    image = replace(src, z=-src.z)
    return green_3d(p, src) + green_3d(p, image)


# ---------------------------------------------------------------------------
# batched queries over particle matrices; reference numpy implementations
# (kernels.py carries jitted twins used in the hot loops)

def plume_2d_batch(p, thetas: np.ndarray) -> np.ndarray:
    """Plume intensity at pose p for each theta row [x, y, q, ux, uy, alpha, lam].

    Source distance is clamped at EPS_SING (no raise): this is the likelihood
    path, which must stay total.
    """
    t = np.asarray(thetas, dtype=float)
    dx = float(p[0]) - t[:, 0]
    dy = float(p[1]) - t[:, 1]
    r = np.hypot(dx, dy)
    r = np.maximum(r, EPS_SING)
    alpha = t[:, 5]
    expo = -r / t[:, 6] - (dx * t[:, 3] + dy * t[:, 4]) / (2.0 * alpha)
    return t[:, 2] / (FOUR_PI * alpha * r) * np.exp(expo)


def half_space_3d_batch(p, thetas: np.ndarray, wind_sign: float = 1.0) -> np.ndarray:
    """Half-space intensity at p for rows [x, y, z, q, vx, vy, vz, alpha, lam].

    wind_sign premultiplies the stored convection vector; pass -1.0 when the
    rows store wind in the 2D plume (downwind-decay) convention.
    """
    t = np.asarray(thetas, dtype=float)
    dx = float(p[0]) - t[:, 0]
    dy = float(p[1]) - t[:, 1]
    dz_r = float(p[2]) - t[:, 2]
    dz_i = float(p[2]) + t[:, 2]
    alpha = t[:, 7]
    lam = t[:, 8]
    q = t[:, 3]
    adv_xy = wind_sign * (dx * t[:, 4] + dy * t[:, 5])
    vz = wind_sign * t[:, 6]
    out = np.zeros(t.shape[0])
    for dz in (dz_r, dz_i):
        r = np.sqrt(dx * dx + dy * dy + dz * dz)
        r = np.maximum(r, EPS_SING)
        expo = (adv_xy + vz * dz) / (2.0 * alpha) - r / lam
        out = out + q / (FOUR_PI * alpha * r) * np.exp(expo)
    return out


def pde_residual(field_fn, p, v, alpha, kappa, h) -> float:
    """Central-difference residual of -alpha lap(phi) + v . grad(phi) + kappa phi at p.

    field_fn maps a point to a float; dimension comes from len(p).  Second
    order in h, so halving h shrinks the residual of a true solution ~4x.
    """
    p = np.asarray(p, dtype=float)
    v = np.asarray(v, dtype=float)
    dim = p.shape[0]
    f0 = field_fn(p)
    lap = 0.0
    adv = 0.0
    for i in range(dim):
        e = np.zeros(dim)
        e[i] = h
        fp = field_fn(p + e)
        fm = field_fn(p - e)
        lap += (fp - 2.0 * f0 + fm) / h ** 2
        adv += v[i] * (fp - fm) / (2.0 * h)
    return -alpha * lap + adv + kappa * f0


# ---------------------------------------------------------------------------
# field model objects consumed by the filter and episode runner

class Plume2DField:
    """Scenario field for the planar plume; theta rows follow Source2D order."""

    name = "plume2d"
    theta_dim = 7
    pose_dim = 2
    loc_idx = (0, 1)

    def intensity(self, p, theta_row) -> float:
        return plume_2d(p, Source2D.from_array(theta_row))

    def intensity_batch(self, p, thetas) -> np.ndarray:
        return plume_2d_batch(p, thetas)


class HalfSpace3DField:
    """Scenario field for the half-space kernel.

    Theta rows store wind in the downwind-decay convention shared with the 2D
    plume, so the 3D kernel is evaluated with the sign flipped (wind_sign=-1).
    """

    name = "halfspace3d"
    theta_dim = 9
    pose_dim = 3
    loc_idx = (0, 1, 2)
    wind_sign = -1.0

    def intensity(self, p, theta_row) -> float:
        t = np.asarray(theta_row, dtype=float).copy()
        t[4:7] *= self.wind_sign
        return half_space_3d(p, Source3D.from_array(t))

    def intensity_batch(self, p, thetas) -> np.ndarray:
        return half_space_3d_batch(p, thetas, wind_sign=self.wind_sign)


def field_by_name(name: str):
    if name == "plume2d":
        return Plume2DField()
    if name == "halfspace3d":
        return HalfSpace3DField()
    raise ValueError(f"unknown field model: {name!r}")
