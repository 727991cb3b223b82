"""Generalized gamma process primitives.

The random measure has Levy density ``w**(-1-sigma) * exp(-zeta*w) / Gamma(1-sigma)``
and power-law base measure ``alpha(theta) = gamma * xi * theta**(xi-1)``, so that
``alpha_bar(t) = gamma * t**xi``.

Two integrals drive everything downstream:

* ``I(t) = int_0^t psi(t - theta) alpha(theta) dtheta`` -- the cumulative intensity
  of new clusters (and the exponent of the joint density);
* ``lambda(t) = dI/dt = int_0^t alpha(theta) (t - theta + zeta)**(sigma-1) dtheta``
  -- the total mass of the diffuse part of the allocation rule.

Both have hypergeometric closed forms, used on hot paths. ``psi_base_integral``
evaluates ``I`` by adaptive quadrature instead and serves as the reference.
"""
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

from . import _kernels
from .exceptions import DomainError, NumericalError

__all__ = [
    "GGPParams",
    "BaseMeasureParams",
    "ModelParams",
    "laplace_exponent",
    "kappa",
    "log_kappa",
    "psi_base_integral",
    "cumulative_new_intensity",
    "new_cluster_rate",
    "new_location_mass",
    "levy_tail",
    "levy_tail_first_moment",
    "sample_truncated_crm",
]


@dataclass(frozen=True)
class GGPParams:
    """Levy measure parameters: power-law index ``sigma`` and tilt ``zeta``."""

    sigma: float
    zeta: float

    def __post_init__(self):
        if not 0.0 <= self.sigma < 1.0:
            raise DomainError(f"sigma must lie in [0, 1), got {self.sigma}")
        if not self.zeta > 0.0:
            raise DomainError(f"zeta must be positive, got {self.zeta}")


@dataclass(frozen=True)
class BaseMeasureParams:
    """Base measure ``alpha(dtheta) = gamma_coef * xi * theta**(xi-1) dtheta``."""

    xi: float
    gamma_coef: float = 1.0

    def __post_init__(self):
        if not self.xi > 0.0:
            raise DomainError(f"xi must be positive, got {self.xi}")
        if not self.gamma_coef > 0.0:
            raise DomainError(f"gamma_coef must be positive, got {self.gamma_coef}")

    def density(self, theta):
        theta = np.asarray(theta, dtype=float)
        return self.gamma_coef * self.xi * theta ** (self.xi - 1.0)

    def log_density(self, theta):
        theta = np.asarray(theta, dtype=float)
        return np.log(self.gamma_coef * self.xi) + (self.xi - 1.0) * np.log(theta)

    def cumulative(self, t):
        return self.gamma_coef * np.asarray(t, dtype=float) ** self.xi

    def sample(self, t_max, size, rng):
        """I.i.d. locations from the base measure restricted to (0, t_max]."""
        u = rng.random(size)
        return t_max * u ** (1.0 / self.xi)


@dataclass(frozen=True)
class ModelParams:
    base: BaseMeasureParams
    levy: GGPParams

    @classmethod
    def from_values(cls, xi, sigma, zeta, gamma_coef=1.0):
        return cls(BaseMeasureParams(float(xi), float(gamma_coef)), GGPParams(float(sigma), float(zeta)))

    @property
    def xi(self):
        return self.base.xi

    @property
    def gamma_coef(self):
        return self.base.gamma_coef

    @property
    def sigma(self):
        return self.levy.sigma

    @property
    def zeta(self):
        return self.levy.zeta

    def as_dict(self):
        return {"xi": self.xi, "gamma": self.gamma_coef, "sigma": self.sigma, "zeta": self.zeta}


def laplace_exponent(t, levy):
    """Laplace exponent ``psi(t)`` of the GGP; accepts scalars or arrays."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise DomainError("laplace_exponent is defined for t >= 0")
    s, z = levy.sigma, levy.zeta
    x = np.log1p(t / z)
    if s == 0.0:
        out = x
    else:
        # exprel(y) = expm1(y) / y keeps precision for small s and small t
        out = z**s * x * special.exprel(s * x)
    return out if out.ndim else float(out)


def log_kappa(m, u, levy):
    """log of ``kappa(m, u) = Gamma(m-sigma) / (Gamma(1-sigma) (zeta+u)**(m-sigma))``."""
    m = np.asarray(m, dtype=float)
    u = np.asarray(u, dtype=float)
    if np.any(m < 1):
        raise DomainError("kappa requires m >= 1")
    s = levy.sigma
    out = special.gammaln(m - s) - special.gammaln(1.0 - s) - (m - s) * np.log(levy.zeta + u)
    return out if out.ndim else float(out)


def kappa(m, u, levy):
    """Exponentially tilted m-th moment of the Levy measure."""
    if np.any(np.asarray(u) < 0):
        raise DomainError("kappa requires u >= 0")
    out = np.exp(log_kappa(m, u, levy))
    return out if np.ndim(out) else float(out)


def _quad_tolerance(value):
    return max(1e-10, 1e-11 * abs(value))


def psi_base_integral(tau, params):
    """``int_0^tau psi(tau - theta) alpha(dtheta)`` by adaptive Gauss-Kronrod quadrature.

    Integrated by parts into ``gamma * int_0^tau theta**xi (tau-theta+zeta)**(sigma-1)``,
    whose integrand is bounded even when ``xi < 1``. The only feature is a
    boundary layer of width ``zeta`` below ``tau``, which is passed as a breakpoint.
    """
    tau = float(tau)
    if tau < 0:
        raise DomainError("psi_base_integral requires tau >= 0")
    if tau == 0.0:
        return 0.0
    xi, g, s, z = params.xi, params.gamma_coef, params.sigma, params.zeta

    def integrand(theta):
        return theta**xi * (tau - theta + z) ** (s - 1.0)

    points = [tau - z] if tau > 2.0 * z else None
    val, err = integrate.quad(integrand, 0.0, tau, points=points, epsabs=1e-12, epsrel=1e-13, limit=500)
    val *= g
    err *= g
    if err > _quad_tolerance(val):
        raise NumericalError(f"quadrature did not converge at tau={tau}", achieved=err)
    return val


def _hyp_factor(a_shift, t, params):
    # int_0^t theta**(p-1) (t-theta+zeta)**(sigma-1) dtheta  with p = xi + a_shift, i.e.
    # t**p * (t+zeta)**(sigma-1) * 2F1(1-sigma, p; p+1; t/(t+zeta)) / p
    xi, s, z = params.xi, params.sigma, params.zeta
    p = xi + a_shift
    if float(p).is_integer():
        # hyp2f1 loses digits near z = 1 when sigma is close to 0
        flat = np.ascontiguousarray(np.ravel(t), dtype=float)
        return _kernels.incomplete_integral(flat, z, s, int(p) - 1).reshape(np.shape(t))
    zz = np.minimum(t / (t + z), np.nextafter(1.0, 0.0))
    return t**p * (t + z) ** (s - 1.0) * special.hyp2f1(1.0 - s, p, p + 1.0, zz) / p


def cumulative_new_intensity(t, params):
    """Closed form of ``I(t)``, vectorized. Agrees with ``psi_base_integral``."""
    t = np.asarray(t, dtype=float)
    out = params.gamma_coef * _hyp_factor(1.0, t, params)
    return out if out.ndim else float(out)


def new_cluster_rate(t, params):
    """``lambda(t) = int_0^t alpha(theta) (t-theta+zeta)**(sigma-1) dtheta``, vectorized.

    This is the unnormalized probability of opening a new cluster at time ``t``
    and the intensity of the new-cluster arrival process.
    """
    t = np.asarray(t, dtype=float)
    out = params.gamma_coef * params.xi * _hyp_factor(0.0, t, params)
    return out if out.ndim else float(out)


def new_location_mass(theta, t, params):
    """``H_t((0, theta])``: unnormalized mass of new-cluster locations below ``theta``."""
    theta = np.asarray(theta, dtype=float)
    xi, s, z = params.xi, params.sigma, params.zeta
    c = t + z
    out = params.gamma_coef * theta**xi * c ** (s - 1.0) * special.hyp2f1(1.0 - s, xi, xi + 1.0, theta / c)
    return out if out.ndim else float(out)


def levy_tail(eps, levy):
    """``rho_bar(eps) = int_eps^inf rho(dw)``: expected number of jumps above ``eps`` per unit base mass."""
    eps = np.asarray(eps, dtype=float)
    if np.any(eps <= 0):
        raise DomainError("levy_tail requires eps > 0 (the measure has infinite activity)")
    s, z = levy.sigma, levy.zeta
    x = z * eps
    if s == 0.0:
        out = special.exp1(x)
    elif s < _SMALL_SIGMA:
        # the recurrence below cancels about log10(1/s) digits
        out = z**s * np.vectorize(_upper_gamma_negative, otypes=[float])(s, x) / special.gamma(1.0 - s)
    else:
        # Gamma(-s, x) = (x**-s e**-x - Gamma(1-s, x)) / s
        upper = special.gammaincc(1.0 - s, x) * special.gamma(1.0 - s)
        out = z**s * (x ** (-s) * np.exp(-x) - upper) / s / special.gamma(1.0 - s)
    return out if out.ndim else float(out)


_SMALL_SIGMA = 0.05


def _upper_gamma_negative(s, x):
    # Gamma(-s, x) = int_x^inf v^(-s-1) e^-v dv, integrated in log v
    lx = np.log(x)

    def f(y):
        return np.exp(-s * y - np.exp(y))

    val = integrate.quad(f, lx, lx + 1.0, epsabs=0.0, epsrel=1e-13)[0]
    val += integrate.quad(f, lx + 1.0, max(lx + 1.0, 5.0), epsabs=0.0, epsrel=1e-13)[0]
    return val


def levy_tail_first_moment(eps, levy):
    """``int_eps^inf w rho(dw)``."""
    eps = np.asarray(eps, dtype=float)
    s, z = levy.sigma, levy.zeta
    out = z ** (s - 1.0) * special.gammaincc(1.0 - s, z * eps)
    return out if out.ndim else float(out)


def _invert_levy_tail(targets, eps, levy, iterations=80):
    # bisection on log(w) for rho_bar(w) = target, vectorized over targets
    lo = np.full_like(targets, np.log(eps))
    hi = np.full_like(targets, np.log(eps) + 1.0)
    while True:
        short = levy_tail(np.exp(hi), levy) > targets
        if not short.any():
            break
        hi[short] += 2.0 * (hi[short] - lo[short])
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        above = levy_tail(np.exp(mid), levy) > targets
        lo = np.where(above, mid, lo)
        hi = np.where(above, hi, mid)
    return np.exp(0.5 * (lo + hi))


def sample_truncated_crm(t_max, eps, params, rng):
    """Jumps of the CRM with weight above ``eps`` and location in ``(0, t_max]``.

    The number of atoms is Poisson with mean ``alpha_bar(t_max) * rho_bar(eps)``;
    weights are drawn by inverting the normalized tail ``rho_bar`` and locations
    by inverting the normalized base measure.

    Returns
    -------
    weights, locations : ndarray
    """
    if not eps > 0:
        raise DomainError("eps must be positive: the GGP has infinitely many small jumps")
    if not t_max > 0:
        raise DomainError("t_max must be positive")
    tail = levy_tail(eps, params.levy)
    count = rng.poisson(params.base.cumulative(t_max) * tail)
    u = rng.random(count)
    weights = _invert_levy_tail(tail * (1.0 - u), eps, params.levy)
    locations = params.base.sample(t_max, count, rng)
    return weights, locations
