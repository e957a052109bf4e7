"""
Numerical certificate for linear convergence of AB-SAGA.

The four error quantities (consensus error, optimality gap, mean auxiliary
gap, tracking error) obey t^{k+1} <= G_alpha t^k for a 4x4 nonnegative
matrix built from network and problem constants. A positive vector delta
with G delta <= gamma delta elementwise certifies rho(G) <= gamma < 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CertificateNotApplicable, NumericalFailure

# Numeric constants of the bound, in one place.
K = {
    # G_alpha and g1..g7
    "g1": 40.0,
    "g2": 16.0,
    "g3": 8.0,
    "g4": 8.0,
    "g5_div": 4.0,
    "g6": 3.0,
    "g7": 5.0,
    "row4_x": 146.0,
    "row4_opt": 97.0,
    "row4_aux": 26.0,
    # step-size and communication conditions
    "step_1": 35.0,
    "step_2": 288.0,
    "rounds": 4.0,
    "bar_alpha_1": 35.0,
    "bar_alpha_2": 288.0,
    "bar_alpha_3": 9.0,
    "c_bar": 90512.0,
    "d_bar": 1265.0,
    # delta / tau construction
    "sigma_B_gate": 201.0,
    "tau": 40000.0,
    "delta_2": 64.0,
    "delta_3": 130.0,
    "delta_4": 40000.0,
    "sigma_A_1": 51200.0,
    "sigma_A_2": 640000.0,
}

RHO_TOL = 1e-12
RHO_MAX_ITER = 200_000


@dataclass(frozen=True)
class ConvergenceInputs:
    n: int
    pi_r: np.ndarray
    pi_c: np.ndarray
    sigma_A: float
    sigma_B: float
    ell: float
    mu: float
    m: int
    M: int
    alpha: float = 0.0
    c: int = 1
    d: int = 1

    def __post_init__(self):
        if not (0 <= self.sigma_A < 1 and 0 <= self.sigma_B < 1):
            raise ValueError("contraction factors must lie in [0, 1)")
        if not (self.ell >= self.mu > 0):
            raise ValueError("need ell >= mu > 0")
        if self.m < 1 or self.M < self.m:
            raise ValueError("need 1 <= m <= M")
        if self.c < 1 or self.d < 1:
            raise ValueError("communication rounds must be >= 1")
        if self.alpha < 0:
            raise ValueError("step size must be nonnegative")
        for name in ("pi_r", "pi_c"):
            pi = np.asarray(getattr(self, name), float)
            if pi.shape != (self.n,) or (pi <= 0).any():
                raise ValueError(f"{name} must be a positive vector of length n")
            object.__setattr__(self, name, pi)

    @classmethod
    def from_system(cls, weights, constants, m, M, alpha=0.0, c=1, d=1):
        return cls(
            n=weights.n,
            pi_r=weights.pi_r,
            pi_c=weights.pi_c,
            sigma_A=weights.sigma_A,
            sigma_B=weights.sigma_B,
            ell=constants.ell,
            mu=constants.mu,
            m=m,
            M=M,
            alpha=alpha,
            c=c,
            d=d,
        )

    def replace(self, **kw):
        fields = {k: getattr(self, k) for k in self.__dataclass_fields__}
        fields.update(kw)
        return ConvergenceInputs(**fields)

    @property
    def kappa(self):
        return self.ell / self.mu

    @property
    def h_r(self):
        return float(self.pi_r.max() / self.pi_r.min())

    @property
    def h_c(self):
        return float(self.pi_c.max() / self.pi_c.min())

    @property
    def pi_dot(self):
        return float(self.pi_r @ self.pi_c)

    @property
    def psi(self):
        return math.sqrt(self.h_r * self.h_c) / (self.n * self.pi_dot)

    @property
    def sA2c(self):
        return self.sigma_A ** (2 * self.c)

    @property
    def sB2d(self):
        return self.sigma_B ** (2 * self.d)


def g_constants(inp):
    """(g1, ..., g7) of the LTI system matrix."""
    l2 = inp.ell**2
    n, pd, mu = inp.n, inp.pi_dot, inp.mu
    pc2 = float(inp.pi_c @ inp.pi_c)
    pr2 = float(inp.pi_r @ inp.pi_r)
    pr_max, pr_min = inp.pi_r.max(), inp.pi_r.min()
    pc_max = inp.pi_c.max()
    gap_A = 1.0 - inp.sA2c
    return (
        K["g1"] * l2 * n * pc2 * pr_max / gap_A,
        K["g2"] * l2 * pc2 * pr_max / gap_A,
        K["g3"] * l2 * pr_max * pc_max / gap_A,
        K["g4"] * l2 * n * pd / (mu * pr_min),
        mu * n * pd / K["g5_div"],
        K["g6"] * l2 * n * pd**2,
        K["g7"] * l2 * pr2 * pc_max / (mu * pd),
    )


def build_G(inp, alpha=None):
    a = inp.alpha if alpha is None else alpha
    g1, g2, g3, g4, g5, g6, g7 = g_constants(inp)
    sA, sB = inp.sA2c, inp.sB2d
    pr_min, pc_min = inp.pi_r.min(), inp.pi_c.min()
    b = sB / (1.0 - sB)
    return np.array(
        [
            [0.75, a * a * g1 * sA, a * a * g2 * sA, a * a * g3 * sA],
            [a * g4, 1.0 - a * g5, a * a * g6, a * g7],
            [2.0 / (inp.m * pr_min), 2.0 / inp.m, 1.0 - 1.0 / inp.M, 0.0],
            [K["row4_x"] * inp.n * b / (pr_min * pc_min), K["row4_opt"] * inp.n * b / pc_min, K["row4_aux"] * b / pc_min, 0.75],
        ]
    )


def _rounds_threshold(n, sigma):
    if sigma <= 0.0:
        return 0.0
    return math.log(K["rounds"] * n) / math.log(1.0 / sigma)


@dataclass(frozen=True)
class LemmaConditions:
    alpha_bound: float
    c_threshold: float
    d_threshold: float
    alpha_ok: bool
    c_ok: bool
    d_ok: bool

    @property
    def ok(self):
        return self.alpha_ok and self.c_ok and self.d_ok

    def reasons(self):
        out = []
        if not self.alpha_ok:
            out.append(f"alpha exceeds {self.alpha_bound:.6g}")
        if not self.c_ok:
            out.append(f"c below {self.c_threshold:.6g}")
        if not self.d_ok:
            out.append(f"d below {self.d_threshold:.6g}")
        return out


def lemma1_conditions(inp):
    bound = min(
        1.0 / (K["step_1"] * inp.ell * math.sqrt(inp.h_r * inp.h_c)),
        inp.mu / (K["step_2"] * inp.n * inp.ell**2 * inp.pi_dot),
    )
    c_thr = _rounds_threshold(inp.n, inp.sigma_A)
    d_thr = _rounds_threshold(inp.n, inp.sigma_B)
    return LemmaConditions(bound, c_thr, d_thr, inp.alpha <= bound, inp.c >= c_thr, inp.d >= d_thr)


@dataclass(frozen=True)
class SpectralRadius:
    rho: float
    method: str
    bound: float | None = None


def _charpoly(G):
    """Characteristic polynomial coefficients by Faddeev-LeVerrier."""
    n = G.shape[0]
    coeffs = [1.0]
    Mk = np.zeros_like(G)
    eye = np.eye(n)
    for k in range(1, n + 1):
        Mk = G @ Mk + coeffs[-1] * eye
        coeffs.append(-np.trace(G @ Mk) / k)
    return np.array(coeffs)


def spectral_radius(G, delta=None):
    """Perron root of a nonnegative matrix by power iteration.

    Falls back to the roots of the characteristic polynomial when the
    iteration stalls (e.g. several eigenvalues of equal modulus). With a
    positive ``delta`` the weighted-max-norm bound max_i (G delta)_i / delta_i
    is also returned; it always dominates rho.
    """
    G = np.asarray(G, float)
    if (G < 0).any():
        raise ValueError("spectral_radius expects a nonnegative matrix")
    bound = None
    if delta is not None:
        delta = np.asarray(delta, float)
        bound = float(np.max(G @ delta / delta))
    x = np.ones(G.shape[0])
    rho = None
    for _ in range(RHO_MAX_ITER):
        y = G @ x
        top = np.abs(y).max()
        if top == 0.0:
            rho = 0.0
            break
        y /= top
        if np.abs(y - x).max() <= RHO_TOL:
            rho = float(top)
            break
        x = y
    if rho is not None:
        method = "power"
    else:
        rho = float(np.abs(np.roots(_charpoly(G))).max())
        method = "charpoly"
    if bound is not None and rho > bound + 1e-9:
        raise NumericalFailure(f"spectral radius {rho} exceeds weighted-norm bound {bound}")
    return SpectralRadius(rho, method, bound)


@dataclass(frozen=True)
class StepSize:
    alpha_bar: float
    terms: tuple[float, float, float]

    @property
    def binding(self):
        return int(np.argmin(self.terms))


def max_stepsize(inp):
    """Largest step size covered by the convergence theorem."""
    terms = (
        1.0 / (K["bar_alpha_1"] * inp.ell * math.sqrt(inp.h_r * inp.h_c)),
        inp.m / (K["bar_alpha_2"] * inp.M * inp.n * inp.kappa * inp.ell * inp.pi_dot),
        1.0 / (K["bar_alpha_3"] * inp.mu * inp.M * inp.pi_dot),
    )
    return StepSize(min(terms), terms)


@dataclass(frozen=True)
class CommRounds:
    c_bar: float
    d_bar: float
    c: int
    d: int


def min_comm_rounds(inp):
    """Thresholds on gossip rounds per iteration; d first because c depends on sigma_B^{2d}.

    Both are rounded up and clamped to at least one round.
    """
    kap, pd = inp.kappa, inp.pi_dot
    if inp.sigma_B <= 0.0:
        d_bar = 0.0
    else:
        d_bar = math.log(K["d_bar"] * kap / pd * math.sqrt(inp.n * inp.M * inp.h_c / inp.m)) / math.log(1 / inp.sigma_B)
    d = max(1, math.ceil(d_bar))
    sB2d = inp.sigma_B ** (2 * d)
    if inp.sigma_A <= 0.0:
        c_bar = 0.0
    else:
        num = K["c_bar"] * inp.n * inp.M * kap / (inp.m * (1 - sB2d)) * math.sqrt(inp.h_r * inp.h_c / pd)
        c_bar = math.log(num) / math.log(1 / inp.sigma_A)
    return CommRounds(c_bar, d_bar, max(1, math.ceil(c_bar)), d)


def final_rate_bound(inp):
    """1 - min{1/(35 kappa psi), m/(288 kappa^2 M), 1/(9 M)}, the closed-form rate claimed at alpha_bar."""
    k = inp.kappa
    return 1.0 - min(
        1.0 / (K["bar_alpha_1"] * k * inp.psi),
        inp.m / (K["bar_alpha_2"] * k * k * inp.M),
        1.0 / (K["bar_alpha_3"] * inp.M),
    )


@dataclass
class ConvergenceCertificate:
    inputs: ConvergenceInputs
    g: tuple
    G: np.ndarray
    rho: float
    rho_method: str
    gamma: float
    tau: tuple
    delta: np.ndarray
    alpha_bar: float
    c_bar: float
    d_bar: float
    psi: float
    gamma_order: float
    inequalities: dict = field(default_factory=dict)
    G_delta_ok: bool = False
    norm_bound: float = math.nan
    rho_bar: float = math.nan
    final_bound: float = math.nan
    conditions: LemmaConditions | None = None

    @property
    def certified(self):
        """G delta <= gamma delta holds and rho(G) <= gamma follows."""
        return self.G_delta_ok and self.rho <= self.gamma + 1e-9

    @property
    def final_bound_ok(self):
        return self.rho_bar <= self.final_bound + 1e-9

    def verdicts(self):
        out = {f"ineq_{k}": ok for k, (_, _, ok) in self.inequalities.items()}
        out["G_delta_le_gamma_delta"] = self.G_delta_ok
        out["rho_le_gamma"] = self.rho <= self.gamma + 1e-9
        out["rho_bar_le_final_bound"] = self.final_bound_ok
        if self.conditions is not None:
            out["step_and_round_conditions"] = self.conditions.ok
        return out

    def as_dict(self):
        d = {f"g{i + 1}": v for i, v in enumerate(self.g)}
        for i in range(4):
            for j in range(4):
                d[f"G{i + 1}{j + 1}"] = float(self.G[i, j])
        d.update(
            rho=self.rho,
            rho_method=self.rho_method,
            gamma=self.gamma,
            norm_bound=self.norm_bound,
            tau1=self.tau[0],
            tau2=self.tau[1],
        )
        d.update({f"delta{i + 1}": float(v) for i, v in enumerate(self.delta)})
        d.update(
            alpha=self.inputs.alpha,
            alpha_bar=self.alpha_bar,
            c=self.inputs.c,
            d=self.inputs.d,
            c_bar=self.c_bar,
            d_bar=self.d_bar,
            psi=self.psi,
            gamma_order=self.gamma_order,
            rho_bar=self.rho_bar,
            final_bound=self.final_bound,
        )
        d.update({k: ("pass" if v else "fail") for k, v in self.verdicts().items()})
        return d


def _delta(inp):
    kap2 = inp.kappa**2
    n, m, M, pd = inp.n, inp.m, inp.M, inp.pi_dot
    sB, sB2d, hc = inp.sigma_B**inp.d, inp.sB2d, inp.h_c
    pr_min, pc_min = inp.pi_r.min(), inp.pi_c.min()
    gate = pd / (K["sigma_B_gate"] * inp.kappa) * math.sqrt(m / (n * M * hc))
    if not sB < gate:
        raise CertificateNotApplicable(f"sigma_B^d = {sB:.6g} is not below {gate:.6g}; increase d")
    tau1 = 1.0 - K["tau"] * n * sB2d * kap2 * M * hc / (m * (1 - sB2d) * pd**2)
    if tau1 <= 0:
        raise CertificateNotApplicable(f"tau1 = {tau1:.6g} is not positive")
    tau2 = 1.0 + K["tau"] * n * kap2 * M * hc / (pd**2 * tau1 * m * (1 - sB2d))
    delta = np.array(
        [
            1.0,
            K["delta_2"] * tau2 * kap2 / pr_min,
            K["delta_3"] * tau2 * kap2 * M / (m * pr_min),
            K["delta_4"] * n * kap2 * M / (pr_min * pc_min * m * tau1 * (1 - sB2d)),
        ]
    )
    return (tau1, tau2), delta


def _inequalities(inp, g, delta):
    """The row-wise conditions equivalent to G delta <= gamma delta, as (lhs, rhs, ok)."""
    a = inp.alpha
    g1, g2, g3, g4, g5, g6, g7 = g
    d1, d2, d3, d4 = delta
    sA, sB = inp.sA2c, inp.sB2d
    pr_min, pc_min = inp.pi_r.min(), inp.pi_c.min()
    half = a * g5 / 2
    b = sB / (1 - sB)
    rows = {
        "consensus": (half + sA / d1 * (a * a * g1 * d2 + a * a * g2 * d3 + a * a * g3 * d4), 0.25),
        "optimality": (a * g6, g5 / 2 * d2 / d3 - g4 * d1 / d3 - g7 * d4 / d3),
        "aux": (half, 1.0 / inp.M - 2.0 / (pr_min * inp.m) * d1 / d3 - 2.0 / inp.m * d2 / d3),
        "tracking": (
            half,
            0.25
            - b / d4 * (K["row4_x"] * inp.n / (pr_min * pc_min) * d1 + K["row4_opt"] * inp.n / pc_min * d2)
            - b / d4 * (K["row4_aux"] / pc_min * d3),
        ),
    }
    return {k: (float(lhs), float(rhs), bool(lhs <= rhs)) for k, (lhs, rhs) in rows.items()}


def delta_certificate(inp):
    """Evaluate the delta/gamma certificate for the step size and rounds in ``inp``.

    Raises CertificateNotApplicable when sigma_B^d is too large or tau1 <= 0.
    """
    g = g_constants(inp)
    G = build_G(inp)
    tau, delta = _delta(inp)
    gamma = 1.0 - inp.alpha * g[4] / 2
    ineq = _inequalities(inp, g, delta)
    ok = bool(np.all(G @ delta <= gamma * delta))
    sr = spectral_radius(G, delta)
    step = max_stepsize(inp)
    rounds = min_comm_rounds(inp)
    rho_bar = spectral_radius(build_G(inp, step.alpha_bar)).rho
    return ConvergenceCertificate(
        inputs=inp,
        g=g,
        G=G,
        rho=sr.rho,
        rho_method=sr.method,
        gamma=gamma,
        tau=tau,
        delta=delta,
        alpha_bar=step.alpha_bar,
        c_bar=rounds.c_bar,
        d_bar=rounds.d_bar,
        psi=inp.psi,
        gamma_order=gradient_complexity(inp).order,
        inequalities=ineq,
        G_delta_ok=ok,
        norm_bound=sr.bound,
        rho_bar=rho_bar,
        final_bound=final_rate_bound(inp),
        conditions=lemma1_conditions(inp),
    )


@dataclass(frozen=True)
class Complexity:
    order: float
    estimate: float
    centralized: float
    speedup: float


def gradient_complexity(inp, epsilon=1e-6):
    """Order constant max{kappa psi, kappa^2 M/m, M} and its product with log(1/epsilon).

    ``centralized`` is n M log(1/epsilon), the single-machine SAGA count;
    ``speedup`` is their ratio.
    """
    if not 0 < epsilon < 1:
        raise ValueError("epsilon must lie in (0, 1)")
    k = inp.kappa
    order = max(k * inp.psi, k * k * inp.M / inp.m, float(inp.M))
    log_eps = math.log(1.0 / epsilon)
    central = inp.n * inp.M * log_eps
    return Complexity(order, order * log_eps, central, central / (order * log_eps))
