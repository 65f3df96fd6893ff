"""Problem data for the coupled saturation/pressure system and checks on it.

The system solved on a rectangle Omega = (0, Lx) x (0, Ly) is

    du/dt - lap(phi(u)) = div(g(u) grad p)
    dp/dt - div(d(u) grad p) = f

with homogeneous Dirichlet conditions on u and p.
"""
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ConfigError, EvaluationError
from .laws import Separable, make_generator, make_law, make_time_factor


@dataclass(frozen=True)
class CoefficientSet:
    phi: Callable
    dphi: Callable
    d2phi: Callable
    g: Callable
    dg: Callable
    d: Callable
    dd: Callable
    c1: float
    c2: float
    c3: float
    delta_phi: float
    validation_range: tuple = (-1.0, 1.0)
    labels: dict = field(default_factory=dict, compare=False)

    @classmethod
    def from_laws(cls, phi, g, d, c1, c2, c3, delta_phi, validation_range=(-1.0, 1.0)):
        labels = {"phi": phi.describe(), "g": g.describe(), "d": d.describe()}
        return cls(phi=phi.value, dphi=phi.d1, d2phi=phi.d2, g=g.value, dg=g.d1,
                   d=d.value, dd=d.d1, c1=float(c1), c2=float(c2), c3=float(c3),
                   delta_phi=float(delta_phi),
                   validation_range=tuple(float(v) for v in validation_range),
                   labels=labels)


@dataclass(frozen=True)
class WellMask:
    """Union of axis-aligned boxes (x0, x1, y0, y1); nodes inside may carry f."""
    boxes: tuple

    def on(self, grid):
        X, Y = grid.mesh()
        m = np.zeros(X.shape, dtype=bool)
        for x0, x1, y0, y1 in self.boxes:
            m |= (X >= x0) & (X <= x1) & (Y >= y0) & (Y <= y1)
        m &= ~grid.boundary
        return m


@dataclass(frozen=True)
class ProblemSpec:
    Lx: float
    Ly: float
    T: float
    coefficients: CoefficientSet
    u0: Callable
    p0: Callable
    U: Callable
    P: Callable
    beta1: float
    beta2: float
    q0: float
    well_mask: Optional[WellMask] = None

    def __post_init__(self):
        if not 1.0 < self.q0 < 2.0:
            raise ConfigError("q0 must lie in (1,2)", key="q0")
        if not self.beta1 > 0:
            raise ConfigError("beta1 must be positive", key="beta1")
        if not self.beta2 > 0:
            raise ConfigError("beta2 must be positive", key="beta2")
        if not (self.Lx > 0 and self.Ly > 0 and self.T > 0):
            raise ConfigError("Lx, Ly and T must be positive")

    def mask(self, grid):
        """Boolean control mask on ``grid``; interior nodes only."""
        if self.well_mask is None:
            return ~grid.boundary
        return self.well_mask.on(grid)

    def targets(self, grid, dt, nt):
        """Sample U and P at t_n = n dt, n = 0..nt; arrays of shape (nt+1, nx+2, ny+2)."""
        X, Y = grid.mesh()
        U = np.stack([_field(self.U, X, Y, n * dt) for n in range(nt + 1)])
        P = np.stack([_field(self.P, X, Y, n * dt) for n in range(nt + 1)])
        return U, P


def _field(gen, X, Y, t):
    return np.broadcast_to(np.asarray(gen(X, Y, t), dtype=float), X.shape)


# ---------------------------------------------------------------------------
# hypothesis validation
# ---------------------------------------------------------------------------

@dataclass
class Clause:
    name: str
    holds: bool
    margin: float
    witness: float


@dataclass
class DerivativeCheck:
    law: str
    max_error: float
    at: float


@dataclass
class ValidationReport:
    clauses: list
    derivatives: list
    tol: float
    notes: list = field(default_factory=list)

    @property
    def derivative_error(self):
        return max(c.max_error for c in self.derivatives)

    @property
    def passed(self):
        return all(c.holds for c in self.clauses) and self.derivative_error <= self.tol

    def failed_clauses(self):
        return [c for c in self.clauses if not c.holds]

    def as_dict(self):
        return {
            "passed": self.passed,
            "tol": self.tol,
            "clauses": [vars(c) for c in self.clauses],
            "derivatives": [vars(c) for c in self.derivatives],
            "notes": list(self.notes),
        }


AMBIGUITY_NOTE = (
    "c1 is checked only as a lower bound of d and c2 only as an upper bound of phi; "
    "whether c1 also bounds phi from below is left open by the hypothesis statement"
)


def _eval(law, r, name):
    with np.errstate(all="ignore"):
        v = np.asarray(law(r), dtype=float)
    v = np.broadcast_to(v, r.shape)
    bad = ~np.isfinite(v)
    if bad.any():
        k = int(np.argmax(bad))
        raise EvaluationError(f"law '{name}' is not finite at r={float(r[k])!r}")
    return v


def validate_hypotheses(coeffs, range=None, n_samples=10001, tol=1e-6):
    """Sample the coefficient laws and check the structural bounds on them.

    Each bound becomes a :class:`Clause` whose ``margin`` is the worst
    sampled slack (negative when violated) and ``witness`` the sample point
    realising it.  Derivative laws are compared against centred differences
    of the base laws.
    """
    lo, hi = coeffs.validation_range if range is None else range
    if n_samples < 2:
        raise ValueError("n_samples must be >= 2")
    if not tol > 0:
        raise ValueError("tol must be positive")
    if not hi > lo:
        raise ValueError("validation range is degenerate")
    r = np.linspace(lo, hi, int(n_samples))

    d = _eval(coeffs.d, r, "d")
    dd = _eval(coeffs.dd, r, "dd")
    phi = _eval(coeffs.phi, r, "phi")
    dphi = _eval(coeffs.dphi, r, "dphi")
    d2phi = _eval(coeffs.d2phi, r, "d2phi")
    _eval(coeffs.g, r, "g")  # finiteness only; g carries no bound
    dg = _eval(coeffs.dg, r, "dg")

    def lower(name, values, bound):
        k = int(np.argmin(values))
        margin = float(values[k] - bound)
        return Clause(name, margin >= 0, margin, float(r[k]))

    def upper(name, values, bound):
        k = int(np.argmax(values))
        margin = float(bound - values[k])
        return Clause(name, margin >= 0, margin, float(r[k]))

    clauses = [
        lower("d >= c1", d, coeffs.c1),
        upper("phi <= c2", phi, coeffs.c2),
        upper("|d'| <= c3", np.abs(dd), coeffs.c3),
        upper("|phi'| <= c3", np.abs(dphi), coeffs.c3),
        upper("|phi''| <= c3", np.abs(d2phi), coeffs.c3),
        lower("phi' >= delta_phi", dphi, coeffs.delta_phi),
    ]
    if coeffs.c1 <= 0:
        clauses.append(Clause("c1 > 0", False, coeffs.c1, float("nan")))

    e1, e2 = 1e-5, 1e-4

    def central(law, name):
        return (_eval(law, r + e1, name) - _eval(law, r - e1, name)) / (2 * e1)

    def second(law, name):
        return (_eval(law, r + e2, name) - 2 * _eval(law, r, name)
                + _eval(law, r - e2, name)) / e2 ** 2

    def check(label, supplied, reference):
        err = np.abs(supplied - reference)
        k = int(np.argmax(err))
        return DerivativeCheck(label, float(err[k]), float(r[k]))

    derivatives = [
        check("dphi", dphi, central(coeffs.phi, "phi")),
        check("d2phi", d2phi, second(coeffs.phi, "phi")),
        check("dg", dg, central(coeffs.g, "g")),
        check("dd", dd, central(coeffs.d, "d")),
    ]
    return ValidationReport(clauses, derivatives, tol, notes=[AMBIGUITY_NOTE])


# ---------------------------------------------------------------------------
# construction from a parsed configuration
# ---------------------------------------------------------------------------

MANDATORY = {
    "domain": ("Lx", "Ly", "T"),
    "coefficients": ("phi", "g", "d", "c1", "c2", "c3", "delta_phi"),
    "initial": ("u0", "p0"),
    "cost": ("beta1", "beta2", "q0"),
}


def build_problem(config):
    """Build a :class:`ProblemSpec` from a parsed configuration.

    Raises :class:`ConfigError` naming the offending key.
    """
    for section, keys in MANDATORY.items():
        for key in keys:
            if not config.has(section, key):
                raise ConfigError(f"missing mandatory key [{section}] {key}", key=key)

    Lx = config.get_float("domain", "Lx")
    Ly = config.get_float("domain", "Ly")
    T = config.get_float("domain", "T")

    def law(key):
        name, params = config.get_spec("coefficients", key)
        try:
            return make_law(name, **params)
        except ConfigError as exc:
            raise ConfigError(str(exc), key=key, line=config.line("coefficients", key))

    rng = config.get_floats("coefficients", "range", default=(-1.0, 1.0))
    if len(rng) != 2:
        raise ConfigError("range takes two numbers", key="range",
                          line=config.line("coefficients", "range"))
    coeffs = CoefficientSet.from_laws(
        law("phi"), law("g"), law("d"),
        c1=config.get_float("coefficients", "c1"),
        c2=config.get_float("coefficients", "c2"),
        c3=config.get_float("coefficients", "c3"),
        delta_phi=config.get_float("coefficients", "delta_phi"),
        validation_range=rng,
    )
    for key in ("c1", "c3", "delta_phi"):
        if not getattr(coeffs, key) > 0:
            raise ConfigError(f"{key} must be positive", key=key,
                              line=config.line("coefficients", key))

    def spatial(section, key, default="zero"):
        name, params = config.get_spec(section, key, default=default)
        try:
            return make_generator(name, Lx=Lx, Ly=Ly, **params)
        except ConfigError as exc:
            raise ConfigError(str(exc), key=key, line=config.line(section, key))

    def temporal(section, key):
        name, params = config.get_spec(section, key, default="one")
        try:
            return make_time_factor(name, **params)
        except ConfigError as exc:
            raise ConfigError(str(exc), key=key, line=config.line(section, key))

    u0 = spatial("initial", "u0")
    p0 = spatial("initial", "p0")
    U = Separable(spatial("targets", "U"), temporal("targets", "U_time"))
    P = Separable(spatial("targets", "P"), temporal("targets", "P_time"))

    well_mask = None
    boxes = config.get("wells", "boxes", default=None)
    if boxes is not None and boxes.strip().lower() != "all":
        parsed = []
        for chunk in boxes.split(";"):
            vals = chunk.split()
            try:
                box = tuple(float(v) for v in vals)
            except ValueError:
                raise ConfigError(f"malformed number in box '{chunk.strip()}'", key="boxes",
                                  line=config.line("wells", "boxes"))
            if len(box) != 4:
                raise ConfigError("each box needs x0 x1 y0 y1", key="boxes",
                                  line=config.line("wells", "boxes"))
            parsed.append(box)
        well_mask = WellMask(tuple(parsed))

    try:
        problem = ProblemSpec(
            Lx=Lx, Ly=Ly, T=T, coefficients=coeffs, u0=u0, p0=p0, U=U, P=P,
            beta1=config.get_float("cost", "beta1"),
            beta2=config.get_float("cost", "beta2"),
            q0=config.get_float("cost", "q0"),
            well_mask=well_mask,
        )
    except ConfigError as exc:
        if exc.key is not None and exc.line is None:
            sec = "cost" if exc.key in ("q0", "beta1", "beta2") else "domain"
            raise ConfigError(str(exc).split(" (")[0], key=exc.key,
                              line=config.line(sec, exc.key)) from None
        raise
    check_boundary_values(problem)
    return problem


def check_boundary_values(problem, n_probe=33):
    """Raise unless u0 and p0 vanish on the boundary of a probe grid."""
    x = np.linspace(0.0, problem.Lx, n_probe)
    y = np.linspace(0.0, problem.Ly, n_probe)
    bx = np.concatenate([x, x, np.zeros(n_probe), np.full(n_probe, problem.Lx)])
    by = np.concatenate([np.zeros(n_probe), np.full(n_probe, problem.Ly), y, y])
    scale = max(problem.Lx, problem.Ly)
    for key, gen in (("u0", problem.u0), ("p0", problem.p0)):
        vals = np.asarray(gen(bx, by), dtype=float)
        if not np.all(np.abs(vals) <= 1e-12 * max(1.0, scale)):
            raise ConfigError(f"{key} must vanish on the boundary "
                              f"(max |value| {np.max(np.abs(vals)):.3e})", key=key)
