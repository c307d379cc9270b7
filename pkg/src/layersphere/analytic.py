"""Frequency-domain Green's function of a point source in a layered sphere.

The field is expanded in Legendre polynomials of the angle between source and
observer,

    G(r | r0; w) = sum_n (2n+1)/(4 pi) P_n(cos gamma) t_n(r, w),

where the radial functions t_n solve the spherical Bessel equation with
wavenumber k = i sigma, sigma = sqrt((k_deg + i w) / D), in every layer.  The
layer holding the source is split at r0 into two segments.  Each segment
carries at most two basis functions, normalised so that neither can overflow:

    regular   p(r) = j_n(k r) / j_n(k b)   (b = outer radius of the segment)
    outgoing  q(r) = h_n(k r) / h_n(k a)   (a = inner radius of the segment)

The innermost segment has no outgoing part and the unbounded exterior no
regular part, so the interface system always has size 2 (N + 1) for N finite
layers.  Coefficients are labelled with the usual A/B/C/E lettering; note that
B and E multiply the normalised Hankel function rather than y_n
(``RadialSolution.jy_coefficients`` converts to the j/y basis).

The time-domain convention is c(t) = 1/(2 pi) int G(w) e^{+i w t} dw, i.e.
``d/dt -> i w``.  Damping (a uniform extra decay rate) is applied by adding
it to every layer's degradation rate, which evaluates G at w - i * damping.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import roots_jacobi

from .medium import LayerStack, SourceSpec, ValidationError, cos_angle_between
from .specfun import legendre_all, legendre_p, log_spherical_h, log_spherical_j

N_MAX = 200
TRUNCATION_TOL = 1e-10
COND_LIMIT = 1e12
CENTRE_OFFSET = 1e-12
ROUNDOFF = 1e-12  # relative accuracy of the log-form Bessel tables, with margin


class SingularSystemError(RuntimeError):
    pass


class SeriesNotConvergedError(RuntimeError):
    def __init__(self, message, last_term):
        super().__init__(message)
        self.last_term = last_term


def sigma(degradation, omega, diffusion):
    """Complex decay constant sqrt((k + i w) / D), principal branch."""
    d = np.asarray(diffusion, dtype=float)
    if np.any(d <= 0):
        raise ValidationError("diffusion coefficient must be positive")
    return np.sqrt((np.asarray(degradation) + 1j * np.asarray(omega)) / d)


def wavenumber(sig):
    """k = i sigma; Im k >= 0 so that h_n(k r) decays at infinity."""
    return 1j * np.asarray(sig)


@dataclass(frozen=True)
class Observation:
    """Observation point in spherical coordinates; ``radius > 0`` means a ball average."""

    r: float
    theta: float = math.pi / 2
    phi: float = 0.0
    radius: float = 0.0
    name: str = ""

    @property
    def cartesian(self):
        st = math.sin(self.theta)
        return np.array(
            [self.r * st * math.cos(self.phi), self.r * st * math.sin(self.phi),
             self.r * math.cos(self.theta)]
        )


@dataclass(frozen=True)
class _Segment:
    inner: float
    outer: float
    layer: int
    has_regular: bool
    has_outgoing: bool


def _segments(stack: LayerStack, r0: float) -> list[_Segment]:
    p = stack.locate_layer(r0)
    radii = list(stack.radii) + [math.inf]
    bounds = []
    for i in range(len(stack.layers)):
        if i == p:
            bounds.append((radii[i], r0, i))
            bounds.append((r0, radii[i + 1], i))
        else:
            bounds.append((radii[i], radii[i + 1], i))
    return [
        _Segment(a, b, i, has_regular=math.isfinite(b), has_outgoing=a > 0)
        for a, b, i in bounds
    ]


def _labels(segs: list[_Segment], source_layer: int) -> list[str]:
    labels = []
    seen_source = False
    for s in segs:
        name = s.layer + 1
        if s.layer == source_layer and seen_source:
            reg, out = "C", ("E" if s.has_regular else "C")
        else:
            reg, out = "A", ("B" if s.has_regular else "A")
        seen_source = seen_source or s.layer == source_layer
        if s.has_regular:
            labels.append(f"{reg}{name}")
        if s.has_outgoing:
            labels.append(f"{out}{name}")
    return labels


@dataclass
class RadialSystem:
    """Row-equilibrated interface system for one order and a batch of frequencies."""

    n: int
    omega: np.ndarray
    matrix: np.ndarray  # (n_omega, M, M)
    rhs: np.ndarray  # (n_omega, M)
    labels: list[str]
    row_kind: list[str]


@dataclass
class RadialSolution:
    n: int
    omega: np.ndarray
    coefficients: np.ndarray  # (n_omega, M)
    labels: list[str]
    residual: np.ndarray  # relative residual per frequency
    condition: np.ndarray
    _solver: "BlockSolver"

    def value(self, r, side: str = "auto"):
        return self._solver.radial(self.n, r, side=side)

    def derivative(self, r, side: str = "auto"):
        return self._solver.radial(self.n, r, derivative=True, side=side)

    def jy_coefficients(self):
        """Coefficients in the unnormalised j_n / y_n (and h_n outside) basis."""
        return self._solver.jy_coefficients(self.n)


class BlockSolver:
    """Radial problem for a fixed stack, source radius and frequency batch.

    Log-form Bessel tables for orders 0..nmax are computed once, at the
    segment boundaries and at any extra evaluation radii, and shared by all
    orders.  Solved coefficients are cached per order.
    """

    def __init__(
        self,
        stack: LayerStack,
        r0: float,
        omega,
        damping: float = 0.0,
        nmax: int = N_MAX,
        eval_radii: Sequence[float] = (),
    ):
        SourceSpec(r0).check_against(stack)
        self.stack = stack
        if r0 == 0:
            # a source at the centre radiates only n = 0; a tiny offset keeps
            # the two-segment layout while n >= 1 terms scale like (r0/r)^n
            r0 = CENTRE_OFFSET * float(stack.interfaces[0] if stack.n_finite else 1.0)
        self.r0 = float(r0)
        self.omega = np.atleast_1d(np.asarray(omega, dtype=float))
        self.damping = float(damping)
        self.nmax = int(nmax)
        self.source_layer = stack.locate_layer(self.r0)
        self.segs = _segments(stack, self.r0)
        self.labels = _labels(self.segs, self.source_layer)
        self.size = len(self.labels)
        if self.size != 2 * (stack.n_finite + 1):
            raise AssertionError("unexpected unknown count")

        kdeg = stack.degradation + self.damping
        sig = sigma(kdeg[:, None], self.omega[None, :], stack.diffusion[:, None])
        if np.any(sig == 0):
            raise SingularSystemError(
                "sigma = 0 (no degradation, zero frequency); evaluate at a small "
                "positive frequency or add damping"
            )
        self.k = wavenumber(sig)  # (n_layers, n_omega)

        # radii at which tables are needed, per segment
        self._tables: list[dict[float, tuple]] = []
        extra = [float(r) for r in eval_radii]
        for si, s in enumerate(self.segs):
            radii = {x for x in (s.inner, s.outer) if math.isfinite(x)}
            for r in extra:
                if self._segment_of(r) == si:
                    radii.add(r)
            self._tables.append({})
            for r in sorted(radii):
                self._add_table(si, r)
        self._cache: dict[int, RadialSolution] = {}

    # -- tables ------------------------------------------------------------
    def _add_table(self, si: int, r: float) -> None:
        s = self.segs[si]
        z = self.k[s.layer] * r
        logj, dlogj = log_spherical_j(self.nmax, z)
        if r > 0:
            logh, dlogh = log_spherical_h(self.nmax, z)
        else:
            logh = dlogh = None
        self._tables[si][r] = (logj, dlogj, logh, dlogh)

    def _table(self, si: int, r: float):
        t = self._tables[si].get(r)
        if t is None:
            self._add_table(si, r)
            t = self._tables[si][r]
        return t

    def _segment_of(self, r: float, side: str = "auto") -> int:
        if r < 0:
            raise ValidationError("radius must be non-negative")
        for si, s in enumerate(self.segs):
            if side == "inner" and s.inner < r <= s.outer:
                return si
            if side != "inner" and s.inner <= r < s.outer:
                return si
        return len(self.segs) - 1

    def _basis(self, si: int, r: float, n: int):
        """Values and radial derivatives of (regular, outgoing) at r."""
        s = self.segs[si]
        k = self.k[s.layer]
        logj, dlogj, logh, dlogh = self._table(si, r)
        reg = dreg = out = dout = None
        if s.has_regular:
            ljb = self._table(si, s.outer)[0][:, n]
            reg = np.exp(logj[:, n] - ljb)
            dreg = k * dlogj[:, n] * reg if r > 0 else (
                k * np.exp(-ljb) / 3.0 if n == 1 else np.zeros_like(reg)
            )
        if s.has_outgoing:
            lha = self._table(si, s.inner)[2][:, n]
            out = np.exp(logh[:, n] - lha)
            dout = k * dlogh[:, n] * out
        return reg, dreg, out, dout

    def free_radial(self, n: int, r: float):
        """Radial term of the unbounded kernel of the source layer, (i k / D_p) j_n(k r<) h_n(k r>)."""
        p = self.source_layer
        k = self.k[p]
        inner_seg = next(i for i, s in enumerate(self.segs) if s.layer == p)
        outer_seg = inner_seg + 1
        if r < self.r0:
            lj = self._table(self._segment_of(r), r)[0][:, n]
            lh = self._table(outer_seg, self.r0)[2][:, n]
        else:
            lj = self._table(inner_seg, self.r0)[0][:, n]
            lh = self._table(self._segment_of(r), r)[2][:, n]
        return 1j * k / self.stack.diffusion[p] * np.exp(lj + lh)

    def free_kernel(self, distance: float):
        """exp(-sigma_p d) / (4 pi D_p d) for the source layer."""
        p = self.source_layer
        sig = -1j * self.k[p]
        return np.exp(-sig * distance) / (4 * math.pi * self.stack.diffusion[p] * distance)

    def _columns(self):
        cols, c = [], 0
        for s in self.segs:
            reg = out = None
            if s.has_regular:
                reg, c = c, c + 1
            if s.has_outgoing:
                out, c = c, c + 1
            cols.append((reg, out))
        return cols

    # -- assembly ----------------------------------------------------------
    def system(self, n: int) -> RadialSystem:
        if n > self.nmax:
            raise ValueError(f"order {n} exceeds table size {self.nmax}")
        M, W = self.size, self.omega.size
        A = np.zeros((W, M, M), dtype=complex)
        b = np.zeros((W, M), dtype=complex)
        cols = self._columns()
        d = self.stack.diffusion
        kappa = self.stack.jump_constants
        kinds = []
        row = 0
        for si in range(len(self.segs) - 1):
            left, right = self.segs[si], self.segs[si + 1]
            rho = left.outer
            lv = self._basis(si, rho, n)
            rv = self._basis(si + 1, rho, n)
            if left.layer == right.layer:
                # source point: r0^2 (t'(r0-) - t'(r0+)) = 1/D_p, t continuous
                wd_l = wd_r = rho * rho
                cl, cr = 1.0, 1.0
                b[:, row] = 1.0 / d[left.layer]
                kinds += ["source-derivative", "source-continuity"]
            else:
                # flux continuity and partition jump c_i = kappa_i c_{i+1}
                wd_l, wd_r = d[left.layer], d[right.layer]
                cl, cr = 1.0, kappa[left.layer]
                kinds += ["flux", "jump"]
            for (col, val, der), sign in (
                ((cols[si][0], lv[0], lv[1]), 1.0),
                ((cols[si][1], lv[2], lv[3]), 1.0),
                ((cols[si + 1][0], rv[0], rv[1]), -1.0),
                ((cols[si + 1][1], rv[2], rv[3]), -1.0),
            ):
                if col is None:
                    continue
                wd = wd_l if sign > 0 else wd_r
                cc = cl if sign > 0 else cr
                A[:, row, col] = sign * wd * der
                A[:, row + 1, col] = sign * cc * val
            row += 2
        scale = np.max(np.abs(A), axis=2)
        scale = np.where(scale > 0, scale, 1.0)
        A /= scale[:, :, None]
        b /= scale
        return RadialSystem(n, self.omega, A, b, list(self.labels), kinds)

    def solve(self, n: int) -> RadialSolution:
        sol = self._cache.get(n)
        if sol is not None:
            return sol
        sysm = self.system(n)
        A, b = sysm.matrix, sysm.rhs
        try:
            inv = np.linalg.inv(A)
        except np.linalg.LinAlgError as exc:
            raise SingularSystemError(f"singular interface system at n={n}") from exc
        cond = np.linalg.norm(A, 1, axis=(1, 2)) * np.linalg.norm(inv, 1, axis=(1, 2))
        bad = ~np.isfinite(cond) | (cond > COND_LIMIT)
        if np.any(bad):
            w = self.omega[np.argmax(bad)]
            raise SingularSystemError(
                f"ill-conditioned interface system (cond={np.max(cond):.3g}) at n={n}, omega={w}"
            )
        x = np.linalg.solve(A, b[..., None])[..., 0]
        res = np.abs(np.einsum("wij,wj->wi", A, x) - b)
        scale = np.einsum("wij,wj->wi", np.abs(A), np.abs(x)) + np.abs(b)
        rel = np.max(res, axis=1) / np.max(scale, axis=1)
        sol = RadialSolution(n, self.omega, x, list(self.labels), rel, cond, self)
        self._cache[n] = sol
        return sol

    # -- evaluation --------------------------------------------------------
    def radial(self, n: int, r: float, derivative: bool = False, side: str = "auto"):
        """t_n(r, w) (or dt_n/dr) over the frequency batch.

        ``side="inner"`` evaluates the limit from below at a boundary radius.
        """
        r = float(r)
        x = self.solve(n).coefficients
        si = self._segment_of(r, side)
        reg, dreg, out, dout = self._basis(si, r, n)
        creg, cout = self._columns()[si]
        total = np.zeros(self.omega.size, dtype=complex)
        if creg is not None:
            total = total + x[:, creg] * (dreg if derivative else reg)
        if cout is not None:
            total = total + x[:, cout] * (dout if derivative else out)
        return total

    def jy_coefficients(self, n: int):
        from .specfun import spherical_h, spherical_j

        x = self.solve(n).coefficients
        out = {}
        for si, (s, (creg, cout)) in enumerate(zip(self.segs, self._columns())):
            k = self.k[s.layer]
            A = np.zeros(self.omega.size, dtype=complex)
            B = np.zeros(self.omega.size, dtype=complex)
            H = np.zeros(self.omega.size, dtype=complex)
            if creg is not None:
                A = A + x[:, creg] / spherical_j(n, k * s.outer)
            if cout is not None:
                ha = spherical_h(n, k * s.inner)
                if s.has_regular:
                    A = A + x[:, cout] / ha
                    B = B + 1j * x[:, cout] / ha
                else:
                    H = x[:, cout] / ha
            out[si] = {"layer": s.layer, "inner": s.inner, "outer": s.outer, "j": A, "y": B, "h": H}
        return out

    def boundary_residuals(self, n: int) -> np.ndarray:
        """Relative mismatch of every interface/source condition, per frequency.

        Each condition is evaluated from the solved radial functions on both
        sides and divided by the largest one-sided term over all conditions.
        """
        d = self.stack.diffusion
        kappa = self.stack.jump_constants
        mism, terms = [], []
        for si in range(len(self.segs) - 1):
            left, right = self.segs[si], self.segs[si + 1]
            rho = left.outer
            vl = self.radial(n, rho, side="inner")
            vr = self.radial(n, rho)
            gl = self.radial(n, rho, derivative=True, side="inner")
            gr = self.radial(n, rho, derivative=True)
            if left.layer == right.layer:
                dp = d[left.layer]
                a1, b1 = rho * rho * (gl - gr), np.full_like(gl, 1.0 / dp)
                a2, b2 = vl, vr
            else:
                a1, b1 = d[left.layer] * gl, d[right.layer] * gr
                a2, b2 = vl, kappa[left.layer] * vr
            mism += [np.abs(a1 - b1), np.abs(a2 - b2)]
            terms += [np.maximum(np.abs(a1), np.abs(b1)), np.maximum(np.abs(a2), np.abs(b2))]
        mism = np.array(mism)
        terms = np.array(terms)
        # derivative rows and value rows have different units; normalise each
        # family by its own largest term
        rel = np.zeros_like(mism)
        for start in (0, 1):
            t = np.max(terms[start::2], axis=0)
            rel[start::2] = mism[start::2] / np.where(t > 0, t, 1.0)
        return rel


def assemble_system(stack: LayerStack, r0: float, n: int, omega, damping: float = 0.0):
    """Interface system for order n at one or more frequencies."""
    return BlockSolver(stack, r0, omega, damping=damping, nmax=n).system(n)


def solve_radial(stack: LayerStack, r0: float, n: int, omega, damping: float = 0.0):
    return BlockSolver(stack, r0, omega, damping=damping, nmax=n).solve(n)


# --------------------------------------------------------------------------
# Green's function
# --------------------------------------------------------------------------

def _ball_factor(x):
    """Ball average of a modified-Helmholtz field relative to its centre value."""
    x = np.asarray(x, dtype=complex)
    small = np.abs(x) < 1e-2
    xs = np.where(small, 1.0, x)
    with np.errstate(over="ignore", invalid="ignore"):
        full = 3.0 * (xs * np.cosh(xs) - np.sinh(xs)) / xs**3
    x2 = x * x
    series = 1 + x2 / 10 + x2 * x2 / 280 + x2 * x2 * x2 / 15120
    return np.where(small, series, full)


def ball_quadrature(n_radial: int = 4):
    """32-point ball rule (4 radial nodes x 8 cube-vertex directions).

    The radial nodes are Gauss-Jacobi for the weight 3 rho^2 on [0, 1], so
    radial polynomials up to degree 7 are integrated exactly; the cube
    vertices form a spherical 3-design.  Returns offsets on the unit ball and
    weights summing to 1.
    """
    x, wx = roots_jacobi(n_radial, 0.0, 2.0)
    rho = 0.5 * (x + 1.0)
    wr = 3.0 / 8.0 * wx
    dirs = np.array([[i, j, k] for i in (-1, 1) for j in (-1, 1) for k in (-1, 1)]) / math.sqrt(3)
    pts = (rho[:, None, None] * dirs[None, :, :]).reshape(-1, 3)
    w = (wr[:, None] * np.full(len(dirs), 1.0 / len(dirs))[None, :]).reshape(-1)
    return pts, w


def _cartesian_to_spherical(x):
    r = float(np.linalg.norm(x))
    if r == 0:
        return 0.0, 0.0, 0.0
    theta = math.acos(max(-1.0, min(1.0, x[2] / r)))
    phi = math.atan2(x[1], x[0]) % (2 * math.pi)
    return r, theta, phi


class GreensEvaluator:
    """Evaluates G at many observation points for one source and frequency batch.

    ``cache=True`` shares solved radial coefficients across points; the result
    is bit-identical either way.
    """

    def __init__(
        self,
        stack: LayerStack,
        source: SourceSpec,
        omega,
        damping: float = 0.0,
        nmax: int = N_MAX,
        tol: float = TRUNCATION_TOL,
        cache: bool = True,
    ):
        source.check_against(stack)
        self.stack, self.source = stack, source
        self.omega = np.atleast_1d(np.asarray(omega, dtype=float))
        self.damping, self.nmax, self.tol, self.cache = float(damping), int(nmax), tol, cache
        self._solver = None
        self.terms_used: list[int] = []

    def _block(self, r):
        if self.cache:
            if self._solver is None:
                self._solver = BlockSolver(
                    self.stack, self.source.r, self.omega, self.damping, self.nmax
                )
            return self._solver
        return BlockSolver(self.stack, self.source.r, self.omega, self.damping, self.nmax, [r])

    def point(self, r: float, theta: float, phi: float):
        src = self.source
        if np.allclose(
            _sph(r, theta, phi), src.cartesian, rtol=0, atol=1e-12 * max(1.0, src.r)
        ):
            raise ValidationError("observation point coincides with the source")
        cosg = cos_angle_between(theta, phi, src.theta, src.phi)
        pn = legendre_all(self.nmax, cosg)
        block = self._block(r)
        # In the source layer the bare point-source kernel is summed in closed
        # form and only the (geometrically convergent) reflected part is
        # expanded; otherwise the series converges slowly near r = r0.
        same_layer = self.stack.locate_layer(r) == block.source_layer
        if same_layer:
            dist = float(np.linalg.norm(_sph(r, theta, phi) - src.cartesian))
            total = block.free_kernel(dist)
        else:
            total = np.zeros(self.omega.size, dtype=complex)
        small = np.zeros((3, self.omega.size), dtype=bool)
        # ref tracks the size of the pieces before cancellation; a term below
        # its rounding level cannot change the sum meaningfully
        ref = np.zeros(self.omega.size)
        last = None
        for n in range(self.nmax + 1):
            tn = block.radial(n, r)
            weight = (2 * n + 1) / (4 * math.pi) * pn[n]
            ref = np.maximum(ref, np.abs(weight * tn))
            if same_layer:
                tn = tn - block.free_radial(n, r)
            term = weight * tn
            total = total + term
            mag = np.abs(term)
            small = np.roll(small, 1, axis=0)
            small[0] = mag <= np.maximum(self.tol * np.abs(total), ROUNDOFF * ref)
            last = mag
            if n >= 2 and np.all(small):
                self.terms_used.append(n + 1)
                return total
        raise SeriesNotConvergedError(
            f"Legendre series not converged after {self.nmax + 1} terms "
            f"(last term {np.max(last):.3g})",
            float(np.max(last)),
        )

    def ball_is_simple(self, obs: Observation) -> bool:
        """True if the ball lies in one layer and excludes the source."""
        if obs.radius <= 0:
            return True
        c = obs.cartesian
        if np.linalg.norm(c - self.source.cartesian) <= obs.radius:
            return False
        lo, hi = obs.r - obs.radius, obs.r + obs.radius
        if lo < 0:
            return False
        return self.stack.locate_layer(lo) == self.stack.locate_layer(hi) == self.stack.locate_layer(obs.r) and not np.any(
            (self.stack.interfaces > lo) & (self.stack.interfaces < hi)
        )

    def observe(self, obs: Observation, quadrature: bool | None = None):
        """G at a point, or averaged over the ball of radius ``obs.radius``."""
        if obs.radius <= 0:
            return self.point(obs.r, obs.theta, obs.phi)
        if quadrature is None:
            quadrature = not self.ball_is_simple(obs)
        if not quadrature:
            layer = self.stack.locate_layer(obs.r)
            sig = sigma(
                self.stack.degradation[layer] + self.damping,
                self.omega,
                self.stack.diffusion[layer],
            )
            return self.point(obs.r, obs.theta, obs.phi) * _ball_factor(sig * obs.radius)
        pts, w = ball_quadrature()
        c = obs.cartesian
        total = np.zeros(self.omega.size, dtype=complex)
        for p, wi in zip(pts, w):
            r, th, ph = _cartesian_to_spherical(c + obs.radius * p)
            total = total + wi * self.point(r, th, ph)
        return total


def _sph(r, theta, phi):
    st = math.sin(theta)
    return np.array([r * st * math.cos(phi), r * st * math.sin(phi), r * math.cos(theta)])


def _lift_zero_frequency(stack, omega, damping, r_max=0.0):
    """Replace w = 0 by a tiny positive value when some layer has sigma(0) = 0."""
    if damping > 0 or np.all(stack.degradation > 0):
        return omega
    floor = 1e-24 * float(np.min(stack.diffusion)) / max(stack.outer_radius, r_max, 1.0) ** 2
    return np.where(omega == 0, floor, omega)


def greens_frequency(
    stack: LayerStack,
    source: SourceSpec,
    obs,
    omega,
    damping: float = 0.0,
    nmax: int = N_MAX,
):
    """G(r | r0; w) at one observation point.

    ``obs`` is an ``Observation`` or an (r, theta, phi) tuple.  With no
    degradation anywhere, w = 0 is replaced by a tiny positive frequency (the
    static limit 1/(4 pi D d) in a homogeneous medium).
    """
    if not isinstance(obs, Observation):
        obs = Observation(*obs)
    w = _lift_zero_frequency(stack, np.atleast_1d(np.asarray(omega, dtype=float)), damping, obs.r)
    val = GreensEvaluator(stack, source, w, damping, nmax).observe(obs)
    if source.t0:
        val = val * np.exp(-1j * (w - 1j * damping) * source.t0)
    return val[0] if np.ndim(omega) == 0 else val


def greens_frequency_double_sum(
    stack: LayerStack,
    source: SourceSpec,
    obs,
    omega: float,
    nterms: int,
    damping: float = 0.0,
):
    """Literal double sum over (m, n) with H_mn = lambda_m (2n+1)/2 (n-m)!/(n+m)! P_n^m(cos th0).

    Kept as an independent check of the Legendre-addition shortcut used by
    ``greens_frequency``; truncated at n < nterms.
    """
    if not isinstance(obs, Observation):
        obs = Observation(*obs)
    solver = BlockSolver(stack, source.r, [omega], damping, nmax=nterms)
    x0, x = math.cos(source.theta), math.cos(obs.theta)
    total = 0j
    for n in range(nterms):
        tn = solver.radial(n, obs.r)[0]
        for m in range(n + 1):
            lam = 1 / (2 * math.pi) if m == 0 else 1 / math.pi
            ratio = math.factorial(n - m) / math.factorial(n + m)  # exact integers, one rounding
            h = lam * (2 * n + 1) / 2 * ratio * legendre_p(n, m, x0)
            total += h * tn * math.cos(m * (obs.phi - source.phi)) * legendre_p(n, m, x)
    return total


def greens_frequency_single_sum(
    stack: LayerStack,
    source: SourceSpec,
    obs,
    omega: float,
    nterms: int,
    damping: float = 0.0,
):
    """Collapsed sum truncated at exactly ``nterms`` orders (for comparisons)."""
    if not isinstance(obs, Observation):
        obs = Observation(*obs)
    solver = BlockSolver(stack, source.r, [omega], damping, nmax=nterms)
    cosg = cos_angle_between(obs.theta, obs.phi, source.theta, source.phi)
    pn = legendre_all(nterms, cosg)
    total = 0j
    for n in range(nterms):
        total += (2 * n + 1) / (4 * math.pi) * pn[n] * solver.radial(n, obs.r)[0]
    return total


def free_space_greens(d, omega, diffusion, degradation=0.0):
    """exp(-sigma d) / (4 pi D d), the unbounded homogeneous kernel."""
    sig = sigma(degradation, omega, diffusion)
    return np.exp(-sig * d) / (4 * math.pi * diffusion * d)


# --------------------------------------------------------------------------
# sweeps
# --------------------------------------------------------------------------

@dataclass
class SpectralSweep:
    omega: np.ndarray
    values: np.ndarray  # (n_obs, n_omega)
    observations: list[Observation]
    damping: float
    terms_used: list[int]

    def hermitian(self):
        """(omega, values) over the symmetric grid, G(-w) = conj(G(w))."""
        pos = self.omega > 0
        w = np.concatenate([-self.omega[pos][::-1], self.omega])
        v = np.concatenate([np.conj(self.values[:, pos][:, ::-1]), self.values], axis=1)
        return w, v


def spectral_sweep(
    stack: LayerStack,
    source: SourceSpec,
    observations,
    omega,
    damping: float = 0.0,
    nmax: int = N_MAX,
    cache: bool = True,
    chunk: int = 256,
) -> SpectralSweep:
    """G over a one-sided frequency grid for several observation points.

    Frequencies are processed in fixed-size chunks; within a chunk the radial
    solves for each order are shared by all observation points.
    """
    obs = [o if isinstance(o, Observation) else Observation(*o) for o in observations]
    omega = np.asarray(omega, dtype=float)
    if np.any(omega < 0):
        raise ValueError("spectral_sweep expects a one-sided (non-negative) grid")
    values = np.zeros((len(obs), omega.size), dtype=complex)
    used: list[int] = []
    for start in range(0, omega.size, chunk):
        rmax = max([source.r] + [o.r + o.radius for o in obs])
        w = _lift_zero_frequency(stack, omega[start:start + chunk], damping, rmax)
        ev = GreensEvaluator(stack, source, w, damping, nmax, cache=cache)
        for i, o in enumerate(obs):
            values[i, start:start + chunk] = ev.observe(o)
        used.extend(ev.terms_used)
    if source.t0:
        values *= np.exp(-1j * (omega - 1j * damping) * source.t0)[None, :]
    return SpectralSweep(omega, values, obs, damping, used)
