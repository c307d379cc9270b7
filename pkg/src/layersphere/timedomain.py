"""Time-domain impulse responses from frequency-domain sweeps.

Convention: c(t) = (1/T) sum_m G(w_m) e^{+i w_m t}, w_m = 2 pi m / T, with the
negative frequencies filled in by Hermitian symmetry.  A plain DFT of a
diffusive response aliases its slow t^{-3/2} tail back into the window, so by
default the spectrum is sampled on the shifted line w - i a (equivalently an
extra uniform decay rate a in every layer) and the result is multiplied by
e^{a t}.  Wrapped copies are then suppressed by e^{-a T}.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .analytic import BlockSolver, Observation, spectral_sweep
from .medium import LayerStack, SourceSpec

DEFAULT_N_TIME = 4096
DEFAULT_DAMPING_PRODUCT = 14.0  # a * T; wrap-around leakage ~ e^{-aT}
TAIL_FRACTION = 0.05
TAIL_LIMIT = 0.01


class TailWarning(UserWarning):
    pass


@dataclass(frozen=True)
class TransformGrid:
    window: float
    n_time: int = DEFAULT_N_TIME
    damping: float = 0.0

    def __post_init__(self):
        if not self.window > 0:
            raise ValueError("window must be positive")
        if self.n_time < 4 or self.n_time % 2:
            raise ValueError("n_time must be an even integer >= 4")
        if self.damping < 0:
            raise ValueError("damping must be non-negative")

    @property
    def omega(self) -> np.ndarray:
        """One-sided grid 2 pi m / T, m = 0..N/2."""
        return 2 * math.pi * np.arange(self.n_time // 2 + 1) / self.window

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_time) * (self.window / self.n_time)

    @classmethod
    def damped(cls, window, n_time=DEFAULT_N_TIME, product=DEFAULT_DAMPING_PRODUCT):
        return cls(window, n_time, product / window)


def free_peak_time(distance: float, diffusion: float) -> float:
    """argmax of exp(-d^2 / 4Dt) / (4 pi D t)^{3/2}, which is d^2 / (6 D)."""
    return distance * distance / (6.0 * diffusion)


def default_window(stack: LayerStack, source: SourceSpec, observations, factor: float = 8.0):
    """8 free-space peak times for the farthest observer at the slowest diffusivity."""
    d = max(
        float(np.linalg.norm(o.cartesian - source.cartesian)) for o in observations
    )
    return factor * free_peak_time(max(d, 1e-9), float(np.min(stack.diffusion)))


@dataclass
class TemporalCIR:
    """Concentration per released molecule [1/um^3] on a uniform time grid."""

    t: np.ndarray
    values: np.ndarray
    observation: Observation | None = None
    source: SourceSpec | None = None
    stack_digest: str = ""
    grid: TransformGrid | None = None
    imag_residual: float = 0.0
    tail_flag: bool = False
    notes: list[str] = field(default_factory=list)

    def to_csv(self, path) -> Path:
        """CSV (t, concentration) plus a JSON sidecar with grid and provenance."""
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t_s", "concentration_per_um3"])
            for ti, ci in zip(self.t, self.values):
                w.writerow([repr(float(ti)), repr(float(ci))])
        meta = {
            "schema_version": 1,
            "stack_digest": self.stack_digest,
            "grid": asdict(self.grid) if self.grid else None,
            "observation": asdict(self.observation) if self.observation else None,
            "source": asdict(self.source) if self.source else None,
            "imag_residual": self.imag_residual,
            "tail_flag": self.tail_flag,
            "notes": self.notes,
        }
        path.with_suffix(path.suffix + ".json").write_text(json.dumps(meta, indent=2))
        return path


def _dc_extrapolate(values: np.ndarray) -> np.ndarray:
    """Quadratic extrapolation to w = 0 from the three lowest nonzero bins."""
    return 3 * values[..., 1] - 3 * values[..., 2] + values[..., 3]


def inverse_transform(
    values,
    grid: TransformGrid,
    extrapolate_dc: bool = False,
    observation=None,
    source=None,
    stack_digest: str = "",
) -> TemporalCIR:
    """Real CIR from a one-sided spectrum sampled on ``grid.omega`` (shifted by the damping).

    ``extrapolate_dc`` replaces bin 0 by quadratic extrapolation, for
    undamped spectra whose w = 0 value was not evaluated directly.
    """
    g = np.array(values, dtype=complex)
    if g.shape[-1] != grid.n_time // 2 + 1:
        raise ValueError(f"expected {grid.n_time // 2 + 1} frequency bins, got {g.shape[-1]}")
    if extrapolate_dc:
        g[..., 0] = _dc_extrapolate(g)
    n, T = grid.n_time, grid.window
    # imaginary residual of the Hermitian completion: DC and Nyquist bins
    # must be real for the inverse to be exactly real
    scale = max(float(np.max(np.abs(g))), 1e-300)
    imag = max(abs(float(np.imag(g[..., 0]).max(initial=0))), abs(float(np.imag(g[..., -1]).max(initial=0))))
    t = grid.times
    cd = np.fft.irfft(g, n=n) * (n / T)
    # The tail check runs on the damped series: that is what wraps around,
    # so it measures the aliasing actually left in the result.
    peak = float(np.max(np.abs(cd))) if cd.size else 0.0
    tail = cd[..., int(math.floor((1 - TAIL_FRACTION) * n)):]
    flag = bool(peak > 0 and np.max(np.abs(tail)) > TAIL_LIMIT * peak)
    c = cd * np.exp(grid.damping * t) if grid.damping else cd
    cir = TemporalCIR(
        t, c, observation, source, stack_digest, grid, imag / scale, flag
    )
    if flag:
        cir.notes.append("tail: last 5% of the window exceeds 1% of the peak; lengthen the window")
        warnings.warn(cir.notes[-1], TailWarning, stacklevel=2)
    return cir


def compute_cirs(
    stack: LayerStack,
    source: SourceSpec,
    observations: Sequence[Observation],
    grid: TransformGrid | None = None,
    cache: bool = True,
) -> list[TemporalCIR]:
    """Sweep and invert for every observation point.

    Without an explicit grid each observer gets its own default window, so a
    receiver close to the source is not resolved on the time scale of a far one.
    """
    obs = [o if isinstance(o, Observation) else Observation(*o) for o in observations]
    if grid is None:
        return [
            compute_cirs(stack, source, [o], TransformGrid.damped(default_window(stack, source, [o])), cache)[0]
            for o in obs
        ]
    sweep = spectral_sweep(stack, source, obs, grid.omega, damping=grid.damping, cache=cache)
    undamped_static = grid.damping == 0 and np.any(stack.degradation == 0)
    return [
        inverse_transform(
            sweep.values[i], grid, extrapolate_dc=undamped_static,
            observation=o, source=source, stack_digest=stack.digest(),
        )
        for i, o in enumerate(obs)
    ]


def peak_metrics(cir: TemporalCIR):
    """(peak value, peak time, full width at half maximum)."""
    c = np.asarray(cir.values, dtype=float)
    t = np.asarray(cir.t, dtype=float)
    if c.size == 0 or not np.any(np.isfinite(c)):
        raise ValueError("empty CIR")
    i = int(np.argmax(c))
    peak = float(c[i])
    if peak <= 0 or np.ptp(c) <= 1e-12 * abs(peak):
        raise ValueError("flat or non-positive CIR has no peak")
    half = 0.5 * peak
    lo = i
    while lo > 0 and c[lo] > half:
        lo -= 1
    hi = i
    while hi < c.size - 1 and c[hi] > half:
        hi += 1

    def cross(a, b):
        if c[a] == c[b]:
            return t[a]
        return t[a] + (half - c[a]) * (t[b] - t[a]) / (c[b] - c[a])

    left = t[0] if c[lo] > half else cross(lo, lo + 1)
    right = t[-1] if c[hi] > half else cross(hi - 1, hi)
    return peak, float(t[i]), float(right - left)


def free_space_cir(t, distance: float, diffusion: float, degradation: float = 0.0):
    """exp(-d^2 / 4Dt - k t) / (4 pi D t)^{3/2}, zero at t <= 0."""
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    pos = t > 0
    tp = t[pos]
    out[pos] = np.exp(-distance**2 / (4 * diffusion * tp) - degradation * tp) / (
        4 * math.pi * diffusion * tp
    ) ** 1.5
    return out


def free_space_ball_cir(t, distance: float, radius: float, diffusion: float, nodes: int = 64):
    """Free-space CIR averaged over a ball of ``radius`` centred ``distance`` from the source.

    Uses the shell-average formula of the 3-D heat kernel integrated over the
    ball radius with Gauss-Legendre nodes.
    """
    t = np.asarray(t, dtype=float)
    if radius <= 0:
        return free_space_cir(t, distance, diffusion)
    x, w = np.polynomial.legendre.leggauss(nodes)
    rho = 0.5 * radius * (x + 1)
    wr = 0.5 * radius * w * 3 * rho**2 / radius**3
    out = np.zeros_like(t)
    pos = t > 0
    tp = t[pos][:, None]
    s = 4 * diffusion * tp
    # spherical mean of the kernel over a sphere of radius rho around the point
    a = np.exp(-((distance - rho) ** 2) / s)
    b = np.exp(-((distance + rho) ** 2) / s)
    shell = (a - b) * s / (4 * distance * rho) / (4 * math.pi * diffusion * tp) ** 1.5
    if distance <= radius:
        raise ValueError("ball must exclude the source")
    out[pos] = shell @ wr
    return out


def radial_amount(
    stack: LayerStack,
    source: SourceSpec,
    grid: TransformGrid,
    r_hi: float,
    r_lo: float = 0.0,
    n_radii: int = 400,
) -> tuple[np.ndarray, np.ndarray]:
    """Amount per released molecule in the shell r_lo <= r <= r_hi versus time.

    Only the n = 0 radial term survives the angular integral, so this needs
    t_0(r, w) on a radial grid; Gauss-Legendre panels are split at every
    interface and at the source radius so the kinks and jumps are resolved.
    """
    if not (0.0 <= r_lo < r_hi):
        raise ValueError("need 0 <= r_lo < r_hi")
    damping = grid.damping
    if damping <= 0:
        raise ValueError("radial integrals need a damped grid")
    inner = {float(source.r), *map(float, stack.interfaces)}
    breaks = sorted({r_lo, r_hi} | {b for b in inner if r_lo < b < r_hi})
    per = max(8, n_radii // (len(breaks) - 1))
    x, w = np.polynomial.legendre.leggauss(per)
    radii = np.concatenate([0.5 * (b - a) * (x + 1) + a for a, b in zip(breaks[:-1], breaks[1:])])
    weights = np.concatenate([0.5 * (b - a) * w for a, b in zip(breaks[:-1], breaks[1:])])
    omega = grid.omega
    spec = np.zeros(omega.size, dtype=complex)
    chunk = 256
    for start in range(0, omega.size, chunk):
        solver = BlockSolver(stack, source.r, omega[start:start + chunk], damping, nmax=0)
        acc = np.zeros(min(chunk, omega.size - start), dtype=complex)
        for r, wr in zip(radii, weights):
            acc += wr * r * r * solver.radial(0, r)
        spec[start:start + chunk] = acc
    if r_lo <= source.r < r_hi:
        # the released unit amount switches on at t = 0; that step is
        # inverted in closed form so only the smooth remainder goes through
        # the FFT
        step = 1.0 / (1j * omega + damping)
        with warnings.catch_warnings():
            # the remainder can be pure roundoff; a tail test relative to
            # its own peak means nothing there
            warnings.simplefilter("ignore", TailWarning)
            cir = inverse_transform(spec - step, grid)
        return cir.t, cir.values + 1.0
    cir = inverse_transform(spec, grid)
    return cir.t, cir.values


def radial_mass(stack, source, grid, r_ext: float, n_radii: int = 400):
    """Total amount 4 pi int c r^2 dr over the ball r <= r_ext."""
    return radial_amount(stack, source, grid, r_ext, 0.0, n_radii)
