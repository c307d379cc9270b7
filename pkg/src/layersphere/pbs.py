"""Particle-based Brownian simulation through a layered sphere.

Every molecule takes independent Gaussian steps with variance 2 D dt per axis,
D being the diffusivity of its current layer.  When a step crosses a layer
interface, the part of the displacement left after the crossing point is
scaled by sqrt(D_new / D_old); this repeats for every further crossing within
the same step.  Degradation is applied after the move with probability
1 - exp(-k dt), k taken from the layer at the end position.  Receivers are
transparent balls that count alive molecules (boundary inclusive).

Random numbers come from a counter-based generator: each draw is a hash of
(seed, particle index, counter), so results do not depend on how particles
are split across workers.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numba as nb
import numpy as np

from .medium import LayerStack, SourceSpec, ValidationError, spherical_to_cartesian

MAX_CROSSINGS = 64
_DRAWS_PER_STEP = 5  # four uniforms for three normals, one for degradation

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0


class TooManyCrossingsError(RuntimeError):
    pass


# --------------------------------------------------------------------------
# random numbers
# --------------------------------------------------------------------------

@nb.njit(cache=True, inline="always")
def _mix(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@nb.njit(cache=True)
def particle_key(seed, particle):
    """Stream key of one particle; distinct particles get unrelated streams."""
    s = _mix(np.uint64(seed) * _GAMMA + np.uint64(0x632BE59BD9B4E019))
    return _mix(s ^ _mix(np.uint64(particle) + _GAMMA))


@nb.njit(cache=True, inline="always")
def _uniform(key, counter):
    """Uniform on (0, 1]."""
    x = _mix(key + (np.uint64(counter) + np.uint64(1)) * _GAMMA)
    return (float(x >> _S11) + 1.0) * _INV53


@nb.njit(cache=True)
def _normals(key, step):
    base = step * _DRAWS_PER_STEP
    u1 = _uniform(key, base)
    u2 = _uniform(key, base + 1)
    u3 = _uniform(key, base + 2)
    u4 = _uniform(key, base + 3)
    r1 = math.sqrt(-2.0 * math.log(u1))
    r2 = math.sqrt(-2.0 * math.log(u3))
    return (
        r1 * math.cos(2.0 * math.pi * u2),
        r1 * math.sin(2.0 * math.pi * u2),
        r2 * math.cos(2.0 * math.pi * u4),
    )


@nb.njit(cache=True)
def _survival_draw(key, step):
    return _uniform(key, step * _DRAWS_PER_STEP + 4)


# --------------------------------------------------------------------------
# geometry
# --------------------------------------------------------------------------

@nb.njit(cache=True)
def _layer_of(r, radii):
    """0-based layer of radius r; a point on R_i belongs to the outer layer."""
    i = 0
    while i < radii.size and r >= radii[i]:
        i += 1
    return i


@nb.njit(cache=True)
def _walk(p, v, layer, radii, diff, out):
    """Move from p along v, rescaling the remainder at each interface.

    Writes the end point to ``out`` and returns (final layer, crossings);
    crossings = -1 signals more than MAX_CROSSINGS.
    """
    px, py, pz = p[0], p[1], p[2]
    vx, vy, vz = v[0], v[1], v[2]
    n_int = radii.size
    crossings = 0
    while True:
        a = vx * vx + vy * vy + vz * vz
        if a == 0.0:
            break
        b = px * vx + py * vy + pz * vz
        pp = px * px + py * py + pz * pz
        s_hit = 2.0
        target = layer
        # exit through the outer sphere of this layer: larger root
        if layer < n_int:
            R = radii[layer]
            c = pp - R * R
            disc = b * b - a * c
            if disc > 0.0:
                sq = math.sqrt(disc)
                # cancellation-free form of (-b + sq) / a
                s = -c / (b + sq) if b > 0.0 else (-b + sq) / a
                if s > 0.0 and s < s_hit:
                    s_hit = s
                    target = layer + 1
        # entry into the inner sphere: smaller root, only when moving inward
        if layer > 0 and b < 0.0:
            R = radii[layer - 1]
            c = pp - R * R
            disc = b * b - a * c
            if disc > 0.0:
                s = c / (-b + math.sqrt(disc))
                if s > 0.0 and s < s_hit:
                    s_hit = s
                    target = layer - 1
        if s_hit > 1.0:
            px += vx
            py += vy
            pz += vz
            break
        crossings += 1
        if crossings > MAX_CROSSINGS:
            out[0], out[1], out[2] = px, py, pz
            return layer, -1
        hx = px + s_hit * vx
        hy = py + s_hit * vy
        hz = pz + s_hit * vz
        scale = (1.0 - s_hit) * math.sqrt(diff[target] / diff[layer])
        vx *= scale
        vy *= scale
        vz *= scale
        # nudge off the interface along the direction of travel
        norm = math.sqrt(a)
        R = radii[layer] if target > layer else radii[layer - 1]
        eps = 1e-12 * max(1.0, R)
        px = hx + eps * v[0] / norm
        py = hy + eps * v[1] / norm
        pz = hz + eps * v[2] / norm
        layer = target
    out[0], out[1], out[2] = px, py, pz
    return layer, crossings


# --------------------------------------------------------------------------
# simulation kernel
# --------------------------------------------------------------------------

@nb.njit(cache=True, nogil=True)
def _simulate(
    first, count, seed, src, nsteps, dt, radii, diff, kdeg,
    rec_c, rec_r2, counts, inside, dead_diff,
):
    n_rec = rec_r2.size
    r_out2 = radii[-1] * radii[-1] if radii.size else -1.0
    sd = np.empty(diff.size)
    for i in range(diff.size):
        sd[i] = math.sqrt(2.0 * diff[i] * dt)
    pdie = np.empty(kdeg.size)
    for i in range(kdeg.size):
        pdie[i] = -math.expm1(-kdeg[i] * dt)
    p = np.empty(3)
    v = np.empty(3)
    out = np.empty(3)
    layer0 = _layer_of(math.sqrt(src[0] ** 2 + src[1] ** 2 + src[2] ** 2), radii)
    for ip in range(first, first + count):
        key = particle_key(seed, ip)
        p[0], p[1], p[2] = src[0], src[1], src[2]
        layer = layer0
        for j in range(n_rec):
            dx = p[0] - rec_c[j, 0]
            dy = p[1] - rec_c[j, 1]
            dz = p[2] - rec_c[j, 2]
            if dx * dx + dy * dy + dz * dz <= rec_r2[j]:
                counts[j, 0] += 1
        if p[0] * p[0] + p[1] * p[1] + p[2] * p[2] <= r_out2:
            inside[0] += 1
        for step in range(nsteps):
            g0, g1, g2 = _normals(key, step)
            s = sd[layer]
            v[0], v[1], v[2] = s * g0, s * g1, s * g2
            layer, nc = _walk(p, v, layer, radii, diff, out)
            if nc < 0:
                return ip
            p[0], p[1], p[2] = out[0], out[1], out[2]
            if pdie[layer] > 0.0 and _survival_draw(key, step) <= pdie[layer]:
                dead_diff[step + 1] += 1
                break
            for j in range(n_rec):
                dx = p[0] - rec_c[j, 0]
                dy = p[1] - rec_c[j, 1]
                dz = p[2] - rec_c[j, 2]
                if dx * dx + dy * dy + dz * dz <= rec_r2[j]:
                    counts[j, step + 1] += 1
            if p[0] * p[0] + p[1] * p[1] + p[2] * p[2] <= r_out2:
                inside[step + 1] += 1
    return -1


# --------------------------------------------------------------------------
# public types
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class PbsConfig:
    dt: float
    n_particles: int
    seed: int
    duration: float
    receiver_radius: float = 1.0
    workers: int = 1

    def __post_init__(self):
        if not self.dt > 0:
            raise ValidationError("time step must be positive")
        if self.n_particles < 1:
            raise ValidationError("need at least one particle")
        if not self.receiver_radius > 0:
            raise ValidationError("receiver radius must be positive")
        if not self.duration > 0:
            raise ValidationError("duration must be positive")
        if not (0 <= self.seed < 2**63):
            raise ValidationError("seed must be a non-negative 63-bit integer")
        if self.workers < 1:
            raise ValidationError("workers must be >= 1")

    @property
    def n_steps(self) -> int:
        return int(round(self.duration / self.dt))


@dataclass(frozen=True)
class Receiver:
    center: tuple[float, float, float]
    radius: float
    name: str = ""

    @classmethod
    def spherical(cls, r, theta, phi, radius, name=""):
        return cls(tuple(float(x) for x in spherical_to_cartesian(r, theta, phi)), float(radius), name)

    @property
    def volume(self) -> float:
        return 4.0 / 3.0 * math.pi * self.radius**3


@dataclass
class PbsResult:
    t: np.ndarray
    counts: np.ndarray  # (n_receivers, n_steps + 1) molecules inside each ball
    inside: np.ndarray  # alive molecules with |x| <= R_N
    outside: np.ndarray
    dead: np.ndarray
    receivers: list[Receiver]
    config: PbsConfig

    def concentration(self, index: int) -> np.ndarray:
        """Receiver count / (ball volume x released molecules) [1/um^3]."""
        rec = self.receivers[index]
        return self.counts[index] / (rec.volume * self.config.n_particles)

    def counting_noise(self, index: int) -> np.ndarray:
        """Binomial standard deviation of ``concentration(index)``."""
        n = self.config.n_particles
        p = self.counts[index] / n
        return np.sqrt(n * p * (1 - p)) / (self.receivers[index].volume * n)


def _arrays(stack: LayerStack):
    return (
        np.ascontiguousarray(stack.interfaces, dtype=float),
        np.ascontiguousarray(stack.diffusion, dtype=float),
        np.ascontiguousarray(stack.degradation, dtype=float),
    )


def default_workers() -> int:
    """Worker threads from LAYERSPHERE_THREADS, defaulting to 1."""
    try:
        return max(1, int(os.environ.get("LAYERSPHERE_THREADS", "1")))
    except ValueError:
        return 1


def run_scenario(
    stack: LayerStack,
    source: SourceSpec,
    receivers,
    config: PbsConfig,
    chunk: int = 8192,
) -> PbsResult:
    """Release ``config.n_particles`` molecules at the source and track them.

    Output is identical for any worker count: particles are split into fixed
    chunks, each particle draws from its own stream, and per-chunk integer
    counts are summed.
    """
    source.check_against(stack)
    recs = [r if isinstance(r, Receiver) else Receiver(*r) for r in receivers]
    radii, diff, kdeg = _arrays(stack)
    nsteps = config.n_steps
    src = np.asarray(source.cartesian, dtype=float)
    rec_c = np.array([r.center for r in recs], dtype=float).reshape(-1, 3)
    rec_r2 = np.array([r.radius**2 for r in recs], dtype=float)
    starts = list(range(0, config.n_particles, chunk))

    def work(first):
        cnt = min(chunk, config.n_particles - first)
        counts = np.zeros((len(recs), nsteps + 1), dtype=np.int64)
        inside = np.zeros(nsteps + 1, dtype=np.int64)
        dead_diff = np.zeros(nsteps + 2, dtype=np.int64)
        bad = _simulate(
            first, cnt, np.uint64(config.seed), src, nsteps, config.dt, radii, diff, kdeg,
            rec_c, rec_r2, counts, inside, dead_diff,
        )
        if bad >= 0:
            raise TooManyCrossingsError(
                f"particle {bad} crossed interfaces more than {MAX_CROSSINGS} times "
                "in one step; reduce the time step"
            )
        return counts, inside, dead_diff

    if config.workers > 1 and len(starts) > 1:
        with ThreadPoolExecutor(config.workers) as pool:
            parts = list(pool.map(work, starts))
    else:
        parts = [work(s) for s in starts]
    counts = sum(p[0] for p in parts)
    inside = sum(p[1] for p in parts)
    dead = np.cumsum(sum(p[2] for p in parts))[: nsteps + 1]
    outside = config.n_particles - dead - inside
    t = np.arange(nsteps + 1) * config.dt
    return PbsResult(t, counts, inside, outside, dead, recs, config)


# --------------------------------------------------------------------------
# step-level operations (used for testing and for the ensemble API)
# --------------------------------------------------------------------------

@nb.njit(cache=True)
def _displacements(n, sd, seed, step):
    out = np.empty((n, 3))
    for i in range(n):
        g0, g1, g2 = _normals(particle_key(seed, i), step)
        out[i, 0] = sd * g0
        out[i, 1] = sd * g1
        out[i, 2] = sd * g2
    return out


def brownian_step(n: int, diffusion: float, dt: float, seed: int, step: int = 0) -> np.ndarray:
    """Displacements of particles 0..n-1 at ``step``; each axis ~ N(0, 2 D dt)."""
    if dt < 0 or diffusion <= 0:
        raise ValidationError("need dt >= 0 and D > 0")
    return _displacements(n, math.sqrt(2.0 * diffusion * dt), np.uint64(seed), step)


def propagate_with_interfaces(start, displacement, stack: LayerStack):
    """End point of a proposed step, and the number of interfaces crossed."""
    radii, diff, _ = _arrays(stack)
    p = np.asarray(start, dtype=float).copy()
    v = np.asarray(displacement, dtype=float).copy()
    layer = stack.locate_layer(float(np.linalg.norm(p)))
    out = np.empty(3)
    _, nc = _walk(p, v, layer, radii, diff, out)
    if nc < 0:
        raise TooManyCrossingsError(f"more than {MAX_CROSSINGS} crossings in one step")
    return out, nc


@dataclass
class ParticleEnsemble:
    """Explicit particle state for step-by-step use."""

    positions: np.ndarray
    alive: np.ndarray
    seed: int
    elapsed: float = 0.0
    step_index: int = 0
    layers: np.ndarray = field(default=None)

    @classmethod
    def release(cls, n: int, source: SourceSpec, seed: int, stack: LayerStack):
        pos = np.tile(source.cartesian, (n, 1)).astype(float)
        layer = stack.locate_layer(source.r)
        return cls(pos, np.ones(n, dtype=bool), seed, 0.0, 0, np.full(n, layer, dtype=np.int64))

    @property
    def n_alive(self) -> int:
        return int(self.alive.sum())

    def step(self, stack: LayerStack, dt: float) -> "ParticleEnsemble":
        """Move alive particles one step, then degrade."""
        self.positions, self.layers = _step_all(
            self.positions, self.layers, self.alive, np.uint64(self.seed), self.step_index,
            dt, *_arrays(stack)[:2],
        )
        apply_degradation(self, stack, dt)
        self.step_index += 1
        self.elapsed += dt
        return self


@nb.njit(cache=True)
def _step_all(pos, layers, alive, seed, step, dt, radii, diff):
    out = np.empty(3)
    v = np.empty(3)
    newpos = pos.copy()
    newlayers = layers.copy()
    for i in range(pos.shape[0]):
        if not alive[i]:
            continue
        g0, g1, g2 = _normals(particle_key(seed, i), step)
        s = math.sqrt(2.0 * diff[layers[i]] * dt)
        v[0], v[1], v[2] = s * g0, s * g1, s * g2
        lay, nc = _walk(pos[i], v, layers[i], radii, diff, out)
        newpos[i, 0], newpos[i, 1], newpos[i, 2] = out[0], out[1], out[2]
        newlayers[i] = lay
    return newpos, newlayers


@nb.njit(cache=True)
def _degrade(alive, layers, kdeg, dt, seed, step):
    for i in range(alive.size):
        if alive[i]:
            k = kdeg[layers[i]]
            if k > 0.0 and _survival_draw(particle_key(seed, i), step) <= -math.expm1(-k * dt):
                alive[i] = False


def apply_degradation(ensemble: ParticleEnsemble, stack: LayerStack, dt: float) -> ParticleEnsemble:
    """Kill each alive particle with probability 1 - exp(-k dt) of its current layer."""
    if ensemble.layers is None:
        ensemble.layers = np.array(
            [stack.locate_layer(float(np.linalg.norm(p))) for p in ensemble.positions], dtype=np.int64
        )
    _degrade(ensemble.alive, ensemble.layers, stack.degradation, dt, np.uint64(ensemble.seed), ensemble.step_index)
    return ensemble


def count_receiver(ensemble: ParticleEnsemble, center, radius: float, n_total: int) -> float:
    """Alive particles within ``radius`` of ``center`` (inclusive), per volume per molecule."""
    if not radius > 0:
        raise ValidationError("receiver radius must be positive")
    d2 = np.sum((ensemble.positions - np.asarray(center, dtype=float)) ** 2, axis=1)
    hits = int(np.count_nonzero((d2 <= radius * radius) & ensemble.alive))
    return hits / (4.0 / 3.0 * math.pi * radius**3 * n_total)
