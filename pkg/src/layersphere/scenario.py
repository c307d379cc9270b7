"""Scenario files: a versioned JSON description of one study.

See ``docs/scenario_schema.md`` for the field reference.  Loading collects
every problem it finds and reports each one with its field path.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

from .medium import Layer, LayerStack, SourceSpec, ValidationError, to_um2_per_s
from .pbs import PbsConfig, Receiver

SCHEMA_VERSION = 1


class ScenarioError(ValidationError):
    def __init__(self, problems: list[str]):
        super().__init__("; ".join(problems))
        self.problems = problems


@dataclass(frozen=True)
class ReceiverSpec:
    name: str
    r: float
    theta: float = math.pi / 2
    phi: float = 0.0
    radius: float = 1.0

    def to_pbs(self) -> Receiver:
        return Receiver.spherical(self.r, self.theta, self.phi, self.radius, self.name)

    def observation(self):
        from .analytic import Observation

        return Observation(self.r, self.theta, self.phi, self.radius, self.name)


@dataclass(frozen=True)
class AnalyticGrid:
    """Inverse-transform settings; ``window=None`` picks one per receiver."""

    window: float | None = None
    n_time: int = 4096
    damping: float = 14.0  # damping rate times window

    def grid_for(self, window: float):
        from .timedomain import TransformGrid

        return TransformGrid(window, self.n_time, self.damping / window)


@dataclass(frozen=True)
class SweepSpec:
    layer: int  # 0-based internally; 1-based in files
    porosities: tuple[float, ...]


@dataclass(frozen=True)
class Scenario:
    name: str
    stack: LayerStack
    source: SourceSpec
    receivers: tuple[ReceiverSpec, ...]
    analytic: AnalyticGrid = field(default_factory=AnalyticGrid)
    pbs: PbsConfig | None = None
    sweep: SweepSpec | None = None

    def __post_init__(self):
        self.source.check_against(self.stack)
        src = self.source.cartesian
        for rec in self.receivers:
            if math.dist(rec.to_pbs().center, src) <= 1e-12 * max(1.0, self.source.r):
                raise ValidationError(f"receiver {rec.name!r} coincides with the source")

    def with_porosity(self, layer: int, porosity: float) -> "Scenario":
        return replace(self, stack=self.stack.with_porosity(layer, porosity))

    def with_pbs(self, **changes) -> "Scenario":
        return replace(self, pbs=replace(self.pbs, **changes))

    def to_dict(self) -> dict:
        st = self.stack
        out = {
            "schema_version": SCHEMA_VERSION,
            "name": self.name,
            "free_diffusion": {"value": st.free_diffusion, "unit": "um2/s"},
            "layers": [
                {"width": l.width, "porosity": l.porosity, "degradation_rate": l.degradation_rate}
                for l in st.layers[:-1]
            ],
            "exterior": {
                "porosity": st.layers[-1].porosity,
                "degradation_rate": st.layers[-1].degradation_rate,
            },
            "source": {
                "r": self.source.r, "theta": self.source.theta,
                "phi": self.source.phi, "t0": self.source.t0,
            },
            "receivers": [
                {"name": r.name, "r": r.r, "theta": r.theta, "phi": r.phi, "radius": r.radius}
                for r in self.receivers
            ],
            "analytic": {
                "window": self.analytic.window,
                "n_time": self.analytic.n_time,
                "damping": self.analytic.damping,
            },
        }
        if self.pbs is not None:
            p = self.pbs
            out["pbs"] = {
                "dt": p.dt, "n_particles": p.n_particles, "seed": p.seed,
                "duration": p.duration, "workers": p.workers,
            }
        if self.sweep is not None:
            out["sweep"] = {"layer": self.sweep.layer + 1, "porosities": list(self.sweep.porosities)}
        return out

    def digest(self) -> str:
        d = self.to_dict()
        if "pbs" in d:
            d["pbs"].pop("workers")  # does not affect results
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]


# --------------------------------------------------------------------------
# parsing
# --------------------------------------------------------------------------

def _num(d, key, path, problems, default=None, positive=False, nonneg=False, required=True):
    if key not in d:
        if required and default is None:
            problems.append(f"{path}.{key}: missing")
        return default
    v = d[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        problems.append(f"{path}.{key}: expected a number, got {v!r}")
        return default
    v = float(v)
    if math.isnan(v):
        problems.append(f"{path}.{key}: NaN")
        return default
    if positive and not v > 0:
        problems.append(f"{path}.{key}: must be positive, got {v}")
    if nonneg and not v >= 0:
        problems.append(f"{path}.{key}: must be non-negative, got {v}")
    return v


def _porosity(v, path, problems, label):
    if v is not None and not (0.0 < v <= 1.0):
        problems.append(f"{path}: porosity of {label} must lie in (0, 1], got {v}")


def scenario_from_dict(data: dict) -> Scenario:
    problems: list[str] = []
    if not isinstance(data, dict):
        raise ScenarioError(["<root>: expected an object"])
    ver = data.get("schema_version")
    if ver != SCHEMA_VERSION:
        problems.append(f"schema_version: expected {SCHEMA_VERSION}, got {ver!r}")
    name = str(data.get("name", "scenario"))

    fd = data.get("free_diffusion")
    D = None
    if not isinstance(fd, dict):
        problems.append("free_diffusion: missing (object with value and unit)")
    else:
        val = _num(fd, "value", "free_diffusion", problems, positive=True)
        unit = fd.get("unit")
        if not isinstance(unit, str):
            problems.append("free_diffusion.unit: missing unit tag ('um2/s' or 'cm2/s')")
        elif val is not None:
            try:
                D = to_um2_per_s(val, unit)
            except ValidationError as exc:
                problems.append(f"free_diffusion.unit: {exc}")

    layers_raw = data.get("layers")
    layers: list[Layer] = []
    if not isinstance(layers_raw, list) or not layers_raw:
        problems.append("layers: expected a non-empty list")
        layers_raw = []
    for i, l in enumerate(layers_raw):
        path = f"layers[{i}]"
        if not isinstance(l, dict):
            problems.append(f"{path}: expected an object")
            continue
        w = _num(l, "width", path, problems, positive=True)
        e = _num(l, "porosity", path, problems)
        k = _num(l, "degradation_rate", path, problems, default=0.0, nonneg=True, required=False)
        _porosity(e, f"{path}.porosity", problems, f"layer {i + 1}")
        if w is not None and w > 0 and e is not None and 0 < e <= 1 and k is not None and k >= 0:
            if math.isinf(w):
                problems.append(f"{path}.width: finite layers need a finite width")
            else:
                layers.append(Layer(w, e, k))

    ext = data.get("exterior", {"porosity": 1.0})
    if not isinstance(ext, dict):
        problems.append("exterior: expected an object")
        ext = {}
    e_ext = _num(ext, "porosity", "exterior", problems, default=1.0, required=False)
    k_ext = _num(ext, "degradation_rate", "exterior", problems, default=0.0, nonneg=True, required=False)
    _porosity(e_ext, "exterior.porosity", problems, "the exterior")

    stack = None
    if not problems:
        stack = LayerStack(tuple(layers) + (Layer(math.inf, e_ext, k_ext),), D)

    src_raw = data.get("source")
    source = None
    if not isinstance(src_raw, dict):
        problems.append("source: missing")
    else:
        r0 = _num(src_raw, "r", "source", problems, nonneg=True)
        th = _num(src_raw, "theta", "source", problems, default=math.pi / 2, required=False)
        ph = _num(src_raw, "phi", "source", problems, default=math.pi / 2, required=False)
        t0 = _num(src_raw, "t0", "source", problems, default=0.0, nonneg=True, required=False)
        if r0 is not None:
            try:
                source = SourceSpec(r0, th, ph % (2 * math.pi), t0)
                if stack is not None:
                    source.check_against(stack)
            except ValidationError as exc:
                problems.append(f"source.r: {exc}")
                source = None

    recs = []
    rec_raw = data.get("receivers", [])
    if not isinstance(rec_raw, list):
        problems.append("receivers: expected a list")
        rec_raw = []
    for i, r in enumerate(rec_raw):
        path = f"receivers[{i}]"
        if not isinstance(r, dict):
            problems.append(f"{path}: expected an object")
            continue
        rr = _num(r, "r", path, problems, nonneg=True)
        th = _num(r, "theta", path, problems, default=math.pi / 2, required=False)
        ph = _num(r, "phi", path, problems, default=0.0, required=False)
        rad = _num(r, "radius", path, problems, positive=True)
        if None not in (rr, rad):
            recs.append(ReceiverSpec(str(r.get("name", f"rx{i + 1}")), rr, th, ph, rad))

    an_raw = data.get("analytic", {})
    win = an_raw.get("window") if isinstance(an_raw, dict) else None
    if win is not None:
        win = _num(an_raw, "window", "analytic", problems, positive=True)
    n_time = int(an_raw.get("n_time", 4096)) if isinstance(an_raw, dict) else 4096
    if n_time < 4 or n_time % 2:
        problems.append(f"analytic.n_time: must be an even integer >= 4, got {n_time}")
    damp = _num(an_raw, "damping", "analytic", problems, default=14.0, nonneg=True, required=False)
    analytic = AnalyticGrid(win, n_time, damp)

    pbs = None
    if "pbs" in data:
        p = data["pbs"]
        try:
            pbs = PbsConfig(
                float(p["dt"]), int(p["n_particles"]), int(p.get("seed", 0)),
                float(p["duration"]), 1.0, int(p.get("workers", 1)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            problems.append(f"pbs: {exc}")

    sweep = None
    if "sweep" in data:
        s = data["sweep"]
        vals = s.get("porosities") if isinstance(s, dict) else None
        lay = s.get("layer") if isinstance(s, dict) else None
        if not isinstance(vals, list) or not vals:
            problems.append("sweep.porosities: expected a non-empty list")
        else:
            for j, v in enumerate(vals):
                if isinstance(v, bool) or not isinstance(v, (int, float)):
                    problems.append(f"sweep.porosities[{j}]: expected a number")
                else:
                    _porosity(float(v), f"sweep.porosities[{j}]", problems, f"sweep point {j + 1}")
        if not isinstance(lay, int) or not (1 <= lay <= len(layers_raw) + 1):
            problems.append(f"sweep.layer: expected a layer number 1..{len(layers_raw) + 1}")
        if not problems:
            sweep = SweepSpec(lay - 1, tuple(float(v) for v in vals))

    if problems:
        raise ScenarioError(problems)
    try:
        return Scenario(name, stack, source, tuple(recs), analytic, pbs, sweep)
    except ValidationError as exc:
        raise ScenarioError([f"receivers: {exc}"]) from exc


def load_scenario(path) -> Scenario:
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError([f"<file>: not valid JSON ({exc})"]) from exc
    return scenario_from_dict(data)


def save_scenario(scenario: Scenario, path) -> None:
    Path(path).write_text(json.dumps(scenario.to_dict(), indent=2) + "\n")
