"""Random point-scatterer populations drawn by rejection from a homogeneous Poisson field."""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError
from .geometry import AreaPolygon, IntersectionMap, points_in_polygon, wall_scattering_area

WALL_KINDS = ("wall", "diffuse_wall")
NON_WALL_KINDS = ("non_wall", "diffuse_non_wall")
KINDS = WALL_KINDS + NON_WALL_KINDS

# first/second/third order wall intensities measured over visible facade areas;
# the model defaults use 0.044 m^-2 for every order instead
MEASURED_WALL_INTENSITIES = {1: 0.052, 2: 0.045, 3: 0.03}
MEASURED_BAND_WIDTH_RANGE = (2.4, 3.0)


@dataclass(frozen=True)
class ScattererClass:
    name: str
    kind: str
    order: int
    intensity: float
    band_width: Optional[float]
    G0_range: tuple[float, float]
    dc_range: tuple[float, float]
    k_range: tuple[float, float]

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ConfigError(f"class {self.name!r}: unknown kind {self.kind!r}")
        if self.order not in (1, 2, 3):
            raise ConfigError(f"class {self.name!r}: order must be 1, 2 or 3")
        if not self.intensity > 0:
            raise ConfigError(f"class {self.name!r}: intensity must be positive")
        if self.kind in WALL_KINDS and not (self.band_width is not None and self.band_width > 0):
            raise ConfigError(f"class {self.name!r}: wall classes need a positive band width")
        for label in ("G0_range", "dc_range", "k_range"):
            lo, hi = getattr(self, label)
            if not lo <= hi:
                raise ConfigError(f"class {self.name!r}: {label} has lower > upper")
            object.__setattr__(self, label, (float(lo), float(hi)))
        if self.dc_range[0] < 0 or self.k_range[0] <= 0:
            raise ConfigError(f"class {self.name!r}: d_c must be >= 0 and k > 0")

    @property
    def path_class(self) -> str:
        """Which of the five scattered-path terms this class feeds."""
        if self.kind == "wall":
            return f"wall{self.order}"
        if self.kind == "non_wall":
            return "non_wall"
        return "diffuse"


_DIFFUSE_GAIN = dict(G0_range=(-80.0, -68.0), dc_range=(0.0, 1.0), k_range=(1.0, 1.0))

DEFAULT_CLASSES: tuple[ScattererClass, ...] = (
    ScattererClass("wall1", "wall", 1, 0.044, 3.0, (-65.0, -48.0), (1.0, 2.0), (2.0, 8.0)),
    ScattererClass("wall2", "wall", 2, 0.044, 3.0, (-70.0, -59.0), (0.0, 1.5), (1.0, 6.0)),
    ScattererClass("wall3", "wall", 3, 0.044, 3.0, (-75.0, -65.0), (0.0, 1.0), (1.0, 4.0)),
    ScattererClass("diffuse_wall", "diffuse_wall", 1, 0.61, 12.0, **_DIFFUSE_GAIN),
    ScattererClass("non_wall", "non_wall", 1, 0.034, None, (-68.0, -52.0), (0.0, 1.0), (1.0, 6.0)),
    ScattererClass("diffuse_non_wall", "diffuse_non_wall", 1, 0.61, None, **_DIFFUSE_GAIN),
)


def default_classes() -> dict[str, ScattererClass]:
    return {c.name: c for c in DEFAULT_CLASSES}


@dataclass(frozen=True)
class Scatterer:
    location: np.ndarray
    class_name: str
    normal: np.ndarray
    G0_db: float
    d_c: float
    k: float
    theta: float
    phase: float


@dataclass(frozen=True)
class ScattererRealization:
    """Immutable scatterer population; array views are built lazily for synthesis."""

    scatterers: tuple[Scatterer, ...]
    rng_seed: int
    classes: tuple[ScattererClass, ...] = field(default=())

    def __len__(self) -> int:
        return len(self.scatterers)

    def __iter__(self):
        return iter(self.scatterers)

    def counts(self) -> dict[str, int]:
        out = {c.name: 0 for c in self.classes}
        for s in self.scatterers:
            out[s.class_name] = out.get(s.class_name, 0) + 1
        return out

    @cached_property
    def arrays(self) -> dict[str, np.ndarray]:
        n = len(self.scatterers)
        by_name = {c.name: c for c in self.classes}
        return {
            "location": np.array([s.location for s in self.scatterers]).reshape(n, 2),
            "normal": np.array([s.normal for s in self.scatterers]).reshape(n, 2),
            "G0_db": np.array([s.G0_db for s in self.scatterers], dtype=float),
            "d_c": np.array([s.d_c for s in self.scatterers], dtype=float),
            "k": np.array([s.k for s in self.scatterers], dtype=float),
            "theta": np.array([s.theta for s in self.scatterers], dtype=float),
            "phase": np.array([s.phase for s in self.scatterers], dtype=float),
            "path_class": np.array([by_name[s.class_name].path_class if s.class_name in by_name
                                    else s.class_name for s in self.scatterers], dtype=object),
        }

    def merged(self, other: "ScattererRealization") -> "ScattererRealization":
        names = {c.name for c in self.classes}
        classes = self.classes + tuple(c for c in other.classes if c.name not in names)
        return ScattererRealization(self.scatterers + other.scatterers, self.rng_seed, classes)


def substream(seed: int, *key: int | str) -> np.random.Generator:
    """Counter-based generator for an independent, named sub-stream of ``seed``.

    String keys are hashed with CRC-32, so the stream for a class depends on its
    name only, never on how many other classes are drawn or in which order.
    """
    spawn_key = tuple(zlib.crc32(k.encode()) if isinstance(k, str) else int(k) for k in key)
    ss = np.random.SeedSequence(int(seed) & (2**64 - 1), spawn_key=spawn_key)
    return np.random.Generator(np.random.Philox(ss))


def draw_scatterer_params(cls: ScattererClass, rng: np.random.Generator,
                          size: Optional[int] = None):
    """Independent uniform draws ``(G0_db, d_c, k, theta, phase)`` for a class."""
    G0 = rng.uniform(*cls.G0_range, size=size)
    d_c = rng.uniform(*cls.dc_range, size=size)
    k = rng.uniform(*cls.k_range, size=size)
    phase = rng.uniform(0.0, 2.0 * np.pi, size=size)
    return G0, d_c, k, 1.0 / k, phase


def class_areas(imap: IntersectionMap, cls: ScattererClass) -> list[AreaPolygon]:
    """Scattering areas that a class may populate."""
    if cls.kind in WALL_KINDS:
        return [wall_scattering_area(w, cls.band_width) for w in imap.walls]
    return [a for a in imap.scattering_areas if a.classes is None or cls.kind in a.classes
            or cls.name in a.classes]


def _box_union(boxes: Sequence[tuple[float, float, float, float]]) -> tuple[float, float, float, float]:
    b = np.array(boxes)
    return float(b[:, 0].min()), float(b[:, 1].min()), float(b[:, 2].max()), float(b[:, 3].max())


def realize_scatterers(imap: IntersectionMap, classes: Sequence[ScattererClass],
                       seed: int) -> ScattererRealization:
    """Draw one scatterer population for every class.

    Each class gets a homogeneous Poisson field over the bounding box of its
    scattering areas, thinned to the areas themselves and to points outside
    buildings.
    """
    classes = tuple(classes)
    names = [c.name for c in classes]
    if len(set(names)) != len(names):
        raise ConfigError("scatterer class names must be unique")
    areas = {c.name: class_areas(imap, c) for c in classes}
    if not any(areas.values()):
        return ScattererRealization((), int(seed), classes)

    out: list[Scatterer] = []
    for cls in classes:
        polys = areas[cls.name]
        if not polys:
            continue
        # the Poisson field restricted to the class areas does not depend on the
        # enclosing box, so each class uses its own and stays independent of the others
        x0, y0, x1, y1 = _box_union([(p.vertices[:, 0].min(), p.vertices[:, 1].min(),
                                      p.vertices[:, 0].max(), p.vertices[:, 1].max())
                                     for p in polys])
        box_area = (x1 - x0) * (y1 - y0)
        if not box_area > 0:
            raise ConfigError(f"class {cls.name!r}: scattering areas have an empty bounding box")
        rng = substream(seed, "class", cls.name)
        n = rng.poisson(cls.intensity * box_area)
        pts = np.column_stack([rng.uniform(x0, x1, n), rng.uniform(y0, y1, n)])
        keep = np.zeros(n, dtype=bool)
        for p in polys:
            keep |= points_in_polygon(pts, p.vertices)
        for b in imap.buildings:
            keep &= ~points_in_polygon(pts, b.vertices)
        pts = pts[keep]
        m = len(pts)
        G0, d_c, k, theta, phase = draw_scatterer_params(cls, rng, size=m)
        if cls.kind == "wall":
            # owning wall: the closest one whose band contains the point
            walls = imap.walls
            dist = np.stack([w.distance_to(pts) if m else np.zeros(0) for w in walls], axis=1)
            for j, p in enumerate(polys):
                dist[~points_in_polygon(pts, p.vertices), j] = np.inf
            owner = np.argmin(dist, axis=1) if m else np.zeros(0, dtype=int)
            normals = np.array([walls[j].normal for j in owner]).reshape(m, 2)
        else:
            ang = rng.uniform(0.0, 2.0 * np.pi, size=m)
            normals = np.column_stack([np.cos(ang), np.sin(ang)])
        for i in range(m):
            out.append(Scatterer(pts[i].copy(), cls.name, normals[i].copy(), float(G0[i]),
                                 float(d_c[i]), float(k[i]), float(theta[i]), float(phase[i])))
    return ScattererRealization(tuple(out), int(seed), classes)
