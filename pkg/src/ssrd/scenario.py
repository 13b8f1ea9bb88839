"""Region data ingestion, demand-parameter calibration and immutable scenario assembly.

A Scenario is the single input object shared by the simulator, the valuation
engine, the metrics and the MDP environment.  All arrays inside it are frozen
(read-only numpy views) so instances can be shared freely across workers.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DataError

EARTH_RADIUS_KM = 6371.0088

REGION_COLUMNS = ("id", "name", "area_km2", "density_per_km2")


@dataclass(frozen=True)
class Region:
    """One service region: spatial attributes used for calibration."""

    id: int
    name: str
    area: float          # km^2
    density: float       # persons / km^2
    centroid: tuple[float, float] | None = None  # (lat, lon) degrees

    def __post_init__(self):
        if self.area <= 0:
            raise DataError(f"region {self.name!r}: area must be > 0, got {self.area}")
        if self.density <= 0:
            raise DataError(f"region {self.name!r}: density must be > 0, got {self.density}")


@dataclass(frozen=True)
class CalibrationParams:
    """Per-region drift/volatility/jump-intensity vectors and the initial OD matrix."""

    mu: np.ndarray       # (N,) drift per period
    sigma: np.ndarray    # (N,) volatility per sqrt(period)
    lam: np.ndarray      # (N,) expected jumps per period
    q0: np.ndarray       # (N, N) initial OD demand; diagonal = intra-region demand

    def __post_init__(self):
        for name in ("mu", "sigma", "lam", "q0"):
            arr = np.ascontiguousarray(np.asarray(getattr(self, name), dtype=float))
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        if np.any(self.sigma < 0):
            raise DataError("sigma must be >= 0")
        if np.any(self.lam < 0):
            raise DataError("lambda must be >= 0")
        if np.any(self.q0 < 0):
            raise DataError("q0 entries must be >= 0")

    @property
    def n_regions(self) -> int:
        return self.q0.shape[0]


SPILLOVER_DISTRIBUTIONS = ("gamma", "lognormal", "normal", "laplace")


@dataclass(frozen=True)
class SpilloverSpec:
    """Distributional spec for the investment-induced demand jump multiplier.

    The magnitude of one jump event is strength * draw, where the draw's
    shape/scale parameters are sampled per event from shape_range/scale_range.
    Non-gamma distributions are moment matched to the gamma baseline
    (mean shape*scale, variance shape*scale^2), so normal/laplace draws can
    be negative.
    """

    distribution: str = "gamma"
    strength: float = 1.0
    stationary: bool = True
    shape_range: tuple[float, float] = (0.1, 0.2)
    scale_range: tuple[float, float] = (0.4, 0.5)

    def __post_init__(self):
        if self.distribution not in SPILLOVER_DISTRIBUTIONS:
            raise DataError(f"unknown spillover distribution {self.distribution!r}")
        if not self.strength > 0:
            raise DataError("spillover strength must be > 0")
        for rng_name in ("shape_range", "scale_range"):
            lo, hi = getattr(self, rng_name)
            if not (math.isfinite(lo) and math.isfinite(hi)) or hi < lo:
                raise DataError(f"{rng_name} must be an ordered non-empty interval")
        if self.distribution in ("gamma", "lognormal") and self.shape_range[0] <= 0:
            raise DataError(f"{self.distribution} requires positive shape parameters")

    def with_strength(self, strength: float) -> "SpilloverSpec":
        return replace(self, strength=strength)


@dataclass(frozen=True)
class CostModel:
    """Service-threshold cost coefficients (demand units per region / per link)."""

    c_intra: float
    c_inter: float
    f_end: float = 1.0   # terminal cost coefficient; 1.0 = static costs
    zeta: float = 0.0    # scale sensitivity; 0.0 = no scale effect

    def __post_init__(self):
        if self.c_intra < 0 or self.c_inter < 0:
            raise DataError("costs must be >= 0")
        if not self.f_end > 0:
            raise DataError("f_end must be > 0")
        if self.zeta < 0:
            raise DataError("zeta must be >= 0")


@dataclass(frozen=True)
class Scenario:
    """Immutable bundle of everything a run needs."""

    regions: tuple[Region, ...]
    calib: CalibrationParams
    costs: CostModel
    spillover: SpilloverSpec
    horizon: int             # T: time grid is t_0 .. t_T
    k: int                   # max regions per portfolio
    rho: float = 0.01        # discount rate per period
    n_paths: int = 300
    n_basis: int = 3         # regression basis size U
    seed: int = 0
    name: str = "scenario"

    def __post_init__(self):
        n = len(self.regions)
        if self.calib.n_regions != n:
            raise DataError("calibration size does not match region count")
        if not 1 <= self.k:
            raise DataError("k must be >= 1")
        min_len = math.ceil(n / min(self.k, n)) if n else 0
        if self.horizon < min_len:
            raise DataError(
                f"horizon T={self.horizon} admits no feasible sequence for "
                f"N={n}, k={self.k} (need T >= {min_len})"
            )
        if self.n_paths < 1 or self.n_basis < 1:
            raise DataError("n_paths and n_basis must be >= 1")
        if self.rho < 0:
            raise DataError("rho must be >= 0")

    @property
    def n_regions(self) -> int:
        return len(self.regions)

    @property
    def baseline_demand(self) -> np.ndarray:
        """Total baseline demand per region (row sums of q0).  Rows are
        sorted before summing so permuted-identical rows tie exactly."""
        return np.sort(self.calib.q0, axis=1).sum(axis=1)


# ---------------------------------------------------------------------------
# Region loading
# ---------------------------------------------------------------------------

def load_regions(path: str, fmt: str = "csv") -> list[Region]:
    """Load regions from a CSV table or a GeoJSON boundary file.

    CSV schema: id,name,area_km2,density_per_km2[,lat,lon].  Ids are
    reassigned contiguously in file order.  GeoJSON features need
    'name' and 'density_per_km2' properties; area and centroid are computed
    from the polygon after a local metric projection.
    """
    if fmt == "csv":
        try:
            with open(path, newline="", encoding="utf-8") as fh:
                return _regions_from_csv(fh)
        except OSError as exc:
            raise DataError(f"cannot read region file {path}: {exc}") from exc
    if fmt == "geo-boundary":
        try:
            with open(path, encoding="utf-8") as fh:
                doc = json.load(fh)
        except OSError as exc:
            raise DataError(f"cannot read boundary file {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise DataError(f"boundary file {path} is not valid JSON: {exc}") from exc
        return _regions_from_geojson(doc)
    raise DataError(f"unknown region format {fmt!r}")


def _regions_from_csv(fh) -> list[Region]:
    reader = csv.DictReader(fh)
    if reader.fieldnames is None:
        raise DataError("no regions: file is empty")
    missing = [c for c in REGION_COLUMNS if c not in reader.fieldnames]
    if missing:
        raise DataError(f"missing column(s): {', '.join(missing)}")
    has_centroid = "lat" in reader.fieldnames and "lon" in reader.fieldnames
    regions: list[Region] = []
    names: set[str] = set()
    for rownum, row in enumerate(reader, start=2):
        try:
            name = row["name"].strip()
            area = float(row["area_km2"])
            density = float(row["density_per_km2"])
            centroid = None
            if has_centroid and row["lat"].strip() and row["lon"].strip():
                centroid = (float(row["lat"]), float(row["lon"]))
        except (KeyError, ValueError, AttributeError) as exc:
            raise DataError(f"row {rownum}: cannot parse region: {exc}") from exc
        if name in names:
            raise DataError(f"row {rownum}: duplicate region name {name!r}")
        names.add(name)
        try:
            regions.append(Region(len(regions), name, area, density, centroid))
        except DataError as exc:
            raise DataError(f"row {rownum}: {exc}") from exc
    if not regions:
        raise DataError("no regions")
    return regions


def _regions_from_geojson(doc) -> list[Region]:
    feats = doc.get("features", [])
    if not feats:
        raise DataError("no regions")
    lats = [pt[1] for f in feats for ring in _polygon_rings(f) for pt in ring]
    lat0 = math.radians(sum(lats) / len(lats))
    regions: list[Region] = []
    for idx, feat in enumerate(feats):
        props = feat.get("properties", {})
        name = props.get("name", f"region{idx}")
        density = props.get("density_per_km2")
        if density is None:
            raise DataError(f"feature {name!r}: missing density_per_km2 property")
        area = 0.0
        cx = cy = 0.0
        for ring in _polygon_rings(feat):
            xy = [_project(pt[1], pt[0], lat0) for pt in ring]
            a, (rx, ry) = _shoelace(xy)
            area += a
            cx += a * rx
            cy += a * ry
        if area <= 0:
            raise DataError(f"feature {name!r}: degenerate polygon")
        cx /= area
        cy /= area
        lat, lon = _unproject(cx, cy, lat0)
        regions.append(Region(idx, name, area, float(density), (lat, lon)))
    return regions


def _polygon_rings(feature):
    geom = feature.get("geometry", {})
    gtype = geom.get("type")
    coords = geom.get("coordinates", [])
    if gtype == "Polygon":
        return [coords[0]] if coords else []
    if gtype == "MultiPolygon":
        return [poly[0] for poly in coords if poly]
    raise DataError(f"unsupported geometry type {gtype!r}")


def _project(lat, lon, lat0):
    # local equirectangular projection, km units
    x = math.radians(lon) * EARTH_RADIUS_KM * math.cos(lat0)
    y = math.radians(lat) * EARTH_RADIUS_KM
    return x, y


def _unproject(x, y, lat0):
    lat = math.degrees(y / EARTH_RADIUS_KM)
    lon = math.degrees(x / (EARTH_RADIUS_KM * math.cos(lat0)))
    return lat, lon


def _shoelace(xy):
    """Polygon area (km^2) and centroid of one ring, orientation-independent."""
    s = 0.0
    cx = cy = 0.0
    n = len(xy)
    for i in range(n):
        x1, y1 = xy[i]
        x2, y2 = xy[(i + 1) % n]
        cross = x1 * y2 - x2 * y1
        s += cross
        cx += (x1 + x2) * cross
        cy += (y1 + y2) * cross
    if s == 0:
        return 0.0, (0.0, 0.0)
    # centroid = acc / (6 * signed_area); signed_area = s / 2
    return abs(s) / 2.0, (cx / (3.0 * s), cy / (3.0 * s))


# ---------------------------------------------------------------------------
# Calibration
# ---------------------------------------------------------------------------

def _minmax(values: np.ndarray) -> np.ndarray:
    """Min-max normalize to [0,1]; degenerate spread maps everything to 0.5."""
    lo, hi = values.min(), values.max()
    if hi == lo:
        return np.full_like(values, 0.5)
    return (values - lo) / (hi - lo)


def calibrate(
    regions: list[Region] | tuple[Region, ...],
    mu_range: tuple[float, float] = (0.005, 0.040),
    sigma_range: tuple[float, float] = (0.18, 0.55),
    lambda_range: tuple[float, float] = (0.20, 1.20),
    intra_fraction: float = 0.3,
    demand_scale: float = 1.0,
) -> CalibrationParams:
    """Map region attributes to demand-process parameters.

    Baseline demand is b_i = demand_scale * area_i * density_i.  The q0
    diagonal gets intra_fraction * b_i and the rest of row i is spread
    uniformly over the other N-1 destinations.  Jump intensity is linear in
    the min-max normalized density*area interaction; drift and volatility
    rise with normalized density and fall with normalized area.
    """
    for lo, hi in (mu_range, sigma_range, lambda_range):
        if hi < lo:
            raise DataError("parameter ranges must be ordered lo <= hi")
    if not 0.0 <= intra_fraction <= 1.0:
        raise DataError("intra_fraction must be in [0, 1]")

    area = np.array([r.area for r in regions], dtype=float)
    density = np.array([r.density for r in regions], dtype=float)
    n = len(area)

    b = demand_scale * area * density
    q0 = np.zeros((n, n))
    np.fill_diagonal(q0, intra_fraction * b)
    if n > 1:
        off = (1.0 - intra_fraction) * b / (n - 1)
        q0 += off[:, None] * (1.0 - np.eye(n))

    a_hat = _minmax(area)
    d_hat = _minmax(density)
    interaction = _minmax(d_hat * a_hat)
    growth_index = np.clip(d_hat * (1.0 - a_hat), 0.0, 1.0)

    lam = lambda_range[0] + (lambda_range[1] - lambda_range[0]) * interaction
    mu = mu_range[0] + (mu_range[1] - mu_range[0]) * growth_index
    sigma = sigma_range[0] + (sigma_range[1] - sigma_range[0]) * growth_index
    return CalibrationParams(mu=mu, sigma=sigma, lam=lam, q0=q0)


# ---------------------------------------------------------------------------
# Travel times
# ---------------------------------------------------------------------------

def haversine_km(lat1: float, lon1: float, lat2: float, lon2: float) -> float:
    """Great-circle distance in km."""
    p1, p2 = math.radians(lat1), math.radians(lat2)
    dp = p2 - p1
    dl = math.radians(lon2 - lon1)
    a = math.sin(dp / 2) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dl / 2) ** 2
    return 2.0 * EARTH_RADIUS_KM * math.asin(math.sqrt(a))


def travel_time_matrix(
    regions: list[Region] | tuple[Region, ...],
    speed: float = 19.31,
    peak_multiplier: float = 1.0,
) -> np.ndarray:
    """Centroid-to-centroid travel times in minutes.

    Intra-zone times use a proxy distance of half the equivalent-circle
    radius, 0.5 * sqrt(area / pi).
    """
    if speed <= 0:
        raise DataError("speed must be > 0")
    for r in regions:
        if r.centroid is None:
            raise DataError(f"region {r.name!r} has no centroid")
    n = len(regions)
    tt = np.zeros((n, n))
    for i in range(n):
        lat1, lon1 = regions[i].centroid
        for j in range(i + 1, n):
            lat2, lon2 = regions[j].centroid
            d = haversine_km(lat1, lon1, lat2, lon2)
            tt[i, j] = tt[j, i] = d / speed * 60.0 * peak_multiplier
        d_intra = 0.5 * math.sqrt(regions[i].area / math.pi)
        tt[i, i] = d_intra / speed * 60.0 * peak_multiplier
    return tt


# ---------------------------------------------------------------------------
# Scenario assembly and the text file format
# ---------------------------------------------------------------------------

def derive_costs(
    q0: np.ndarray,
    intra_fraction_of_mean: float = 0.40,
    inter_fraction_of_mean: float = 0.15,
    f_end: float = 1.0,
    zeta: float = 0.0,
) -> CostModel:
    """Costs as fractions of mean intra / inter demand at t0."""
    n = q0.shape[0]
    mean_intra = float(np.mean(np.diag(q0)))
    if n > 1:
        mean_inter = float((q0.sum() - np.trace(q0)) / (n * (n - 1)))
    else:
        mean_inter = 0.0
    return CostModel(
        c_intra=intra_fraction_of_mean * mean_intra,
        c_inter=inter_fraction_of_mean * mean_inter,
        f_end=f_end,
        zeta=zeta,
    )


def build_scenario(
    regions: list[Region] | tuple[Region, ...],
    horizon: int = 5,
    k: int = 3,
    rho: float = 0.01,
    n_paths: int = 300,
    n_basis: int = 3,
    seed: int = 0,
    name: str = "scenario",
    spillover: SpilloverSpec | None = None,
    costs: CostModel | None = None,
    calib: CalibrationParams | None = None,
    mu_range: tuple[float, float] = (0.005, 0.040),
    sigma_range: tuple[float, float] = (0.18, 0.55),
    lambda_range: tuple[float, float] = (0.20, 1.20),
    intra_fraction: float = 0.3,
    demand_scale: float = 1.0,
) -> Scenario:
    """Calibrate and assemble a Scenario with the standard defaults."""
    if calib is None:
        calib = calibrate(regions, mu_range, sigma_range, lambda_range,
                          intra_fraction, demand_scale)
    if costs is None:
        costs = derive_costs(calib.q0)
    if spillover is None:
        spillover = SpilloverSpec()
    return Scenario(
        regions=tuple(regions), calib=calib, costs=costs, spillover=spillover,
        horizon=horizon, k=k, rho=rho, n_paths=n_paths, n_basis=n_basis,
        seed=seed, name=name,
    )


_SCALAR_FIELDS = {
    "horizon": int, "k": int, "rho": float, "n_paths": int,
    "n_basis": int, "seed": int, "name": str,
    "intra_fraction": float, "demand_scale": float,
}
_RANGE_FIELDS = ("mu_range", "sigma_range", "lambda_range")


def load_scenario(path: str) -> Scenario:
    """Parse the self-describing scenario text format (see README)."""
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise DataError(f"cannot read scenario file {path}: {exc}") from exc
    return parse_scenario(text)


def parse_scenario(text: str) -> Scenario:
    sections: dict[str, list[str]] = {}
    current: list[str] | None = None
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            current = sections.setdefault(line[1:-1].strip().lower(), [])
            continue
        if current is None:
            raise DataError(f"scenario line outside any section: {raw!r}")
        current.append(raw)
    if "regions" not in sections:
        raise DataError("scenario file has no [regions] section")

    regions = _regions_from_csv(io.StringIO("\n".join(sections["regions"])))

    kv = _parse_kv(sections.get("scenario", []))
    kwargs = {}
    for key, cast in _SCALAR_FIELDS.items():
        if key in kv:
            kwargs[key] = cast(kv.pop(key))
    for key in _RANGE_FIELDS:
        if key in kv:
            kwargs[key] = _parse_pair(kv.pop(key), key)
    if kv:
        raise DataError(f"unknown scenario key(s): {', '.join(sorted(kv))}")

    spill_kv = _parse_kv(sections.get("spillover", []))
    spill_kwargs = {}
    if "distribution" in spill_kv:
        spill_kwargs["distribution"] = spill_kv.pop("distribution").lower()
    if "strength" in spill_kv:
        spill_kwargs["strength"] = float(spill_kv.pop("strength"))
    if "stationary" in spill_kv:
        spill_kwargs["stationary"] = _parse_bool(spill_kv.pop("stationary"))
    for key in ("shape_range", "scale_range"):
        if key in spill_kv:
            spill_kwargs[key] = _parse_pair(spill_kv.pop(key), key)
    if spill_kv:
        raise DataError(f"unknown spillover key(s): {', '.join(sorted(spill_kv))}")
    spillover = SpilloverSpec(**spill_kwargs)

    cost_kv = _parse_kv(sections.get("costs", []))
    costs = None
    cost_kwargs = {}
    for key in ("f_end", "zeta"):
        if key in cost_kv:
            cost_kwargs[key] = float(cost_kv.pop(key))
    if "c_intra" in cost_kv or "c_inter" in cost_kv:
        costs = CostModel(
            c_intra=float(cost_kv.pop("c_intra")),
            c_inter=float(cost_kv.pop("c_inter")),
            **cost_kwargs,
        )
    frac_keys = {}
    for key in ("intra_fraction_of_mean", "inter_fraction_of_mean"):
        if key in cost_kv:
            frac_keys[key] = float(cost_kv.pop(key))
    if cost_kv:
        raise DataError(f"unknown costs key(s): {', '.join(sorted(cost_kv))}")

    q0 = None
    if "q0" in sections:
        rows = [[float(v) for v in line.split()] for line in sections["q0"]]
        q0 = np.array(rows, dtype=float)
        if q0.shape != (len(regions), len(regions)):
            raise DataError(f"[q0] must be {len(regions)}x{len(regions)}")

    calib_kwargs = {
        key: kwargs.pop(key)
        for key in ("mu_range", "sigma_range", "lambda_range",
                    "intra_fraction", "demand_scale")
        if key in kwargs
    }
    calib = calibrate(regions, **calib_kwargs)
    if q0 is not None:
        calib = CalibrationParams(mu=calib.mu, sigma=calib.sigma, lam=calib.lam, q0=q0)
    if costs is None:
        costs = derive_costs(calib.q0, **frac_keys, **cost_kwargs)
    return build_scenario(regions, spillover=spillover, costs=costs, calib=calib, **kwargs)


def _parse_kv(lines: list[str]) -> dict[str, str]:
    out: dict[str, str] = {}
    for raw in lines:
        if "=" not in raw:
            raise DataError(f"expected 'key = value', got {raw!r}")
        key, _, value = raw.partition("=")
        out[key.strip().lower()] = value.strip()
    return out


def _parse_pair(value: str, key: str) -> tuple[float, float]:
    parts = value.replace(",", " ").split()
    if len(parts) != 2:
        raise DataError(f"{key} must have two numbers, got {value!r}")
    return (float(parts[0]), float(parts[1]))


def _parse_bool(value: str) -> bool:
    v = value.strip().lower()
    if v in ("true", "1", "yes", "on"):
        return True
    if v in ("false", "0", "no", "off"):
        return False
    raise DataError(f"cannot parse boolean {value!r}")
