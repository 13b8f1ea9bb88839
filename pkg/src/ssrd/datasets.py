"""Bundled multi-region datasets and the named scenario registry.

Names follow "<city><N>" (e.g. shanghai4, beijing9, nyc7): the first N rows
of the city's attribute table, recalibrated on the subset so min-max
normalization reflects the peers actually present.  NYC attributes are
static approximations of public census figures for Brooklyn PUMAs.
"""

from __future__ import annotations

import re
from importlib import resources

from .errors import DataError
from .scenario import Region, Scenario, SpilloverSpec, build_scenario, load_scenario

# demand_scale converts area*density (persons) into demand units per period.
# Shanghai/Beijing use a nominal 1e-3; NYC derives from daily trips per person
# (2.2) * 23.38% morning-peak share * 60% service penetration.
_CITY_DEFAULTS = {
    "shanghai": {"file": "shanghai.csv", "demand_scale": 1e-3},
    "beijing": {"file": "beijing.csv", "demand_scale": 1e-3},
    "nyc": {"file": "nyc_brooklyn.csv", "demand_scale": 2.2 * 0.2338 * 0.60 * 1e-3},
}
_NAME_RE = re.compile(r"^([a-z]+?)(\d+)?$")

DEFAULT_SEED = 20240

NYC_SPEED_KMH = 19.31
NYC_PEAK_MULTIPLIER = 1.3


def load_city_regions(city: str) -> list[Region]:
    entry = _CITY_DEFAULTS.get(city)
    if entry is None:
        raise DataError(f"no bundled dataset for city {city!r}; "
                        f"available: {', '.join(sorted(_CITY_DEFAULTS))}")
    ref = resources.files("ssrd.data").joinpath(entry["file"])
    from .scenario import _regions_from_csv
    with ref.open("r", encoding="utf-8") as fh:
        return _regions_from_csv(fh)


def build_named_scenario(
    name: str,
    k: int = 3,
    horizon: int = 5,
    n_paths: int = 300,
    seed: int = DEFAULT_SEED,
    spillover: SpilloverSpec | None = None,
    **overrides,
) -> Scenario:
    """Build a bundled scenario like 'shanghai4' or 'nyc8'."""
    match = _NAME_RE.match(name.lower())
    if not match or match.group(1) not in _CITY_DEFAULTS:
        raise DataError(f"unknown scenario name {name!r}")
    city = match.group(1)
    regions = load_city_regions(city)
    n = int(match.group(2)) if match.group(2) else len(regions)
    if not 1 <= n <= len(regions):
        raise DataError(f"{city} has {len(regions)} regions; cannot take {n}")
    subset = [Region(i, r.name, r.area, r.density, r.centroid)
              for i, r in enumerate(regions[:n])]
    kwargs = dict(
        horizon=horizon, k=min(k, n), rho=0.01, n_paths=n_paths, n_basis=3,
        seed=seed, name=f"{city}{n}",
        demand_scale=_CITY_DEFAULTS[city]["demand_scale"],
        intra_fraction=0.3,
        mu_range=(0.005, 0.040), sigma_range=(0.18, 0.55),
        lambda_range=(0.20, 1.20),
    )
    kwargs.update(overrides)
    if spillover is not None:
        kwargs["spillover"] = spillover
    return build_scenario(subset, **kwargs)


def resolve_scenario(spec: str, **overrides) -> Scenario:
    """Resolve a --scenario argument: a bundled name or a scenario file path.
    Overrides apply to top-level Scenario fields in both cases."""
    match = _NAME_RE.match(spec.lower())
    if match and match.group(1) in _CITY_DEFAULTS:
        return build_named_scenario(spec, **overrides)
    scenario = load_scenario(spec)
    if overrides:
        import dataclasses
        valid = {f.name for f in dataclasses.fields(Scenario)}
        bad = set(overrides) - valid
        if bad:
            raise DataError(f"unknown scenario override(s): {', '.join(sorted(bad))}")
        scenario = dataclasses.replace(scenario, **overrides)
    return scenario


def default_registry(n_paths: int = 300) -> dict[str, Scenario]:
    """The named scenarios served by the bridge when no directory is given."""
    names = ["shanghai4", "shanghai5", "shanghai6", "shanghai7", "shanghai8",
             "beijing6", "beijing9", "nyc7", "nyc8"]
    registry = {}
    for name in names:
        scenario = build_named_scenario(name, n_paths=n_paths)
        registry[scenario.name] = scenario
    return registry
