"""Two-level environment -> scene taxonomy.

Holds the scene lists per environment, a raw-label merge map used to clean
dataset labels, and optional lat/lon boxes for picking an environment from
a coarse GPS fix. Immutable after load; share freely across workers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import yaml


class TaxonomyError(ValueError):
    """Raised when a taxonomy file fails validation."""


@dataclass(frozen=True)
class GeoRegion:
    """Axis-aligned lat/lon bounding box in degrees, bounds inclusive."""

    min_lat: float
    min_lon: float
    max_lat: float
    max_lon: float

    def __post_init__(self):
        if self.min_lat > self.max_lat or self.min_lon > self.max_lon:
            raise TaxonomyError(
                f"geo_region bounds out of order: {self}"
            )

    def contains(self, lat: float, lon: float) -> bool:
        return (
            self.min_lat <= lat <= self.max_lat
            and self.min_lon <= lon <= self.max_lon
        )


@dataclass(frozen=True)
class Environment:
    id: str
    scenes: tuple[str, ...]
    geo_region: Optional[GeoRegion] = None

    @property
    def n(self) -> int:
        """Number of scenes in this environment."""
        return len(self.scenes)


@dataclass(frozen=True)
class SceneTaxonomy:
    """Validated environment hierarchy plus label merge map.

    ``environments`` preserves file order, which is the tie-break for
    overlapping geo regions.
    """

    environments: dict[str, Environment]
    merge_map: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        self._validate()

    def _validate(self):
        scene_owners: dict[str, list[str]] = {}
        for env_id, env in self.environments.items():
            if env.id != env_id:
                raise TaxonomyError(f"environment key {env_id!r} != id {env.id!r}")
            if len(env.scenes) < 2:
                raise TaxonomyError(
                    f"environment {env_id!r} needs at least 2 scenes"
                )
            seen = set()
            for label in env.scenes:
                if label in seen:
                    raise TaxonomyError(
                        f"duplicate scene label {label!r} in environment {env_id!r}"
                    )
                seen.add(label)
                scene_owners.setdefault(label, []).append(env_id)

        sources = set(self.merge_map)
        for raw, target in self.merge_map.items():
            if target in sources:
                raise TaxonomyError(
                    f"merge chain: {raw!r} -> {target!r} but {target!r} is also a merge source"
                )
            owners = scene_owners.get(target, [])
            if len(owners) == 0:
                raise TaxonomyError(
                    f"merge target {target!r} is not a scene of any environment"
                )
            if len(owners) > 1:
                raise TaxonomyError(
                    f"merge target {target!r} is ambiguous across environments {owners}"
                )

    def canonicalize(self, raw_label: str) -> str:
        """Map a raw label to its canonical scene label (pass-through if unmapped)."""
        return self.merge_map.get(raw_label, raw_label)

    def environment(self, env_id: str) -> Environment:
        try:
            return self.environments[env_id]
        except KeyError:
            raise TaxonomyError(f"unknown environment {env_id!r}") from None

    def locate_environment(self, lat: float, lon: float) -> Optional[str]:
        """First environment (file order) whose geo box contains the point.

        None when no box matches or none are defined. Coordinates must be
        valid degrees.
        """
        if not -90.0 <= lat <= 90.0:
            raise ValueError(f"latitude out of range: {lat}")
        if not -180.0 <= lon <= 180.0:
            raise ValueError(f"longitude out of range: {lon}")
        for env in self.environments.values():
            if env.geo_region is not None and env.geo_region.contains(lat, lon):
                return env.id
        return None


def canonicalize(taxonomy: SceneTaxonomy, raw_label: str) -> str:
    return taxonomy.canonicalize(raw_label)


def locate_environment(taxonomy: SceneTaxonomy, lat: float, lon: float) -> Optional[str]:
    return taxonomy.locate_environment(lat, lon)


def load_taxonomy(path: str | Path) -> SceneTaxonomy:
    """Load and validate a taxonomy YAML file.

    Expected top-level keys: ``environments`` (list of {id, scenes,
    geo_region?}) and optional ``merge_map`` (flat raw -> canonical map).
    """
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise TaxonomyError(f"cannot parse taxonomy file {path}: {exc}") from exc
    if not isinstance(raw, dict) or "environments" not in raw:
        raise TaxonomyError(f"{path}: missing top-level 'environments' list")

    environments: dict[str, Environment] = {}
    for entry in raw["environments"]:
        if not isinstance(entry, dict) or "id" not in entry or "scenes" not in entry:
            raise TaxonomyError(f"{path}: environment entries need 'id' and 'scenes'")
        env_id = str(entry["id"])
        if env_id in environments:
            raise TaxonomyError(f"{path}: duplicate environment id {env_id!r}")
        scenes = tuple(str(s) for s in entry["scenes"])
        region = None
        if entry.get("geo_region") is not None:
            box = entry["geo_region"]
            try:
                region = GeoRegion(
                    min_lat=float(box["min_lat"]),
                    min_lon=float(box["min_lon"]),
                    max_lat=float(box["max_lat"]),
                    max_lon=float(box["max_lon"]),
                )
            except (KeyError, TypeError) as exc:
                raise TaxonomyError(
                    f"{path}: bad geo_region for {env_id!r}: {exc}"
                ) from exc
        environments[env_id] = Environment(id=env_id, scenes=scenes, geo_region=region)

    merge_map = {}
    for k, v in (raw.get("merge_map") or {}).items():
        merge_map[str(k)] = str(v)

    return SceneTaxonomy(environments=environments, merge_map=merge_map)


def save_taxonomy(taxonomy: SceneTaxonomy, path: str | Path) -> None:
    """Write a taxonomy in the same YAML layout load_taxonomy reads."""
    doc = {
        "environments": [
            {
                "id": env.id,
                "scenes": list(env.scenes),
                **(
                    {
                        "geo_region": {
                            "min_lat": env.geo_region.min_lat,
                            "min_lon": env.geo_region.min_lon,
                            "max_lat": env.geo_region.max_lat,
                            "max_lon": env.geo_region.max_lon,
                        }
                    }
                    if env.geo_region is not None
                    else {}
                ),
            }
            for env in taxonomy.environments.values()
        ],
        "merge_map": dict(taxonomy.merge_map),
    }
    Path(path).write_text(
        yaml.safe_dump(doc, sort_keys=False, default_flow_style=False),
        encoding="utf-8",
    )
