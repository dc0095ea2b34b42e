"""Lab test registry: normal ranges, units and severity bin multipliers."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

TEST_IDS = (
    "PCR",
    "LDH",
    "Ferritin",
    "TroponinT",
    "WBC",
    "DDimer",
    "Fibrinogen",
    "Lymphocyte",
    "NeutrophilLymphocyteRatio",
    "XRayScore",
)

DEFAULT_BIN_MULTIPLIERS = (2.0, 4.0, 6.0, 10.0)


@dataclass(frozen=True)
class NormalRange:
    lower: float | None = None
    upper: float | None = None
    upper_inclusive: bool = True

    def __post_init__(self):
        if self.lower is not None and self.upper is not None and self.lower > self.upper:
            raise ValueError(f"normal range lower {self.lower} > upper {self.upper}")

    def contains(self, value: float) -> bool:
        if self.lower is not None and value < self.lower:
            return False
        if self.upper is None:
            return True
        return value <= self.upper if self.upper_inclusive else value < self.upper


@dataclass(frozen=True)
class LabTestKind:
    id: str
    unit: str
    normal_range: NormalRange
    by_sex: dict[str, NormalRange] = field(default_factory=dict)
    bin_multipliers: tuple[float, ...] = DEFAULT_BIN_MULTIPLIERS
    min_value: float = 0.0
    max_value: float | None = None

    def range_for(self, sex: str | None = None) -> NormalRange:
        if sex is not None and sex in self.by_sex:
            return self.by_sex[sex]
        return self.normal_range

    def admissible(self, value: float) -> bool:
        if not math.isfinite(value) or value < self.min_value:
            return False
        return self.max_value is None or value <= self.max_value

    def categorize(self, value: float, sex: str | None = None) -> int:
        """Severity bin: 0 inside (or below) the normal range, then one bin
        per multiple of the upper bound, last bin above the largest multiple."""
        rng = self.range_for(sex)
        upper = rng.upper
        if upper is None:
            return 0
        # below-range values of two-sided tests share bin 0
        if value < upper or (value == upper and rng.upper_inclusive):
            return 0
        for b, mult in enumerate(self.bin_multipliers, start=1):
            if value <= mult * upper:
                return b
        return len(self.bin_multipliers) + 1


@dataclass(frozen=True)
class Registry:
    tests: tuple[LabTestKind, ...]

    def __post_init__(self):
        ids = [t.id for t in self.tests]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate test ids in registry")

    def __getitem__(self, test_id: str) -> LabTestKind:
        for t in self.tests:
            if t.id == test_id:
                return t
        raise KeyError(test_id)

    def __contains__(self, test_id: str) -> bool:
        return any(t.id == test_id for t in self.tests)

    def __iter__(self):
        return iter(self.tests)

    def __len__(self):
        return len(self.tests)

    @property
    def ids(self) -> list[str]:
        return [t.id for t in self.tests]

    def to_dict(self) -> dict:
        def rng(r: NormalRange) -> dict:
            return {"lower": r.lower, "upper": r.upper, "upper_inclusive": r.upper_inclusive}

        return {
            "tests": [
                {
                    "id": t.id,
                    "unit": t.unit,
                    "normal_range": rng(t.normal_range),
                    "by_sex": {s: rng(r) for s, r in sorted(t.by_sex.items())},
                    "bin_multipliers": list(t.bin_multipliers),
                    "min_value": t.min_value,
                    "max_value": t.max_value,
                }
                for t in self.tests
            ]
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Registry":
        default_mults = tuple(data.get("default_bin_multipliers", DEFAULT_BIN_MULTIPLIERS))

        def rng(d: dict) -> NormalRange:
            return NormalRange(d.get("lower"), d.get("upper"), d.get("upper_inclusive", True))

        tests = []
        for t in data["tests"]:
            tests.append(
                LabTestKind(
                    id=t["id"],
                    unit=t.get("unit", ""),
                    normal_range=rng(t["normal_range"]),
                    by_sex={s: rng(r) for s, r in t.get("by_sex", {}).items()},
                    bin_multipliers=tuple(t.get("bin_multipliers", default_mults)),
                    min_value=t.get("min_value", 0.0),
                    max_value=t.get("max_value"),
                )
            )
        return cls(tuple(tests))


def load_registry(path: str | Path) -> Registry:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"registry file not found: {path}")
    with open(path, encoding="utf-8") as fh:
        return Registry.from_dict(json.load(fh))


def save_registry(registry: Registry, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(registry.to_dict(), fh, indent=2)
        fh.write("\n")


def default_registry() -> Registry:
    """The ten tests of the hospital panel with their clinical normal ranges."""
    R = NormalRange
    return Registry(
        (
            LabTestKind("PCR", "mg/L", R(None, 10.0)),
            LabTestKind("LDH", "U/L", R(80.0, 300.0)),
            LabTestKind(
                "Ferritin",
                "ng/mL",
                R(30.0, 400.0),
                by_sex={"M": R(30.0, 400.0), "F": R(13.0, 150.0)},
            ),
            LabTestKind("TroponinT", "ng/L", R(None, 14.0)),
            LabTestKind("WBC", "10^9/L", R(4.0, 11.0)),
            LabTestKind("DDimer", "ng/mL", R(None, 250.0)),
            LabTestKind("Fibrinogen", "mg/dL", R(180.0, 430.0)),
            LabTestKind("Lymphocyte", "%", R(20.0, 45.0)),
            LabTestKind("NeutrophilLymphocyteRatio", "ratio", R(0.8, 3.5)),
            LabTestKind("XRayScore", "points", R(None, 7.0, upper_inclusive=False), max_value=18.0),
        )
    )
