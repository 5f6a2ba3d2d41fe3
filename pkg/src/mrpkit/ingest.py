"""Read, validate, and recode the three input data families.

Movers (survey microdata), poststratification counts, and benchmark targets
all arrive as CSV. Everything is validated into immutable domain types at
the boundary; downstream modules never see raw rows.

Conventions used throughout the package:

* A move cohort is a two-year window identified by an ordinal index ``t``;
  the window ending in year ``2017 + 2t`` has index ``t`` (so 2016-2017 is
  cohort 0, 2022-2023 is cohort 3). CSV files carry the integer index.
* Geography versions are the strings ``v2010`` and ``v2020``. Cohorts whose
  window ends in 2021 or earlier use v2010 labels, later ones v2020.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from typing import Iterable, Mapping, Optional, Sequence

from .errors import InputError

log = logging.getLogger(__name__)

# Covariates in canonical order with their level tokens. The first listed
# level is NOT necessarily the regression baseline; see model.DEFAULT_BASELINES.
COVARIATES: tuple[tuple[str, tuple[str, ...]], ...] = (
    ("hh_size", ("1", "2", "3plus")),
    ("income", ("lt25k", "25to50k", "50to75k", "75to100k", "100kplus")),
    ("vehicles", ("0", "1", "2plus")),
    ("children", ("yes", "no")),
    ("tenure", ("own", "rent_other")),
    ("race", ("african_american", "asian", "hispanic", "white_only", "other")),
)

COVARIATE_LEVELS: dict[str, tuple[str, ...]] = dict(COVARIATES)

N_CELLS = 900  # 3 * 5 * 3 * 2 * 2 * 5

GEOGRAPHY_VERSIONS = ("v2010", "v2020")

DEFAULT_WAVES = (2019, 2021, 2023)

# Closed list of reasons for moving. The first three are the displacement
# reasons; prefer_not_to_answer alone signals nonresponse.
DISPLACEMENT_REASONS = frozenset(
    {"rent_increase", "income_change", "forced_to_move"}
)
NONRESPONSE_REASON = "prefer_not_to_answer"
REASON_CODES = frozenset(
    {
        "rent_increase",
        "income_change",
        "community_left",
        "household_change",
        "needed_more_space",
        "needed_less_space",
        "better_commute",
        "better_amenities",
        "telework_policy",
        "school_access",
        "safety_concerns",
        "home_upgrade",
        "forced_to_move",
        "other_reason",
        "prefer_not_to_answer",
    }
)

DURATION_CATEGORIES = ("lt1y", "1to2y", "2to3y", "3to5y", "gt5y")

EXCLUDED = "excluded"

_FIRST_COHORT_END_YEAR = 2017


@dataclass(frozen=True)
class CellKey:
    """One of the 900 covariate combinations defining a poststratification cell."""

    hh_size: str
    income: str
    vehicles: str
    children: str
    tenure: str
    race: str

    def __post_init__(self):
        for name, levels in COVARIATES:
            value = getattr(self, name)
            if value not in levels:
                raise InputError(f"unknown {name} level {value!r}; expected one of {levels}")

    def index(self) -> int:
        """Dense index in [0, 900), mixed-radix over the covariates in order."""
        idx = 0
        for name, levels in COVARIATES:
            idx = idx * len(levels) + levels.index(getattr(self, name))
        return idx

    @staticmethod
    def from_index(idx: int) -> "CellKey":
        if not 0 <= idx < N_CELLS:
            raise InputError(f"cell index {idx} out of range [0, {N_CELLS})")
        values = {}
        for name, levels in reversed(COVARIATES):
            idx, pos = divmod(idx, len(levels))
            values[name] = levels[pos]
        return CellKey(**values)

    @staticmethod
    def all_cells() -> tuple["CellKey", ...]:
        return tuple(CellKey.from_index(i) for i in range(N_CELLS))


@dataclass(frozen=True)
class MoverRecord:
    """One sampled recent-mover household."""

    household_id: str
    survey_wave: int
    area_id: str
    geography_version: str
    cohort: int
    displaced: bool
    cell: CellKey

    def __post_init__(self):
        if self.geography_version not in GEOGRAPHY_VERSIONS:
            raise InputError(
                f"unknown geography_version {self.geography_version!r} "
                f"(household {self.household_id})"
            )
        if self.cohort < 0:
            raise InputError(f"negative cohort index (household {self.household_id})")


@dataclass(frozen=True)
class BenchmarkTarget:
    """Per-cohort aggregate survey estimate with its standard error.

    ``std_error`` may be zero when produced by ``direct_estimate`` on
    degenerate replicate data; targets used for rejection filtering must
    have a strictly positive standard error (enforced where consumed).
    """

    cohort: int
    estimate: float
    std_error: float

    def __post_init__(self):
        if not 0.0 < self.estimate < 1.0:
            raise InputError(f"benchmark estimate must lie in (0, 1), got {self.estimate}")
        if self.std_error < 0.0:
            raise InputError(f"benchmark std_error must be nonnegative, got {self.std_error}")


class PostStratTable:
    """Population counts per (area, cohort, cell), with geography bookkeeping."""

    def __init__(
        self,
        entries: Mapping[tuple[str, int, int], float],
        versions: Mapping[int, str] | None = None,
    ):
        self.entries: dict[tuple[str, int, int], float] = {}
        totals: dict[tuple[str, int], float] = {}
        for (area, cohort, cell_idx), count in entries.items():
            if not 0 <= cell_idx < N_CELLS:
                raise InputError(f"cell index {cell_idx} out of range for ({area}, {cohort})")
            if count < 0:
                raise InputError(f"negative count for ({area}, cohort {cohort}, cell {cell_idx})")
            key = (area, cohort, cell_idx)
            if key in self.entries:
                raise InputError(f"duplicate poststrat entry for ({area}, {cohort}, {cell_idx})")
            self.entries[key] = float(count)
            totals[(area, cohort)] = totals.get((area, cohort), 0.0) + count
        for (area, cohort), total in totals.items():
            if total <= 0.0:
                raise InputError(f"all-zero counts for area {area!r}, cohort {cohort}")
        self._totals = totals
        self.versions = dict(versions) if versions else {}
        for cohort, version in self.versions.items():
            if version not in GEOGRAPHY_VERSIONS:
                raise InputError(f"unknown geography_version {version!r} for cohort {cohort}")

    def keys(self) -> list[tuple[str, int]]:
        return sorted(self._totals)

    def cohorts(self) -> list[int]:
        return sorted({c for _, c in self._totals})

    def areas(self, cohort: int) -> list[str]:
        return sorted({a for a, c in self._totals if c == cohort})

    def total(self, area: str, cohort: int) -> float:
        return self._totals.get((area, cohort), 0.0)

    def counts_vector(self, area: str, cohort: int):
        """Length-900 count vector for one (area, cohort); absent cells are 0."""
        import numpy as np

        out = np.zeros(N_CELLS)
        for (a, c, j), count in self.entries.items():
            if a == area and c == cohort:
                out[j] = count
        return out


def cohort_end_year(cohort: int) -> int:
    return _FIRST_COHORT_END_YEAR + 2 * cohort


def cohort_label(cohort: int) -> str:
    end = cohort_end_year(cohort)
    return f"{end - 1}-{end}"


def cohort_from_end_year(end_year: int) -> int:
    t, rem = divmod(end_year - _FIRST_COHORT_END_YEAR, 2)
    if rem or t < 0:
        raise InputError(f"no move cohort ends in year {end_year}")
    return t


def geography_for_cohort(cohort: int) -> str:
    """Geography version rule: cohorts ending 2021 or earlier use v2010 labels."""
    return "v2010" if cohort_end_year(cohort) <= 2021 else "v2020"


def recode_displacement(reason_flags: Iterable[str]) -> Optional[bool]:
    """Binarize the reasons-for-moving responses into a displacement flag.

    Returns True when any displacement reason was selected, None (missing)
    when the only selection is the nonresponse option, and False otherwise.
    The empty set means "no displacement factors" and recodes to False.
    """
    flags = set(reason_flags)
    unknown = flags - REASON_CODES
    if unknown:
        raise InputError(f"unknown reason code(s): {sorted(unknown)}")
    if flags & DISPLACEMENT_REASONS:
        return True
    if flags == {NONRESPONSE_REASON}:
        return None
    return False


def assign_cohort(survey_wave: int, duration_category: str):
    """Map a survey wave and duration-at-address category to a move cohort.

    Durations under two years belong to the cohort ending in the survey
    year; the two-to-three and three-to-five year categories are pooled
    into the immediately preceding cohort; longer durations are excluded.
    Returns the cohort index, or the string ``"excluded"``.
    """
    if duration_category not in DURATION_CATEGORIES:
        raise InputError(
            f"unknown duration_category {duration_category!r}; "
            f"expected one of {DURATION_CATEGORIES}"
        )
    if duration_category == "gt5y":
        return EXCLUDED
    recent = cohort_from_end_year(survey_wave)
    if duration_category in ("lt1y", "1to2y"):
        return recent
    return recent - 1


# ---------------------------------------------------------------------------
# CSV loading
# ---------------------------------------------------------------------------

_MOVER_BASE_COLUMNS = ("household_id", "survey_wave", "puma", "geography_version")
_CELL_COLUMNS = ("hh_size", "income", "vehicles", "children", "tenure", "race")


def _parse_bool(raw: str, where: str) -> bool:
    token = raw.strip().lower()
    if token in ("1", "true", "t", "yes"):
        return True
    if token in ("0", "false", "f", "no"):
        return False
    raise InputError(f"{where}: cannot parse boolean from {raw!r}")


def _parse_int(raw: str, where: str) -> int:
    try:
        return int(raw.strip())
    except ValueError:
        raise InputError(f"{where}: cannot parse integer from {raw!r}") from None


def _parse_float(raw: str, where: str) -> float:
    try:
        return float(raw.strip())
    except ValueError:
        raise InputError(f"{where}: cannot parse number from {raw!r}") from None


def _read_rows(path) -> tuple[list[str], list[dict]]:
    try:
        handle = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot open {path}: {exc}") from None
    with handle:
        reader = csv.DictReader(handle)
        if reader.fieldnames is None:
            raise InputError(f"{path}: empty file, expected a header row")
        fieldnames = [f.strip() for f in reader.fieldnames]
        rows = [dict(zip(fieldnames, (v if v is not None else "" for v in row.values())))
                for row in reader]
    return fieldnames, rows


def _require_columns(path, fieldnames: Sequence[str], required: Iterable[str]):
    missing = [c for c in required if c not in fieldnames]
    if missing:
        raise InputError(f"{path}: missing required column(s) {missing}")


def load_movers(path, waves: Sequence[int] | None = None) -> list[MoverRecord]:
    """Load mover microdata, accepting pre-recoded or raw per-row forms.

    A row is pre-recoded when it fills ``cohort`` + ``displaced``, raw when
    it fills ``duration_category`` + ``reason_*`` flag columns. A row that
    fills both forms is an error. Rows whose displacement is missing
    (nonresponse) or whose duration excludes them are dropped with a
    logged count.
    """
    fieldnames, rows = _read_rows(path)
    _require_columns(path, fieldnames, _MOVER_BASE_COLUMNS + _CELL_COLUMNS)
    reason_cols = [c for c in fieldnames if c.startswith("reason_")]
    for col in reason_cols:
        code = col[len("reason_"):]
        if code not in REASON_CODES:
            raise InputError(f"{path}: unknown reason column {col!r}")
    known_waves = tuple(waves) if waves is not None else DEFAULT_WAVES

    records: list[MoverRecord] = []
    n_missing_displacement = 0
    n_excluded_duration = 0
    for i, row in enumerate(rows, start=2):  # header is line 1
        where = f"{path} line {i}"
        has_cohort = bool(row.get("cohort", "").strip())
        has_duration = bool(row.get("duration_category", "").strip())
        has_displaced = bool(row.get("displaced", "").strip())
        has_reasons = any(row.get(c, "").strip() for c in reason_cols)
        if (has_cohort or has_displaced) and (has_duration or has_reasons):
            raise InputError(f"{where}: mixes pre-recoded and raw columns")

        wave = _parse_int(row["survey_wave"], where)
        if waves is not None and wave not in known_waves:
            raise InputError(f"{where}: survey_wave {wave} not in {known_waves}")

        if has_cohort:
            cohort = _parse_int(row["cohort"], where)
            if cohort < 0:
                raise InputError(f"{where}: negative cohort")
            if not has_displaced:
                n_missing_displacement += 1
                continue
            displaced = _parse_bool(row["displaced"], where)
        elif has_duration:
            assigned = assign_cohort(wave, row["duration_category"].strip())
            if assigned == EXCLUDED:
                n_excluded_duration += 1
                continue
            cohort = assigned
            flags = {c[len("reason_"):] for c in reason_cols
                     if row.get(c, "").strip() and _parse_bool(row[c], where)}
            recoded = recode_displacement(flags)
            if recoded is None:
                n_missing_displacement += 1
                continue
            displaced = recoded
        else:
            raise InputError(
                f"{where}: row has neither pre-recoded (cohort, displaced) nor "
                "raw (duration_category, reason_*) fields"
            )

        try:
            cell = CellKey(**{c: row[c].strip() for c in _CELL_COLUMNS})
        except InputError as exc:
            raise InputError(f"{where}: {exc}") from None
        records.append(
            MoverRecord(
                household_id=row["household_id"].strip(),
                survey_wave=wave,
                area_id=row["puma"].strip(),
                geography_version=row["geography_version"].strip(),
                cohort=cohort,
                displaced=displaced,
                cell=cell,
            )
        )

    if n_missing_displacement:
        log.info("%s: dropped %d row(s) with missing displacement", path, n_missing_displacement)
    if n_excluded_duration:
        log.info("%s: excluded %d row(s) with duration over five years", path, n_excluded_duration)
    log.info("%s: loaded %d mover record(s)", path, len(records))
    return records


def load_poststrat(path) -> PostStratTable:
    fieldnames, rows = _read_rows(path)
    required = ("puma", "geography_version", "cohort") + _CELL_COLUMNS + ("count",)
    _require_columns(path, fieldnames, required)
    entries: dict[tuple[str, int, int], float] = {}
    versions: dict[int, str] = {}
    for i, row in enumerate(rows, start=2):
        where = f"{path} line {i}"
        cohort = _parse_int(row["cohort"], where)
        count = _parse_float(row["count"], where)
        if count < 0:
            raise InputError(f"{where}: negative count {count}")
        try:
            cell = CellKey(**{c: row[c].strip() for c in _CELL_COLUMNS})
        except InputError as exc:
            raise InputError(f"{where}: {exc}") from None
        version = row["geography_version"].strip()
        if version not in GEOGRAPHY_VERSIONS:
            raise InputError(f"{where}: unknown geography_version {version!r}")
        prior = versions.setdefault(cohort, version)
        if prior != version:
            raise InputError(
                f"{where}: cohort {cohort} mixes geography versions {prior} and {version}"
            )
        key = (row["puma"].strip(), cohort, cell.index())
        if key in entries:
            raise InputError(f"{where}: duplicate (puma, cohort, cell) entry")
        entries[key] = count
    table = PostStratTable(entries, versions)
    log.info("%s: loaded %d poststrat entries over %d (area, cohort) pairs",
             path, len(entries), len(table.keys()))
    return table


def load_benchmarks(path) -> list[BenchmarkTarget]:
    fieldnames, rows = _read_rows(path)
    _require_columns(path, fieldnames, ("cohort", "estimate", "std_error"))
    targets: list[BenchmarkTarget] = []
    seen: set[int] = set()
    for i, row in enumerate(rows, start=2):
        where = f"{path} line {i}"
        cohort = _parse_int(row["cohort"], where)
        if cohort in seen:
            raise InputError(f"{where}: duplicate cohort {cohort}")
        seen.add(cohort)
        estimate = _parse_float(row["estimate"], where)
        std_error = _parse_float(row["std_error"], where)
        if std_error <= 0:
            raise InputError(f"{where}: std_error must be positive")
        try:
            targets.append(BenchmarkTarget(cohort, estimate, std_error))
        except InputError as exc:
            raise InputError(f"{where}: {exc}") from None
    log.info("%s: loaded %d benchmark target(s)", path, len(targets))
    return targets


# ---------------------------------------------------------------------------
# CSV writing (canonical pre-recoded forms; round-trips with the loaders)
# ---------------------------------------------------------------------------


def fmt_float(value: float) -> str:
    """Shortest decimal string that round-trips to the same float64."""
    return repr(float(value))


def write_movers(records: Iterable[MoverRecord], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(_MOVER_BASE_COLUMNS + ("cohort", "displaced") + _CELL_COLUMNS)
        for r in records:
            writer.writerow(
                [r.household_id, r.survey_wave, r.area_id, r.geography_version,
                 r.cohort, str(r.displaced).lower()]
                + [getattr(r.cell, c) for c in _CELL_COLUMNS]
            )


def write_poststrat(table: PostStratTable, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(("puma", "geography_version", "cohort") + _CELL_COLUMNS + ("count",))
        for (area, cohort, cell_idx) in sorted(table.entries):
            cell = CellKey.from_index(cell_idx)
            version = table.versions.get(cohort, geography_for_cohort(cohort))
            writer.writerow(
                [area, version, cohort]
                + [getattr(cell, c) for c in _CELL_COLUMNS]
                + [fmt_float(table.entries[(area, cohort, cell_idx)])]
            )


def write_benchmarks(targets: Iterable[BenchmarkTarget], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(("cohort", "estimate", "std_error"))
        for t in sorted(targets, key=lambda t: t.cohort):
            writer.writerow([t.cohort, fmt_float(t.estimate), fmt_float(t.std_error)])
