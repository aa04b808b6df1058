"""Bundled synthetic inputs and the CSV formats used by the command line.

Real national life tables and registry cohorts are not redistributable, so
the repository ships deterministic synthetic stand-ins with the same shapes:
a complete age x year x sex background-mortality grid, and a lung-style
cohort with standardised age, a deprivation score, stage dummies, and two
comorbidity flags.  The writers and readers here round-trip those objects.

Patient CSV layout: ``time,status,<covariates...>,age,year,<stratum cols>``.
Covariate columns that fail numeric parsing become label columns (usable for
subgrouping but not as model covariates).
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from . import lifetable as lt
from .baseline import PGWParams
from .inference import Dataset
from .model import GHParams, simulate_event_time

LUNG_AGE_CENTER = 71.5
LUNG_AGE_SCALE = 10.0
STAGE_LABELS = ("I", "II", "III", "IV")


class DataFormatError(ValueError):
    """Raised when a patient CSV does not match the documented layout."""


# -- synthetic life table ------------------------------------------------------

def synthetic_life_table(age_max: int = 99, years=(2010, 2019)) -> lt.LifeTable:
    """Deterministic sex-stratified background-mortality grid.

    Rates rise log-linearly with age above 35 from a small floor, carry a
    constant between-sex factor, and improve mildly by calendar year.
    """
    entries = {}
    for a in range(0, age_max + 1):
        base = 0.0004 + 0.00022 * math.exp(0.088 * max(a - 35, 0))
        for y in range(years[0], years[1] + 1):
            trend = 1.0 - 0.004 * (y - years[0])
            for sex, factor in (("0", 1.0), ("1", 1.28)):
                entries[(a, y, (sex,))] = base * factor * trend
    return lt.LifeTable.from_entries(entries, stratum_schema=("sex",))


def write_life_table_csv(path, table: lt.LifeTable) -> None:
    """Serialise a life table in the loader's ``age,year,...,rate`` layout."""
    header = ("age", "year") + table.stratum_schema + ("rate",)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for (age, year, stratum) in sorted(table.entries):
            rate = table.entries[(age, year, stratum)]
            cells = [str(age), str(year), *stratum, f"{rate:.17g}"]
            fh.write(",".join(cells) + "\n")


# -- synthetic lung-style cohort -------------------------------------------------

def synthetic_lung_cohort(n: int = 4000, seed: int = 2012,
                          table: lt.LifeTable | None = None) -> Dataset:
    """Deterministic cohort mimicking a lung-cancer registry extract.

    Columns: standardised age ``agec``, standardised deprivation ``imd``,
    stage dummies ``stage2..stage4`` (stage I is the reference), comorbidity
    flags ``cvd`` and ``copd``; a ``stage`` label column rides along in
    ``extras``.  Event times follow a known excess-hazard model with gamma
    heterogeneity on top of the synthetic background rates, with light
    drop-out and an administrative horizon of 5 years.
    """
    if table is None:
        table = synthetic_life_table()
    rng = np.random.default_rng(seed)
    age = np.clip(rng.normal(LUNG_AGE_CENTER, LUNG_AGE_SCALE, n), 40.0, 95.0)
    agec = (age - LUNG_AGE_CENTER) / LUNG_AGE_SCALE
    imd = rng.normal(0.0, 1.0, n)
    stage_idx = rng.choice(4, size=n, p=(0.17, 0.08, 0.22, 0.53))
    cvd = (rng.random(n) < 0.13).astype(float)
    copd = (rng.random(n) < 0.22).astype(float)
    sex = (rng.random(n) < 0.45).astype(float)  # life-table stratum only

    x = np.column_stack([
        agec, imd,
        (stage_idx == 1).astype(float),
        (stage_idx == 2).astype(float),
        (stage_idx == 3).astype(float),
        cvd, copd,
    ])
    x_names = ("agec", "imd", "stage2", "stage3", "stage4", "cvd", "copd")
    w = agec.reshape(-1, 1)
    truth = GHParams(
        theta=PGWParams(2.1, 0.95, 1.6),
        alpha=(0.35,),
        beta=(0.35, 0.18, 0.55, 1.15, 1.9, 0.12, 0.2),
    )
    lam = rng.gamma(1.0 / 0.75, 0.75, size=n)
    u = np.clip(rng.random(n), 2.0**-53, None)
    t_event = simulate_event_time(u, x, w, truth, lam)

    year = 2012.0
    strata = tuple((str(int(s)),) for s in sex)
    u_bg = rng.random(n)
    t_bg = np.empty(n)
    for i in range(n):
        res = lt.sample_other_cause_time(
            table, lt.LifeTableKey(float(age[i]), year, strata[i]), float(u_bg[i])
        )
        t_bg[i] = math.inf if res.truncated else res.time
    t_death = np.minimum(t_event, t_bg)
    censor = np.minimum(rng.exponential(1.0 / 0.03, size=n), 5.0)
    time = np.maximum(np.minimum(t_death, censor), 1e-12)
    status = (t_death <= censor).astype(int)

    return Dataset(
        time=time,
        status=status,
        x=x,
        w=w,
        x_names=x_names,
        w_names=("agec",),
        age=age,
        year=np.full(n, year),
        strata=strata,
        stratum_names=table.stratum_schema,
        extras={"stage": np.array([STAGE_LABELS[i] for i in stage_idx], dtype=object)},
    )


# -- patient CSV round trip -------------------------------------------------------

def write_patient_csv(path, data: Dataset) -> None:
    """Write a cohort in the documented patient CSV layout.

    The covariate block is the ordered union of model columns and extra
    label columns; floats carry full precision.
    """
    cov_names = list(data.x_names)
    for name in data.w_names:
        if name not in cov_names:
            cov_names.append(name)
    pool = {name: data.x[:, j] for j, name in enumerate(data.x_names)}
    pool.update({name: data.w[:, j] for j, name in enumerate(data.w_names)})
    for name, col in data.extras.items():
        if name not in cov_names:
            cov_names.append(name)
            pool[name] = col

    def cell(value) -> str:
        if isinstance(value, str):
            return value
        return f"{float(value):.17g}"

    header = ["time", "status", *cov_names, "age", "year", *data.stratum_names]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for i in range(data.n):
            cells = [f"{data.time[i]:.17g}", str(int(data.status[i]))]
            cells += [cell(pool[name][i]) for name in cov_names]
            cells += [f"{data.age[i]:.17g}", f"{data.year[i]:.17g}"]
            cells += list(data.strata[i])
            fh.write(",".join(cells) + "\n")


def load_patient_csv(source) -> Dataset:
    """Parse a patient CSV; the layout is self-describing.

    The header must start ``time,status`` and contain adjacent ``age,year``
    columns; anything between is a covariate, anything after is a life-table
    stratum column.  Covariate columns that are not fully numeric become
    label columns in ``extras``.  Malformed required fields raise
    :class:`DataFormatError` naming the row and column.
    """
    if isinstance(source, (str, Path)):
        with open(source, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    elif hasattr(source, "read"):
        lines = source.read().splitlines()
    else:
        lines = [str(l).rstrip("\n") for l in source]
    rows = [line.split(",") for line in lines if line.strip()]
    if not rows:
        raise DataFormatError("patient file contains no rows")
    header = [h.strip() for h in rows[0]]
    if header[:2] != ["time", "status"]:
        raise DataFormatError(
            f"header must start with 'time,status', got {','.join(header[:2])!r}"
        )
    try:
        idx_age = header.index("age")
    except ValueError:
        raise DataFormatError("header is missing the 'age' column") from None
    if idx_age + 1 >= len(header) or header[idx_age + 1] != "year":
        raise DataFormatError("the 'year' column must directly follow 'age'")
    cov_names = header[2:idx_age]
    stratum_names = tuple(header[idx_age + 2 :])

    body = rows[1:]
    if not body:
        raise DataFormatError("patient file contains no data rows")
    for lineno, fields in enumerate(body, start=2):
        if len(fields) != len(header):
            raise DataFormatError(
                f"row {lineno}: expected {len(header)} fields, got {len(fields)}"
            )

    def numeric_column(idx: int, name: str) -> np.ndarray:
        out = np.empty(len(body))
        for lineno, fields in enumerate(body, start=2):
            try:
                out[lineno - 2] = float(fields[idx])
            except ValueError:
                raise DataFormatError(
                    f"row {lineno}: column {name!r} is not numeric: {fields[idx]!r}"
                ) from None
        return out

    time = numeric_column(0, "time")
    status_f = numeric_column(1, "status")
    if not np.all((status_f == 0.0) | (status_f == 1.0)):
        bad = int(np.nonzero((status_f != 0.0) & (status_f != 1.0))[0][0])
        raise DataFormatError(f"row {bad + 2}: column 'status' must be 0 or 1")
    age = numeric_column(idx_age, "age")
    year = numeric_column(idx_age + 1, "year")

    numeric_covs, extras = [], {}
    for offset, name in enumerate(cov_names):
        idx = 2 + offset
        raw = [fields[idx] for fields in body]
        try:
            numeric_covs.append((name, np.array([float(v) for v in raw])))
        except ValueError:
            extras[name] = np.array([v.strip() for v in raw], dtype=object)

    x_names = tuple(name for name, _ in numeric_covs)
    x = (
        np.column_stack([col for _, col in numeric_covs])
        if numeric_covs
        else np.empty((len(body), 0))
    )
    strata = tuple(
        tuple(fields[idx_age + 2 + j].strip() for j in range(len(stratum_names)))
        for fields in body
    )
    try:
        return Dataset(
            time=time,
            status=status_f.astype(int),
            x=x,
            w=np.empty((len(body), 0)),
            x_names=x_names,
            w_names=(),
            age=age,
            year=year,
            strata=strata,
            stratum_names=stratum_names,
            extras=extras,
        )
    except ValueError as exc:
        raise DataFormatError(str(exc)) from None


# -- bundled demo inputs ------------------------------------------------------------

def write_bundled_data(root) -> list:
    """Regenerate the bundled demo inputs under ``root`` (returns the paths).

    Writes the synthetic life table, the lung-style cohort, and the shipped
    scenario files; every file is a pure function of fixed seeds, so reruns
    are byte-identical.
    """
    from .simulation import save_scenario, sc1_scenario, two_group_scenario, Scenario

    root = Path(root)
    data_dir = root / "data"
    scen_dir = root / "scenarios"
    data_dir.mkdir(parents=True, exist_ok=True)
    scen_dir.mkdir(parents=True, exist_ok=True)

    written = []
    table = synthetic_life_table()
    path = data_dir / "lifetable_synthetic.csv"
    write_life_table_csv(path, table)
    written.append(path)

    cohort = synthetic_lung_cohort(table=table)
    path = data_dir / "lung_synthetic.csv"
    write_patient_csv(path, cohort)
    written.append(path)

    scenarios = {
        "sc1.ini": sc1_scenario(),
        "sc1_small.ini": sc1_scenario(n=500, M=200, seed=20121),
        "sc1_null.ini": sc1_scenario(b=0.0, seed=20122),
        "two_group_1.ini": two_group_scenario(variant=1),
        "two_group_2.ini": two_group_scenario(variant=2),
        # configurable stand-ins for further single-truth designs
        "sc2_standin.ini": Scenario(
            name="sc2-standin", n=1000, M=100, baseline="lognormal",
            theta=(0.3, 0.9), alpha=(0.5, 0.4, 0.3, 0.2), beta=(0.6, 0.5, 0.4, 0.3),
            frailty_family="ig", frailty_b=0.8, seed=20123,
        ),
        "sc3_standin.ini": Scenario(
            name="sc3-standin", n=1000, M=100, baseline="pgw",
            theta=(1.2, 0.9, 2.5), alpha=(0.4, 0.3, 0.2, 0.1),
            beta=(0.8, 0.6, 0.4, 0.2), frailty_family="gamma", frailty_b=1.0,
            seed=20124,
        ),
    }
    for fname, scenario in scenarios.items():
        path = scen_dir / fname
        save_scenario(path, scenario)
        written.append(path)
    return written
