"""Leasing-vs-feed-in economics: revenue per kWh, net revenue, yearly payback.

All money amounts are in EUR; energies in kWh; prices per instance-hour.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import IO, Iterable, Optional, Sequence

from .errors import DataFormatError, DomainError, NotFoundError
from .solar import annual_energy

CURRENCY = "EUR"


@dataclass(frozen=True)
class InstanceType:
    """A leasable compute-instance class.

    ``eta_c`` (instances powered per kW) is stored; the average draw per
    instance ``p_avg`` in watts is derived from it.
    """

    name: str
    vcpu: int
    ram_gb: float
    eta_c: float
    v_i: float

    def __post_init__(self):
        if self.vcpu < 1:
            raise DomainError(f"{self.name}: vcpu must be >= 1")
        if not self.ram_gb > 0:
            raise DomainError(f"{self.name}: ram_gb must be > 0")
        if not self.eta_c > 0:
            raise DomainError(f"{self.name}: eta_c must be > 0")
        if self.v_i < 0:
            raise DomainError(f"{self.name}: v_i must be >= 0")

    @property
    def p_avg(self) -> float:
        return 1000.0 / self.eta_c


@dataclass(frozen=True)
class Tariff:
    r_e: float = 0.05
    r_g: float = 0.15

    def __post_init__(self):
        if self.r_e < 0 or self.r_g < 0:
            raise DomainError("tariff prices must be >= 0")


@dataclass(frozen=True)
class RevenueQuote:
    r_c: float
    r_n: float
    alpha: float


@dataclass(frozen=True)
class Site:
    """Yearly production parameters of a plant: peak-sun hours, system efficiency, nominal kW."""

    psh: float
    eta_sys: float
    p_mpp: float = 1.0

    @property
    def energy(self) -> float:
        return annual_energy(self.psh, self.p_mpp, self.eta_sys)


_TABLE = (
    ("t2.nano", 1, 0.5, 18.8, 0.0059),
    ("t2.micro", 1, 1.0, 18.8, 0.0118),
    ("t2.small", 1, 2.0, 13.5, 0.0236),
    ("t2.medium", 2, 4.0, 20.2, 0.0472),
    ("t2.large", 2, 8.0, 20.9, 0.0944),
    ("t2.xlarge", 4, 16.0, 19.8, 0.1888),
    ("t2.2xlarge", 8, 32.0, 16.2, 0.3776),
)
_BUILTIN = tuple(InstanceType(*row) for row in _TABLE)


def builtin_catalog() -> tuple[InstanceType, ...]:
    """AWS T2 family, 2020 on-demand prices, with measured instances-per-kW."""
    return _BUILTIN


def lookup(name: str, catalog: Optional[Iterable[InstanceType]] = None) -> InstanceType:
    catalog = _BUILTIN if catalog is None else catalog
    for inst in catalog:
        if inst.name == name:
            return inst
    known = ", ".join(i.name for i in (_BUILTIN if catalog is None else catalog))
    raise NotFoundError(f"unknown instance type {name!r}; known: {known}")


CATALOG_HEADER = ("name", "vcpu", "ram_gb", "eta_c", "v_i")


def read_catalog(src: IO[str]) -> list[InstanceType]:
    reader = csv.reader(src)
    header = next(reader, None)
    if header is None or tuple(h.strip() for h in header) != CATALOG_HEADER:
        raise DataFormatError(f"expected header {','.join(CATALOG_HEADER)}", line=1)
    out = []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        try:
            name, vcpu, ram, eta_c, v_i = (c.strip() for c in row)
            out.append(InstanceType(name, int(vcpu), float(ram), float(eta_c), float(v_i)))
        except (ValueError, DomainError) as exc:
            raise DataFormatError(str(exc), line=lineno) from None
    return out


def compute_revenue_rate(eta_c: float, v_i: float, alpha: float) -> float:
    """Gross leasing revenue per kWh consumed: instances/kW x price/h x allocation."""
    if not 0.0 <= alpha <= 1.0:
        raise DomainError(f"alpha must be in [0, 1], got {alpha}")
    if not eta_c > 0:
        raise DomainError(f"eta_c must be > 0, got {eta_c}")
    if v_i < 0:
        raise DomainError(f"v_i must be >= 0, got {v_i}")
    return eta_c * v_i * alpha


def net_revenue(r_c: float, r_e: float) -> float:
    # negative means the feed-in tariff beats leasing
    return r_c - r_e


def annual_payback(r_n: float, psh: float, eta_sys: float, p_mpp: float) -> float:
    return r_n * annual_energy(psh, p_mpp, eta_sys)


def breakeven_alpha(eta_c: float, v_i: float, r_e: float) -> float:
    """Allocation factor at which leasing earns exactly the feed-in tariff.

    Values above 1 mean leasing can never beat selling.
    """
    denom = eta_c * v_i
    if denom == 0:
        raise ZeroDivisionError("eta_c * v_i is zero; leasing never earns anything")
    return r_e / denom


def quote(eta_c: float, v_i: float, alpha: float, r_e: float) -> RevenueQuote:
    r_c = compute_revenue_rate(eta_c, v_i, alpha)
    return RevenueQuote(r_c=r_c, r_n=net_revenue(r_c, r_e), alpha=alpha)


@dataclass(frozen=True)
class GridRow:
    p_avg_w: float
    v_i_eur_h: float
    alpha: float
    r_c: float
    r_n: float
    a_eur_year: Optional[float] = None
    instance: Optional[str] = None


GRID_COLUMNS = ("p_avg_w", "v_i_eur_h", "alpha", "r_c", "r_n", "a_eur_year")


def revenue_surface(
    p_avg_grid: Sequence[float],
    v_i_grid: Sequence[float],
    alphas: Sequence[float],
    r_e: float,
    site: Optional[Site] = None,
) -> list[GridRow]:
    """Revenue quote for every (power, price, alpha) combination.

    ``a_eur_year`` is filled only when a ``site`` is given.
    """
    if not p_avg_grid or not v_i_grid or not alphas:
        raise DomainError("revenue grids must be non-empty")
    rows = []
    for p in p_avg_grid:
        if not p > 0:
            raise DomainError(f"p_avg must be > 0, got {p}")
        for v in v_i_grid:
            for a in alphas:
                q = quote(1000.0 / p, v, a, r_e)
                yearly = None if site is None else q.r_n * site.energy
                rows.append(GridRow(p, v, a, q.r_c, q.r_n, yearly))
    return rows


def payback_grid(
    catalog: Sequence[InstanceType],
    alphas: Sequence[float],
    p_avg_overrides: Sequence[float],
    site: Site,
    tariff: Tariff,
) -> list[GridRow]:
    """Yearly payback per instance price, power draw and allocation.

    Without ``p_avg_overrides`` each instance is evaluated at its own
    catalog draw; otherwise at every override wattage.
    """
    rows = []
    energy = site.energy
    for inst in catalog:
        powers = list(p_avg_overrides) or [inst.p_avg]
        for p in powers:
            if not p > 0:
                raise DomainError(f"p_avg must be > 0, got {p}")
            for a in alphas:
                q = quote(1000.0 / p, inst.v_i, a, tariff.r_e)
                rows.append(GridRow(p, inst.v_i, a, q.r_c, q.r_n, q.r_n * energy, inst.name))
    return rows


def write_grid(rows: Iterable[GridRow], dst: IO[str]) -> None:
    """CSV with ``GRID_COLUMNS``; a leading ``instance`` column is added when rows carry one."""
    rows = list(rows)
    named = any(r.instance is not None for r in rows)
    writer = csv.writer(dst, lineterminator="\n")
    writer.writerow((("instance",) if named else ()) + GRID_COLUMNS)
    for r in rows:
        writer.writerow(
            ([r.instance or ""] if named else [])
            + [repr(r.p_avg_w), repr(r.v_i_eur_h), repr(r.alpha), repr(r.r_c), repr(r.r_n),
               "" if r.a_eur_year is None else repr(r.a_eur_year)]
        )


def grid_csv(rows: Iterable[GridRow]) -> str:
    buf = io.StringIO()
    write_grid(rows, buf)
    return buf.getvalue()
