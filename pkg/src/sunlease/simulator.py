"""Hourly scenario engine: trace replay, broker decisions, pool demand, LU accounting."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta, timezone
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from . import forecast as fc
from .broker import CatalogPool, DecisionPolicy, EnergyBroker, LuRecord
from .economics import InstanceType, Tariff, annual_payback, compute_revenue_rate, lookup, net_revenue, read_catalog
from .errors import ConfigError, DomainError, NotFoundError, SunleaseError
from .localunit import LocalUnit, NodePowerModel
from .protocol import Bus, Endpoint, LeaseGrant, PoolOffer, SleepCommand, UsageReport, WakeCommand
from .solar import GeoLocation, PlantConfig, as_utc, clearsky_slot, format_utc, parse_utc, read_trace, slot_floor, trace_to_production

SLOT = timedelta(hours=1)
FORECAST_KINDS = ("oracle",) + fc.KINDS
FITTED_KINDS = ("ols", "ridge", "lasso", "svr")
_DEMAND_STREAM = 0x5EED


@dataclass(frozen=True)
class DemandParams:
    u: float = 1.0
    rho: float = 0.8

    def __post_init__(self):
        if not 0.0 <= self.u <= 1.0:
            raise DomainError(f"demand u must be in [0, 1], got {self.u}")
        if not -1.0 < self.rho < 1.0:
            raise DomainError(f"demand rho must be in (-1, 1), got {self.rho}")


class DemandProcess:
    """Requested instances per slot, in [0, cluster_size].

    A latent AR(1) gaussian is mapped to a uniform U_k in (0, 1); the
    requested fraction is U_k ** ((1 - u) / u), whose mean is exactly u.
    For a fixed seed the latent draws do not depend on u, and the fraction
    grows with u for every draw, so scenarios compared at different u see
    coupled demand.
    """

    def __init__(self, params: DemandParams, cluster_size: int, seed: int, horizon: int):
        self.params = params
        self.cluster_size = cluster_size
        rng = np.random.default_rng([seed, _DEMAND_STREAM])
        e = rng.standard_normal(max(horizon, 1))
        z = np.empty_like(e)
        z[0] = e[0]
        s = math.sqrt(1.0 - params.rho ** 2)
        for k in range(1, len(e)):
            z[k] = params.rho * z[k - 1] + s * e[k]
        self.uniform = np.array([0.5 * math.erfc(-v / math.sqrt(2.0)) for v in z])

    def fraction(self, k: int) -> float:
        u = self.params.u
        if u <= 0.0:
            return 0.0
        if u >= 1.0:
            return 1.0
        return float(self.uniform[k] ** ((1.0 - u) / u))

    def requested(self, k: int) -> int:
        return min(self.cluster_size, max(0, int(math.floor(self.fraction(k) * self.cluster_size + 0.5))))


@dataclass
class ScenarioConfig:
    plant: PlantConfig
    instance: InstanceType
    cluster_size: int
    tariff: Tariff = Tariff()
    policy: DecisionPolicy = DecisionPolicy()
    forecast_kind: str = "oracle"
    forecast_hyper: dict = field(default_factory=dict)
    train_seed: Optional[int] = None
    train_n: int = 2000
    trace_path: Optional[Path] = None
    demand: DemandParams = DemandParams()
    horizon: int = 8760
    seed: int = 0
    start: datetime = datetime(2016, 1, 1)
    baseline_kw: float = 0.0
    p_idle_w: Optional[float] = None
    boot_s: float = 120.0
    price_override: Optional[float] = None
    lu_id: str = "lu-1"

    def __post_init__(self):
        if self.horizon < 1:
            raise ConfigError("horizon must be >= 1", key="sim.horizon")
        if self.cluster_size < 0:
            raise ConfigError("cluster_size must be >= 0", key="instances.cluster_size")
        if self.forecast_kind not in FORECAST_KINDS:
            raise ConfigError(f"unknown kind {self.forecast_kind!r}; expected one of {FORECAST_KINDS}", key="forecast.kind")
        if self.forecast_kind in FITTED_KINDS and self.trace_path is not None:
            raise ConfigError("fitted forecasters need the synthetic weather feed; omit sim.trace", key="forecast.kind")

    @property
    def power(self) -> NodePowerModel:
        p_load = self.instance.p_avg
        p_idle = 0.5 * p_load if self.p_idle_w is None else self.p_idle_w
        return NodePowerModel(p_idle=p_idle, p_load=p_load, boot_s=self.boot_s)


@dataclass(frozen=True)
class LedgerRow:
    slot_start: datetime
    produced_kwh: float
    compute_kwh: float
    sold_kwh: float
    bought_kwh: float
    curtailed_kwh: float
    instances_offered: int
    instances_leased: int
    revenue_eur: float


LEDGER_COLUMNS = (
    "slot_start", "produced_kwh", "compute_kwh", "sold_kwh", "bought_kwh", "curtailed_kwh",
    "instances_offered", "instances_leased", "revenue_eur",
)


@dataclass
class SimReport:
    slots: int
    total_produced_kwh: float
    total_sold_kwh: float
    total_compute_kwh: float
    total_bought_kwh: float
    total_curtailed_kwh: float
    compute_revenue_eur: float
    grid_revenue_eur: float
    grid_cost_eur: float
    net_eur: float
    measured_alpha: Optional[float]
    baseline_eur: float
    advantage_eur: float
    realized_psh: float
    analytic_payback_eur: float
    offered_instance_hours: float
    granted_instance_hours: float
    ledger: str = "ledger.csv"
    ledger_rows: list = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {
            "slots": self.slots,
            "total_produced_kwh": self.total_produced_kwh,
            "total_sold_kwh": self.total_sold_kwh,
            "total_compute_kwh": self.total_compute_kwh,
            "total_bought_kwh": self.total_bought_kwh,
            "total_curtailed_kwh": self.total_curtailed_kwh,
            "compute_revenue_eur": self.compute_revenue_eur,
            "grid_revenue_eur": self.grid_revenue_eur,
            "grid_cost_eur": self.grid_cost_eur,
            "net_eur": self.net_eur,
            "measured_alpha": self.measured_alpha,
            "baseline_eur": self.baseline_eur,
            "advantage_eur": self.advantage_eur,
            "realized_psh": self.realized_psh,
            "analytic_payback_eur": self.analytic_payback_eur,
            "offered_instance_hours": self.offered_instance_hours,
            "granted_instance_hours": self.granted_instance_hours,
            "currency": "EUR",
            "ledger": self.ledger,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def ledger_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(LEDGER_COLUMNS)
        for r in self.ledger_rows:
            w.writerow(
                [format_utc(r.slot_start)]
                + [repr(v) for v in (r.produced_kwh, r.compute_kwh, r.sold_kwh, r.bought_kwh, r.curtailed_kwh)]
                + [r.instances_offered, r.instances_leased, repr(r.revenue_eur)]
            )
        return buf.getvalue()

    def write(self, out_dir) -> tuple[Path, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        rp, lp = out / "report.json", out / self.ledger
        rp.write_text(self.to_json())
        lp.write_text(self.ledger_csv())
        return rp, lp


def baseline_sell_all(production_kwh: Sequence[float], tariff: Tariff) -> float:
    """Revenue from feeding every produced kWh into the grid."""
    return math.fsum(production_kwh) * tariff.r_e


class OracleForecaster:
    """Forecasts each slot with its actual production."""

    def __init__(self, slots: Sequence[datetime], production_kwh: Sequence[float]):
        self._by_slot = {as_utc(s): float(p) for s, p in zip(slots, production_kwh)}

    def __call__(self, lu, target_slot: datetime) -> float:
        return self._by_slot[as_utc(target_slot)]


def oracle_forecast_mode(slots, production_kwh) -> OracleForecaster:
    return OracleForecaster(slots, production_kwh)


class ClearskyForecaster:
    def __call__(self, lu: LuRecord, target_slot: datetime) -> float:
        return clearsky_slot(lu.plant, target_slot)


class ModelForecaster:
    """Fitted regressor fed by the synthetic weather feed and the LU's last telemetry."""

    def __init__(self, model: fc.FittedModel, series: fc.SynthSeries):
        self.model = model
        self.series = series
        self._index = {as_utc(s): k for k, s in enumerate(series.slots)}

    def __call__(self, lu: LuRecord, target_slot: datetime) -> float:
        k = self._index[as_utc(target_slot)]
        if k == 0:
            return clearsky_slot(lu.plant, target_slot)
        last = lu.last_telemetry.production_kwh if lu.last_telemetry is not None else float(self.series.production[k - 1])
        x = fc.build_features(
            lu.plant,
            self.series.slots[k - 1],
            self.series.observation(k - 1),
            self.series.forecast(k),
            last,
            self.model.climatology,
            self.model.vocabulary,
        )
        return fc.predict(self.model, x)


class DemandPool:
    """Pool side of the simulation: grants leases against offers and reports usage."""

    def __init__(self, endpoint: Endpoint, demand: DemandProcess, slot_index: dict, price: float):
        self.endpoint = endpoint
        self.demand = demand
        self.slot_index = slot_index
        self.price = price
        self.granted: dict[tuple[str, datetime], int] = {}
        self.offered: dict[tuple[str, datetime], int] = {}

    def on_offer(self, topic, offer):
        if not isinstance(offer, PoolOffer):
            return
        slot = as_utc(offer.slot_start)
        k = self.slot_index[slot]
        count = min(offer.count, self.demand.requested(k))
        key = (offer.lu_id, slot)
        self.offered[key] = offer.count
        self.granted[key] = count
        self.endpoint.send(
            f"lu/{offer.lu_id}/lease",
            LeaseGrant(seq=0, ts=offer.ts, lu_id=offer.lu_id, instance_type=offer.instance_type,
                       count_granted=count, duration_h=1.0, price=self.price),
        )

    def report_usage(self, lu_id: str, slot: datetime):
        key = (lu_id, as_utc(slot))
        if key in self.offered:
            self.endpoint.send(
                "pool/usage",
                UsageReport(seq=0, ts=slot + SLOT, lu_id=lu_id, slot_start=slot,
                            instance_hours_used=float(self.granted[key])),
            )


def _load_production(config: ScenarioConfig):
    """Returns (slots, production_kwh, weather series or None)."""
    plant = config.plant
    if config.trace_path is not None:
        try:
            samples = read_trace(Path(config.trace_path).read_bytes())
        except OSError as exc:
            raise ConfigError(f"cannot read trace: {exc}", key="sim.trace") from None
        if len(samples) < config.horizon:
            raise ConfigError(
                f"trace has {len(samples)} slots, shorter than horizon {config.horizon}", key="sim.horizon"
            )
        samples = samples[: config.horizon]
        slots = [slot_floor(s.timestamp) for s in samples]
        return slots, trace_to_production(samples, plant), None
    series = fc.synth_series(config.seed, config.horizon, plant, config.start)
    return list(series.slots), [float(v) for v in series.production], series


def _make_forecaster(config: ScenarioConfig, slots, production, series):
    kind = config.forecast_kind
    if kind == "oracle":
        return oracle_forecast_mode(slots, production)
    if kind == "naive":
        return ClearskyForecaster()
    train_seed = config.seed + 1 if config.train_seed is None else config.train_seed
    # train on a year before the simulated period so no target leaks in
    train_start = as_utc(config.start) - timedelta(days=366)
    train = fc.synth_dataset(train_seed, config.train_n, config.plant, train_start)
    model = fc.fit(train, kind, config.forecast_hyper or None)
    return ModelForecaster(model, series)


def run(config: ScenarioConfig) -> SimReport:
    slots, production, series = _load_production(config)
    slots = [as_utc(s) for s in slots]
    horizon = config.horizon
    slot_index = {s: k for k, s in enumerate(slots)}
    forecaster = _make_forecaster(config, slots, production, series)

    bus = Bus()
    broker = EnergyBroker(Endpoint(bus), config.tariff, config.policy)
    lu_id = config.lu_id
    record = LuRecord(lu_id, config.plant, config.cluster_size, config.instance, config.baseline_kw)
    broker.register(record, at=slots[0])
    unit = LocalUnit(lu_id, config.cluster_size, config.power)
    price_pool = CatalogPool(config.price_override)
    price = price_pool.price(config.instance, slots[0])
    demand = DemandProcess(config.demand, config.cluster_size, config.seed, horizon)
    pool = DemandPool(Endpoint(bus), demand, slot_index, price)
    next_lease = {"count": 0}

    def on_command(topic, msg):
        if isinstance(msg, WakeCommand):
            unit.wake(msg.node_count)
        elif isinstance(msg, SleepCommand):
            unit.sleep(msg.node_ids)

    def on_lease(topic, msg):
        if isinstance(msg, LeaseGrant):
            next_lease["count"] = msg.count_granted

    bus.subscribe("lu/+/telemetry", broker.on_message)
    bus.subscribe("pool/usage", broker.on_message)
    bus.subscribe(f"lu/{lu_id}/cmd", on_command)
    bus.subscribe(f"lu/{lu_id}/lease", on_lease)
    bus.subscribe("pool/offers", pool.on_offer)

    local_kwh = config.baseline_kw
    rows: list[LedgerRow] = []
    produced_all, sold_all, compute_all, bought_all, curtailed_all = [], [], [], [], []
    granted_hours = 0

    broker.slot_cycle(slots[0], forecaster, price_pool)
    for k in range(horizon):
        slot = slots[k]
        leased = next_lease["count"]
        next_lease["count"] = 0
        offered = pool.offered.get((lu_id, slot), 0)
        account, telemetry = unit.tick_slot(slot, production[k], leased, local_kwh)
        bus.publish(f"lu/{lu_id}/telemetry", telemetry)
        pool.report_usage(lu_id, slot)

        c_rev = leased * 1.0 * price
        g_rev = account.sold_kwh * config.tariff.r_e
        g_cost = account.bought_kwh * config.tariff.r_g
        rows.append(
            LedgerRow(slot, account.produced_kwh, account.compute_kwh, account.sold_kwh, account.bought_kwh,
                      account.curtailed_kwh, offered, leased, c_rev + g_rev - g_cost)
        )
        produced_all.append(account.produced_kwh)
        sold_all.append(account.sold_kwh)
        compute_all.append(account.compute_kwh)
        bought_all.append(account.bought_kwh)
        curtailed_all.append(account.curtailed_kwh)
        granted_hours += leased

        if k + 1 < horizon:
            broker.slot_cycle(slots[k + 1], forecaster, price_pool)
    bus.close()

    alphas = broker.update_alpha()
    # totals are quantity sums times prices, so a run that only sells
    # reproduces the sell-all baseline bit for bit
    compute_revenue = float(granted_hours) * price
    grid_revenue = math.fsum(sold_all) * config.tariff.r_e
    cost = math.fsum(bought_all) * config.tariff.r_g
    net = compute_revenue + grid_revenue - cost
    baseline = baseline_sell_all(produced_all, config.tariff)
    plant = config.plant
    realized_psh = math.fsum(produced_all) / (plant.p_mpp * plant.eta_sys)
    r_n = net_revenue(
        compute_revenue_rate(config.instance.eta_c, price, config.policy.expected_alpha), config.tariff.r_e
    )
    analytic = annual_payback(r_n, realized_psh, plant.eta_sys, plant.p_mpp)
    return SimReport(
        slots=horizon,
        total_produced_kwh=math.fsum(produced_all),
        total_sold_kwh=math.fsum(sold_all),
        total_compute_kwh=math.fsum(compute_all),
        total_bought_kwh=math.fsum(bought_all),
        total_curtailed_kwh=math.fsum(curtailed_all),
        compute_revenue_eur=compute_revenue,
        grid_revenue_eur=grid_revenue,
        grid_cost_eur=cost,
        net_eur=net,
        measured_alpha=alphas.get(lu_id),
        baseline_eur=baseline,
        advantage_eur=net - baseline,
        realized_psh=realized_psh,
        analytic_payback_eur=analytic,
        offered_instance_hours=float(sum(pool.offered.values())),
        granted_instance_hours=float(sum(pool.granted.values())),
        ledger_rows=rows,
    )


# --- scenario files ---------------------------------------------------------

_SECTIONS = {
    "plant": {"latitude", "longitude", "tilt", "azimuth", "p_mpp", "system_loss"},
    "instances": {"name", "cluster_size", "eta_c", "v_i", "vcpu", "ram_gb", "catalog", "p_idle_w", "boot_s", "price_override"},
    "tariff": {"r_e", "r_g"},
    "policy": {"expected_alpha"},
    "forecast": {"kind", "train_seed", "train_n", "lambda", "tol", "max_iter", "C", "epsilon", "gamma"},
    "demand": {"u", "rho"},
    "sim": {"horizon", "seed", "start", "trace", "baseline_kw", "lu_id"},
}
_REQUIRED = {"plant": ("latitude", "longitude", "p_mpp"), "instances": ("name", "cluster_size")}
_HYPER_KEYS = ("lambda", "tol", "max_iter", "C", "epsilon", "gamma")


def _start(value) -> datetime:
    # TOML gives a native datetime or date for unquoted values
    if isinstance(value, datetime):
        return as_utc(value)
    if isinstance(value, date):
        return datetime(value.year, value.month, value.day, tzinfo=timezone.utc)
    return parse_utc(str(value))


def load_config(path) -> ScenarioConfig:
    path = Path(path)
    try:
        data = tomllib.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read scenario: {exc}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML: {exc}") from None
    return config_from_dict(data, base_dir=path.parent)


def config_from_dict(data: dict, base_dir: Path = Path(".")) -> ScenarioConfig:
    for section, body in data.items():
        if section not in _SECTIONS:
            raise ConfigError("unknown section", key=section)
        if not isinstance(body, dict):
            raise ConfigError("expected a table", key=section)
        for key in body:
            if key not in _SECTIONS[section]:
                raise ConfigError("unknown key", key=f"{section}.{key}")
    for section, keys in _REQUIRED.items():
        for key in keys:
            if key not in data.get(section, {}):
                raise ConfigError("missing required key", key=f"{section}.{key}")

    def section(name):
        return data.get(name, {})

    current = ""
    try:
        p = section("plant")
        current = "plant"
        plant = PlantConfig(
            GeoLocation(float(p["latitude"]), float(p["longitude"])),
            tilt=float(p.get("tilt", 0.0)),
            azimuth=float(p.get("azimuth", 180.0)),
            p_mpp=float(p["p_mpp"]),
            system_loss=float(p.get("system_loss", 0.0)),
        )
        inst_cfg = section("instances")
        current = "instances"
        catalog = None
        if "catalog" in inst_cfg:
            current = "instances.catalog"
            with open(base_dir / inst_cfg["catalog"]) as fh:
                catalog = read_catalog(fh)
        current = "instances.name"
        if "eta_c" in inst_cfg or "v_i" in inst_cfg:
            if "eta_c" not in inst_cfg or "v_i" not in inst_cfg:
                raise ConfigError("inline instance needs both eta_c and v_i", key="instances.eta_c")
            instance = InstanceType(
                str(inst_cfg["name"]), int(inst_cfg.get("vcpu", 1)), float(inst_cfg.get("ram_gb", 1.0)),
                float(inst_cfg["eta_c"]), float(inst_cfg["v_i"]),
            )
        else:
            instance = lookup(str(inst_cfg["name"]), catalog)

        current = "tariff"
        t = section("tariff")
        tariff = Tariff(r_e=float(t.get("r_e", 0.05)), r_g=float(t.get("r_g", 0.15)))
        current = "policy.expected_alpha"
        policy = DecisionPolicy(expected_alpha=float(section("policy").get("expected_alpha", 1.0)))
        current = "forecast"
        f = section("forecast")
        hyper = {k: f[k] for k in _HYPER_KEYS if k in f}
        current = "demand"
        d = section("demand")
        demand = DemandParams(u=float(d.get("u", 1.0)), rho=float(d.get("rho", 0.8)))
        current = "sim"
        s = section("sim")
        trace = s.get("trace")
        return ScenarioConfig(
            plant=plant,
            instance=instance,
            cluster_size=int(inst_cfg["cluster_size"]),
            tariff=tariff,
            policy=policy,
            forecast_kind=str(f.get("kind", "oracle")),
            forecast_hyper=hyper,
            train_seed=f.get("train_seed"),
            train_n=int(f.get("train_n", 2000)),
            trace_path=None if trace is None else base_dir / trace,
            demand=demand,
            horizon=int(s.get("horizon", 8760)),
            seed=int(s.get("seed", 0)),
            start=_start(s["start"]) if "start" in s else datetime(2016, 1, 1),
            baseline_kw=float(s.get("baseline_kw", 0.0)),
            p_idle_w=None if "p_idle_w" not in inst_cfg else float(inst_cfg["p_idle_w"]),
            boot_s=float(inst_cfg.get("boot_s", 120.0)),
            price_override=None if "price_override" not in inst_cfg else float(inst_cfg["price_override"]),
            lu_id=str(s.get("lu_id", "lu-1")),
        )
    except ConfigError:
        raise
    except NotFoundError as exc:
        raise ConfigError(str(exc), key="instances.name") from None
    except (SunleaseError, ValueError, TypeError, OSError) as exc:
        raise ConfigError(str(exc), key=current or None) from None
