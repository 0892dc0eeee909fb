"""Energy broker: per-slot sell-vs-compute decisions for a fleet of local units."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from datetime import datetime, timedelta
from typing import Iterable, Optional, Protocol, Union

from .economics import InstanceType, Tariff, breakeven_alpha
from .errors import DomainError, IntegrityError
from .protocol import Endpoint, PoolOffer, SleepCommand, TelemetryReport, UsageReport, WakeCommand
from .solar import PlantConfig, as_utc

logger = logging.getLogger(__name__)

SLOT = timedelta(hours=1)
STALE_SLOTS = 2


@dataclass(frozen=True)
class DecisionPolicy:
    expected_alpha: float = 1.0
    slot_hours: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.expected_alpha <= 1.0:
            raise DomainError(f"expected_alpha must be in [0, 1], got {self.expected_alpha}")
        if self.slot_hours != 1.0:
            raise DomainError("only one-hour slots are supported")


@dataclass(frozen=True)
class Sell:
    def __str__(self):
        return "Sell"


@dataclass(frozen=True)
class Compute:
    instance_type: str
    count: int

    def __post_init__(self):
        if self.count < 1:
            raise DomainError("Compute needs at least one instance")

    def __str__(self):
        return f"Compute({self.instance_type}, {self.count})"


Decision = Union[Sell, Compute]
SELL = Sell()


def decide_slot(
    forecast_kw: float,
    inst: InstanceType,
    cluster_size: int,
    tariff: Tariff,
    policy: DecisionPolicy,
    v_i: Optional[float] = None,
) -> Decision:
    """Compute only if leasing the powerable instances strictly beats the feed-in tariff.

    ``v_i`` overrides the instance's catalog price (e.g. a live pool quote).
    """
    if forecast_kw < 0:
        raise DomainError(f"forecast must be >= 0, got {forecast_kw}")
    price = inst.v_i if v_i is None else v_i
    n = min(math.floor(forecast_kw * inst.eta_c), cluster_size)
    if n < 1 or inst.eta_c * price <= 0:
        return SELL
    # eta_c * v_i * alpha > r_e, phrased through the breakeven so both agree bit-for-bit
    if policy.expected_alpha > breakeven_alpha(inst.eta_c, price, tariff.r_e):
        return Compute(inst.name, n)
    return SELL


@dataclass
class LuRecord:
    lu_id: str
    plant: PlantConfig
    cluster_size: int
    instance: InstanceType
    baseline_kw: float = 0.0
    last_telemetry: Optional[TelemetryReport] = None
    registered_at: Optional[datetime] = None
    measured_alpha: Optional[float] = None

    def __post_init__(self):
        if self.cluster_size < 0:
            raise DomainError("cluster_size must be >= 0")
        if self.baseline_kw < 0:
            raise DomainError("baseline_kw must be >= 0")

    def awake_ids(self) -> list[int]:
        if self.last_telemetry is None:
            return []
        return [nid for nid, state in self.last_telemetry.node_states if state != "off"]


class Forecaster(Protocol):
    def __call__(self, lu: LuRecord, target_slot: datetime) -> float: ...


class Pool(Protocol):
    def price(self, inst: InstanceType, slot: datetime) -> float: ...


class CatalogPool:
    """Quotes every instance at its catalog price unless overridden."""

    def __init__(self, override: Optional[float] = None):
        self.override = override

    def price(self, inst: InstanceType, slot: datetime) -> float:
        return inst.v_i if self.override is None else self.override


@dataclass(frozen=True)
class BrokerEvent:
    slot: datetime
    lu_id: str
    kind: str
    detail: str = ""


class EnergyBroker:
    """Single logical actor; feed it telemetry, then run ``slot_cycle`` once per slot.

    Commands go out on ``lu/<id>/cmd``, offers on ``pool/offers``.
    """

    def __init__(self, endpoint: Endpoint, tariff: Tariff, policy: DecisionPolicy):
        self.endpoint = endpoint
        self.tariff = tariff
        self.policy = policy
        self.registry: dict[str, LuRecord] = {}
        self.events: list[BrokerEvent] = []
        self.offers: list[PoolOffer] = []
        self.usage: list[UsageReport] = []

    def register(self, lu: LuRecord, at: Optional[datetime] = None):
        lu.registered_at = at if at is None else as_utc(at)
        self.registry[lu.lu_id] = lu

    def on_message(self, topic: str, msg) -> None:
        if isinstance(msg, TelemetryReport) and msg.lu_id in self.registry:
            self.registry[msg.lu_id].last_telemetry = msg
        elif isinstance(msg, UsageReport):
            self.usage.append(msg)

    def _is_stale(self, lu: LuRecord, target_slot: datetime) -> bool:
        # the slot just before target_slot is the one whose telemetry is expected
        if lu.last_telemetry is not None:
            reference = as_utc(lu.last_telemetry.slot_start)
        elif lu.registered_at is not None:
            reference = lu.registered_at - SLOT
        else:
            return False
        return target_slot - SLOT - reference > STALE_SLOTS * SLOT

    def slot_cycle(self, target_slot: datetime, forecaster: Forecaster, pool) -> list[tuple[str, Decision]]:
        """Decide every registered LU for ``target_slot`` and emit the resulting commands.

        Sell needs no message beyond putting idle nodes to sleep; Compute
        wakes the missing nodes and offers the slot to the pool.
        """
        target_slot = as_utc(target_slot)
        out = []
        for lu_id in sorted(self.registry):
            lu = self.registry[lu_id]
            if self._is_stale(lu, target_slot):
                self.events.append(BrokerEvent(target_slot, lu_id, "stale-telemetry"))
                logger.warning("skipping %s: stale telemetry", lu_id)
                continue
            forecast = max(forecaster(lu, target_slot) - lu.baseline_kw, 0.0)
            price = pool.price(lu.instance, target_slot)
            decision = decide_slot(forecast, lu.instance, lu.cluster_size, self.tariff, self.policy, v_i=price)
            self._command(lu, decision, target_slot)
            out.append((lu_id, decision))
        return out

    def _command(self, lu: LuRecord, decision: Decision, slot: datetime):
        wanted = decision.count if isinstance(decision, Compute) else 0
        awake = lu.awake_ids()
        ts = slot
        if len(awake) > wanted:
            # booting nodes cannot be put to sleep; shed the highest-numbered running ones
            running = sorted(nid for nid, state in lu.last_telemetry.node_states if state in ("idle", "computing"))
            surplus = running[len(running) - min(len(awake) - wanted, len(running)):]
            if surplus:
                self.endpoint.send(
                    f"lu/{lu.lu_id}/cmd", SleepCommand(seq=0, ts=ts, lu_id=lu.lu_id, node_ids=tuple(surplus))
                )
        elif len(awake) < wanted:
            self.endpoint.send(
                f"lu/{lu.lu_id}/cmd", WakeCommand(seq=0, ts=ts, lu_id=lu.lu_id, node_count=wanted - len(awake))
            )
        if wanted:
            offer = PoolOffer(seq=0, ts=ts, lu_id=lu.lu_id, instance_type=decision.instance_type, count=wanted, slot_start=slot)
            self.offers.append(offer)
            self.endpoint.send("pool/offers", offer)

    def update_alpha(self):
        alphas = reconcile_alpha(self.offers, self.usage)
        for lu_id, lu in self.registry.items():
            lu.measured_alpha = alphas.get(lu_id)
        return alphas


def reconcile_alpha(offers: Iterable[PoolOffer], usage: Iterable[UsageReport], slot_hours: float = 1.0) -> dict[str, float]:
    """Measured allocation factor per LU: used instance-hours over offered instance-hours.

    LUs with no offered capacity in the window are absent from the result.
    """
    offered: dict[tuple[str, datetime], float] = {}
    for o in offers:
        key = (o.lu_id, as_utc(o.slot_start))
        offered[key] = offered.get(key, 0.0) + o.count * slot_hours
    used: dict[tuple[str, datetime], float] = {}
    for u in usage:
        key = (u.lu_id, as_utc(u.slot_start))
        if key not in offered:
            raise IntegrityError(f"usage for {u.lu_id} at {key[1].isoformat()} has no matching offer", slot=key[1])
        used[key] = used.get(key, 0.0) + u.instance_hours_used
        if used[key] > offered[key] + 1e-9:
            raise IntegrityError(
                f"{u.lu_id} at {key[1].isoformat()}: {used[key]} instance-hours used of {offered[key]} offered",
                slot=key[1],
            )
    tot_offer: dict[str, float] = {}
    tot_used: dict[str, float] = {}
    for (lu_id, _), v in offered.items():
        tot_offer[lu_id] = tot_offer.get(lu_id, 0.0) + v
    for (lu_id, _), v in used.items():
        tot_used[lu_id] = tot_used.get(lu_id, 0.0) + v
    return {
        lu_id: min(1.0, tot_used.get(lu_id, 0.0) / off)
        for lu_id, off in sorted(tot_offer.items())
        if off > 0
    }
