"""Simulated local unit: compute-node power states and per-slot energy accounting."""

from __future__ import annotations

import math
from dataclasses import dataclass
from datetime import datetime, timedelta
from enum import IntEnum
from typing import Iterable, Optional

import numpy as np

from .errors import CapacityError, DomainError, IllegalTransition
from .protocol import TelemetryReport

SLOT_SECONDS = 3600.0
J_PER_KWH = 3.6e6
# compute exceeding production by less than this is rounding, not a grid draw
SNAP_KWH = 1e-12


class NodeState(IntEnum):
    OFF = 0
    BOOTING = 1
    IDLE = 2
    COMPUTING = 3

    @property
    def label(self) -> str:
        return self.name.lower()


@dataclass(frozen=True)
class NodePowerModel:
    p_idle: float = 25.0  # W
    p_load: float = 50.0  # W
    boot_s: float = 120.0

    def __post_init__(self):
        if self.p_idle < 0:
            raise DomainError("p_idle must be >= 0")
        if self.p_load < self.p_idle:
            raise DomainError("p_load must be >= p_idle")
        if self.boot_s < 0:
            raise DomainError("boot_s must be >= 0")


@dataclass(frozen=True)
class SlotAccount:
    slot_start: datetime
    produced_kwh: float
    compute_kwh: float
    sold_kwh: float
    bought_kwh: float
    curtailed_kwh: float = 0.0

    def imbalance(self) -> float:
        return self.produced_kwh + self.bought_kwh - self.compute_kwh - self.sold_kwh - self.curtailed_kwh


class LocalUnit:
    """A rack of ``cluster_size`` identical nodes behind one PV inverter.

    Nodes are numbered ``0..cluster_size-1``. Wake commands take effect at
    once (nodes start booting); sleep commands are queued and applied at the
    next slot boundary, i.e. at the start of the next ``tick_slot``.
    """

    def __init__(
        self,
        lu_id: str,
        cluster_size: int,
        power: NodePowerModel = NodePowerModel(),
        export_limit_kwh: Optional[float] = None,
    ):
        if cluster_size < 0:
            raise DomainError("cluster_size must be >= 0")
        self.lu_id = lu_id
        self.cluster_size = cluster_size
        self.power = power
        self.export_limit_kwh = export_limit_kwh
        self.state = np.zeros(cluster_size, dtype=np.int8)
        self.remaining = np.zeros(cluster_size)
        self._pending_sleep = np.zeros(cluster_size, dtype=bool)
        self._seq = 0

    # --- commands -------------------------------------------------------
    def count(self, state: NodeState) -> int:
        return int(np.count_nonzero(self.state == state))

    def awake_ids(self) -> list[int]:
        """Nodes that will be powered in the next slot (pending sleeps excluded)."""
        return [int(i) for i in np.flatnonzero((self.state != NodeState.OFF) & ~self._pending_sleep)]

    def wake(self, n: int) -> list[int]:
        if n < 0:
            raise DomainError("cannot wake a negative number of nodes")
        off = np.flatnonzero(self.state == NodeState.OFF)
        if n > len(off):
            raise CapacityError(f"{self.lu_id}: cannot wake {n} nodes, only {len(off)} are off")
        chosen = off[:n]
        if self.power.boot_s == 0:
            self.state[chosen] = NodeState.IDLE
        else:
            self.state[chosen] = NodeState.BOOTING
            self.remaining[chosen] = self.power.boot_s
        return [int(i) for i in chosen]

    def sleep(self, node_ids: Iterable[int]) -> None:
        ids = list(node_ids)
        for i in ids:
            if not 0 <= i < self.cluster_size:
                raise CapacityError(f"{self.lu_id}: no node {i}")
            st = NodeState(int(self.state[i]))
            if st not in (NodeState.IDLE, NodeState.COMPUTING):
                raise IllegalTransition(f"{self.lu_id}: node {i} is {st.label}, cannot sleep")
        self._pending_sleep[ids] = True

    # --- accounting -----------------------------------------------------
    def tick_slot(
        self,
        slot_start: datetime,
        production_kwh: float,
        leased_count: int,
        local_consumption_kwh: float = 0.0,
    ) -> tuple[SlotAccount, TelemetryReport]:
        """Advance one hour: account energy and report telemetry.

        ``leased_count`` nodes compute for the slot (after finishing boot if
        needed); every other powered node idles. A shortfall is bought from
        the grid, a surplus sold (beyond ``export_limit_kwh`` it is
        curtailed). Local consumption is served first and is not part of the
        account.
        """
        if production_kwh < 0 or math.isnan(production_kwh):
            raise DomainError(f"production must be >= 0, got {production_kwh}")
        if local_consumption_kwh < 0:
            raise DomainError("local consumption must be >= 0")
        if leased_count < 0:
            raise DomainError("leased_count must be >= 0")

        # slot boundary: queued sleeps take effect (committed only once the tick is valid)
        st = np.where(self._pending_sleep, NodeState.OFF, self.state).astype(np.int8)
        remaining = np.where(self._pending_sleep, 0.0, self.remaining)
        booting = st == NodeState.BOOTING
        boot_part = np.where(booting, np.minimum(remaining, SLOT_SECONDS), 0.0)
        available = (st == NodeState.IDLE) | (st == NodeState.COMPUTING) | (booting & (remaining < SLOT_SECONDS))
        n_avail = int(np.count_nonzero(available))
        if leased_count > n_avail:
            raise CapacityError(f"{self.lu_id}: {leased_count} leased but only {n_avail} nodes available")

        # computing nodes first, then idle, then those finishing boot soonest
        order = np.lexsort((np.arange(len(st)), boot_part, -st.astype(int)))
        order = order[available[order]]
        leased = np.zeros(len(st), dtype=bool)
        leased[order[:leased_count]] = True

        p = self.power
        powered = st != NodeState.OFF
        busy_s = np.where(leased, SLOT_SECONDS - boot_part, 0.0)
        idle_s = np.where(powered, SLOT_SECONDS - busy_s, 0.0)
        joules = math.fsum((p.p_load * busy_s).tolist()) + math.fsum((p.p_idle * idle_s).tolist())
        compute = joules / J_PER_KWH

        produced = max(production_kwh - local_consumption_kwh, 0.0)
        sold = bought = curtailed = 0.0
        if produced >= compute or compute - produced <= SNAP_KWH:
            surplus = max(produced - compute, 0.0)
            if compute > produced:
                compute = produced
            if self.export_limit_kwh is not None and surplus > self.export_limit_kwh:
                sold = self.export_limit_kwh
                curtailed = surplus - sold
            else:
                sold = surplus
        else:
            bought = compute - produced

        # end of slot states
        self._pending_sleep[:] = False
        finished = booting & (remaining <= SLOT_SECONDS)
        self.remaining = np.where(booting, np.maximum(remaining - SLOT_SECONDS, 0.0), 0.0)
        new = st.copy()
        new[finished] = NodeState.IDLE
        new[(st == NodeState.COMPUTING) & ~leased] = NodeState.IDLE
        new[leased] = NodeState.COMPUTING
        self.state = new

        account = SlotAccount(slot_start, produced, compute, sold, bought, curtailed)
        self._seq += 1
        report = TelemetryReport(
            seq=self._seq,
            ts=slot_start + timedelta(hours=1),
            lu_id=self.lu_id,
            slot_start=slot_start,
            production_kwh=production_kwh,
            local_consumption_kwh=local_consumption_kwh,
            node_states=self.node_states(),
        )
        return account, report

    def node_states(self) -> tuple:
        """(node_id, state) for every powered node; nodes not listed are off."""
        ids = np.flatnonzero(self.state != NodeState.OFF)
        return tuple((int(i), NodeState(int(self.state[i])).label) for i in ids)
