"""Simulated wireless sensor mesh: sampling, multi-hop forwarding, energy.

Nodes sample their occupied ports every sample period (default 15 minutes),
batch the readings into one packet and forward it hop by hop along the
fewest-hop path to the base radio. Each hop transmission is lost with a
seeded Bernoulli probability and retried a bounded number of times; a hop
that exhausts its retries drops the whole packet. Routing is static
shortest-hop, recomputed only when the set of alive nodes changes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from . import sensors
from .scenario import Scenario
from .simkernel import EventLog, RngHub

BASE = 0  # pseudo node id of the base radio


@dataclass(frozen=True)
class Reading:
    node_id: int
    port: int
    kind: str
    value: float
    timestamp: float
    seq: int


@dataclass
class MeshPacket:
    origin: int
    readings: tuple[Reading, ...]
    hop_path: list[int] = field(default_factory=list)  # transmitting nodes, origin first
    retries_used: int = 0

    @property
    def hops(self) -> int:
        return len(self.hop_path)


@dataclass
class NodeState:
    node_id: int
    position: tuple[float, float]
    battery: float
    ports: dict[int, tuple[str, str]]   # port -> (source, kind name)
    neighbors: list[int] = field(default_factory=list)
    seq: int = 0
    forced_dead: bool = False

    @property
    def alive(self) -> bool:
        return self.battery > 0.0 and not self.forced_dead


@dataclass
class DeliveryStats:
    emitted_readings: int = 0
    delivered_readings: int = 0
    emitted_packets: int = 0
    delivered_packets: int = 0
    dropped_packets: int = 0
    unreachable_packets: int = 0
    min_hops_by_origin: dict[int, int] = field(default_factory=dict)
    max_hops_by_origin: dict[int, int] = field(default_factory=dict)


class MeshNet:
    def __init__(self, scenario: Scenario, rng: RngHub, events: EventLog):
        self.sc = scenario
        self.events = events
        self._loss_rng = rng.stream("radio-loss")
        self._noise_rng = rng.stream("sensor-noise")
        rc = scenario.radio
        self.p_loss = rc.p_loss
        self.max_retries = rc.max_retries
        self.sample_period = rc.sample_period
        self.noise_frac = rc.noise_frac
        self.range_m = rc.range_m
        self.base_position = rc.base_position

        en = scenario.energy
        self.nodes = {
            n.node_id: NodeState(n.node_id, n.position, en.initial_battery, dict(n.ports))
            for n in scenario.nodes
        }
        self._node_order = sorted(self.nodes)
        self.stats = DeliveryStats()
        self.next_hop: dict[int, int] = {}
        self._alive_key: tuple[int, ...] | None = None
        self._next_sample = self.sample_period
        self._next_energy = scenario.energy.refresh
        self._last_energy = 0.0
        self._silent_logged: set[int] = set()
        self._rebuild_topology()

    # -- topology -------------------------------------------------------------

    def _in_range(self, a: tuple[float, float], b: tuple[float, float]) -> bool:
        return math.dist(a, b) <= self.range_m

    def _rebuild_topology(self):
        alive = [nid for nid in self._node_order if self.nodes[nid].alive]
        self._alive_key = tuple(alive)
        for nid in self._node_order:
            node = self.nodes[nid]
            node.neighbors = [
                other for other in alive
                if other != nid and self._in_range(node.position, self.nodes[other].position)
            ]
        # breadth-first layers out from the base radio; ties to the lowest id
        dist = {nid: math.inf for nid in self._node_order}
        frontier = []
        for nid in alive:
            if self._in_range(self.nodes[nid].position, self.base_position):
                dist[nid] = 1
                frontier.append(nid)
        self.next_hop = {nid: BASE for nid in frontier}
        while frontier:
            nxt = []
            for nid in sorted(frontier):
                for nb in self.nodes[nid].neighbors:
                    if dist[nb] > dist[nid] + 1:
                        dist[nb] = dist[nid] + 1
                        self.next_hop[nb] = nid
                        nxt.append(nb)
                    elif dist[nb] == dist[nid] + 1 and self.next_hop.get(nb, 1 << 30) > nid:
                        self.next_hop[nb] = nid
            frontier = nxt
        self.hop_distance = dist

    def _check_topology(self):
        alive = tuple(nid for nid in self._node_order if self.nodes[nid].alive)
        if alive != self._alive_key:
            self._rebuild_topology()

    # -- sampling -------------------------------------------------------------

    def sample_ports(self, now: float, node: NodeState, env) -> list[Reading]:
        """One noisy reading per occupied port; empty when the node is dead."""
        if not node.alive:
            return []
        out = []
        for port in sorted(node.ports):
            source, kind_name = node.ports[port]
            k = sensors.BY_NAME[kind_name]
            truth = env.ground_truth(source, kind_name)
            if self.noise_frac > 0.0:
                truth += self._noise_rng.gauss(0.0, self.noise_frac * (k.hi - k.lo))
            value = round(k.clamp(truth), 3)  # quantized like the node ADC
            node.seq += 1
            out.append(Reading(node.node_id, port, kind_name, value, now, node.seq))
        return out

    # -- routing --------------------------------------------------------------

    def route(self, packet: MeshPacket) -> str:
        """Forward hop by hop; returns 'delivered', 'dropped' or 'unreachable'."""
        current = packet.origin
        if self.hop_distance.get(current, math.inf) is math.inf:
            return "unreachable"
        while True:
            node = self.nodes[current]
            packet.hop_path.append(current)
            delivered_attempt = False
            for attempt in range(1 + self.max_retries):
                node.battery = max(0.0, node.battery - self.sc.energy.tx_cost)
                if self.p_loss <= 0.0 or self._loss_rng.random() >= self.p_loss:
                    delivered_attempt = True
                    packet.retries_used += attempt
                    break
            else:
                packet.retries_used += self.max_retries
            if not delivered_attempt:
                return "dropped"
            nxt = self.next_hop[current]
            if nxt == BASE:
                return "delivered"
            current = nxt

    # -- energy -----------------------------------------------------------------

    def update_energy(self, now: float, solar: float):
        dt = now - self._last_energy
        self._last_energy = now
        en = self.sc.energy
        delta = en.charge_per_solar * solar * dt - en.idle_per_second * dt
        for nid in self._node_order:
            node = self.nodes[nid]
            b = node.battery + delta
            node.battery = 1.0 if b > 1.0 else (0.0 if b < 0.0 else b)

    # -- per-tick entry point -----------------------------------------------------

    def advance(self, now: float, env) -> list[MeshPacket]:
        """Run energy + sampling cadences; returns packets delivered this tick."""
        if now >= self._next_energy:
            self.update_energy(now, env.climate.solar)
            self._next_energy += self.sc.energy.refresh
        if now < self._next_sample:
            return []
        self._next_sample += self.sample_period
        self._check_topology()

        delivered: list[MeshPacket] = []
        st = self.stats
        for nid in self._node_order:
            node = self.nodes[nid]
            readings = self.sample_ports(now, node, env)
            if not readings:
                if node.alive is False and nid not in self._silent_logged:
                    self._silent_logged.add(nid)
                    self.events.append("warn", "meshnet", f"node {nid} silent (dead battery or fault)")
                continue
            self._silent_logged.discard(nid)
            st.emitted_readings += len(readings)
            st.emitted_packets += 1
            packet = MeshPacket(nid, tuple(readings))
            outcome = self.route(packet)
            if outcome == "delivered":
                st.delivered_packets += 1
                st.delivered_readings += len(readings)
                hops = packet.hops
                st.min_hops_by_origin[nid] = min(st.min_hops_by_origin.get(nid, hops), hops)
                st.max_hops_by_origin[nid] = max(st.max_hops_by_origin.get(nid, hops), hops)
                delivered.append(packet)
            elif outcome == "dropped":
                st.dropped_packets += 1
            else:
                st.unreachable_packets += 1
        # base hands packets over ordered by origin id, then first seq
        delivered.sort(key=lambda p: (p.origin, p.readings[0].seq))
        return delivered
