"""Simulated asynchronous message bus between robots.

The bus runs on discrete ticks. Publishing fans a message out to every
peer currently reachable over the adjacency graph (multi-hop counts:
reachability is the transitive closure at send time); each copy is
independently dropped with its kind's drop probability, and survivors
are delivered ``delay`` ticks later, exactly once, in (deliver tick,
sender, publish order) order.

Drop draws are derived from (bus seed, sender, receiver, kind, per-link
counter) rather than from a shared stream, so two episodes that differ
only in message content see identical drop decisions for the k-th
message on each link. That keeps paired benchmark modes on common
random numbers.
"""

from __future__ import annotations

import enum
import heapq
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping

import numpy as np

from .world import RobotPose


class MessageKind(enum.IntEnum):
    PLAN_DISTRIBUTION = 0
    MEASUREMENT = 1
    CONFIRMATION = 2


@dataclass(frozen=True)
class Message:
    sender: int
    kind: MessageKind
    payload: object
    send_tick: int
    deliver_tick: int | None = None

    def __post_init__(self) -> None:
        if self.deliver_tick is not None and self.deliver_tick < self.send_tick:
            raise ValueError("deliver_tick must not precede send_tick")


Adjacency = str | tuple[str, float] | Mapping[int, Iterable[int]]


@dataclass(frozen=True)
class BusConfig:
    """Delay, per-kind drop probabilities, and connectivity.

    ``adjacency`` is "full", ("range", radius) for distance-limited
    links, or an explicit undirected neighbour map {id: [ids]}.
    """

    delay: int = 0
    drop: Mapping[MessageKind, float] = field(default_factory=dict)
    adjacency: Adjacency = "full"

    def __post_init__(self) -> None:
        if self.delay < 0:
            raise ValueError("delay must be non-negative")
        for kind, p in self.drop.items():
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"drop probability for {kind} must lie in [0, 1], got {p}")
        if isinstance(self.adjacency, tuple):
            mode, radius = self.adjacency
            if mode != "range" or radius <= 0:
                raise ValueError("tuple adjacency must be ('range', positive radius)")
        elif isinstance(self.adjacency, str) and self.adjacency != "full":
            raise ValueError(f"unknown adjacency {self.adjacency!r}")

    def drop_probability(self, kind: MessageKind) -> float:
        return float(self.drop.get(kind, 0.0))


class MessageBus:
    """Single synchronisation point between per-robot agents."""

    def __init__(
        self,
        config: BusConfig,
        robot_ids: Iterable[int],
        seed: int = 0,
        trace=None,
    ):
        self.config = config
        self.robot_ids = sorted(robot_ids)
        self._seed = int(seed)
        self.trace = trace  # callable(record dict) per (message, receiver)
        self._positions: dict[int, RobotPose] = {}
        self._queue: list[tuple[int, int, int, int, Message]] = []  # (deliver, sender, seq, recv, msg)
        self._seq = 0
        self._link_counters: dict[tuple[int, int, int], int] = {}
        self._last_delivered_tick = -1
        self.sent = 0
        self.delivered = 0
        self.dropped = 0
        self.sent_by_kind = {k: 0 for k in MessageKind}
        self.dropped_by_kind = {k: 0 for k in MessageKind}

    def update_positions(self, positions: Mapping[int, RobotPose]) -> None:
        self._positions = dict(positions)

    def _neighbours(self, rid: int) -> list[int]:
        adj = self.config.adjacency
        if adj == "full":
            return [r for r in self.robot_ids if r != rid]
        if isinstance(adj, tuple):
            _, radius = adj
            here = self._positions.get(rid)
            if here is None:
                return []
            out = []
            for other in self.robot_ids:
                if other == rid:
                    continue
                pos = self._positions.get(other)
                if pos is None:
                    continue
                if math.hypot(pos.x - here.x, pos.y - here.y) <= radius:
                    out.append(other)
            return out
        neighbours = set(adj.get(rid, ()))
        # explicit maps are treated as undirected
        neighbours.update(r for r, peers in adj.items() if rid in set(peers))
        return [r for r in self.robot_ids if r in neighbours and r != rid]

    def reachable(self, sender: int) -> list[int]:
        """Transitive closure over the adjacency graph at the current tick."""
        seen = {sender}
        frontier = [sender]
        while frontier:
            nxt: list[int] = []
            for rid in frontier:
                for peer in self._neighbours(rid):
                    if peer not in seen:
                        seen.add(peer)
                        nxt.append(peer)
            frontier = nxt
        return sorted(seen - {sender})

    def _drop_draw(self, sender: int, receiver: int, kind: MessageKind) -> float:
        key = (sender, receiver, int(kind))
        count = self._link_counters.get(key, 0)
        self._link_counters[key] = count + 1
        ss = np.random.SeedSequence((self._seed, sender, receiver, int(kind), count))
        return float(np.random.Generator(np.random.PCG64(ss)).random())

    def publish(self, message: Message) -> None:
        """Enqueue ``message`` for every reachable peer, minus drops."""
        self.sent += 1
        self.sent_by_kind[message.kind] += 1
        p_drop = self.config.drop_probability(message.kind)
        deliver = message.send_tick + self.config.delay
        for receiver in self.reachable(message.sender):
            lost = p_drop > 0.0 and self._drop_draw(message.sender, receiver, message.kind) < p_drop
            if self.trace is not None:
                self.trace(
                    {
                        "tick": message.send_tick,
                        "sender": message.sender,
                        "receiver": receiver,
                        "kind": message.kind.name,
                        "dropped": lost,
                    }
                )
            if lost:
                self.dropped += 1
                self.dropped_by_kind[message.kind] += 1
                continue
            enveloped = replace(message, deliver_tick=deliver)
            heapq.heappush(self._queue, (deliver, message.sender, self._seq, receiver, enveloped))
            self._seq += 1

    def deliver(self, tick: int) -> dict[int, list[Message]]:
        """Pop everything due by ``tick`` into per-robot inboxes, exactly once."""
        if tick < self._last_delivered_tick:
            raise ValueError("deliver ticks must be monotone non-decreasing")
        self._last_delivered_tick = tick
        inboxes: dict[int, list[Message]] = {rid: [] for rid in self.robot_ids}
        while self._queue and self._queue[0][0] <= tick:
            _, _, _, receiver, msg = heapq.heappop(self._queue)
            inboxes[receiver].append(msg)
            self.delivered += 1
        return inboxes

    def pending(self) -> int:
        return len(self._queue)
