"""Three-tier network topology: devices, base stations, edge servers.

Devices offload to any BS over wireless links, BSs forward to any server
(wireless) or to the cloud, servers exchange tasks over wired links with
every other server, process locally, or forward to the cloud. The cloud
itself is not a decision-making node.

Node n owns a block of decision variables and a block of constraints.
Flow-conservation constraints couple neighbouring tiers, which is what the
coupling sets below describe: ``coupling_sets(top)[n]`` is the set of nodes
whose OWN constraints involve n's variables, i.e. the nodes n must listen
to for multiplier feedback.
"""

from __future__ import annotations

from dataclasses import dataclass, field

DEVICE = "device"
BS = "bs"
SERVER = "server"

_KINDS = (DEVICE, BS, SERVER)


@dataclass(frozen=True, order=True)
class NodeId:
    kind: str
    index: int

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown node kind {self.kind!r}")
        if self.index < 0:
            raise ValueError("node index must be >= 0")


@dataclass(frozen=True)
class Topology:
    """Complete tri-partite topology with D devices, B base stations, S servers."""

    D: int
    B: int
    S: int
    devices: tuple[NodeId, ...] = field(init=False)
    stations: tuple[NodeId, ...] = field(init=False)
    servers: tuple[NodeId, ...] = field(init=False)

    def __post_init__(self):
        if min(self.D, self.B, self.S) < 1:
            raise ValueError("topology needs at least one node of each kind")
        object.__setattr__(self, "devices", tuple(NodeId(DEVICE, i) for i in range(self.D)))
        object.__setattr__(self, "stations", tuple(NodeId(BS, i) for i in range(self.B)))
        object.__setattr__(self, "servers", tuple(NodeId(SERVER, i) for i in range(self.S)))

    @property
    def nodes(self) -> tuple[NodeId, ...]:
        return self.devices + self.stations + self.servers

    # --- dimension counts -------------------------------------------------

    @property
    def num_nodes(self) -> int:
        return self.D + self.B + self.S

    @property
    def num_variables(self) -> int:
        # device: local + B offloads + B powers; BS: cloud + S offloads + S powers;
        # server: cloud + S transfers (the s->s entry is local processing)
        return self.D * (2 * self.B + 1) + self.B * (2 * self.S + 1) + self.S * (self.S + 1)

    @property
    def num_constraints(self) -> int:
        return self.D * (self.B + 1) + self.B * (self.S + 1) + self.S

    @property
    def num_edges(self) -> int:
        # communication links: device-BS, BS-server, ordered server pairs
        return self.D * self.B + self.B * self.S + self.S * (self.S - 1)

    @property
    def coupling_count(self) -> int:
        # total count of (variable, constraint) incidences driving the dual
        # stability floor; grows with how densely flow constraints overlap
        return (
            2 * self.D * (3 * self.B + 1)
            + 2 * self.B * (3 * self.S + 1)
            + 2 * self.S * (2 * self.S - 1)
        )

    def action_length(self, node: NodeId) -> int:
        if node.kind == DEVICE:
            return 2 * self.B + 1
        if node.kind == BS:
            return 2 * self.S + 1
        return self.S + 1

    def constraint_length(self, node: NodeId) -> int:
        if node.kind == DEVICE:
            return self.B + 1
        if node.kind == BS:
            return self.S + 1
        return 1

    def check_node(self, node: NodeId) -> None:
        limit = {DEVICE: self.D, BS: self.B, SERVER: self.S}[node.kind]
        if not 0 <= node.index < limit:
            raise ValueError(f"{node} outside topology (D={self.D}, B={self.B}, S={self.S})")


def build_topology(num_devices: int, num_stations: int, num_servers: int) -> Topology:
    return Topology(num_devices, num_stations, num_servers)


def coupling_sets(top: Topology) -> dict[NodeId, frozenset[NodeId]]:
    """Nodes whose own flow constraints read this node's variables.

    A device's offloads w_db appear in every BS's flow balance; a BS's
    forwards y_bs appear in every server's balance; a server's transfers
    z_ss' appear in every OTHER server's balance. Devices own no coupled
    constraint, so nobody couples to nothing through them: E_d is empty in
    the other direction -- here we return, for node n, the set of nodes n
    feeds, i.e. the senders of the multiplier feedback n consumes.
    """
    out: dict[NodeId, frozenset[NodeId]] = {}
    for d in top.devices:
        out[d] = frozenset(top.stations)
    for b in top.stations:
        out[b] = frozenset(top.servers)
    for s in top.servers:
        out[s] = frozenset(x for x in top.servers if x != s)
    return out


@dataclass(frozen=True)
class ConstraintIndex:
    """Bijection between (node, local constraint slot) and the global row m.

    Global order: device blocks first (flow balance then one rate row per
    BS), then BS blocks (flow then one rate row per server), then one flow
    row per server.
    """

    top: Topology

    def to_global(self, node: NodeId, local: int) -> int:
        self.top.check_node(node)
        n = self.top.constraint_length(node)
        if not 0 <= local < n:
            raise ValueError(f"local constraint {local} out of range for {node}")
        D, B, S = self.top.D, self.top.B, self.top.S
        if node.kind == DEVICE:
            return node.index * (B + 1) + local
        if node.kind == BS:
            return D * (B + 1) + node.index * (S + 1) + local
        return D * (B + 1) + B * (S + 1) + node.index

    def to_local(self, m: int) -> tuple[NodeId, int]:
        D, B, S = self.top.D, self.top.B, self.top.S
        if not 0 <= m < self.top.num_constraints:
            raise ValueError(f"constraint row {m} out of range")
        dev_rows = D * (B + 1)
        bs_rows = B * (S + 1)
        if m < dev_rows:
            return NodeId(DEVICE, m // (B + 1)), m % (B + 1)
        m -= dev_rows
        if m < bs_rows:
            return NodeId(BS, m // (S + 1)), m % (S + 1)
        m -= bs_rows
        return NodeId(SERVER, m), 0

    def owner_rows(self, node: NodeId) -> range:
        start = self.to_global(node, 0)
        return range(start, start + self.top.constraint_length(node))


def constraint_index(top: Topology) -> ConstraintIndex:
    return ConstraintIndex(top)
