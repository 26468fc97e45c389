"""Deterministic discrete-event network for driving handshakes.

Entities talk over three kinds of link (client-gateway, gateway-server and
client-server).  Every frame placed on a link first passes through the
adversary, which may let it through, drop, delay, tamper with, replay or
inject frames.  Processing is instantaneous, so handshake latency is exactly
the sum of link delays along the path.

Clients run one after another: each pairs (retrying up to
``pairing_attempts`` times) and then runs ``n_sessions`` authentication
attempts.  An attempt ends when the client completes it or when the timeout
(10 x delta_t by default) expires.
"""

from __future__ import annotations

import hashlib
import heapq
import json
import random
from dataclasses import asdict, dataclass, field, replace
from typing import Any, Iterable, Optional, Union

from .crypto import ID_BYTES
from .metrics import EntityMeter
from .protocol import DEFAULT_DELTA_T, Client, Gateway, Phase, Server, random_id
from .registry import CLIENT, GATEWAY, Registry
from .wire import FRAME_BITS, FRAME_TYPES

BASE_TIME = 10_000_000
LINK_CG = "client-gateway"
LINK_GS = "gateway-server"
LINK_CS = "client-server"
LINKS = (LINK_CG, LINK_GS, LINK_CS)

KIND_LINK = {"M1": LINK_CS, "M2": LINK_CS, "M3": LINK_CG, "M4": LINK_GS, "M5": LINK_GS, "M6": LINK_CG}
KIND_PHASE = {"M1": "pairing", "M2": "pairing", "M3": "authentication",
              "M4": "authentication", "M5": "authentication", "M6": "authentication"}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class LinkConfig:
    """``delay_ms`` is either a fixed delay or an inclusive (low, high) range."""

    delay_ms: Union[int, tuple[int, int]] = 0
    loss_prob: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.loss_prob <= 1.0:
            raise ConfigError(f"loss_prob must lie in [0, 1], got {self.loss_prob}")
        lo, hi = self.delay_range
        if lo < 0 or hi < lo:
            raise ConfigError(f"bad delay {self.delay_ms!r}")

    @property
    def delay_range(self) -> tuple[int, int]:
        if isinstance(self.delay_ms, (tuple, list)):
            lo, hi = self.delay_ms
            return int(lo), int(hi)
        return int(self.delay_ms), int(self.delay_ms)

    def draw_delay(self, rng: random.Random) -> int:
        lo, hi = self.delay_range
        return lo if lo == hi else rng.randint(lo, hi)


@dataclass(frozen=True)
class AdversaryAction:
    """What the adversary does with one frame.

    ``name`` is one of pass, drop, delay, tamper, replay, inject.  Bit
    positions count from the most significant bit of the first byte.  A replay
    lets the frame through and delivers a copy of capture ``index`` (the
    current frame if ``index`` is None) ``ms`` after the original delivery.
    An inject lets the frame through and also delivers ``raw`` as a frame of
    ``inject_kind`` to the same recipient ``ms`` after it.
    """

    name: str = "pass"
    ms: int = 0
    bits: tuple[int, ...] = ()
    index: Optional[int] = None
    raw: Optional[bytes] = None
    inject_kind: Optional[str] = None

    NAMES = ("pass", "drop", "delay", "tamper", "replay", "inject")

    def __post_init__(self):
        if self.name not in self.NAMES:
            raise ConfigError(f"unknown adversary action {self.name!r}")
        if self.ms < 0:
            raise ConfigError("adversary delays must be non-negative")
        if self.name == "inject" and (self.raw is None or self.inject_kind not in FRAME_TYPES):
            raise ConfigError("inject needs raw bytes and a message kind")

    @classmethod
    def passthrough(cls):
        return cls("pass")

    @classmethod
    def drop(cls):
        return cls("drop")

    @classmethod
    def delay(cls, ms: int):
        return cls("delay", ms=ms)

    @classmethod
    def tamper(cls, *bits: int):
        return cls("tamper", bits=tuple(bits))

    @classmethod
    def replay(cls, ms: int = 0, index: Optional[int] = None):
        return cls("replay", ms=ms, index=index)

    @classmethod
    def inject(cls, raw: bytes, kind: str, ms: int = 0):
        return cls("inject", ms=ms, raw=raw, inject_kind=kind)


@dataclass(frozen=True)
class Rule:
    """Apply ``action`` to honest frames of ``kind`` in attempt ``session``.

    For M1/M2 the session index is the pairing attempt, for M3..M6 the
    authentication session.  ``None`` matches anything.
    """

    action: AdversaryAction
    kind: Optional[str] = None
    session: Optional[int] = None
    client: Optional[int] = None

    def matches(self, pkt: "Packet") -> bool:
        return (
            (self.kind is None or self.kind == pkt.kind)
            and (self.session is None or self.session == pkt.session)
            and (self.client is None or self.client == pkt.client_index)
        )


class Adversary:
    """Dolev-Yao channel controller: sees, records and may rewrite every frame."""

    def __init__(self, rules: Iterable[Rule] = ()):
        self.rules = list(rules)
        self.capture: list["Packet"] = []

    def observe(self, pkt: "Packet") -> None:
        self.capture.append(replace(pkt))

    def decide(self, pkt: "Packet") -> AdversaryAction:
        if pkt.injected:
            return AdversaryAction.passthrough()
        for rule in self.rules:
            if rule.matches(pkt):
                return rule.action
        return AdversaryAction.passthrough()


def load_script(path_or_obj: Union[str, list]) -> list[Rule]:
    """Parse an adversary script: a JSON list of rule objects.

    Each object has ``action`` plus optional ``kind``, ``session``, ``client``,
    ``ms``, ``bits``, ``index``, ``raw`` (hex) and ``inject_kind``.
    """
    if isinstance(path_or_obj, str):
        try:
            with open(path_or_obj, encoding="utf-8") as fh:
                obj = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read adversary script: {exc}") from exc
    else:
        obj = path_or_obj
    if not isinstance(obj, list):
        raise ConfigError("adversary script must be a JSON list")
    rules = []
    for i, item in enumerate(obj):
        if not isinstance(item, dict) or "action" not in item:
            raise ConfigError(f"rule {i}: expected an object with an 'action'")
        kind = item.get("kind")
        if kind is not None and kind not in FRAME_TYPES:
            raise ConfigError(f"rule {i}: unknown message kind {kind!r}")
        try:
            action = AdversaryAction(
                name=item["action"],
                ms=int(item.get("ms", 0)),
                bits=tuple(int(b) for b in item.get("bits", ())),
                index=item.get("index"),
                raw=bytes.fromhex(item["raw"]) if item.get("raw") else None,
                inject_kind=item.get("inject_kind"),
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"rule {i}: {exc}") from exc
        if kind is not None:
            for b in action.bits:
                if not 0 <= b < FRAME_BITS[kind]:
                    raise ConfigError(f"rule {i}: bit {b} outside a {kind} frame")
        rules.append(Rule(action, kind, item.get("session"), item.get("client")))
    return rules


@dataclass
class Packet:
    fid: int
    kind: str
    src: str
    dst: str
    link: str
    bits: bytes
    sent_at: int
    client: str
    client_index: int
    session: int
    injected: bool = False
    action: str = "pass"


@dataclass
class SessionOutcome:
    client: str
    gateway: str
    phase: str
    index: int
    ok: bool
    started: int
    finished: Optional[int]
    reason: str
    client_key: Optional[str] = None
    gateway_key: Optional[str] = None
    p_id_c: Optional[str] = None
    p_id_gw: Optional[str] = None

    @property
    def latency(self) -> Optional[int]:
        return None if self.finished is None or not self.ok else self.finished - self.started

    def to_dict(self) -> dict:
        d = asdict(self)
        d["latency"] = self.latency
        return d


@dataclass
class Topology:
    clients: int = 1
    gateways: int = 1
    delta_t: int = DEFAULT_DELTA_T
    skew_ms: dict[str, int] = field(default_factory=dict)
    timeout_ms: Optional[int] = None
    pairing_attempts: int = 2

    def validate(self) -> None:
        if self.clients < 1 or self.gateways < 1:
            raise ConfigError("need at least one client and one gateway")
        if self.delta_t <= 0:
            raise ConfigError("delta_t must be positive")
        if self.pairing_attempts < 1:
            raise ConfigError("pairing_attempts must be at least 1")
        if self.timeout_ms is not None and self.timeout_ms <= 0:
            raise ConfigError("timeout must be positive")

    @property
    def timeout(self) -> int:
        return self.timeout_ms if self.timeout_ms is not None else 10 * self.delta_t


@dataclass
class Run:
    seed: int
    events: list[dict]
    sessions: list[SessionOutcome]
    meters: dict[str, EntityMeter]
    clients: dict[str, Client] = field(repr=False, default_factory=dict)
    gateways: dict[str, Gateway] = field(repr=False, default_factory=dict)
    server: Optional[Server] = field(repr=False, default=None)
    paired_start: bool = False

    def completed_authentications(self) -> int:
        return sum(1 for s in self.sessions if s.phase == "authentication" and s.ok)

    def sessions_of(self, phase: str) -> list[SessionOutcome]:
        return [s for s in self.sessions if s.phase == phase]

    @property
    def verdict(self) -> str:
        unpaired = not self.paired_start and any(
            not any(s.ok for s in self.sessions if s.client == c and s.phase == "pairing")
            for c in self.clients
        )
        if unpaired:
            return "timeout"
        return "ok" if all(s.ok for s in self.sessions) else "partial"

    def injected_events(self) -> list[dict]:
        return [e for e in self.events if e["injected"]]

    def transcript_lines(self) -> list[str]:
        return [json.dumps(e, sort_keys=True) for e in self.events]

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "verdict": self.verdict,
            "events": self.events,
            "sessions": [s.to_dict() for s in self.sessions],
        }


def derive_rng(seed: int, stream: str) -> random.Random:
    """Independent RNG stream per named consumer."""
    h = hashlib.sha256(f"{seed}/{stream}".encode()).digest()
    return random.Random(int.from_bytes(h[:8], "big"))


def provision_registry(n_clients: int, n_gateways: int, seed: int) -> Registry:
    """Fresh credentials for ``c0..`` and ``g0..``; client i pairs with gateway i mod n."""
    rng = derive_rng(seed, "provision")
    reg = Registry()
    gw_ids = []
    for _ in range(n_gateways):
        real, secret, pseudo = random_id(rng), random_id(rng), random_id(rng)
        reg.provision(GATEWAY, real, secret, pseudo)
        gw_ids.append(real)
    for i in range(n_clients):
        real, secret, pseudo = random_id(rng), random_id(rng), random_id(rng)
        reg.provision(CLIENT, real, secret, pseudo, gateway=gw_ids[i % n_gateways])
    return reg


class Simulation:
    def __init__(
        self,
        topology: Topology,
        links: Optional[dict[str, LinkConfig]] = None,
        adversary: Optional[Adversary] = None,
        seed: int = 0,
        registry: Optional[Registry] = None,
        paired: bool = False,
    ):
        topology.validate()
        self.topo = topology
        links = dict(links or {})
        for name in links:
            if name not in LINKS:
                raise ConfigError(f"unknown link {name!r}")
        self.links = {name: links.get(name, LinkConfig()) for name in LINKS}
        self.adversary = adversary or Adversary()
        self.seed = seed

        if registry is None:
            registry = provision_registry(topology.clients, topology.gateways, seed)
        # Devices start from a copy of their provisioned credentials.
        device_view = Registry.loads(registry.dumps())
        client_tuples = device_view.tuples(CLIENT)
        gw_tuples = device_view.tuples(GATEWAY)
        if len(client_tuples) < topology.clients or len(gw_tuples) < topology.gateways:
            raise ConfigError("registry holds fewer principals than the topology needs")

        dt = topology.delta_t
        self.server = Server(registry, dt, name="server")
        self.gateways: dict[str, Gateway] = {}
        gw_by_real = {}
        for j, t in enumerate(gw_tuples[: topology.gateways]):
            g = Gateway(t.real_id, t.secret, t.pseudo_current, dt, name=f"g{j}")
            g.p_id_gw_prev = t.pseudo_previous
            self.gateways[g.name] = g
            gw_by_real[t.real_id] = g.name
        self.gw_by_real = gw_by_real
        self.clients: dict[str, Client] = {}
        self.client_gateway: dict[str, str] = {}
        self.client_by_real = {}
        for i, t in enumerate(client_tuples[: topology.clients]):
            c = Client(t.real_id, t.secret, t.pseudo_current, dt, name=f"c{i}")
            c.p_id_c_prev = t.pseudo_previous
            if t.gateway not in gw_by_real:
                raise ConfigError(f"client c{i} is assigned to a gateway outside the topology")
            if paired:
                c.id_gw = t.gateway
                c.phase = Phase.PAIRED
            self.clients[c.name] = c
            self.client_gateway[c.name] = gw_by_real[t.gateway]
            self.client_by_real[t.real_id] = c.name
        self.paired_start = paired

        for name in topology.skew_ms:
            if name not in self.clients and name not in self.gateways and name != "server":
                raise ConfigError(f"skew given for unknown entity {name!r}")

        self.rngs = {name: derive_rng(seed, f"entity/{name}") for name in self._entity_names()}
        self.link_rngs: dict[str, random.Random] = {}

        self.t = BASE_TIME
        self._queue: list = []
        self._seq = 0
        self._fid = 0
        self.events: list[dict] = []
        self.sessions: list[SessionOutcome] = []
        self.gateway_keys: dict[bytes, bytes] = {}
        self._current: Optional[dict] = None

    def _entity_names(self) -> list[str]:
        return [*self.clients, *self.gateways, "server"]

    def _entity(self, name: str):
        if name == "server":
            return self.server
        return self.clients.get(name) or self.gateways[name]

    def clock(self, name: str) -> int:
        return self.t + self.topo.skew_ms.get(name, 0)

    def _link_rng(self, link: str, a: str, b: str) -> random.Random:
        key = f"{link}/{min(a, b)}-{max(a, b)}"
        if key not in self.link_rngs:
            self.link_rngs[key] = derive_rng(self.seed, f"link/{key}")
        return self.link_rngs[key]

    def _push(self, when: int, etype: str, payload: Any) -> None:
        heapq.heappush(self._queue, (when, self._seq, etype, payload))
        self._seq += 1

    # frames

    def _record(self, pkt: Packet, verdict: str, delivered_bits: Optional[bytes] = None) -> None:
        counters = None
        if verdict not in ("dropped", "lost"):
            tot = self._entity(pkt.dst).meter.total()
            counters = {
                "protocol_hashes": tot.protocol_hashes,
                "pad_hashes": tot.pad_hashes,
                "xor_masks": tot.xor_masks,
            }
        bits = pkt.bits if delivered_bits is None else delivered_bits
        self.events.append({
            "time": self.t,
            "fid": pkt.fid,
            "link": pkt.link,
            "direction": f"{pkt.src}->{pkt.dst}",
            "kind": pkt.kind,
            "raw_hex": bits.hex(),
            "verdict": verdict,
            "action": pkt.action,
            "client": pkt.client,
            "session": pkt.session,
            "injected": pkt.injected,
            "sender_emitted": not pkt.injected,
            "sent_at": pkt.sent_at,
            "counters": counters,
        })

    def _new_packet(self, kind, src, dst, bits, tag, injected=False) -> Packet:
        self._fid += 1
        client, client_index, session = tag
        return Packet(self._fid, kind, src, dst, KIND_LINK[kind], bits, self.t,
                      client, client_index, session, injected)

    def send(self, kind: str, src: str, dst: str, bits: bytes, tag: tuple) -> None:
        pkt = self._new_packet(kind, src, dst, bits, tag)
        link = self.links[pkt.link]
        lrng = self._link_rng(pkt.link, src, dst)
        lost = link.loss_prob > 0 and lrng.random() < link.loss_prob
        delay = link.draw_delay(lrng)
        self.adversary.observe(pkt)
        action = self.adversary.decide(pkt)
        pkt.action = action.name
        if lost:
            self._record(pkt, "lost")
            return
        if action.name == "drop":
            self._record(pkt, "dropped")
            return
        arrive = self.t + delay
        if action.name == "delay":
            arrive += action.ms
        if action.name == "tamper":
            n = len(bits) * 8
            v = int.from_bytes(bits, "big")
            for b in action.bits:
                if not 0 <= b < n:
                    raise ConfigError(f"tamper bit {b} outside a {n}-bit {kind} frame")
                v ^= 1 << (n - 1 - b)
            pkt.bits = v.to_bytes(len(bits), "big")
        self._push(arrive, "deliver", pkt)
        if action.name == "replay":
            if action.index is None:
                src_pkt = pkt
            elif 0 <= action.index < len(self.adversary.capture):
                src_pkt = self.adversary.capture[action.index]
            else:
                raise ConfigError(f"replay index {action.index} outside the capture log")
            self._inject(src_pkt.kind, src_pkt.bits, src_pkt.src, src_pkt.dst,
                         arrive + action.ms, tag, original=src_pkt)
        elif action.name == "inject":
            self._inject(action.inject_kind, action.raw, "adversary", dst, arrive + action.ms, tag)

    def _inject(self, kind, bits, src, dst, when, tag, original: Optional[Packet] = None):
        pkt = self._new_packet(kind, src, dst, bits, tag, injected=True)
        pkt.action = "replay" if original is not None else "inject"
        pkt.sent_at = original.sent_at if original is not None else when
        self._push(when, "deliver", pkt)

    def _deliver(self, pkt: Packet) -> None:
        dst = pkt.dst
        now = self.clock(dst)
        tag = (pkt.client, pkt.client_index, pkt.session)
        try:
            if pkt.kind == "M1":
                m2, real = self.server.handle_m1(pkt.bits, now)
                self._record(pkt, "accepted")
                target = self.client_by_real.get(real)
                if target is not None:
                    self.send("M2", "server", target, m2, (target, self._index(target), pkt.session))
            elif pkt.kind == "M2":
                self.clients[dst].finish_pairing(pkt.bits, now)
                self._record(pkt, "accepted")
                self._client_done(dst, "pairing")
            elif pkt.kind == "M3":
                m4 = self.gateways[dst].handle_m3(pkt.bits, now, self.rngs[dst])
                self._record(pkt, "accepted")
                self.send("M4", dst, "server", m4, tag)
            elif pkt.kind == "M4":
                m5, gw_real = self.server.handle_m4(pkt.bits, now)
                self._record(pkt, "accepted")
                gw = self.gw_by_real.get(gw_real)
                if gw is not None:
                    self.send("M5", "server", gw, m5, tag)
            elif pkt.kind == "M5":
                m6, key = self.gateways[dst].handle_m5(pkt.bits, now)
                self._record(pkt, "accepted")
                self.gateway_keys[key.p_id_c] = key.key
                target = self._client_for(key.p_id_c, pkt.client)
                self.send("M6", dst, target, m6, (target, self._index(target), pkt.session))
            elif pkt.kind == "M6":
                self.clients[dst].handle_m6(pkt.bits, now)
                self._record(pkt, "accepted")
                self._client_done(dst, "authentication")
        except Exception as exc:  # entity errors are verdicts, never fatal
            verdict = getattr(exc, "verdict", None) or type(exc).__name__
            self._record(pkt, verdict)

    def _index(self, client: str) -> int:
        return int(client[1:])

    def _client_for(self, p_id_c: bytes, fallback: str) -> str:
        for name, c in self.clients.items():
            if c.auth is not None and c.auth.p_id_c == p_id_c:
                return name
        return fallback

    # session control

    def _start(self, client: str, phase: str, index: int) -> None:
        c = self.clients[client]
        gw_name = self.client_gateway[client]
        now = self.clock(client)
        rng = self.rngs[client]
        tag = (client, self._index(client), index)
        outcome = SessionOutcome(
            client=client, gateway=gw_name, phase=phase, index=index, ok=False,
            started=self.t, finished=None, reason="pending",
            p_id_c=c.p_id_c.hex(),
            p_id_gw=self.gateways[gw_name].p_id_gw.hex() if phase == "authentication" else None,
        )
        self._current = {"client": client, "phase": phase, "index": index, "outcome": outcome}
        self.sessions.append(outcome)
        if phase == "pairing":
            bits = c.start_pairing(now, rng)
            self.send("M1", client, "server", bits, tag)
        else:
            bits = c.start_auth(now, rng)
            self.send("M3", client, gw_name, bits, tag)
        self._push(self.t + self.topo.timeout, "timeout", (client, phase, index))

    def _client_done(self, client: str, phase: str) -> None:
        cur = self._current
        if cur is None or cur["client"] != client or cur["phase"] != phase:
            return
        out: SessionOutcome = cur["outcome"]
        out.ok = True
        out.finished = self.t
        out.reason = "ok"
        if phase == "authentication":
            c = self.clients[client]
            out.client_key = c.session_key.key.hex()
            gk = self.gateway_keys.get(c.session_key.p_id_c)
            out.gateway_key = gk.hex() if gk is not None else None
        self._current = None
        self._advance(client, phase, cur["index"], ok=True)

    def _timeout(self, client: str, phase: str, index: int) -> None:
        cur = self._current
        if cur is None or (cur["client"], cur["phase"], cur["index"]) != (client, phase, index):
            return
        out: SessionOutcome = cur["outcome"]
        out.finished = self.t
        out.reason = "timeout"
        if phase == "authentication":
            gk = self.gateway_keys.get(bytes.fromhex(out.p_id_c))
            out.gateway_key = gk.hex() if gk is not None else None
        self._current = None
        self._advance(client, phase, index, ok=False)

    def _advance(self, client: str, phase: str, index: int, ok: bool) -> None:
        if phase == "pairing" and not ok:
            if index + 1 < self.topo.pairing_attempts:
                self._start(client, "pairing", index + 1)
                return
            self._next_client(client)
            return
        next_session = 0 if phase == "pairing" else index + 1
        if next_session < self._n_sessions:
            self._start(client, "authentication", next_session)
        else:
            self._next_client(client)

    def _next_client(self, client: str) -> None:
        names = list(self.clients)
        i = names.index(client) + 1
        if i < len(names):
            self._begin_client(names[i])

    def _begin_client(self, client: str) -> None:
        if self.paired_start:
            if self._n_sessions > 0:
                self._start(client, "authentication", 0)
            else:
                self._next_client(client)
        else:
            self._start(client, "pairing", 0)

    def run(self, n_sessions: int = 1) -> Run:
        if n_sessions < 0:
            raise ConfigError("n_sessions must be non-negative")
        self._n_sessions = n_sessions
        self._begin_client(next(iter(self.clients)))
        while self._queue:
            when, _, etype, payload = heapq.heappop(self._queue)
            self.t = when
            if etype == "deliver":
                self._deliver(payload)
            elif etype == "timeout":
                self._timeout(*payload)
        return Run(
            seed=self.seed,
            events=self.events,
            sessions=self.sessions,
            meters={n: self._entity(n).meter for n in self._entity_names()},
            clients=self.clients,
            gateways=self.gateways,
            server=self.server,
            paired_start=self.paired_start,
        )


def run_scenario(
    topology: Optional[Topology] = None,
    links: Optional[dict[str, LinkConfig]] = None,
    script: Union[None, str, list] = None,
    seed: int = 0,
    n_sessions: int = 1,
    registry: Optional[Registry] = None,
    paired: bool = False,
) -> Run:
    """Pair every client, then run ``n_sessions`` authentications per client."""
    if seed is None:
        raise ConfigError("a seed is required")
    topology = topology or Topology()
    rules = script if (isinstance(script, list) and all(isinstance(r, Rule) for r in script)) \
        else (load_script(script) if script is not None else [])
    sim = Simulation(topology, links, Adversary(rules), seed, registry, paired)
    return sim.run(n_sessions)


def _single_link_topology(delta_t: int) -> Topology:
    return Topology(clients=1, gateways=1, delta_t=delta_t)


def adversary_replay_scenario(
    which: str,
    staleness_ms: int,
    seed: int = 0,
    delta_t: int = DEFAULT_DELTA_T,
    links: Optional[dict[str, LinkConfig]] = None,
) -> Run:
    """Let ``which`` through, then replay the captured copy ``staleness_ms`` later.

    Pairing frames are replayed in a pairing-only run so the replay meets the
    registry state right after the pairing it was captured from.
    """
    if which not in FRAME_TYPES:
        raise ConfigError(f"unknown message kind {which!r}")
    sessions = 0 if which in ("M1", "M2") else 1
    rule = Rule(AdversaryAction.replay(ms=staleness_ms), kind=which, session=0)
    return run_scenario(_single_link_topology(delta_t), links, [rule], seed, sessions)


def adversary_tamper_scenario(
    which: str,
    bit_position: int,
    seed: int = 0,
    delta_t: int = DEFAULT_DELTA_T,
    links: Optional[dict[str, LinkConfig]] = None,
) -> Run:
    """Flip one bit of the first ``which`` frame in flight (single attempt, one session)."""
    if which not in FRAME_TYPES:
        raise ConfigError(f"unknown message kind {which!r}")
    if not 0 <= bit_position < FRAME_BITS[which]:
        raise ConfigError(f"bit {bit_position} outside a {which} frame")
    topo = _single_link_topology(delta_t)
    topo.pairing_attempts = 1
    rule = Rule(AdversaryAction.tamper(bit_position), kind=which, session=0)
    return run_scenario(topo, links, [rule], seed, 1)


def adversary_block_scenario(
    which: str,
    seed: int = 0,
    delta_t: int = DEFAULT_DELTA_T,
    links: Optional[dict[str, LinkConfig]] = None,
) -> Run:
    """Drop ``which`` (M2, M5 or M6) once, then let a follow-up handshake run."""
    if which not in ("M2", "M5", "M6"):
        raise ConfigError("only M2, M5 and M6 can be blocked in this scenario")
    topo = _single_link_topology(delta_t)
    topo.pairing_attempts = 2
    sessions = 1 if which == "M2" else 2
    rule = Rule(AdversaryAction.drop(), kind=which, session=0)
    return run_scenario(topo, links, [rule], seed, sessions)


def handshake_recovered(run: Run, which: str) -> bool:
    """True if the blocked attempt failed and the follow-up one completed."""
    if which == "M2":
        pairing = run.sessions_of("pairing")
        auth = run.sessions_of("authentication")
        return (
            len(pairing) == 2 and not pairing[0].ok and pairing[1].ok
            and len(auth) == 1 and auth[0].ok
        )
    auth = run.sessions_of("authentication")
    return len(auth) == 2 and not auth[0].ok and auth[1].ok


def field_windows(kind: str, bits: bytes) -> list[bytes]:
    """Every byte-aligned 128-bit window of a wire frame."""
    return [bits[i:i + ID_BYTES] for i in range(len(bits) - ID_BYTES + 1)]
