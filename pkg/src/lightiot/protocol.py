"""Client, gateway and server state machines for pairing and authentication.

Every handler is transactional: it computes everything first and only mutates
its entity (or the server registry) once all checks have passed, so a rejected
frame leaves state untouched.

Field widths: identities, secrets, pseudo-identities and nonces are 16 bytes,
digests 32 bytes, timestamps 32-bit millisecond ticks.  Hash preimages are the
plain concatenation of these fixed-width encodings.

Construction choices worth knowing about, each forced by what a frame
actually carries:

* M2's D2 is ``(ID_GW xor h'(P_new||t_s)) || h'(ID_GW||P_new||t_s)`` where
  ``h'`` is the 128-bit truncation, so the client can both recover and verify
  the gateway identity.
* M4 has no room for the client nonce, the gateway nonce and two full
  digests.  Its two 256-bit slots therefore carry a 128-bit authenticator
  followed by the nonce the server needs: ``fold(C1) || R_c`` and
  ``C2[:128] || R_gw``, where ``fold`` XORs the two halves of a digest so
  that every bit of the client's C1 still reaches the server.  The
  timestamp slot relays the client's T_c1, which the gateway has already
  vetted.  C2 also binds that timestamp so it cannot be altered in transit.
* The session key is ``h(P_ID_c || ID_GW || R_c || T_s)`` on both sides;
  R_gw never reaches the client.
* M6 keeps T_s and T_gw2 in clear and masks C5||C6 under a keystream keyed by
  ``C3 || T_gw2``; only the legitimate client can recompute C3.
"""

from __future__ import annotations

import enum
import random
from dataclasses import dataclass
from typing import Optional

from .crypto import ID_BYTES, CountedCrypto, encode_ts
from .metrics import EntityMeter
from .registry import CLIENT, GATEWAY, NotFound, Registry
from .wire import (
    FrameM1,
    FrameM2,
    FrameM3,
    FrameM4,
    FrameM5,
    FrameM6,
    decode,
    encode,
)

DEFAULT_DELTA_T = 2000


class ProtocolError(Exception):
    """A frame was rejected by its recipient."""

    @property
    def verdict(self) -> str:
        return type(self).__name__


class StaleTimestamp(ProtocolError):
    pass


class UnknownClient(ProtocolError):
    pass


class UnknownGateway(ProtocolError):
    pass


class BadAuthenticator(ProtocolError):
    pass


class BadServerAuthenticator(ProtocolError):
    pass


class KeyConfirmFailed(ProtocolError):
    pass


class NotPaired(ProtocolError):
    pass


class UnexpectedMessage(ProtocolError):
    """No pending exchange that this frame could belong to."""


def is_fresh(a: int, b: int, delta_t: int) -> bool:
    return abs(a - b) < delta_t


def check_fresh(a: int, b: int, delta_t: int, what: str) -> None:
    if not is_fresh(a, b, delta_t):
        raise StaleTimestamp(f"{what}: |{a} - {b}| >= {delta_t}")


def random_id(rng: random.Random) -> bytes:
    return rng.getrandbits(ID_BYTES * 8).to_bytes(ID_BYTES, "big")


def _ts(t: int) -> bytes:
    return encode_ts(t)


def fold(crypto: CountedCrypto, d: bytes) -> bytes:
    """128-bit XOR fold of a 256-bit digest."""
    return crypto.xor(d[:ID_BYTES], d[ID_BYTES:])


def m6_pad_key(c3: bytes, t_gw2: int) -> bytes:
    return c3 + _ts(t_gw2)


def session_key(crypto: CountedCrypto, p_id_c: bytes, id_gw: bytes, r_c: bytes, t_s: int) -> bytes:
    return crypto.h(p_id_c, id_gw, r_c, _ts(t_s))


class Phase(enum.IntEnum):
    PROVISIONED = 0
    PAIRED = 1
    AUTH_PENDING = 2
    SESSION_ESTABLISHED = 3


@dataclass
class SessionKey:
    key: bytes
    p_id_c: bytes
    id_gw: bytes
    r_c: bytes
    t_s: int


class _Entity:
    role = ""

    def __init__(self, name: str):
        self.name = name
        self.meter = EntityMeter(name, self.role)
        self.crypto = CountedCrypto()
        self._phase_name = "pairing"

    def _in(self, phase: str) -> CountedCrypto:
        self._phase_name = phase
        self.crypto.counters = self.meter.phases[phase]
        return self.crypto

    def _sent(self, kind: str, frame_bits: bytes) -> bytes:
        self.meter.record_send(self._phase_name, kind, len(frame_bits) * 8)
        return frame_bits


@dataclass
class _ClientPairing:
    r_c: bytes
    t_c1: int


@dataclass
class _ClientAuth:
    r_c: bytes
    t_c1: int
    p_id_c: bytes


class Client(_Entity):
    role = CLIENT

    def __init__(
        self,
        id_c: bytes,
        lambda_c: bytes,
        p_id_c: bytes,
        delta_t: int = DEFAULT_DELTA_T,
        name: str = "client",
    ):
        super().__init__(name)
        if p_id_c == id_c:
            raise ValueError("pseudo-identity must differ from the real identity")
        self.id_c = id_c
        self.lambda_c = lambda_c
        self.p_id_c = p_id_c
        self.p_id_c_prev: Optional[bytes] = None
        self.id_gw: Optional[bytes] = None
        self.phase = Phase.PROVISIONED
        self.delta_t = delta_t
        self.pairing: Optional[_ClientPairing] = None
        self.auth: Optional[_ClientAuth] = None
        self.session_key: Optional[SessionKey] = None

    def _promote(self, new_pseudo: bytes) -> None:
        self.p_id_c_prev, self.p_id_c = self.p_id_c, new_pseudo

    def start_pairing(self, now: int, rng: random.Random) -> bytes:
        h = self._in("pairing")
        r_c = random_id(rng)
        d1 = h.h(self.p_id_c, r_c, self.lambda_c)
        frame = encode(FrameM1(self.id_c, r_c, now, d1))
        self.pairing = _ClientPairing(r_c, now)
        return self._sent("M1", h.mask(frame, self.p_id_c))

    def finish_pairing(self, bits: bytes, now: int) -> None:
        h = self._in("pairing")
        m2 = decode("M2", bits)
        check_fresh(now, m2.t_s, self.delta_t, "M2")
        if self.pairing is None:
            raise UnexpectedMessage("no pairing in progress")
        p = self.pairing
        p_new = h.h_id(self.id_c, p.r_c, _ts(p.t_c1), _ts(m2.t_s))
        pad = h.h_id(p_new, _ts(m2.t_s))
        id_gw = h.xor(m2.d2[:ID_BYTES], pad)
        if h.h_id(id_gw, p_new, _ts(m2.t_s)) != m2.d2[ID_BYTES:]:
            raise BadAuthenticator("M2 tag does not verify")
        if p_new in (self.p_id_c, self.id_c):
            raise BadAuthenticator("pairing produced a non-fresh pseudo-identity")
        self.id_gw = id_gw
        self._promote(p_new)
        self.pairing = None
        if self.phase < Phase.PAIRED:
            self.phase = Phase.PAIRED

    def start_auth(self, now: int, rng: random.Random) -> bytes:
        if self.id_gw is None:
            raise NotPaired("client has not paired with a gateway")
        h = self._in("authentication")
        r_c = random_id(rng)
        c1 = h.h(self.id_c, self.lambda_c, r_c)
        frame = encode(FrameM3(c1, r_c, now, self.p_id_c))
        self.auth = _ClientAuth(r_c, now, self.p_id_c)
        self.phase = Phase.AUTH_PENDING
        self.session_key = None
        return self._sent("M3", h.mask(frame, self.id_gw))

    def handle_m6(self, bits: bytes, now: int) -> SessionKey:
        h = self._in("authentication")
        wire = decode("M6", bits)
        check_fresh(now, wire.t_gw2, self.delta_t, "M6")
        if self.auth is None or self.phase != Phase.AUTH_PENDING:
            raise UnexpectedMessage("no authentication in progress")
        a = self.auth
        c3 = h.h(self.id_c, _ts(a.t_c1), _ts(wire.t_s))
        digests = h.mask(wire.c5 + wire.c6, m6_pad_key(c3, wire.t_gw2))
        c5, c6 = digests[:32], digests[32:]
        if h.h(c3, a.r_c) != c5:
            raise BadAuthenticator("C5 does not verify")
        p_new = h.h_id(self.id_c, self.lambda_c, a.r_c, _ts(a.t_c1), _ts(wire.t_s))
        k = session_key(h, a.p_id_c, self.id_gw, a.r_c, wire.t_s)
        if h.h(k, c3) != c6:
            raise KeyConfirmFailed("C6 does not verify")
        if p_new in (self.p_id_c, self.id_c):
            raise BadAuthenticator("authentication produced a non-fresh pseudo-identity")
        self._promote(p_new)
        self.auth = None
        self.session_key = SessionKey(k, a.p_id_c, self.id_gw, a.r_c, wire.t_s)
        self.phase = Phase.SESSION_ESTABLISHED
        return self.session_key


@dataclass
class _GatewayStash:
    r_c: bytes
    t_c1: int
    p_id_c: bytes
    r_gw: bytes
    t_gw1: int
    p_id_gw: bytes


class Gateway(_Entity):
    role = GATEWAY

    def __init__(
        self,
        id_gw: bytes,
        lambda_gw: bytes,
        p_id_gw: bytes,
        delta_t: int = DEFAULT_DELTA_T,
        name: str = "gateway",
    ):
        super().__init__(name)
        if p_id_gw == id_gw:
            raise ValueError("pseudo-identity must differ from the real identity")
        self.id_gw = id_gw
        self.lambda_gw = lambda_gw
        self.p_id_gw = p_id_gw
        self.p_id_gw_prev: Optional[bytes] = None
        self.delta_t = delta_t
        self.pending: Optional[_GatewayStash] = None
        self.session_key: Optional[SessionKey] = None

    def handle_m3(self, bits: bytes, now: int, rng: random.Random) -> bytes:
        h = self._in("authentication")
        m3 = decode("M3", h.mask(bits, self.id_gw))
        check_fresh(now, m3.t_c1, self.delta_t, "M3")
        r_gw = random_id(rng)
        c2 = h.h(self.id_gw, self.lambda_gw, r_gw, _ts(m3.t_c1))
        frame = FrameM4(
            c1=fold(h, m3.c1) + m3.r_c,
            c2=c2[:16] + r_gw,
            p_id_c=m3.p_id_c,
            t_gw1=m3.t_c1,
        )
        self.pending = _GatewayStash(m3.r_c, m3.t_c1, m3.p_id_c, r_gw, now, self.p_id_gw)
        return self._sent("M4", h.mask(encode(frame), self.p_id_gw))

    def handle_m5(self, bits: bytes, now: int) -> tuple[bytes, SessionKey]:
        h = self._in("authentication")
        m5 = decode("M5", bits)
        check_fresh(m5.t_s, now, self.delta_t, "M5")
        if self.pending is None:
            raise UnexpectedMessage("no relayed request awaiting M5")
        s = self.pending
        k_s = h.h(self.id_gw, self.lambda_gw, s.r_gw, s.p_id_gw, _ts(m5.t_s))
        if h.h(k_s, m5.c3, s.p_id_gw) != m5.c4:
            raise BadServerAuthenticator("C4 does not verify")
        p_new = h.h_id(self.id_gw, self.lambda_gw, s.r_gw, _ts(s.t_c1), _ts(m5.t_s))
        k = session_key(h, s.p_id_c, self.id_gw, s.r_c, m5.t_s)
        c6 = h.h(k, m5.c3)
        masked = h.mask(m5.c5 + c6, m6_pad_key(m5.c3, now))
        m6 = FrameM6(c5=masked[:32], c6=masked[32:], t_s=m5.t_s, t_gw2=now)
        if p_new in (self.p_id_gw, self.id_gw):
            raise BadServerAuthenticator("authentication produced a non-fresh pseudo-identity")
        self.p_id_gw_prev, self.p_id_gw = self.p_id_gw, p_new
        self.pending = None
        self.session_key = SessionKey(k, s.p_id_c, self.id_gw, s.r_c, m5.t_s)
        return self._sent("M6", encode(m6)), self.session_key


class Server(_Entity):
    role = "server"

    def __init__(self, registry: Registry, delta_t: int = DEFAULT_DELTA_T, name: str = "server"):
        super().__init__(name)
        if delta_t <= 0:
            raise ValueError("delta_t must be positive")
        self.registry = registry
        self.delta_t = delta_t

    def handle_m1(self, bits: bytes, now: int) -> tuple[bytes, bytes]:
        """Process a pairing request.  Returns ``(M2, client real id)``."""
        h = self._in("pairing")

        def same_client(t, key, plain):
            return plain[:ID_BYTES] == t.real_id

        try:
            tup, plain, _, key = self.registry.find_by_trial_unmask(
                CLIENT, bits, same_client, h.mask
            )
        except NotFound:
            raise UnknownClient("no provisioned client matches M1") from None
        m1 = decode("M1", plain)
        check_fresh(now, m1.t_c1, self.delta_t, "M1")
        if h.h(key, m1.r_c, tup.secret) != m1.d1:
            raise BadAuthenticator("D1 does not verify")
        if tup.gateway is None:
            raise UnknownGateway("client has no gateway assignment")
        p_new = h.h_id(tup.real_id, m1.r_c, _ts(m1.t_c1), _ts(now))
        pad = h.h_id(p_new, _ts(now))
        tag = h.h_id(tup.gateway, p_new, _ts(now))
        d2 = h.xor(tup.gateway, pad) + tag
        self.registry.stage_and_commit_pseudo(tup.real_id, CLIENT, p_new, retain=key)
        return self._sent("M2", encode(FrameM2(d2, now))), tup.real_id

    def handle_m4(self, bits: bytes, now: int) -> tuple[bytes, bytes]:
        """Process a relayed authentication request.  Returns ``(M5, gateway real id)``."""
        h = self._in("authentication")

        def carries_known_client(t, key, plain):
            try:
                self.registry.find_by_pseudo(CLIENT, plain[64:80])
            except NotFound:
                return False
            return True

        try:
            gw, plain, _, p_id_gw = self.registry.find_by_trial_unmask(
                GATEWAY, bits, carries_known_client, h.mask
            )
        except NotFound:
            raise UnknownGateway("no registered gateway matches M4") from None
        m4 = decode("M4", plain)
        t_req = m4.t_gw1
        check_fresh(now, t_req, self.delta_t, "M4")
        c1_tag, r_c = m4.c1[:16], m4.c1[16:]
        c2_tag, r_gw = m4.c2[:16], m4.c2[16:]
        if h.h(gw.real_id, gw.secret, r_gw, _ts(t_req))[:16] != c2_tag:
            raise BadAuthenticator("C2 does not verify")
        try:
            cl, _ = self.registry.find_by_pseudo(CLIENT, m4.p_id_c)
        except NotFound:
            raise UnknownClient("relayed client pseudo-identity is not registered") from None
        if fold(h, h.h(cl.real_id, cl.secret, r_c)) != c1_tag:
            raise BadAuthenticator("C1 does not verify")

        p_c_new = h.h_id(cl.real_id, cl.secret, r_c, _ts(t_req), _ts(now))
        p_gw_new = h.h_id(gw.real_id, gw.secret, r_gw, _ts(t_req), _ts(now))
        c3 = h.h(cl.real_id, _ts(t_req), _ts(now))
        k_s = h.h(gw.real_id, gw.secret, r_gw, p_id_gw, _ts(now))
        c4 = h.h(k_s, c3, p_id_gw)
        c5 = h.h(c3, r_c)

        self.registry.stage_and_commit_pseudo(cl.real_id, CLIENT, p_c_new, retain=m4.p_id_c)
        self.registry.stage_and_commit_pseudo(gw.real_id, GATEWAY, p_gw_new, retain=p_id_gw)
        m5 = FrameM5(t_s=now, c3=c3, c4=c4, c5=c5)
        return self._sent("M5", encode(m5)), gw.real_id


__all__ = [
    "BadAuthenticator",
    "BadServerAuthenticator",
    "Client",
    "DEFAULT_DELTA_T",
    "Gateway",
    "KeyConfirmFailed",
    "NotPaired",
    "Phase",
    "ProtocolError",
    "Server",
    "SessionKey",
    "StaleTimestamp",
    "UnexpectedMessage",
    "UnknownClient",
    "UnknownGateway",
    "check_fresh",
    "is_fresh",
    "random_id",
]
