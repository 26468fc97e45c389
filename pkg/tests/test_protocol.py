import hashlib
import random

import pytest

from conftest import T0, make_world
from lightiot.crypto import mask
from lightiot.protocol import (
    BadAuthenticator,
    BadServerAuthenticator,
    Gateway,
    KeyConfirmFailed,
    NotPaired,
    Phase,
    StaleTimestamp,
    UnexpectedMessage,
    UnknownClient,
    UnknownGateway,
    is_fresh,
    random_id,
)
from lightiot.registry import CLIENT, GATEWAY
from lightiot.wire import FrameM3, decode, encode


def sha3(*parts):
    return hashlib.sha3_256(b"".join(parts)).digest()


def flip(bits, pos):
    b = bytearray(bits)
    b[pos // 8] ^= 0x80 >> (pos % 8)
    return bytes(b)


def ts(t):
    return t.to_bytes(4, "big")


# pairing

def test_m1_shape_and_d1(world):
    c = world.client
    m1 = c.start_pairing(T0, world.rng)
    assert len(m1) * 8 == 544
    f = decode("M1", mask(m1, c.p_id_c))
    assert f.id_c == c.id_c and f.t_c1 == T0
    assert f.d1 == sha3(c.p_id_c, f.r_c, c.lambda_c)


def test_m1_nonces_differ(world):
    seen = set()
    for i in range(20):
        f = decode("M1", mask(world.client.start_pairing(T0, world.rng), world.client.p_id_c))
        seen.add((f.r_c, f.d1))
    assert len(seen) == 20


def test_honest_pairing(world):
    before = world.client.p_id_c
    m1 = world.client.start_pairing(T0, world.rng)
    m2, real = world.server.handle_m1(m1, T0 + 5)
    assert len(m2) * 8 == 288 and real == world.client.id_c
    world.client.finish_pairing(m2, T0 + 10)
    assert world.client.phase == Phase.PAIRED
    assert world.client.id_gw == world.gateway.id_gw
    assert world.client.p_id_c != before
    tup = world.registry.get(CLIENT, world.client.id_c)
    assert (tup.pseudo_current, tup.pseudo_previous) == (world.client.p_id_c, before)


def test_m1_stale(world):
    m1 = world.client.start_pairing(T0, world.rng)
    with pytest.raises(StaleTimestamp):
        world.server.handle_m1(m1, T0 + 2001)


def test_m1_d1_flips():
    w = make_world(3)
    m1 = w.client.start_pairing(T0, w.rng)
    d1_start = (16 + 16 + 4) * 8
    for pos in random.Random(0).sample(range(d1_start, 544), 100):
        with pytest.raises(BadAuthenticator):
            w.server.handle_m1(flip(m1, pos), T0)
    # nothing was committed by the rejected attempts
    assert w.registry.get(CLIENT, w.client.id_c).pseudo_previous is None


def test_m1_unknown_client(world):
    frame = mask(bytes(68), random_id(random.Random(5)))
    with pytest.raises(UnknownClient):
        world.server.handle_m1(frame, T0)


def test_m2_tampered_d2_first_half():
    rng = random.Random(11)
    for _ in range(100):
        w = make_world(rng.randrange(1 << 30))
        m2, _ = w.server.handle_m1(w.client.start_pairing(T0, w.rng), T0)
        with pytest.raises(BadAuthenticator):
            w.client.finish_pairing(flip(m2, rng.randrange(128)), T0)
        assert w.client.phase == Phase.PROVISIONED


def test_m2_without_pending_pairing(world):
    m2, _ = world.server.handle_m1(world.client.start_pairing(T0, world.rng), T0)
    world.client.finish_pairing(m2, T0)
    with pytest.raises(UnexpectedMessage):
        world.client.finish_pairing(m2, T0)


# authentication

def test_start_auth_requires_pairing(world):
    with pytest.raises(NotPaired):
        world.client.start_auth(T0, world.rng)


def test_m3_masked_under_gateway_identity(paired):
    c = paired.client
    m3 = c.start_auth(T0, paired.rng)
    assert len(m3) * 8 == 544
    f = decode("M3", mask(m3, c.id_gw))
    assert f.c1 == sha3(c.id_c, c.lambda_c, f.r_c)
    assert f.p_id_c == c.p_id_c
    wrong = decode("M3", mask(m3, random_id(random.Random(2))))
    assert wrong.c1 != sha3(c.id_c, c.lambda_c, wrong.r_c)


def test_gateway_stash_and_m4_size(paired):
    m3 = paired.client.start_auth(T0, paired.rng)
    m4 = paired.gateway.handle_m3(m3, T0, paired.rng)
    assert len(m4) * 8 == 672
    assert paired.gateway.pending.r_c == paired.client.auth.r_c


@pytest.mark.parametrize("offset,ok", [(1999, True), (2000, False), (2001, False),
                                       (-1999, True), (-2000, False)])
def test_freshness_boundary_at_gateway(paired, offset, ok):
    m3 = paired.client.start_auth(T0, paired.rng)
    now = T0 + offset
    if ok:
        paired.gateway.handle_m3(m3, now, paired.rng)
    else:
        with pytest.raises(StaleTimestamp):
            paired.gateway.handle_m3(m3, now, paired.rng)


def test_is_fresh_is_symmetric():
    for d in range(1990, 2010):
        assert is_fresh(0, d, 2000) == is_fresh(d, 0, 2000) == (d < 2000)


def test_honest_handshake(paired):
    c_before, g_before = paired.client.p_id_c, paired.gateway.p_id_gw
    ck, gk = paired.handshake()
    assert ck.key == gk.key and len(ck.key) == 32
    assert paired.client.phase == Phase.SESSION_ESTABLISHED
    assert paired.client.p_id_c != c_before
    assert paired.gateway.p_id_gw != g_before
    # the server's current values are what the principals now hold
    reg = paired.registry
    assert reg.get(CLIENT, paired.client.id_c).pseudo_current == paired.client.p_id_c
    assert reg.get(GATEWAY, paired.gateway.id_gw).pseudo_current == paired.gateway.p_id_gw


def test_session_key_formula(paired):
    ck, _ = paired.handshake()
    want = sha3(ck.p_id_c, paired.gateway.id_gw, ck.r_c, ts(ck.t_s))
    assert ck.key == want


def test_frame_sizes_of_handshake(paired):
    now = T0 + 50
    m3 = paired.client.start_auth(now, paired.rng)
    m4 = paired.gateway.handle_m3(m3, now, paired.rng)
    m5, _ = paired.server.handle_m4(m4, now)
    m6, _ = paired.gateway.handle_m5(m5, now)
    assert [len(m) * 8 for m in (m3, m4, m5, m6)] == [544, 672, 800, 576]


def test_consecutive_keys_differ(paired):
    keys = [paired.handshake(T0 + 100 * i)[0].key for i in range(1, 6)]
    assert len(set(keys)) == 5


def test_m4_unknown_gateway(paired):
    rogue = Gateway(paired.gateway.id_gw, paired.gateway.lambda_gw, random_id(random.Random(8)))
    m3 = paired.client.start_auth(T0, paired.rng)
    m4 = rogue.handle_m3(m3, T0, paired.rng)
    with pytest.raises(UnknownGateway):
        paired.server.handle_m4(m4, T0)


def test_m4_wrong_gateway_secret():
    rng = random.Random(21)
    for _ in range(25):
        w = make_world(rng.randrange(1 << 30))
        w.pair()
        g = w.gateway
        impostor = Gateway(g.id_gw, random_id(rng), g.p_id_gw)
        m4 = impostor.handle_m3(w.client.start_auth(T0, w.rng), T0, w.rng)
        with pytest.raises(BadAuthenticator):
            w.server.handle_m4(m4, T0)


def test_m4_unknown_client_pseudo(paired):
    g = paired.gateway
    c = paired.client
    forged = encode(FrameM3(bytes(32), bytes(16), T0, random_id(random.Random(4))))
    m4 = g.handle_m3(mask(forged, c.id_gw), T0, paired.rng)
    with pytest.raises(UnknownGateway):
        # a relayed pseudo that no client holds cannot identify the sender
        paired.server.handle_m4(m4, T0)


def test_m4_bad_c1(paired):
    c = paired.client
    forged = encode(FrameM3(bytes(32), bytes(16), T0, c.p_id_c))
    m4 = paired.gateway.handle_m3(mask(forged, c.id_gw), T0, paired.rng)
    with pytest.raises(BadAuthenticator):
        paired.server.handle_m4(m4, T0)


def test_m4_stale(paired):
    m4 = paired.gateway.handle_m3(paired.client.start_auth(T0, paired.rng), T0, paired.rng)
    with pytest.raises(StaleTimestamp):
        paired.server.handle_m4(m4, T0 + 2000)


def test_m5_tampered_c4():
    rng = random.Random(31)
    w = make_world(4)
    w.pair()
    m4 = w.gateway.handle_m3(w.client.start_auth(T0, w.rng), T0, w.rng)
    m5, _ = w.server.handle_m4(m4, T0)
    c4_bits = range((4 + 32) * 8, (4 + 64) * 8)
    for pos in rng.sample(c4_bits, 100):
        with pytest.raises(BadServerAuthenticator):
            w.gateway.handle_m5(flip(m5, pos), T0)
    assert w.gateway.pending is not None


def test_m5_stale_and_unexpected(paired):
    m4 = paired.gateway.handle_m3(paired.client.start_auth(T0, paired.rng), T0, paired.rng)
    m5, _ = paired.server.handle_m4(m4, T0)
    with pytest.raises(StaleTimestamp):
        paired.gateway.handle_m5(m5, T0 + 2000)
    paired.gateway.handle_m5(m5, T0)
    with pytest.raises(UnexpectedMessage):
        paired.gateway.handle_m5(m5, T0)


def _to_m6(w):
    m4 = w.gateway.handle_m3(w.client.start_auth(T0, w.rng), T0, w.rng)
    m5, _ = w.server.handle_m4(m4, T0)
    m6, _ = w.gateway.handle_m5(m5, T0)
    return m6


def test_m6_flips_in_c6():
    rng = random.Random(41)
    w = make_world(6)
    w.pair()
    m6 = _to_m6(w)
    for pos in rng.sample(range(256, 512), 100):
        with pytest.raises(KeyConfirmFailed):
            w.client.handle_m6(flip(m6, pos), T0)
    assert w.client.phase == Phase.AUTH_PENDING


def test_m6_flips_in_c5(paired):
    m6 = _to_m6(paired)
    for pos in range(0, 256, 7):
        with pytest.raises(BadAuthenticator):
            paired.client.handle_m6(flip(m6, pos), T0)


def test_m6_stale(paired):
    m6 = _to_m6(paired)
    with pytest.raises(StaleTimestamp):
        paired.client.handle_m6(m6, T0 + 2000)


def test_m6_timestamp_flip_still_fresh_is_caught(paired):
    m6 = _to_m6(paired)
    with pytest.raises((BadAuthenticator, KeyConfirmFailed)):
        paired.client.handle_m6(flip(m6, 575), T0)  # lowest bit of T_gw2
    with pytest.raises((BadAuthenticator, KeyConfirmFailed)):
        paired.client.handle_m6(flip(m6, 543), T0)  # lowest bit of T_s


def test_recovery_after_lost_m6(paired):
    _to_m6(paired)  # M6 never reaches the client
    held = paired.client.p_id_c
    paired.client.auth = None  # the client times out and starts over
    ck, gk = paired.handshake(T0 + 500)
    assert ck.key == gk.key and ck.p_id_c == held


def test_recovery_after_lost_m5(paired):
    m4 = paired.gateway.handle_m3(paired.client.start_auth(T0, paired.rng), T0, paired.rng)
    paired.server.handle_m4(m4, T0)  # M5 dropped
    ck, gk = paired.handshake(T0 + 500)
    assert ck.key == gk.key


def test_recovery_after_lost_m2(world):
    world.server.handle_m1(world.client.start_pairing(T0, world.rng), T0)  # M2 dropped
    world.pair(T0 + 100)
    ck, gk = world.handshake(T0 + 200)
    assert ck.key == gk.key


def test_authentication_hash_counts(paired):
    paired.handshake()
    got = {e.role: e.meter.phases["authentication"].protocol_hashes
           for e in (paired.client, paired.gateway, paired.server)}
    assert got == {"client": 6, "gateway": 6, "server": 8}
