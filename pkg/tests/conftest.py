import random
from dataclasses import dataclass

import pytest

from lightiot.protocol import Client, Gateway, Server, random_id
from lightiot.registry import CLIENT, GATEWAY, Registry

T0 = 10_000_000


@dataclass
class World:
    registry: Registry
    client: Client
    gateway: Gateway
    server: Server
    rng: random.Random

    def pair(self, now=T0):
        m1 = self.client.start_pairing(now, self.rng)
        m2, _ = self.server.handle_m1(m1, now)
        self.client.finish_pairing(m2, now)

    def handshake(self, now=T0 + 100):
        """One full authentication; returns (client key, gateway key)."""
        m3 = self.client.start_auth(now, self.rng)
        m4 = self.gateway.handle_m3(m3, now, self.rng)
        m5, _ = self.server.handle_m4(m4, now)
        m6, gk = self.gateway.handle_m5(m5, now)
        ck = self.client.handle_m6(m6, now)
        return ck, gk


def make_world(seed=0, delta_t=2000) -> World:
    rng = random.Random(seed)
    reg = Registry()
    id_gw, lam_gw, pid_gw = random_id(rng), random_id(rng), random_id(rng)
    id_c, lam_c, pid_c = random_id(rng), random_id(rng), random_id(rng)
    reg.provision(GATEWAY, id_gw, lam_gw, pid_gw)
    reg.provision(CLIENT, id_c, lam_c, pid_c, gateway=id_gw)
    return World(
        reg,
        Client(id_c, lam_c, pid_c, delta_t),
        Gateway(id_gw, lam_gw, pid_gw, delta_t),
        Server(reg, delta_t),
        rng,
    )


@pytest.fixture
def world():
    return make_world()


@pytest.fixture
def paired(world):
    world.pair()
    return world


_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def acceptance_lines():
    return _ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
