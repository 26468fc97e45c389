"""Three-party lightweight pairing and authentication for wearable IoT devices."""

from .crypto import digest, expand_pad, mask, truncate_id
from .protocol import Client, Gateway, ProtocolError, Server
from .registry import Registry
from .sim import AdversaryAction, LinkConfig, Rule, Topology, run_scenario
from .wire import FRAME_BITS, decode, encode

__version__ = "0.1.0"
