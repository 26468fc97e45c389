"""Server-side credential store with one-deep pseudo-identity history."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from typing import Callable, Iterator, Optional

CLIENT = "client"
GATEWAY = "gateway"
ROLES = (CLIENT, GATEWAY)

FORMAT_NAME = "lightiot-registry"
FORMAT_VERSION = 1


class RegistryError(Exception):
    pass


class DuplicateIdentity(RegistryError):
    pass


class UnknownIdentity(RegistryError):
    pass


class InvariantViolation(RegistryError):
    pass


class NotFound(RegistryError):
    pass


@dataclass
class CredentialTuple:
    role: str
    real_id: bytes
    secret: bytes
    pseudo_current: bytes
    pseudo_previous: Optional[bytes] = None
    # For clients: real identity of the gateway they pair with.
    gateway: Optional[bytes] = None

    def pseudos(self) -> Iterator[tuple[str, bytes]]:
        yield "current", self.pseudo_current
        if self.pseudo_previous is not None:
            yield "previous", self.pseudo_previous

    def to_json(self) -> dict:
        out = {
            "role": self.role,
            "real_id": self.real_id.hex(),
            "secret": self.secret.hex(),
            "pseudo_current": self.pseudo_current.hex(),
            "pseudo_previous": self.pseudo_previous.hex() if self.pseudo_previous else None,
        }
        if self.gateway is not None:
            out["gateway"] = self.gateway.hex()
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "CredentialTuple":
        def hx(key):
            v = obj.get(key)
            return bytes.fromhex(v) if v else None

        return cls(
            role=obj["role"],
            real_id=hx("real_id"),
            secret=hx("secret"),
            pseudo_current=hx("pseudo_current"),
            pseudo_previous=hx("pseudo_previous"),
            gateway=hx("gateway"),
        )


class Registry:
    """Client and gateway tuples keyed by (role, real identity).

    All mutation goes through :meth:`provision` and :meth:`stage_and_commit_pseudo`.
    Lookup by pseudo-identity only ever considers a tuple's current and previous
    values.
    """

    def __init__(self):
        self._tuples: dict[tuple[str, bytes], CredentialTuple] = {}

    def __len__(self):
        return len(self._tuples)

    def __eq__(self, other):
        return isinstance(other, Registry) and self._tuples == other._tuples

    def tuples(self, role: Optional[str] = None) -> list[CredentialTuple]:
        return [t for (r, _), t in self._tuples.items() if role is None or r == role]

    def get(self, role: str, real_id: bytes) -> CredentialTuple:
        try:
            return self._tuples[(role, real_id)]
        except KeyError:
            raise UnknownIdentity(f"no {role} with id {real_id.hex()}") from None

    def provision(
        self,
        role: str,
        real_id: bytes,
        secret: bytes,
        pseudo: bytes,
        gateway: Optional[bytes] = None,
    ) -> CredentialTuple:
        if role not in ROLES:
            raise ValueError(f"unknown role {role!r}")
        if (role, real_id) in self._tuples:
            raise DuplicateIdentity(f"{role} {real_id.hex()} already provisioned")
        if pseudo == real_id:
            raise InvariantViolation("pseudo-identity must differ from the real identity")
        t = CredentialTuple(role, real_id, secret, pseudo, None, gateway)
        self._tuples[(role, real_id)] = t
        return t

    def find_by_pseudo(self, role: str, pseudo: bytes) -> tuple[CredentialTuple, str]:
        for t in self.tuples(role):
            for which, value in t.pseudos():
                if value == pseudo:
                    return t, which
        raise NotFound(f"no {role} holds that pseudo-identity")

    def find_by_trial_unmask(
        self,
        role: str,
        masked: bytes,
        accept: Callable[[CredentialTuple, bytes, bytes], bool],
        unmask: Callable[[bytes, bytes], bytes],
    ) -> tuple[CredentialTuple, bytes, str, bytes]:
        """Try each tuple's current then previous pseudo-identity as mask key.

        ``accept(tuple, key, unmasked)`` is the kind-specific check.  Returns
        ``(tuple, unmasked, which, key)`` for the first candidate that passes.
        """
        for t in self.tuples(role):
            for which, key in t.pseudos():
                plain = unmask(masked, key)
                if accept(t, key, plain):
                    return t, plain, which, key
        raise NotFound(f"no {role} tuple authenticates the frame")

    def stage_and_commit_pseudo(
        self,
        real_id: bytes,
        role: str,
        new_pseudo: bytes,
        retain: Optional[bytes] = None,
    ) -> CredentialTuple:
        """Rotate a tuple's pseudo-identity, keeping one previous value.

        ``retain`` names the value to keep as previous; it defaults to the
        current one.  The server passes the key the counterparty actually used,
        so a principal that missed an earlier update can still be found.
        """
        t = self.get(role, real_id)
        keep = t.pseudo_current if retain is None else retain
        if keep not in (t.pseudo_current, t.pseudo_previous):
            raise InvariantViolation("retained pseudo-identity is not held by the tuple")
        if new_pseudo in (keep, t.real_id):
            raise InvariantViolation("new pseudo-identity must change")
        t.pseudo_previous = keep
        t.pseudo_current = new_pseudo
        return t

    # persistence

    def dumps(self) -> str:
        lines = [json.dumps({"format": FORMAT_NAME, "version": FORMAT_VERSION})]
        # provisioning order, so principal numbering survives a save/load cycle
        for t in self._tuples.values():
            lines.append(json.dumps(t.to_json(), sort_keys=True))
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str) -> "Registry":
        reg = cls()
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines:
            return reg
        header = json.loads(lines[0])
        if header.get("format") != FORMAT_NAME:
            raise RegistryError("not a registry file (missing header line)")
        if header.get("version") != FORMAT_VERSION:
            raise RegistryError(f"unsupported registry version {header.get('version')!r}")
        for ln in lines[1:]:
            t = CredentialTuple.from_json(json.loads(ln))
            if (t.role, t.real_id) in reg._tuples:
                raise DuplicateIdentity(f"{t.role} {t.real_id.hex()} appears twice")
            reg._tuples[(t.role, t.real_id)] = t
        return reg

    def save(self, path: str | os.PathLike) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.dumps())

    @classmethod
    def load(cls, path: str | os.PathLike) -> "Registry":
        with open(path, encoding="utf-8") as fh:
            return cls.loads(fh.read())
