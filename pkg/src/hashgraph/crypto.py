"""Deterministic hashing and simulated signatures.

Signatures are keyed BLAKE2b digests of the message under the party's secret.
They are unique per (key, message), cannot be produced without the secret, and
their bits are uniform for distinct inputs, which is all the coin rounds need.
Verification looks the secret up in an in-process key registry standing in for
the PKI. A real scheme can replace :class:`Signer` as long as it stays
deterministic.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

DIGEST_SIZE = 32
SIGNATURE_SIZE = 32

Digest = bytes
Signature = bytes

# public key -> secret; the simulated PKI.
_REGISTRY: dict[bytes, bytes] = {}


def hash_event(canonical: bytes) -> Digest:
    return hashlib.blake2b(canonical, digest_size=DIGEST_SIZE).digest()


@dataclass(frozen=True)
class KeyPair:
    party: int
    secret: bytes = field(repr=False)
    public: bytes

    @classmethod
    def derive(cls, party: int, seed: int) -> KeyPair:
        """Deterministic key pair for ``party`` in the execution seeded by ``seed``."""
        material = b"hashgraph-key" + party.to_bytes(4, "big") + (seed & (2**64 - 1)).to_bytes(8, "big")
        secret = hashlib.blake2b(material, digest_size=32).digest()
        public = hashlib.blake2b(b"pub" + secret, digest_size=32).digest()
        _REGISTRY[public] = secret
        return cls(party, secret, public)


def sign(key: KeyPair, message: bytes) -> Signature:
    return hashlib.blake2b(message, key=key.secret, digest_size=SIGNATURE_SIZE).digest()


def verify(public: bytes, message: bytes, signature: Signature) -> bool:
    secret = _REGISTRY.get(public)
    if secret is None or len(signature) != SIGNATURE_SIZE:
        return False
    expected = hashlib.blake2b(message, key=secret, digest_size=SIGNATURE_SIZE).digest()
    return expected == signature


def middle_bit(signature: Signature) -> int:
    """Bit ``8L/2`` of the signature, most-significant-first within each byte."""
    index = (8 * len(signature)) // 2
    return (signature[index // 8] >> (7 - index % 8)) & 1


def xor_bytes(a: bytes, b: bytes) -> bytes:
    if len(a) != len(b):
        raise ValueError("xor of unequal lengths")
    return (int.from_bytes(a, "big") ^ int.from_bytes(b, "big")).to_bytes(len(a), "big")


class Signer:
    """Key pairs for all ``n`` parties of one execution."""

    def __init__(self, n: int, seed: int):
        self.keys = [KeyPair.derive(i, seed) for i in range(n)]

    def public(self, party: int) -> bytes:
        return self.keys[party].public

    def sign(self, party: int, message: bytes) -> Signature:
        return sign(self.keys[party], message)

    def verify(self, party: int, message: bytes, signature: Signature) -> bool:
        if not 0 <= party < len(self.keys):
            return False
        return verify(self.keys[party].public, message, signature)
