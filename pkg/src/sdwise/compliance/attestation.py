"""Simulated TPM: firmware measurement plus keyed quotes over fresh nonces.

The quote is HMAC-SHA256(key, nonce || firmware digest || report digest).
Keys are pre-shared between a node and its virtual sensor and never leave
the TPM object.
"""

from __future__ import annotations

import hashlib
import hmac

NONCE_LEN = 16
DIGEST_LEN = 32
EMPTY_DIGEST = hashlib.sha256(b"").digest()


def digest(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


class TpmSim:
    def __init__(self, node_id: int, preshared_key: bytes, firmware: bytes):
        if len(preshared_key) != 32:
            raise ValueError("pre-shared key must be 32 bytes")
        self.node_id = node_id
        self._key = bytes(preshared_key)
        self.firmware = firmware

    @property
    def firmware(self) -> bytes:
        return self._firmware

    @firmware.setter
    def firmware(self, image: bytes):
        self._firmware = bytes(image)
        self.firmware_digest = digest(self._firmware)

    def tamper(self, index: int, mask: int = 0x01):
        image = bytearray(self._firmware)
        image[index] ^= mask
        self.firmware = bytes(image)

    def quote(self, nonce: bytes, report_digest: bytes) -> bytes:
        return attest_quote(self, nonce, report_digest)

    def __repr__(self):
        return f"TpmSim(node={self.node_id}, firmware={self.firmware_digest.hex()[:12]}...)"


def _mac(key: bytes, nonce: bytes, firmware_digest: bytes, report_digest: bytes) -> bytes:
    if len(nonce) != NONCE_LEN:
        raise ValueError(f"nonce must be {NONCE_LEN} bytes")
    if len(firmware_digest) != DIGEST_LEN or len(report_digest) != DIGEST_LEN:
        raise ValueError(f"digests must be {DIGEST_LEN} bytes")
    return hmac.new(key, nonce + firmware_digest + report_digest, hashlib.sha256).digest()


def attest_quote(tpm: TpmSim, nonce: bytes, report_digest: bytes) -> bytes:
    return _mac(tpm._key, nonce, tpm.firmware_digest, report_digest)


def attest_verify(expected_digest: bytes, preshared_key: bytes, nonce: bytes, quote: bytes,
                  report_digest: bytes = EMPTY_DIGEST) -> bool:
    """Recompute the quote against the known-good firmware digest."""
    try:
        expected = _mac(preshared_key, nonce, expected_digest, report_digest)
    except ValueError:
        return False
    return hmac.compare_digest(expected, bytes(quote))


class NonceIssuer:
    """Hands out nonces and accepts each one back exactly once."""

    def __init__(self, rng):
        self.rng = rng
        self.outstanding: set = set()
        self.spent: set = set()

    def issue(self) -> bytes:
        while True:
            nonce = bytes(self.rng.getrandbits(8) for _ in range(NONCE_LEN))
            if nonce not in self.spent and nonce not in self.outstanding:
                self.outstanding.add(nonce)
                return nonce

    def redeem(self, nonce: bytes) -> bool:
        if nonce not in self.outstanding:
            return False
        self.outstanding.discard(nonce)
        self.spent.add(nonce)
        return True
