# src/smi_sim/modules/crypto/primitives.py
"""
Signing, sealing and nonce generation.

A key pair holds two 32-byte keys: an Ed25519 key for signatures and an
X25519 key for hybrid sealing (ephemeral X25519, HKDF-SHA256, AES-GCM).
Public and private halves are both 64 bytes: signing key followed by
agreement key. Key material is derived from a numpy seed so simulation runs
are reproducible.
"""

import hashlib
from dataclasses import dataclass
from functools import lru_cache
from typing import List, Union

import numpy as np
from cryptography.exceptions import InvalidSignature, InvalidTag
from cryptography.hazmat.primitives import hashes, serialization
from cryptography.hazmat.primitives.asymmetric import ed25519, x25519
from cryptography.hazmat.primitives.ciphers.aead import AESGCM
from cryptography.hazmat.primitives.kdf.hkdf import HKDF

from smi_sim.config import NONCE_BYTES, SECURITY_BITS
from smi_sim.core.exceptions import CryptoError, MalformedKeyError, SealError

HALF_KEY_BYTES = 32
KEY_BYTES = 2 * HALF_KEY_BYTES
SIGNATURE_BYTES = 64
KEY_ID_BYTES = 16
AEAD_NONCE_BYTES = 12
SEAL_INFO = b"smi-seal/v1"

_RAW = serialization.Encoding.Raw
_RAW_PUB = serialization.PublicFormat.Raw

RngLike = Union[np.random.Generator, int]


@dataclass(frozen=True, slots=True)
class KeyPair:
    public_key: bytes
    private_key: bytes
    created_at: int = 0

    @property
    def key_id(self) -> bytes:
        return key_digest(self.public_key)


@dataclass(frozen=True, slots=True)
class Nonce:
    value: bytes

    def __len__(self) -> int:
        return len(self.value)


@dataclass(frozen=True, slots=True)
class CipherEnvelope:
    recipient_key_id: bytes
    ciphertext: bytes

    def to_bytes(self) -> bytes:
        return self.recipient_key_id + self.ciphertext

    @classmethod
    def from_bytes(cls, data: bytes) -> "CipherEnvelope":
        if len(data) <= KEY_ID_BYTES:
            raise SealError("envelope too short")
        return cls(data[:KEY_ID_BYTES], data[KEY_ID_BYTES:])


def as_rng(rng: RngLike) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(int(rng) & 0xFFFFFFFFFFFFFFFF)


def key_digest(public_key: bytes) -> bytes:
    return hashlib.sha256(public_key).digest()[:KEY_ID_BYTES]


def generate_keypair(
    rng_seed: RngLike, created_at: int = 0, security_bits: int = SECURITY_BITS
) -> KeyPair:
    """Derive a key pair from a seed or generator. Distinct seeds give distinct keys."""
    if security_bits > SECURITY_BITS:
        raise CryptoError(
            f"requested {security_bits}-bit security, curve keys provide {SECURITY_BITS}"
        )
    material = as_rng(rng_seed).bytes(KEY_BYTES)
    sign_key = ed25519.Ed25519PrivateKey.from_private_bytes(material[:HALF_KEY_BYTES])
    agree_key = x25519.X25519PrivateKey.from_private_bytes(material[HALF_KEY_BYTES:])
    public = sign_key.public_key().public_bytes(_RAW, _RAW_PUB) + agree_key.public_key().public_bytes(
        _RAW, _RAW_PUB
    )
    return KeyPair(public_key=public, private_key=material, created_at=created_at)


def make_nonce(rng: RngLike, size: int = NONCE_BYTES) -> Nonce:
    return Nonce(as_rng(rng).bytes(size))


@lru_cache(maxsize=4096)
def _signing_key(private_key: bytes) -> ed25519.Ed25519PrivateKey:
    if len(private_key) != KEY_BYTES:
        raise MalformedKeyError(f"private key must be {KEY_BYTES} bytes, got {len(private_key)}")
    return ed25519.Ed25519PrivateKey.from_private_bytes(private_key[:HALF_KEY_BYTES])


@lru_cache(maxsize=4096)
def _verify_key(public_key: bytes) -> ed25519.Ed25519PublicKey:
    if len(public_key) != KEY_BYTES:
        raise MalformedKeyError(f"public key must be {KEY_BYTES} bytes, got {len(public_key)}")
    try:
        return ed25519.Ed25519PublicKey.from_public_bytes(public_key[:HALF_KEY_BYTES])
    except ValueError as exc:
        raise MalformedKeyError(str(exc)) from exc


@lru_cache(maxsize=4096)
def _agreement_public(public_key: bytes) -> x25519.X25519PublicKey:
    if len(public_key) != KEY_BYTES:
        raise MalformedKeyError(f"public key must be {KEY_BYTES} bytes, got {len(public_key)}")
    try:
        return x25519.X25519PublicKey.from_public_bytes(public_key[HALF_KEY_BYTES:])
    except ValueError as exc:
        raise MalformedKeyError(str(exc)) from exc


@lru_cache(maxsize=4096)
def _agreement_private(private_key: bytes) -> x25519.X25519PrivateKey:
    if len(private_key) != KEY_BYTES:
        raise MalformedKeyError(f"private key must be {KEY_BYTES} bytes, got {len(private_key)}")
    return x25519.X25519PrivateKey.from_private_bytes(private_key[HALF_KEY_BYTES:])


def sign(private_key: bytes, message: bytes) -> bytes:
    return _signing_key(private_key).sign(message)


def verify(public_key: bytes, message: bytes, signature: bytes) -> bool:
    """True iff signature is valid. Malformed keys raise, malformed signatures are just invalid."""
    key = _verify_key(public_key)
    if len(signature) != SIGNATURE_BYTES:
        return False
    try:
        key.verify(signature, message)
    except InvalidSignature:
        return False
    return True


def _derive_key(shared: bytes, ephemeral_public: bytes, recipient_public: bytes) -> bytes:
    return HKDF(
        algorithm=hashes.SHA256(),
        length=32,
        salt=None,
        info=SEAL_INFO + ephemeral_public + recipient_public,
    ).derive(shared)


def seal(recipient_public_key: bytes, plaintext: bytes, rng: RngLike) -> CipherEnvelope:
    recipient = _agreement_public(recipient_public_key)
    generator = as_rng(rng)
    ephemeral = x25519.X25519PrivateKey.from_private_bytes(generator.bytes(HALF_KEY_BYTES))
    ephemeral_public = ephemeral.public_key().public_bytes(_RAW, _RAW_PUB)
    key = _derive_key(
        ephemeral.exchange(recipient), ephemeral_public, recipient_public_key[HALF_KEY_BYTES:]
    )
    aead_nonce = generator.bytes(AEAD_NONCE_BYTES)
    key_id = key_digest(recipient_public_key)
    body = AESGCM(key).encrypt(aead_nonce, plaintext, key_id)
    return CipherEnvelope(recipient_key_id=key_id, ciphertext=ephemeral_public + aead_nonce + body)


def open_envelope(keypair: KeyPair, envelope: CipherEnvelope) -> bytes:
    if envelope.recipient_key_id != keypair.key_id:
        raise SealError("envelope is addressed to a different key")
    data = envelope.ciphertext
    if len(data) < HALF_KEY_BYTES + AEAD_NONCE_BYTES + 16:
        raise SealError("ciphertext too short")
    ephemeral_public = data[:HALF_KEY_BYTES]
    aead_nonce = data[HALF_KEY_BYTES:HALF_KEY_BYTES + AEAD_NONCE_BYTES]
    body = data[HALF_KEY_BYTES + AEAD_NONCE_BYTES:]
    try:
        shared = _agreement_private(keypair.private_key).exchange(
            x25519.X25519PublicKey.from_public_bytes(ephemeral_public)
        )
        key = _derive_key(shared, ephemeral_public, keypair.public_key[HALF_KEY_BYTES:])
        return AESGCM(key).decrypt(aead_nonce, body, envelope.recipient_key_id)
    except (InvalidTag, ValueError) as exc:
        raise SealError("envelope authentication failed") from exc


def encode_fields(*parts: bytes) -> bytes:
    """Length-prefixed concatenation, so field boundaries are unambiguous."""
    return b"".join(len(p).to_bytes(4, "big") + p for p in parts)


def decode_fields(data: bytes, expected: int) -> List[bytes]:
    out: List[bytes] = []
    offset = 0
    while offset < len(data):
        if offset + 4 > len(data):
            raise CryptoError("truncated field header")
        size = int.from_bytes(data[offset:offset + 4], "big")
        offset += 4
        if offset + size > len(data):
            raise CryptoError("truncated field body")
        out.append(data[offset:offset + size])
        offset += size
    if len(out) != expected:
        raise CryptoError(f"expected {expected} fields, got {len(out)}")
    return out


def encode_int(value: int) -> bytes:
    return int(value).to_bytes(8, "big", signed=True)


def decode_int(data: bytes) -> int:
    if len(data) != 8:
        raise CryptoError("integer field must be 8 bytes")
    return int.from_bytes(data, "big", signed=True)


def issue_certificate(root: KeyPair, subject_id: str, public_key: bytes) -> bytes:
    return sign(root.private_key, encode_fields(b"smi-cert/v1", subject_id.encode(), public_key))


def verify_certificate(
    root_public_key: bytes, subject_id: str, public_key: bytes, certificate: bytes
) -> bool:
    return verify(
        root_public_key,
        encode_fields(b"smi-cert/v1", subject_id.encode(), public_key),
        certificate,
    )

