"""Encrypted credential store: scrypt-derived key, AES-256-GCM at rest.

File layout: magic "CDV1" | 16-byte KDF salt | 12-byte nonce | ciphertext
with GCM tag.  The whole entry table is one sealed JSON blob; any bit flip
fails authentication.  Writers must hold the vault open with the correct
passphrase; the derived key is cached per salt so repeated reads stay fast.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.ciphers.aead import AESGCM

from .model import CredentialEntry

MAGIC = b"CDV1"
SALT_LEN = 16
NONCE_LEN = 12
_SCRYPT_N = 2 ** 14
_SCRYPT_R = 8
_SCRYPT_P = 1


class VaultError(Exception):
    """Structurally invalid vault file (bad magic, truncated)."""


class AuthError(Exception):
    """Wrong passphrase or tampered ciphertext."""


class NotFound(KeyError):
    """No credential entry under that service id."""


def _derive_key(passphrase: str, salt: bytes) -> bytes:
    return hashlib.scrypt(
        passphrase.encode("utf-8"), salt=salt,
        n=_SCRYPT_N, r=_SCRYPT_R, p=_SCRYPT_P, dklen=32,
    )


class CredentialVault:
    """Single-file credential vault; one writer at a time, reads concurrent."""

    def __init__(self, path: str, passphrase: str):
        self.path = path
        self._passphrase = passphrase
        self._lock = threading.Lock()
        self._key_cache: dict[bytes, bytes] = {}

    def _key_for(self, salt: bytes) -> bytes:
        key = self._key_cache.get(salt)
        if key is None:
            key = _derive_key(self._passphrase, salt)
            self._key_cache[salt] = key
        return key

    def _read_entries(self) -> dict:
        if not os.path.exists(self.path):
            return {}
        with open(self.path, "rb") as fh:
            blob = fh.read()
        if len(blob) < len(MAGIC) + SALT_LEN + NONCE_LEN + 16:
            raise VaultError("vault file truncated")
        if blob[:4] != MAGIC:
            raise VaultError("not a vault file (bad magic)")
        salt = blob[4:4 + SALT_LEN]
        nonce = blob[4 + SALT_LEN:4 + SALT_LEN + NONCE_LEN]
        ciphertext = blob[4 + SALT_LEN + NONCE_LEN:]
        try:
            plaintext = AESGCM(self._key_for(salt)).decrypt(nonce, ciphertext, MAGIC)
        except InvalidTag:
            raise AuthError("vault authentication failed (wrong key or tampering)")
        return json.loads(plaintext.decode("utf-8"))

    def _write_entries(self, entries: dict) -> None:
        salt = os.urandom(SALT_LEN)
        nonce = os.urandom(NONCE_LEN)
        plaintext = json.dumps(entries, sort_keys=True).encode("utf-8")
        ciphertext = AESGCM(self._key_for(salt)).encrypt(nonce, plaintext, MAGIC)
        tmp = self.path + ".tmp"
        with open(tmp, "wb") as fh:
            fh.write(MAGIC + salt + nonce + ciphertext)
        os.replace(tmp, self.path)

    def put(self, entry: CredentialEntry) -> None:
        with self._lock:
            entries = self._read_entries()
            entries[entry.service_id] = {
                "username": entry.username,
                "password": entry.password,
                "extra_fields": dict(entry.extra_fields),
            }
            self._write_entries(entries)

    def get(self, service_id: str) -> CredentialEntry:
        entries = self._read_entries()
        raw = entries.get(service_id)
        if raw is None:
            raise NotFound(service_id)
        return CredentialEntry(
            service_id=service_id,
            username=raw["username"],
            password=raw["password"],
            extra_fields=dict(raw.get("extra_fields") or {}),
        )

    def delete(self, service_id: str) -> None:
        with self._lock:
            entries = self._read_entries()
            if service_id not in entries:
                raise NotFound(service_id)
            del entries[service_id]
            self._write_entries(entries)

    def service_ids(self) -> list[str]:
        return sorted(self._read_entries())
