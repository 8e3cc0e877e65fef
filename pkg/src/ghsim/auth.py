"""Operator authentication: file-backed users, tokens, login throttling.

Passwords are stored as salted PBKDF2-SHA256 hashes in a small JSON file.
A successful login mints a 128-bit random bearer token with a 24 h expiry.
Failed logins are rate limited per user: more than 5 failures within one
minute throttles further attempts until the window drains.
"""

from __future__ import annotations

import hashlib
import hmac
import json
import secrets
import time
from collections import deque
from dataclasses import dataclass
from pathlib import Path

PBKDF2_ITERATIONS = 60_000
TOKEN_TTL = 24 * 3600.0
FAILURE_LIMIT = 5
FAILURE_WINDOW = 60.0


class AuthError(Exception):
    pass


class BadCredentials(AuthError):
    pass


class Throttled(AuthError):
    pass


def hash_password(password: str, salt: bytes | None = None) -> dict:
    salt = salt or secrets.token_bytes(16)
    digest = hashlib.pbkdf2_hmac("sha256", password.encode(), salt, PBKDF2_ITERATIONS)
    return {
        "algorithm": "pbkdf2_sha256",
        "iterations": PBKDF2_ITERATIONS,
        "salt": salt.hex(),
        "hash": digest.hex(),
    }


class UserStore:
    def __init__(self, users: dict[str, dict]):
        self._users = users

    @classmethod
    def load(cls, path) -> "UserStore":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls({u["username"]: u for u in data["users"]})

    @classmethod
    def from_credentials(cls, credentials: dict[str, str]) -> "UserStore":
        return cls({
            name: {"username": name, **hash_password(password)}
            for name, password in credentials.items()
        })

    def save(self, path):
        payload = {"users": [dict(u) for u in self._users.values()]}
        Path(path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")

    def verify(self, username: str, password: str) -> bool:
        record = self._users.get(username)
        if record is None:
            # burn comparable time so user enumeration is not trivial
            hashlib.pbkdf2_hmac("sha256", password.encode(), b"\x00" * 16, PBKDF2_ITERATIONS)
            return False
        expected = bytes.fromhex(record["hash"])
        got = hashlib.pbkdf2_hmac("sha256", password.encode(),
                                  bytes.fromhex(record["salt"]), record["iterations"])
        return hmac.compare_digest(expected, got)


@dataclass
class Session:
    token: str
    user: str
    expires: float  # wall time, time.monotonic scale
    role: str = "operator"


class SessionManager:
    """Tokens plus per-user login failure throttling."""

    def __init__(self, store: UserStore, now=time.monotonic, ttl: float = TOKEN_TTL):
        self.store = store
        self._now = now
        self._ttl = ttl
        self._sessions: dict[str, Session] = {}
        self._failures: dict[str, deque[float]] = {}

    def _throttled(self, username: str) -> bool:
        window = self._failures.get(username)
        if not window:
            return False
        cutoff = self._now() - FAILURE_WINDOW
        while window and window[0] < cutoff:
            window.popleft()
        return len(window) >= FAILURE_LIMIT

    def login(self, username: str, password: str) -> Session:
        if self._throttled(username):
            raise Throttled(f"too many failed logins for {username!r}; retry later")
        if not self.store.verify(username, password):
            self._failures.setdefault(username, deque()).append(self._now())
            raise BadCredentials("unknown user or wrong password")
        self._failures.pop(username, None)
        session = Session(secrets.token_hex(16), username, self._now() + self._ttl)
        self._sessions[session.token] = session
        return session

    def validate(self, token: str | None) -> Session | None:
        if not token:
            return None
        session = self._sessions.get(token)
        if session is None or session.expires <= self._now():
            self._sessions.pop(token or "", None)
            return None
        return session

    def logout(self, token: str):
        self._sessions.pop(token, None)
