"""Shared HTTP plumbing: JSON POST with bounded exponential-backoff retries."""

from __future__ import annotations

import logging
import time

import httpx

from .errors import ProtocolError, ProviderError

logger = logging.getLogger(__name__)

DEFAULT_MAX_ATTEMPTS = 3
DEFAULT_BACKOFF_S = 0.5
MAX_BACKOFF_S = 8.0


def post_json(
    url: str,
    payload: dict,
    headers: dict[str, str] | None = None,
    timeout: float = 30.0,
    max_attempts: int = DEFAULT_MAX_ATTEMPTS,
    backoff_s: float = DEFAULT_BACKOFF_S,
) -> dict:
    """POST JSON and return the decoded JSON response body.

    Transport errors and 5xx responses are retried up to ``max_attempts``
    with exponential backoff (capped at ``MAX_BACKOFF_S`` per wait). A
    non-JSON body on a successful status is a protocol error, not retried.
    """
    last_error: Exception | None = None
    for attempt in range(1, max_attempts + 1):
        try:
            response = httpx.post(url, json=payload, headers=headers or {}, timeout=timeout)
            if response.status_code >= 500:
                raise ProviderError(f"{url} answered HTTP {response.status_code}", attempts=attempt)
            if response.status_code >= 400:
                raise ProtocolError(f"{url} rejected request: HTTP {response.status_code}", attempts=attempt)
            try:
                return response.json()
            except ValueError as exc:
                raise ProtocolError(f"{url} returned a non-JSON body", attempts=attempt) from exc
        except ProtocolError:
            raise
        except (httpx.HTTPError, ProviderError) as exc:
            last_error = exc
            if attempt < max_attempts:
                wait = min(backoff_s * (2 ** (attempt - 1)), MAX_BACKOFF_S)
                logger.warning("attempt %d/%d against %s failed (%s); retrying in %.1fs",
                               attempt, max_attempts, url, exc, wait)
                time.sleep(wait)
    raise ProviderError(f"{url} unreachable after {max_attempts} attempts: {last_error}",
                        attempts=max_attempts)
