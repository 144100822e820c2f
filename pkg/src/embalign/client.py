"""Client for OpenAI-compatible embedding endpoints with batching, bounded
concurrency, retries and an on-disk EMB1 cache.

Wire format::

    POST {base_url}/embeddings  {"model": str, "input": [str, ...]}
    -> {"data": [{"index": int, "embedding": [float, ...]}, ...]}
"""

from __future__ import annotations

import hashlib
import logging
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor

import httpx
import numpy as np

from .errors import ConfigError, DataError, NetworkError
from .io import read_emb1, write_emb1

log = logging.getLogger(__name__)

DEFAULT_KEY_ENV = "EMBALIGN_API_KEY"
_RETRY_STATUS = {408, 409, 429, 500, 502, 503, 504}


def cache_key(model, text):
    return hashlib.sha256(f"{model}\x00{text}".encode("utf-8")).hexdigest()


class EmbeddingServiceClient:
    def __init__(
        self,
        base_url,
        model_name,
        api_key_env=DEFAULT_KEY_ENV,
        max_in_flight=8,
        batch_size=64,
        max_retries=3,
        backoff=0.5,
        timeout=30.0,
        transport=None,
    ):
        if max_in_flight < 1 or batch_size < 1:
            raise ConfigError("max_in_flight and batch_size must be >= 1")
        self.base_url = base_url.rstrip("/")
        self.model_name = model_name
        self.api_key_env = api_key_env
        self.max_in_flight = max_in_flight
        self.batch_size = batch_size
        self.max_retries = max_retries
        self.backoff = backoff
        self.request_count = 0
        self._lock = threading.Lock()
        self._http = httpx.Client(timeout=timeout, transport=transport)

    def __repr__(self):
        return f"EmbeddingServiceClient({self.base_url!r}, model={self.model_name!r})"

    def close(self):
        self._http.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def _headers(self):
        key = os.environ.get(self.api_key_env)
        return {"Authorization": f"Bearer {key}"} if key else {}

    def embed_batch(self, texts):
        """One request (with retries) for up to ``batch_size`` texts."""
        payload = {"model": self.model_name, "input": list(texts)}
        last = None
        for attempt in range(self.max_retries + 1):
            if attempt:
                time.sleep(self.backoff * 2 ** (attempt - 1))
            with self._lock:
                self.request_count += 1
            try:
                resp = self._http.post(f"{self.base_url}/embeddings", json=payload, headers=self._headers())
            except httpx.HTTPError as exc:
                last = f"{type(exc).__name__}: {exc}"
                continue
            if resp.status_code in _RETRY_STATUS:
                last = f"HTTP {resp.status_code}"
                continue
            if resp.status_code != 200:
                raise NetworkError(f"HTTP {resp.status_code} from embedding service")
            return _parse_response(resp.json(), len(texts))
        raise NetworkError(f"embedding request failed after {self.max_retries + 1} attempts ({last})")


def _parse_response(body, expected):
    try:
        items = sorted(body["data"], key=lambda d: d["index"])
        rows = [np.asarray(d["embedding"], dtype=np.float64) for d in items]
    except (KeyError, TypeError) as exc:
        raise NetworkError(f"malformed embedding response: {exc}") from exc
    if len(rows) != expected or [d["index"] for d in items] != list(range(expected)):
        raise NetworkError(f"expected {expected} embeddings, got indices {[d['index'] for d in items]}")
    return np.vstack(rows)


def fetch_embeddings(client, corpus, cache_dir):
    """Embed every corpus record, in order, through the cache.

    Cache entries are single-row EMB1 files named by ``sha256(model, text)``.
    Failed batches are reported together after successful ones are cached.
    """
    cache = os.path.join(cache_dir, client.model_name.replace("/", "_"))
    os.makedirs(cache, exist_ok=True)
    keys = [cache_key(client.model_name, r.text) for r in corpus]
    rows = {}
    missing = {}
    for rec, key in zip(corpus, keys):
        if key in rows:
            continue
        if key in missing:
            missing[key].append(rec.id)
            continue
        path = os.path.join(cache, f"{key}.emb1")
        if os.path.exists(path):
            rows[key] = read_emb1(path)[0]
        else:
            missing[key] = [rec.id]

    pending = list(missing)
    texts = {k: r.text for r, k in zip(corpus, keys)}
    batches = [pending[i : i + client.batch_size] for i in range(0, len(pending), client.batch_size)]
    failed = []

    def run(batch):
        try:
            return batch, client.embed_batch([texts[k] for k in batch])
        except NetworkError as exc:
            log.warning("batch of %d texts failed: %s", len(batch), exc)
            return batch, None

    with ThreadPoolExecutor(max_workers=client.max_in_flight) as pool:
        for batch, emb in pool.map(run, batches):
            if emb is None:
                failed.extend(i for k in batch for i in missing[k])
                continue
            for k, row in zip(batch, emb):
                write_emb1(os.path.join(cache, f"{k}.emb1"), row[None, :], dtype=np.float64)
                rows[k] = row
    if failed:
        raise NetworkError(f"failed to embed {len(failed)} records", failed_ids=failed)
    if not keys:
        return np.zeros((0, 0))
    dims = {rows[k].shape[0] for k in keys}
    if len(dims) != 1:
        raise DataError(f"inconsistent embedding dims from service: {sorted(dims)}")
    return np.vstack([rows[k] for k in keys])
