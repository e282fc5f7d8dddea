"""
CF-Safe - Chat Client
OpenAI-compatible chat completions with retry and an on-disk response cache
"""

import json
import logging
import os
import time
from contextlib import contextmanager
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Dict, Iterator, Mapping, Optional, Union

import jsonschema
import openai
from tenacity import Retrying, retry_if_exception, stop_after_attempt, wait_exponential

from src.advisor.config import AdvisorConfig
from src.model.errors import AuthMissing, CacheLocked, HttpError, MalformedResponse
from src.utils.helpers import prompt_hash

logger = logging.getLogger(__name__)

LOCK_NAME = ".lock"

CACHE_ENTRY_SCHEMA = {
    "type": "object",
    "properties": {
        "prompt": {"type": "string"},
        "response": {"type": "string"},
        "timestamp": {"type": "string"},
        "model": {"type": "string"},
    },
    "required": ["prompt", "response", "timestamp", "model"],
}

# request dict -> completion text (None when the reply carries no text)
Completion = Callable[[Dict], Optional[str]]


# ============ Cache ============

class AdviceCache:
    """One <sha256>.json file per (model, prompt)"""

    def __init__(self, directory: Union[str, Path]):
        self.directory = Path(directory)
        self._lock_depth = 0

    def path_for(self, model: str, prompt: str) -> Path:
        return self.directory / f"{prompt_hash(model, prompt)}.json"

    @contextmanager
    def lock(self) -> Iterator["AdviceCache"]:
        """Hold the directory exclusively; nested use is allowed"""
        if self._lock_depth == 0:
            self.directory.mkdir(parents=True, exist_ok=True)
            lock_path = self.directory / LOCK_NAME
            try:
                fd = os.open(lock_path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
            except FileExistsError:
                raise CacheLocked(f"cache {self.directory} is locked by another run ({lock_path})") from None
            os.write(fd, str(os.getpid()).encode("ascii"))
            os.close(fd)
        self._lock_depth += 1
        try:
            yield self
        finally:
            self._lock_depth -= 1
            if self._lock_depth == 0:
                (self.directory / LOCK_NAME).unlink(missing_ok=True)

    def get(self, model: str, prompt: str) -> Optional[str]:
        path = self.path_for(model, prompt)
        if not path.exists():
            return None
        try:
            with open(path, "r", encoding="utf-8") as f:
                entry = json.load(f)
            jsonschema.validate(entry, CACHE_ENTRY_SCHEMA)
        except (json.JSONDecodeError, jsonschema.ValidationError) as exc:
            logger.warning("Ignoring unreadable cache entry %s: %s", path.name, exc)
            return None
        if entry["prompt"] != prompt or entry["model"] != model:
            logger.warning("Ignoring cache entry %s with a different prompt", path.name)
            return None
        return entry["response"]

    def store(self, model: str, prompt: str, response: str, timestamp: Optional[str] = None) -> Path:
        self.directory.mkdir(parents=True, exist_ok=True)
        path = self.path_for(model, prompt)
        entry = {
            "prompt": prompt,
            "response": response,
            "timestamp": timestamp or datetime.now(timezone.utc).isoformat(),
            "model": model,
        }
        partial = path.with_suffix(".json.tmp")
        with open(partial, "w", encoding="utf-8") as f:
            json.dump(entry, f, ensure_ascii=False, indent=2, sort_keys=True)
        os.replace(partial, path)
        return path


# ============ Client ============

def is_transient(exc: BaseException) -> bool:
    """429, 5xx, timeouts and dropped connections are retried"""
    if isinstance(exc, (openai.RateLimitError, openai.InternalServerError, openai.APIConnectionError)):
        return True
    return isinstance(exc, openai.APIStatusError) and exc.status_code >= 500


class ChatClient:
    """
    Sends one user message per prompt at temperature 0.

    Cached prompts never reach the network; the API key is only required
    on a cache miss.
    """

    def __init__(self, config: AdvisorConfig, *, completion: Optional[Completion] = None,
                 sleep: Callable[[float], None] = time.sleep, environ: Optional[Mapping[str, str]] = None):
        self.config = config
        self.cache = AdviceCache(config.cache_dir) if config.cache_dir is not None else None
        self._completion = completion
        self._sleep = sleep
        self._environ = environ if environ is not None else os.environ
        self._sdk: Optional[openai.OpenAI] = None
        self.network_calls = 0

    @contextmanager
    def session(self) -> Iterator["ChatClient"]:
        if self.cache is None:
            yield self
            return
        with self.cache.lock():
            yield self

    def complete(self, prompt: str) -> str:
        model = self.config.model
        if self.cache is not None:
            cached = self.cache.get(model, prompt)
            if cached is not None:
                logger.debug("Cache hit for prompt %s", prompt_hash(model, prompt)[:12])
                return cached

        request = {
            "model": model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": 0,
        }
        if self._completion is None:
            self._sdk_client()
        completion = self._completion or self._sdk_completion
        retrying = Retrying(
            stop=stop_after_attempt(self.config.max_retries + 1),
            wait=wait_exponential(multiplier=1, exp_base=2),
            retry=retry_if_exception(is_transient),
            sleep=self._sleep,
            before_sleep=self._log_retry,
            reraise=True,
        )
        try:
            text = retrying(self._send, completion, request)
        except openai.APIStatusError as exc:
            raise HttpError(f"chat completion failed with HTTP {exc.status_code}: {exc.message}") from exc
        except openai.APIError as exc:
            raise HttpError(f"chat completion failed: {exc}") from exc

        if not text or not text.strip():
            raise MalformedResponse("chat completion returned no text")
        if self.cache is not None:
            self.cache.store(model, prompt, text)
        return text

    def _send(self, completion: Completion, request: Dict) -> Optional[str]:
        self.network_calls += 1
        return completion(request)

    @staticmethod
    def _log_retry(retry_state) -> None:
        exc = retry_state.outcome.exception()
        logger.warning("Chat completion attempt %d failed (%s); retrying", retry_state.attempt_number, exc)

    def _sdk_client(self) -> openai.OpenAI:
        if self._sdk is None:
            key = self._environ.get(self.config.api_key_env)
            if not key:
                raise AuthMissing(f"environment variable {self.config.api_key_env} is not set")
            self._sdk = openai.OpenAI(
                api_key=key,
                base_url=self.config.endpoint,
                timeout=self.config.timeout,
                max_retries=0,
            )
        return self._sdk

    def _sdk_completion(self, request: Dict) -> Optional[str]:
        response = self._sdk_client().chat.completions.create(**request)
        if not response.choices:
            return None
        return response.choices[0].message.content


def request_advice(config: AdvisorConfig, prompt: str, *, client: Optional[ChatClient] = None) -> str:
    """Raw completion text for `prompt`, from the cache when possible"""
    client = client or ChatClient(config)
    with client.session():
        return client.complete(prompt)
