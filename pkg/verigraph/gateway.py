import hashlib
import json
import logging
import threading
import time
from collections import deque
from dataclasses import dataclass
from enum import Enum

import requests
from tenacity import Retrying, before_sleep_log, retry_if_exception_type, stop_after_attempt, wait_exponential

from .errors import GatewayError, ScriptMiss

log = logging.getLogger('vglogger')


class Role(str, Enum):
    PLANNER = "PLANNER"
    SEARCH_QUERY = "SEARCH_QUERY"
    REFINE = "REFINE"
    THINK = "THINK"
    JUDGE = "JUDGE"


class ResponseFormat(str, Enum):
    FREE_TEXT = "FREE_TEXT"
    JSON_OBJECT = "JSON_OBJECT"
    JSON_ARRAY = "JSON_ARRAY"


ROLE_FORMATS = {
    Role.PLANNER: ResponseFormat.JSON_ARRAY,
    Role.SEARCH_QUERY: ResponseFormat.FREE_TEXT,
    Role.REFINE: ResponseFormat.FREE_TEXT,
    Role.THINK: ResponseFormat.JSON_OBJECT,
    Role.JUDGE: ResponseFormat.JSON_OBJECT,
}


def prompt_digest(prompt):
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class GatewayRequest:
    role: Role
    prompt: str
    response_format: ResponseFormat = None

    def __post_init__(self):
        role = Role(self.role)
        object.__setattr__(self, "role", role)
        expected = ROLE_FORMATS[role]
        if self.response_format is None:
            object.__setattr__(self, "response_format", expected)
        elif ResponseFormat(self.response_format) is not expected:
            raise ValueError(f"role {role.value} expects {expected.value}, got {self.response_format}")

    @property
    def digest(self):
        return prompt_digest(self.prompt)


@dataclass(frozen=True)
class TranscriptEntry:
    role: Role
    digest: str
    prompt: str
    response: str
    latency: float = 0.0

    def to_dict(self):
        return {"role": self.role.value, "digest": self.digest, "prompt": self.prompt,
                "response": self.response, "latency": self.latency}


class Transcript:
    """
    Append-only record of gateway calls. Written as JSON lines, it is also
    the input format of the scripted backend.
    """

    def __init__(self, path=None):
        self._entries = []
        self._prompts = {}
        self._lock = threading.Lock()
        self.path = path

    def append(self, entry):
        with self._lock:
            known = self._prompts.get(entry.digest)
            if known is not None and known != entry.prompt:
                raise GatewayError(f"prompt digest collision on {entry.digest}")
            self._prompts[entry.digest] = entry.prompt
            self._entries.append(entry)
            if self.path is not None:
                with open(self.path, "a", encoding="utf-8") as transcript_file:
                    transcript_file.write(json.dumps(entry.to_dict(), ensure_ascii=False) + "\n")

    def entries(self):
        with self._lock:
            return list(self._entries)

    def __len__(self):
        return len(self._entries)

    def write(self, path):
        with open(path, "w", encoding="utf-8") as transcript_file:
            for entry in self.entries():
                transcript_file.write(json.dumps(entry.to_dict(), ensure_ascii=False) + "\n")


class RemoteBackend:
    """
    Chat-completions style HTTP backend. Temperature is always 0.
    """

    def __init__(self, endpoint, model, api_key=None, timeout=60.0, retries=2, backoff=1.0, session=None):
        if not endpoint or not model:
            raise GatewayError("remote backend needs both an endpoint and a model")
        self.endpoint = endpoint
        self.model = model
        self.api_key = api_key
        self.timeout = timeout
        self.retries = retries
        self.backoff = backoff
        self.session = session

    def payload(self, request):
        body = {
            "model": self.model,
            "temperature": 0,
            "messages": [{"role": "user", "content": request.prompt}],
        }
        if request.response_format is ResponseFormat.JSON_OBJECT:
            body["response_format"] = {"type": "json_object"}
        return json.dumps(body, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")

    def headers(self):
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        return headers

    def _post(self, data):
        response = (self.session or requests).post(self.endpoint, data=data, headers=self.headers(), timeout=self.timeout)
        response.raise_for_status()
        return response.json()

    def complete(self, request):
        data = self.payload(request)
        retrying = Retrying(
            stop=stop_after_attempt(self.retries + 1),
            wait=wait_exponential(multiplier=self.backoff, max=30),
            retry=retry_if_exception_type(requests.RequestException),
            before_sleep=before_sleep_log(log, logging.WARNING),
            reraise=True,
        )
        try:
            body = retrying(self._post, data)
        except requests.RequestException as err:
            raise GatewayError(f"chat completion failed after {self.retries} retries: {err}") from err
        try:
            return body["choices"][0]["message"]["content"] or ""
        except (KeyError, IndexError, TypeError) as err:
            raise GatewayError(f"unexpected chat completion payload: {str(body)[:200]}") from err


class ScriptedBackend:
    """
    Deterministic stand-in for the model. Looks up (role, prompt digest)
    first, then falls back to the next queued response for the role.

    A digest recorded several times answers in recorded order and then
    keeps repeating its last answer.
    """

    def __init__(self, entries=()):
        self._table = {}
        self._queues = {role: deque() for role in Role}
        self._lock = threading.Lock()
        for entry in entries:
            self.add(entry)

    def add(self, entry):
        role = Role(entry["role"])
        delay = float(entry.get("delay", 0.0))
        digest = entry.get("digest")
        if digest is None and entry.get("prompt") is not None:
            digest = prompt_digest(entry["prompt"])
        if digest is None:
            self._queues[role].append((entry["response"], delay))
        else:
            self._table.setdefault((role, digest), deque()).append((entry["response"], delay))

    @classmethod
    def from_jsonl(cls, path):
        entries = []
        with open(path, "r", encoding="utf-8") as script_file:
            for line_number, line in enumerate(script_file, start=1):
                if not line.strip():
                    continue
                try:
                    entries.append(json.loads(line))
                except json.JSONDecodeError as err:
                    raise GatewayError(f"{path}: line {line_number}: {err}") from err
        return cls(entries)

    @classmethod
    def from_responses(cls, responses):
        """
        Build a queue-only script from ``{role: [response, ...]}``.
        """
        return cls({"role": role, "response": response}
                   for role, queued in responses.items() for response in queued)

    def remaining(self, role):
        with self._lock:
            return len(self._queues[Role(role)])

    def complete(self, request):
        with self._lock:
            recorded = self._table.get((request.role, request.digest))
            if recorded:
                response, delay = recorded.popleft() if len(recorded) > 1 else recorded[0]
            elif self._queues[request.role]:
                response, delay = self._queues[request.role].popleft()
            else:
                raise ScriptMiss(request.role.value, request.digest)
        if delay:
            time.sleep(delay)
        return response


class RecordingBackend:
    """
    Delegates to another backend and appends every call to a transcript.
    """

    def __init__(self, inner, transcript):
        self.inner = inner
        self.transcript = transcript

    def complete(self, request):
        started = time.monotonic()
        response = self.inner.complete(request)
        latency = round(time.monotonic() - started, 6)
        self.transcript.append(TranscriptEntry(request.role, request.digest, request.prompt, response, latency))
        return response


class Gateway:
    """
    Single choke point for model calls: caps concurrent requests and
    counts calls.
    """

    def __init__(self, backend, max_concurrency=4):
        self.backend = backend
        self._slots = threading.BoundedSemaphore(max_concurrency)
        self._lock = threading.Lock()
        self.calls = 0

    def complete(self, request):
        with self._slots:
            log.debug(f"gateway {request.role.value} {request.digest[:12]}")
            response = self.backend.complete(request)
        with self._lock:
            self.calls += 1
        return response

    def ask(self, role, prompt):
        return self.complete(GatewayRequest(Role(role), prompt))

    def scoped(self):
        return ScopedGateway(self)


class ScopedGateway:
    """
    View of a gateway that remembers the calls made through it, so the
    executor can attribute them to one node.
    """

    def __init__(self, gateway):
        self.gateway = gateway
        self.records = []

    def complete(self, request):
        response = self.gateway.complete(request)
        self.records.append({"role": request.role.value, "digest": request.digest})
        return response

    def ask(self, role, prompt):
        return self.complete(GatewayRequest(Role(role), prompt))


def complete(request, backend):
    """
    Run one request against a backend without a gateway around it.
    """
    return backend.complete(request)
