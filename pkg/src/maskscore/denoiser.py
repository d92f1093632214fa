"""Conditional token-probability backends.

A denoiser answers one question: given visible context and a partially
masked candidate, what is the log-probability of the true token at each
masked position? Four backends share that contract:

* :class:`ToyMaskedLM` - count-based, strictly bidirectional: each masked
  position is predicted from its nearest unmasked neighbors through an
  interpolated trigram/bigram/unigram mixture with additive smoothing.
* :class:`ToyARLM` - left-to-right bigram model, the autoregressive
  comparison baseline.
* :class:`UniformDenoiser` - assigns -log|V| to everything; the fixed
  point used by conformance and sanity tests.
* :class:`RemoteDenoiser` - speaks the HTTP wire protocol to an external
  model server.

Sequence boundaries are represented by begin/end sentinels. When a masked
position has no unmasked neighbor on its left inside the candidate, the
"barrier" sentinel policy (default) falls back to the begin sentinel; the
"bridge" policy falls back to the last context token instead, which is
what lets conditional scores react to the context at all in the toy
backend.
"""

from __future__ import annotations

import itertools
import json
import math
import os
import struct
import tempfile
import threading
import uuid
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import requests

from .errors import (
    BadLambda,
    BadModelFile,
    ConnectionFailed,
    EmptyCorpus,
    IoError,
    ProtocolViolation,
    Timeout,
    VocabMismatch,
)
from .textcore import MASK_TOKEN, TokenSequence, Vocabulary, _make_vocabulary

SENTINEL_POLICIES = ("barrier", "bridge")

DEFAULT_LAMBDAS = (0.5, 0.2, 0.2, 0.1)
DEFAULT_ALPHA_ADD = 1.0

MODEL_MAGIC = b"DSTOY1"

_KIND_MASKED = 1
_KIND_AR = 2


def _begin_id(vocab: Vocabulary) -> int:
    return vocab.size + 1


def _end_id(vocab: Vocabulary) -> int:
    return vocab.size + 2


@dataclass(frozen=True)
class DenoiserQuery:
    """One oracle call: visible context, corrupted candidate, true tokens.

    ``targets`` maps each masked position of ``corrupted_ids`` to the true
    token id there; ``mask_id`` identifies the mask symbol so the query is
    self-describing.
    """

    context_ids: tuple[int, ...]
    corrupted_ids: tuple[int, ...]
    targets: dict[int, int]
    mask_id: int

    def __post_init__(self) -> None:
        mask_id = self.mask_id
        n_masked = 0
        for pos, token_id in enumerate(self.corrupted_ids):
            if token_id == mask_id:
                n_masked += 1
                if pos not in self.targets:
                    raise ValueError(f"masked position {pos} missing from targets")
        if n_masked != len(self.targets):
            raise ValueError("targets must cover exactly the masked positions")
        for pos, token_id in self.targets.items():
            if not 0 <= pos < len(self.corrupted_ids):
                raise ValueError(f"target position {pos} out of range")
            if token_id == mask_id:
                raise ValueError("target token cannot be the mask id")
        if mask_id in self.context_ids:
            raise ValueError("context must be clean")


@dataclass(frozen=True)
class DenoiserResponse:
    """Natural-log probability of the true token at each masked position."""

    logprobs: dict[int, float]

    def __post_init__(self) -> None:
        for pos, value in self.logprobs.items():
            if not math.isfinite(value) or value > 0.0:
                raise ValueError(f"logprob at {pos} must be finite and <= 0, got {value}")


class Denoiser:
    """Query interface shared by all backends."""

    vocab: Vocabulary

    def query(self, q: DenoiserQuery) -> DenoiserResponse:
        raise NotImplementedError

    def query_many(self, queries: list[DenoiserQuery]) -> list[DenoiserResponse]:
        return [self.query(q) for q in queries]

    def _check_query(self, q: DenoiserQuery) -> None:
        if q.mask_id != self.vocab.mask_id:
            raise VocabMismatch(
                f"query mask id {q.mask_id} != vocabulary mask id {self.vocab.mask_id}"
            )
        size = self.vocab.size
        for token_id in itertools.chain(q.context_ids, q.targets.values()):
            if token_id >= size:
                raise VocabMismatch(f"token id {token_id} outside vocabulary of size {size}")


def _validate_lambdas(lambdas: tuple[float, float, float, float]) -> None:
    if len(lambdas) != 4:
        raise BadLambda(f"need exactly 4 interpolation weights, got {len(lambdas)}")
    if any(not (w > 0.0) for w in lambdas):
        raise BadLambda(f"interpolation weights must be positive: {lambdas}")
    if abs(sum(lambdas) - 1.0) > 1e-9:
        raise BadLambda(f"interpolation weights must sum to 1: {lambdas}")


class ToyMaskedLM(Denoiser):
    """Count-based bidirectional denoiser over a closed vocabulary.

    Probability of a target w between nearest unmasked neighbors l and r:

        p(w | l, r) = l3*p3(w|l,r) + l2L*p2(w|l) + l2R*p2(w|r) + l1*p1(w)

    with every component add-alpha smoothed over the real vocabulary, so
    each conditional sums to exactly 1. Immutable after training; the
    internal mixture memo is a benign cache and safe for concurrent reads.
    """

    def __init__(
        self,
        vocab: Vocabulary,
        lambdas: tuple[float, float, float, float] = DEFAULT_LAMBDAS,
        alpha_add: float = DEFAULT_ALPHA_ADD,
        sentinel_policy: str = "barrier",
    ):
        _validate_lambdas(tuple(lambdas))
        if not alpha_add > 0.0:
            raise ValueError(f"alpha_add must be positive, got {alpha_add}")
        if sentinel_policy not in SENTINEL_POLICIES:
            raise ValueError(f"unknown sentinel policy: {sentinel_policy!r}")
        self.vocab = vocab
        self.lambdas = tuple(lambdas)
        self.alpha_add = float(alpha_add)
        self.sentinel_policy = sentinel_policy
        self.trigram: dict[tuple[int, int, int], int] = {}
        self.bigram_left: dict[tuple[int, int], int] = {}
        self.bigram_right: dict[tuple[int, int], int] = {}
        self.unigram: dict[int, int] = {}
        # context-marginal tables, derived from the tables above
        self._ctx3: dict[tuple[int, int], int] = {}
        self._ctx2l: dict[int, int] = {}
        self._ctx2r: dict[int, int] = {}
        self._total = 0
        self._memo: dict[tuple[int, int, int], float] = {}

    @property
    def begin_id(self) -> int:
        return _begin_id(self.vocab)

    @property
    def end_id(self) -> int:
        return _end_id(self.vocab)

    def _rebuild_contexts(self) -> None:
        self._ctx3 = {}
        self._ctx2l = {}
        self._ctx2r = {}
        self._total = 0
        for (left, _, right), count in self.trigram.items():
            self._ctx3[left, right] = self._ctx3.get((left, right), 0) + count
        for (left, _), count in self.bigram_left.items():
            self._ctx2l[left] = self._ctx2l.get(left, 0) + count
        for (_, right), count in self.bigram_right.items():
            self._ctx2r[right] = self._ctx2r.get(right, 0) + count
        self._total = sum(self.unigram.values())
        self._memo = {}

    def token_logprob(self, left: int, target: int, right: int) -> float:
        """Mixture log-probability of ``target`` between neighbors."""
        key = (left, target, right)
        cached = self._memo.get(key)
        if cached is not None:
            return cached
        alpha = self.alpha_add
        denom_v = alpha * self.vocab.size
        l3, l2l, l2r, l1 = self.lambdas
        p3 = (self.trigram.get(key, 0) + alpha) / (
            self._ctx3.get((left, right), 0) + denom_v
        )
        p2l = (self.bigram_left.get((left, target), 0) + alpha) / (
            self._ctx2l.get(left, 0) + denom_v
        )
        p2r = (self.bigram_right.get((target, right), 0) + alpha) / (
            self._ctx2r.get(right, 0) + denom_v
        )
        p1 = (self.unigram.get(target, 0) + alpha) / (self._total + denom_v)
        # correctly-rounded sum: a certain conditional must come out as
        # exactly 1 regardless of lambda rounding or addend order
        mixed = math.fsum((l3 * p3, l2l * p2l, l2r * p2r, l1 * p1))
        value = min(0.0, math.log(mixed))
        self._memo[key] = value
        return value

    def _neighbors(
        self,
        corrupted_ids: tuple[int, ...],
        context_ids: tuple[int, ...],
        pos: int,
        mask_id: int,
    ) -> tuple[int, int]:
        left = None
        for j in range(pos - 1, -1, -1):
            if corrupted_ids[j] != mask_id:
                left = corrupted_ids[j]
                break
        if left is None:
            if self.sentinel_policy == "bridge" and context_ids:
                left = context_ids[-1]
            else:
                left = self.begin_id
        right = None
        for j in range(pos + 1, len(corrupted_ids)):
            if corrupted_ids[j] != mask_id:
                right = corrupted_ids[j]
                break
        if right is None:
            right = self.end_id
        return left, right

    def query(self, q: DenoiserQuery) -> DenoiserResponse:
        self._check_query(q)
        logprobs = {}
        for pos, target in q.targets.items():
            left, right = self._neighbors(q.corrupted_ids, q.context_ids, pos, q.mask_id)
            logprobs[pos] = self.token_logprob(left, target, right)
        return DenoiserResponse(logprobs=logprobs)


def train_toy_masked_lm(
    corpus: list[TokenSequence],
    vocab: Vocabulary,
    lambdas: tuple[float, float, float, float] = DEFAULT_LAMBDAS,
    alpha_add: float = DEFAULT_ALPHA_ADD,
    sentinel_policy: str = "barrier",
) -> ToyMaskedLM:
    """Gather neighbor counts over a clean corpus; deterministic."""
    if not corpus:
        raise EmptyCorpus("cannot train on an empty corpus")
    model = ToyMaskedLM(vocab, lambdas, alpha_add, sentinel_policy)
    begin, end = model.begin_id, model.end_id
    for seq in corpus:
        if seq.vocab.mask_id != vocab.mask_id or not seq.is_clean:
            raise VocabMismatch("training corpus must be clean under the given vocabulary")
        ids = seq.ids
        last = len(ids) - 1
        for i, token in enumerate(ids):
            left = ids[i - 1] if i > 0 else begin
            right = ids[i + 1] if i < last else end
            model.trigram[left, token, right] = model.trigram.get((left, token, right), 0) + 1
            model.bigram_left[left, token] = model.bigram_left.get((left, token), 0) + 1
            model.bigram_right[token, right] = model.bigram_right.get((token, right), 0) + 1
            model.unigram[token] = model.unigram.get(token, 0) + 1
    if not model.unigram:
        raise EmptyCorpus("training corpus contains no tokens")
    model._rebuild_contexts()
    return model


def query_masked(model: ToyMaskedLM, q: DenoiserQuery) -> DenoiserResponse:
    return model.query(q)


class ToyARLM:
    """Left-to-right bigram model with a begin sentinel and add-k smoothing.

    This is the autoregressive comparison baseline. It does not implement
    the masked query interface; score it with :func:`ar_sequence_logprobs`.
    """

    def __init__(self, vocab: Vocabulary, k_add: float = 1.0):
        if not k_add > 0.0:
            raise ValueError(f"k_add must be positive, got {k_add}")
        self.vocab = vocab
        self.k_add = float(k_add)
        self.bigram: dict[tuple[int, int], int] = {}
        self._ctx: dict[int, int] = {}

    @property
    def begin_id(self) -> int:
        return _begin_id(self.vocab)

    def _rebuild_contexts(self) -> None:
        self._ctx = {}
        for (prev, _), count in self.bigram.items():
            self._ctx[prev] = self._ctx.get(prev, 0) + count

    def step_logprob(self, prev: int, token: int) -> float:
        k = self.k_add
        num = self.bigram.get((prev, token), 0) + k
        den = self._ctx.get(prev, 0) + k * self.vocab.size
        return math.log(num / den)

    def sequence_logprobs(
        self, seq: TokenSequence, context: TokenSequence | None = None
    ) -> list[float]:
        if seq.vocab.mask_id != self.vocab.mask_id or not seq.is_clean:
            raise VocabMismatch("sequence must be clean under the model vocabulary")
        if context is not None and not context.is_clean:
            raise VocabMismatch("context must be clean")
        if context is not None and len(context.ids) > 0:
            prev = context.ids[-1]
        else:
            prev = self.begin_id
        out = []
        for token in seq.ids:
            out.append(self.step_logprob(prev, token))
            prev = token
        return out


def train_toy_ar_lm(
    corpus: list[TokenSequence], vocab: Vocabulary, k_add: float = 1.0
) -> ToyARLM:
    """Count (predecessor, token) transitions over a clean corpus."""
    if not corpus:
        raise EmptyCorpus("cannot train on an empty corpus")
    model = ToyARLM(vocab, k_add)
    begin = model.begin_id
    total = 0
    for seq in corpus:
        if seq.vocab.mask_id != vocab.mask_id or not seq.is_clean:
            raise VocabMismatch("training corpus must be clean under the given vocabulary")
        prev = begin
        for token in seq.ids:
            model.bigram[prev, token] = model.bigram.get((prev, token), 0) + 1
            prev = token
            total += 1
    if total == 0:
        raise EmptyCorpus("training corpus contains no tokens")
    model._rebuild_contexts()
    return model


def ar_sequence_logprobs(
    model: ToyARLM, seq: TokenSequence, context: TokenSequence | None = None
) -> list[float]:
    """Per-position log p(token | predecessor); sums to the sequence score."""
    return model.sequence_logprobs(seq, context)


class UniformDenoiser(Denoiser):
    """Context-free backend: every target gets exactly -log|V|."""

    def __init__(self, vocab: Vocabulary):
        self.vocab = vocab
        self._value = -math.log(vocab.size)

    def query(self, q: DenoiserQuery) -> DenoiserResponse:
        self._check_query(q)
        return DenoiserResponse(logprobs={pos: self._value for pos in q.targets})


def query_uniform(vocab: Vocabulary, q: DenoiserQuery) -> DenoiserResponse:
    return UniformDenoiser(vocab).query(q)


class RemoteDenoiser(Denoiser):
    """HTTP client for the remote wire protocol.

    Requests carry an explicit id echoed by the server; any schema or
    contract violation in the response surfaces as ProtocolViolation with
    the raw payload attached, never as a score. Supports bounded in-flight
    concurrency with a per-request timeout.
    """

    def __init__(
        self,
        endpoint_url: str,
        vocab: Vocabulary,
        timeout: float = 10.0,
        max_in_flight: int = 8,
    ):
        if max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")
        self.endpoint_url = endpoint_url.rstrip("/")
        self.vocab = vocab
        self.timeout = timeout
        self.max_in_flight = max_in_flight
        self._local = threading.local()
        self._counter = itertools.count()

    def _session(self) -> requests.Session:
        session = getattr(self._local, "session", None)
        if session is None:
            session = requests.Session()
            self._local.session = session
        return session

    def health(self) -> dict:
        url = f"{self.endpoint_url}/v1/health"
        try:
            resp = self._session().get(url, timeout=self.timeout)
        except requests.exceptions.Timeout as exc:
            raise Timeout(f"health check timed out: {url}") from exc
        except requests.exceptions.RequestException as exc:
            raise ConnectionFailed(f"health check failed: {exc}") from exc
        if resp.status_code != 200:
            raise ProtocolViolation(
                f"health returned HTTP {resp.status_code}", payload=resp.text
            )
        try:
            body = resp.json()
        except ValueError as exc:
            raise ProtocolViolation("health body is not JSON", payload=resp.text) from exc
        if (
            not isinstance(body, dict)
            or body.get("status") != "ok"
            or not isinstance(body.get("vocab_size"), int)
            or isinstance(body.get("vocab_size"), bool)
        ):
            raise ProtocolViolation(f"malformed health body: {body!r}", payload=body)
        return body

    def query(self, q: DenoiserQuery) -> DenoiserResponse:
        self._check_query(q)
        vocab = self.vocab
        request_id = f"q{next(self._counter)}-{uuid.uuid4().hex[:8]}"
        body = {
            "id": request_id,
            "context": [vocab.token_of(t) for t in q.context_ids],
            "corrupted": [vocab.token_of(t) for t in q.corrupted_ids],
            "targets": {str(pos): vocab.token_of(t) for pos, t in q.targets.items()},
        }
        url = f"{self.endpoint_url}/v1/logprobs"
        try:
            resp = self._session().post(url, json=body, timeout=self.timeout)
        except requests.exceptions.Timeout as exc:
            raise Timeout(f"request {request_id} timed out after {self.timeout}s") from exc
        except requests.exceptions.RequestException as exc:
            raise ConnectionFailed(f"request {request_id} failed: {exc}") from exc
        if resp.status_code != 200:
            raise ProtocolViolation(
                f"server returned HTTP {resp.status_code}", payload=resp.text
            )
        try:
            parsed = resp.json()
        except ValueError as exc:
            raise ProtocolViolation(
                "response body is not JSON", payload=resp.content
            ) from exc
        return self._parse_response(parsed, request_id, q)

    @staticmethod
    def _parse_response(parsed: object, request_id: str, q: DenoiserQuery) -> DenoiserResponse:
        if not isinstance(parsed, dict):
            raise ProtocolViolation("response is not a JSON object", payload=parsed)
        if parsed.get("id") != request_id:
            raise ProtocolViolation(
                f"response id {parsed.get('id')!r} does not match request {request_id!r}",
                payload=parsed,
            )
        logprobs = parsed.get("logprobs")
        if not isinstance(logprobs, dict):
            raise ProtocolViolation("response is missing a logprobs object", payload=parsed)
        expected = {str(pos) for pos in q.targets}
        if set(logprobs) != expected:
            raise ProtocolViolation(
                f"response positions {sorted(logprobs)} != requested {sorted(expected)}",
                payload=parsed,
            )
        out: dict[int, float] = {}
        for key, value in logprobs.items():
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ProtocolViolation(f"logprob at {key} is not a number", payload=parsed)
            value = float(value)
            if not math.isfinite(value) or value > 0.0:
                raise ProtocolViolation(
                    f"logprob at {key} must be finite and <= 0, got {value}", payload=parsed
                )
            out[int(key)] = value
        return DenoiserResponse(logprobs=out)

    def query_many(self, queries: list[DenoiserQuery]) -> list[DenoiserResponse]:
        if len(queries) <= 1 or self.max_in_flight == 1:
            return [self.query(q) for q in queries]
        workers = min(self.max_in_flight, len(queries))
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(self.query, queries))


def query_remote(endpoint: RemoteDenoiser, q: DenoiserQuery) -> DenoiserResponse:
    return endpoint.query(q)


# --- serialization: magic "DSTOY1", vocabulary, length-prefixed count tables ---


def _pack_vocab(vocab: Vocabulary) -> bytes:
    parts = [struct.pack("<BI", 1 if vocab.tokenizer_rule == "whitespace_lower" else 0,
                         vocab.size)]
    for token in vocab.tokens:
        raw = token.encode("utf-8")
        parts.append(struct.pack("<I", len(raw)))
        parts.append(raw)
    return b"".join(parts)


def _pack_table(entries: dict, key_width: int) -> bytes:
    fmt = "<" + "I" * key_width + "Q"
    parts = [struct.pack("<Q", len(entries))]
    for key in sorted(entries):
        row = key if isinstance(key, tuple) else (key,)
        parts.append(struct.pack(fmt, *row, entries[key]))
    return b"".join(parts)


def save_toy_model(model: ToyMaskedLM | ToyARLM, path: str) -> None:
    """Write the versioned binary model file (deterministic bytes)."""
    parts = [MODEL_MAGIC]
    if isinstance(model, ToyMaskedLM):
        parts.append(struct.pack("<B", _KIND_MASKED))
        parts.append(_pack_vocab(model.vocab))
        parts.append(struct.pack("<4d", *model.lambdas))
        parts.append(struct.pack("<d", model.alpha_add))
        parts.append(struct.pack("<B", 1 if model.sentinel_policy == "bridge" else 0))
        parts.append(_pack_table(model.trigram, 3))
        parts.append(_pack_table(model.bigram_left, 2))
        parts.append(_pack_table(model.bigram_right, 2))
        parts.append(_pack_table(model.unigram, 1))
    elif isinstance(model, ToyARLM):
        parts.append(struct.pack("<B", _KIND_AR))
        parts.append(_pack_vocab(model.vocab))
        parts.append(struct.pack("<d", model.k_add))
        parts.append(_pack_table(model.bigram, 2))
    else:
        raise TypeError(f"cannot serialize {type(model).__name__}")
    # atomic write (temp file + rename), matching the dataset writers
    directory = os.path.dirname(os.path.abspath(path))
    try:
        fd, tmp_path = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".bin")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(b"".join(parts))
        os.replace(tmp_path, path)
    except OSError as exc:
        try:
            os.unlink(tmp_path)
        except OSError:
            pass
        raise IoError(f"cannot write {path}: {exc}") from exc


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.offset = 0

    def take(self, fmt: str):
        size = struct.calcsize(fmt)
        if self.offset + size > len(self.data):
            raise BadModelFile("model file is truncated")
        values = struct.unpack_from(fmt, self.data, self.offset)
        self.offset += size
        return values

    def take_bytes(self, size: int) -> bytes:
        if self.offset + size > len(self.data):
            raise BadModelFile("model file is truncated")
        chunk = self.data[self.offset : self.offset + size]
        self.offset += size
        return chunk


def _read_vocab(reader: _Reader) -> Vocabulary:
    lower_flag, size = reader.take("<BI")
    tokens = []
    for _ in range(size):
        (length,) = reader.take("<I")
        tokens.append(reader.take_bytes(length).decode("utf-8"))
    rule = "whitespace_lower" if lower_flag else "whitespace"
    return _make_vocabulary(tokens, rule)


def _read_table(reader: _Reader, key_width: int) -> dict:
    (count,) = reader.take("<Q")
    fmt = "<" + "I" * key_width + "Q"
    table = {}
    for _ in range(count):
        row = reader.take(fmt)
        key = row[:-1] if key_width > 1 else row[0]
        table[key] = row[-1]
    return table


def load_toy_model(path: str) -> ToyMaskedLM | ToyARLM:
    """Read a model file written by save_toy_model."""
    try:
        with open(path, "rb") as handle:
            data = handle.read()
    except OSError as exc:
        raise IoError(f"cannot open {path}: {exc}") from exc
    if not data.startswith(MODEL_MAGIC):
        raise BadModelFile(f"bad magic in {path!r}; expected {MODEL_MAGIC!r}")
    reader = _Reader(data)
    reader.offset = len(MODEL_MAGIC)
    (kind,) = reader.take("<B")
    vocab = _read_vocab(reader)
    if kind == _KIND_MASKED:
        lambdas = reader.take("<4d")
        (alpha_add,) = reader.take("<d")
        (policy_flag,) = reader.take("<B")
        model = ToyMaskedLM(
            vocab,
            lambdas,
            alpha_add,
            "bridge" if policy_flag else "barrier",
        )
        model.trigram = _read_table(reader, 3)
        model.bigram_left = _read_table(reader, 2)
        model.bigram_right = _read_table(reader, 2)
        model.unigram = _read_table(reader, 1)
        model._rebuild_contexts()
        return model
    if kind == _KIND_AR:
        (k_add,) = reader.take("<d")
        model = ToyARLM(vocab, k_add)
        model.bigram = _read_table(reader, 2)
        model._rebuild_contexts()
        return model
    raise BadModelFile(f"unknown model kind {kind}")
