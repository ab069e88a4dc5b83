"""Sources of next-token logits.

Three backends satisfy the same contract (a ``vocab``, a ``context_limit``,
and ``query(context) -> logits``): a scripted table for tests and planted
constructions, a count-based n-gram model with additive smoothing, and a
client for a remote scorer speaking newline-delimited JSON over a byte
stream. A matching server helper exposes any local scorer over TCP.

Wire protocol (one UTF-8 JSON record per line, '\\n' terminated):

    client -> {"hello": {"want_vocab": true}}      server -> {"vocab_size": N}
    client -> {"ctx": [int, ...]}                  server -> {"logits": [float, ...]}
                                              or   server -> {"top": [[id, logit], ...],
                                                              "floor": float}
    client -> {"score": {"ctx": [...], "completion": [...]}}
                                                   server -> {"reward": float}

A sparse response fills every id absent from ``top`` with ``floor``.
"""

from __future__ import annotations

import json
import logging
import socket
import socketserver
import threading
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, ScorerError
from .vocab import Vocab

logger = logging.getLogger(__name__)

DEFAULT_CONTEXT_LIMIT = 1 << 20


class ScorerHandle:
    """Base contract: immutable vocab, context limit, pure query()."""

    vocab: Vocab
    context_limit: int

    def query(self, context: list[int]) -> np.ndarray:
        raise NotImplementedError

    def _check_context(self, context: list[int]) -> None:
        if len(context) > self.context_limit:
            raise ScorerError(
                f"context length {len(context)} exceeds limit {self.context_limit}"
            )


@dataclass(frozen=True)
class ScriptedRule:
    suffix: tuple[int, ...]
    logits: tuple[float, ...]


class ScriptedScorer(ScorerHandle):
    """Deterministic table scorer: ordered (context-suffix -> logits) rules.

    Rules are checked in order and the first whose suffix matches the tail
    of the context wins; with no match the default logits are returned.
    """

    def __init__(
        self,
        vocab: Vocab,
        rules: list[ScriptedRule],
        default_logits,
        context_limit: int = DEFAULT_CONTEXT_LIMIT,
    ):
        self.vocab = vocab
        self.context_limit = context_limit
        for rule in rules:
            if len(rule.logits) != vocab.size:
                raise ParameterError(
                    f"rule logits length {len(rule.logits)} != vocab size {vocab.size}"
                )
        default_logits = tuple(float(x) for x in default_logits)
        if len(default_logits) != vocab.size:
            raise ParameterError(
                f"default logits length {len(default_logits)} != vocab size {vocab.size}"
            )
        self.rules = list(rules)
        self.default_logits = default_logits

    def query(self, context: list[int]) -> np.ndarray:
        self._check_context(context)
        for rule in self.rules:
            k = len(rule.suffix)
            if k <= len(context) and tuple(context[len(context) - k :]) == rule.suffix:
                return np.array(rule.logits, dtype=np.float64)
        return np.array(self.default_logits, dtype=np.float64)


def load_scripted_rules(path, vocab: Vocab) -> ScriptedScorer:
    """Build a ScriptedScorer from a JSON rules file.

    Schema: {"rules": [{"suffix": [ids], "logits": [floats]}, ...],
             "default_logits": [floats]}.
    """
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict) or "default_logits" not in doc:
        raise ParameterError(f"{path}: scripted rules file needs 'default_logits'")
    rules = [
        ScriptedRule(
            suffix=tuple(int(i) for i in entry["suffix"]),
            logits=tuple(float(x) for x in entry["logits"]),
        )
        for entry in doc.get("rules", [])
    ]
    return ScriptedScorer(vocab, rules, doc["default_logits"])


class NGramScorer(ScorerHandle):
    """Count-based n-gram model with additive smoothing.

    logit(v | context) = log((count(context, v) + kappa) / (total(context) + kappa*|V|)),
    so exp(logits) is a proper distribution for every context.
    """

    def __init__(
        self,
        vocab: Vocab,
        order: int,
        kappa: float,
        counts: dict[tuple[int, ...], dict[int, int]],
        context_limit: int = DEFAULT_CONTEXT_LIMIT,
    ):
        if order not in (2, 3):
            raise ParameterError(f"order must be 2 or 3, got {order}")
        if kappa <= 0:
            raise ParameterError(f"kappa must be positive, got {kappa}")
        self.vocab = vocab
        self.order = order
        self.kappa = float(kappa)
        self.counts = counts
        self.totals = {ctx: sum(nxt.values()) for ctx, nxt in counts.items()}
        self.context_limit = context_limit

    def query(self, context: list[int]) -> np.ndarray:
        self._check_context(context)
        key = tuple(context[-(self.order - 1) :]) if context else ()
        nxt = self.counts.get(key, {})
        total = self.totals.get(key, 0)
        denom = total + self.kappa * self.vocab.size
        logits = np.full(self.vocab.size, np.log(self.kappa / denom), dtype=np.float64)
        for token_id, count in nxt.items():
            logits[token_id] = np.log((count + self.kappa) / denom)
        return logits


def ngram_train(
    corpus: list[list[int]], order: int, kappa: float, vocab: Vocab
) -> NGramScorer:
    """Count sliding-window n-grams over the corpus sequences."""
    if not corpus or all(len(seq) == 0 for seq in corpus):
        raise ParameterError("corpus must be nonempty")
    if order not in (2, 3):
        raise ParameterError(f"order must be 2 or 3, got {order}")
    counts: dict[tuple[int, ...], dict[int, int]] = {}
    for seq in corpus:
        for token in seq:
            if not 0 <= token < vocab.size:
                raise ParameterError(f"corpus token id {token} outside vocab")
        for i in range(len(seq) - order + 1):
            ctx = tuple(seq[i : i + order - 1])
            nxt = seq[i + order - 1]
            counts.setdefault(ctx, {}).setdefault(nxt, 0)
            counts[ctx][nxt] += 1
    return NGramScorer(vocab, order, kappa, counts)


def load_ngram_corpus(path) -> list[list[int]]:
    """One sequence per line, whitespace-separated token ids."""
    corpus = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                corpus.append([int(tok) for tok in line.split()])
    return corpus


class _LineChannel:
    """Newline-delimited JSON over a file-like byte stream pair."""

    def __init__(self, reader, writer):
        self._reader = reader
        self._writer = writer

    def send(self, record: dict) -> None:
        data = json.dumps(record, separators=(",", ":")).encode("utf-8") + b"\n"
        self._writer.write(data)
        self._writer.flush()

    def recv(self) -> dict:
        line = self._reader.readline()
        if not line:
            raise ScorerError("connection closed by peer")
        try:
            record = json.loads(line.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ScorerError(f"malformed response line: {exc}") from exc
        if not isinstance(record, dict):
            raise ScorerError("response is not a JSON object")
        return record


def expand_sparse_logits(top: list, floor: float, vocab_size: int) -> np.ndarray:
    """Fill a dense vector with ``floor``, then place the listed (id, logit)s."""
    logits = np.full(vocab_size, float(floor), dtype=np.float64)
    for pair in top:
        if len(pair) != 2:
            raise ScorerError(f"malformed sparse entry {pair!r}")
        token_id, value = int(pair[0]), float(pair[1])
        if not 0 <= token_id < vocab_size:
            raise ScorerError(f"sparse id {token_id} outside vocab of {vocab_size}")
        logits[token_id] = value
    return logits


class RemoteScorer(ScorerHandle):
    """Client for a scorer served over TCP, one request in flight at a time."""

    def __init__(
        self,
        endpoint: str,
        vocab: Vocab,
        timeout: float = 30.0,
        context_limit: int = DEFAULT_CONTEXT_LIMIT,
    ):
        self.vocab = vocab
        self.context_limit = context_limit
        host, _, port_text = endpoint.rpartition(":")
        if not host or not port_text.isdigit():
            raise ParameterError(f"endpoint must be host:port, got {endpoint!r}")
        try:
            self._sock = socket.create_connection((host, int(port_text)), timeout=timeout)
        except OSError as exc:
            raise ScorerError(f"cannot connect to {endpoint}: {exc}") from exc
        self._chan = _LineChannel(self._sock.makefile("rb"), self._sock.makefile("wb"))
        self._lock = threading.Lock()
        self._handshake()

    def _handshake(self) -> None:
        self._chan.send({"hello": {"want_vocab": True}})
        reply = self._recv()
        size = reply.get("vocab_size")
        if not isinstance(size, int):
            raise ScorerError(f"bad handshake reply: {reply!r}")
        if size != self.vocab.size:
            raise ScorerError(
                f"server vocab size {size} != local vocab size {self.vocab.size}"
            )

    def _recv(self) -> dict:
        try:
            return self._chan.recv()
        except OSError as exc:
            raise ScorerError(f"transport failure: {exc}") from exc

    def query(self, context: list[int]) -> np.ndarray:
        self._check_context(context)
        with self._lock:
            try:
                self._chan.send({"ctx": [int(i) for i in context]})
            except OSError as exc:
                raise ScorerError(f"transport failure: {exc}") from exc
            reply = self._recv()
        if "error" in reply:
            raise ScorerError(f"server error: {reply['error']}")
        if "logits" in reply:
            logits = np.asarray(reply["logits"], dtype=np.float64)
            if logits.shape != (self.vocab.size,):
                raise ScorerError(
                    f"dense response length {logits.shape} != vocab {self.vocab.size}"
                )
            return logits
        if "top" in reply:
            if "floor" not in reply:
                raise ScorerError("sparse response missing 'floor'")
            return expand_sparse_logits(reply["top"], reply["floor"], self.vocab.size)
        raise ScorerError(f"unrecognized response: {reply!r}")

    def score(self, context: list[int], completion: list[int]) -> float:
        """Ask the remote side for a scalar reward over (context, completion)."""
        with self._lock:
            try:
                self._chan.send(
                    {
                        "score": {
                            "ctx": [int(i) for i in context],
                            "completion": [int(i) for i in completion],
                        }
                    }
                )
            except OSError as exc:
                raise ScorerError(f"transport failure: {exc}") from exc
            reply = self._recv()
        if "error" in reply:
            raise ScorerError(f"server error: {reply['error']}")
        if "reward" not in reply:
            raise ScorerError(f"score response missing 'reward': {reply!r}")
        return float(reply["reward"])

    def close(self) -> None:
        try:
            self._sock.close()
        except OSError:
            pass


class ScorerServer:
    """Serve a local scorer (and optional reward fn) over TCP for remote clients."""

    def __init__(self, scorer: ScorerHandle, host: str = "127.0.0.1", port: int = 0, reward_fn=None):
        outer = self

        class Handler(socketserver.StreamRequestHandler):
            def handle(self):
                chan = _LineChannel(self.rfile, self.wfile)
                while True:
                    try:
                        record = chan.recv()
                    except ScorerError:
                        return
                    try:
                        reply = outer._serve_one(record)
                    except Exception as exc:  # noqa: BLE001 - report, keep serving
                        logger.warning("request failed: %s", exc)
                        reply = {"error": str(exc)}
                    chan.send(reply)

        class Server(socketserver.ThreadingTCPServer):
            allow_reuse_address = True
            daemon_threads = True

        self.scorer = scorer
        self.reward_fn = reward_fn
        self._server = Server((host, port), Handler)
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)

    def _serve_one(self, record: dict) -> dict:
        if "hello" in record:
            return {"vocab_size": self.scorer.vocab.size}
        if "ctx" in record:
            logits = self.scorer.query([int(i) for i in record["ctx"]])
            return {"logits": [float(x) for x in logits]}
        if "score" in record:
            if self.reward_fn is None:
                return {"error": "scoring not supported"}
            req = record["score"]
            return {
                "reward": float(
                    self.reward_fn(
                        [int(i) for i in req["ctx"]],
                        [int(i) for i in req["completion"]],
                    )
                )
            }
        return {"error": f"unrecognized request: {record!r}"}

    @property
    def endpoint(self) -> str:
        host, port = self._server.server_address[:2]
        return f"{host}:{port}"

    def start(self) -> "ScorerServer":
        self._thread.start()
        return self

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()

    def __enter__(self) -> "ScorerServer":
        return self.start()

    def __exit__(self, *exc_info) -> None:
        self.stop()
