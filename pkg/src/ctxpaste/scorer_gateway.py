"""Uniform interface to context scorers.

A scorer maps a contextual image to C+1 scores (index 0 = background). The
gateway validates every score vector, performs the k-variant extraction and
averaging, and speaks the wire protocol to out-of-process scorers:

    newline-delimited UTF-8 JSON over stdio or TCP, protocol version 1.
    scorer -> gateway on connect:  {"version": 1, "num_classes": C}
    gateway -> scorer per query:   {"id": n, "w": W, "h": H, "rgb": base64 raw RGB8}
    scorer -> gateway per query:   {"id": n, "scores": [C+1 floats]}
                          or       {"id": n, "error": "message"}

Responses may arrive out of order; they are matched by id.
"""

from __future__ import annotations

import base64
import json
import logging
import shlex
import socket
import subprocess
import threading
from typing import Callable, Protocol, Sequence

import numpy as np

from .context_extract import ContextualImage, make_contextual
from .dataset_io.types import AnnotatedImage
from .errors import ConfigError, ProtocolError, ScorerUnavailable
from .geometry import Box, iou

logger = logging.getLogger(__name__)

PROTOCOL_VERSION = 1
DEFAULT_MAX_BATCH = 64
DEFAULT_TIMEOUT = 30.0
DEFAULT_MAX_IN_FLIGHT = 128
SIMPLEX_TOLERANCE = 1e-5

ScoreVector = np.ndarray  # (C+1,) float64 on the probability simplex


def validate_scores(values: Sequence[float], num_classes: int, request_id: int | None = None) -> ScoreVector:
    v = np.asarray(values, dtype=np.float64)
    if v.shape != (num_classes + 1,):
        raise ProtocolError(
            f"expected {num_classes + 1} scores, got shape {v.shape}", request_id
        )
    if np.any(v < 0.0) or np.any(v > 1.0):
        raise ProtocolError("scores outside [0, 1]", request_id)
    if abs(float(v.sum()) - 1.0) > SIMPLEX_TOLERANCE:
        raise ProtocolError(f"scores sum to {v.sum():.8f}, not 1", request_id)
    return v


class Scorer(Protocol):
    num_classes: int

    def score_batch(self, images: Sequence[ContextualImage]) -> list[ScoreVector]: ...

    def close(self) -> None: ...


class UniformScorer:
    """Assigns 1/(C+1) to every class; the no-information baseline."""

    def __init__(self, num_classes: int):
        self.num_classes = num_classes

    def score_batch(self, images: Sequence[ContextualImage]) -> list[ScoreVector]:
        v = np.full(self.num_classes + 1, 1.0 / (self.num_classes + 1))
        return [v.copy() for _ in images]

    def close(self) -> None:
        pass


class OracleScorer:
    """Ground-truth co-occurrence scorer for integration tests.

    A query box receives mass for class c when its image contains a class-c
    object whose box overlaps the query with IoU >= the threshold; otherwise
    the mass goes to background. Remaining probability is spread uniformly
    over the other classes.
    """

    def __init__(
        self,
        dataset: Sequence[AnnotatedImage],
        num_classes: int,
        iou_threshold: float = 0.3,
        mass: float = 0.9,
    ):
        self.by_id = {image.image_id: image for image in dataset}
        self.num_classes = num_classes
        self.iou_threshold = iou_threshold
        self.mass = mass

    def score_box(self, image_id: str, box: Box) -> ScoreVector:
        image = self.by_id.get(image_id)
        if image is None:
            raise KeyError(f"oracle scorer knows no image {image_id!r}")
        hits = sorted(
            {
                o.class_id
                for o in image.objects
                if not o.is_synthetic and iou(o.box, box) >= self.iou_threshold
            }
        )
        v = np.zeros(self.num_classes + 1)
        if hits:
            v[hits] = self.mass / len(hits)
        else:
            v[0] = self.mass
        rest = np.flatnonzero(v == 0.0)
        v[rest] = (1.0 - self.mass) / rest.size
        return v

    def score_batch(self, images: Sequence[ContextualImage]) -> list[ScoreVector]:
        return [self.score_box(ctx.image_id, ctx.source_box) for ctx in images]

    def close(self) -> None:
        pass


class ScriptedScorer:
    """Returns pre-scripted vectors (cycled) or delegates to a callable."""

    def __init__(
        self,
        num_classes: int,
        vectors: Sequence[Sequence[float]] | None = None,
        fn: Callable[[ContextualImage], Sequence[float]] | None = None,
    ):
        self.num_classes = num_classes
        self.vectors = [np.asarray(v, dtype=np.float64) for v in vectors or []]
        self.fn = fn
        self._cursor = 0

    def score_batch(self, images: Sequence[ContextualImage]) -> list[ScoreVector]:
        out = []
        for ctx in images:
            if self.fn is not None:
                out.append(np.asarray(self.fn(ctx), dtype=np.float64))
            else:
                out.append(self.vectors[self._cursor % len(self.vectors)].copy())
                self._cursor += 1
        return out

    def close(self) -> None:
        pass


class _StreamScorer:
    """Request multiplexer over a byte-stream scorer (stdio or TCP)."""

    def __init__(
        self,
        timeout: float = DEFAULT_TIMEOUT,
        max_in_flight: int = DEFAULT_MAX_IN_FLIGHT,
    ):
        self.timeout = timeout
        self._write_lock = threading.Lock()
        self._cv = threading.Condition()
        self._responses: dict[int, object] = {}
        self._outstanding: set[int] = set()
        self._next_id = 0
        self._in_flight = threading.Semaphore(max_in_flight)
        self._dead: Exception | None = None
        self.num_classes = self._handshake()
        self._reader = threading.Thread(target=self._read_loop, daemon=True)
        self._reader.start()

    # Transport hooks -------------------------------------------------------
    def _send_line(self, line: str) -> None:
        raise NotImplementedError

    def _recv_line(self) -> str:
        raise NotImplementedError

    def close(self) -> None:
        raise NotImplementedError

    # Protocol --------------------------------------------------------------
    def _handshake(self) -> int:
        try:
            line = self._recv_line()
        except (OSError, EOFError) as e:
            raise ScorerUnavailable(f"scorer closed the stream before handshake: {e}") from e
        try:
            msg = json.loads(line)
        except json.JSONDecodeError as e:
            raise ProtocolError(f"malformed handshake: {e}") from e
        if msg.get("version") != PROTOCOL_VERSION:
            raise ProtocolError(f"unsupported protocol version {msg.get('version')}")
        num_classes = msg.get("num_classes")
        if not isinstance(num_classes, int) or num_classes < 1:
            raise ProtocolError(f"handshake declares invalid num_classes {num_classes}")
        return num_classes

    def _read_loop(self) -> None:
        while True:
            try:
                line = self._recv_line()
            except (OSError, EOFError) as e:
                self._fail(ScorerUnavailable(f"scorer stream closed: {e}"))
                return
            try:
                msg = json.loads(line)
                rid = msg["id"]
            except (json.JSONDecodeError, KeyError, TypeError) as e:
                self._fail(ProtocolError(f"malformed response line: {e}"))
                return
            with self._cv:
                self._responses[rid] = msg
                if rid in self._outstanding:
                    self._outstanding.discard(rid)
                    self._in_flight.release()
                self._cv.notify_all()

    def _fail(self, exc: Exception) -> None:
        with self._cv:
            self._dead = exc
            # Unblock senders waiting on in-flight permits.
            for _ in self._outstanding:
                self._in_flight.release()
            self._outstanding.clear()
            self._cv.notify_all()

    def score_batch(self, images: Sequence[ContextualImage]) -> list[ScoreVector]:
        ids = []
        for ctx in images:
            self._in_flight.acquire()
            with self._write_lock:
                rid = self._next_id
                self._next_id += 1
            with self._cv:
                self._outstanding.add(rid)
            h, w = ctx.pixels.shape[:2]
            request = {
                "id": rid,
                "w": w,
                "h": h,
                "rgb": base64.b64encode(
                    np.ascontiguousarray(ctx.pixels).tobytes()
                ).decode("ascii"),
            }
            with self._write_lock:
                try:
                    self._send_line(json.dumps(request))
                except OSError as e:
                    raise ScorerUnavailable(f"cannot send request: {e}") from e
            ids.append(rid)

        out: list[ScoreVector] = []
        for rid in ids:
            msg = self._wait_for(rid)
            if "error" in msg:
                raise ProtocolError(f"scorer error: {msg['error']}", rid)
            if "scores" not in msg:
                raise ProtocolError("response carries neither scores nor error", rid)
            out.append(validate_scores(msg["scores"], self.num_classes, rid))
        return out

    def _wait_for(self, rid: int) -> dict:
        with self._cv:
            self._cv.wait_for(
                lambda: rid in self._responses or self._dead is not None,
                timeout=self.timeout,
            )
            if rid in self._responses:
                return self._responses.pop(rid)
            if self._dead is not None:
                raise self._dead
            raise ScorerUnavailable(
                f"no response for request {rid} within {self.timeout}s"
            )


class ProcessScorer(_StreamScorer):
    """Scorer running as a child process, spoken to over stdio."""

    def __init__(self, command: str | list[str], **kwargs):
        argv = shlex.split(command) if isinstance(command, str) else list(command)
        try:
            self._proc = subprocess.Popen(
                argv,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
        except OSError as e:
            raise ScorerUnavailable(f"cannot start scorer process {argv}: {e}") from e
        super().__init__(**kwargs)

    def _send_line(self, line: str) -> None:
        self._proc.stdin.write(line + "\n")
        self._proc.stdin.flush()

    def _recv_line(self) -> str:
        line = self._proc.stdout.readline()
        if not line:
            raise EOFError("scorer process closed stdout")
        return line

    def close(self) -> None:
        try:
            self._proc.stdin.close()
        except OSError:
            pass
        try:
            self._proc.wait(timeout=5)
        except subprocess.TimeoutExpired:
            self._proc.kill()


class TcpScorer(_StreamScorer):
    """Scorer reached over a local TCP socket."""

    def __init__(self, host: str, port: int, **kwargs):
        try:
            self._sock = socket.create_connection((host, port), timeout=10.0)
        except OSError as e:
            raise ScorerUnavailable(f"cannot connect to scorer at {host}:{port}: {e}") from e
        self._sock.settimeout(None)
        # Separate buffered files: reading and writing happen on different
        # threads, and a shared rw pair is not safe for that.
        self._rfile = self._sock.makefile("r", encoding="utf-8", newline="\n")
        self._wfile = self._sock.makefile("w", encoding="utf-8", newline="\n")
        super().__init__(**kwargs)

    def _send_line(self, line: str) -> None:
        self._wfile.write(line + "\n")
        self._wfile.flush()

    def _recv_line(self) -> str:
        line = self._rfile.readline()
        if not line:
            raise EOFError("scorer closed the connection")
        return line

    def close(self) -> None:
        try:
            self._sock.close()
        except OSError:
            pass


class ScorerGateway:
    """Validates, batches and averages scorer output for the pipeline."""

    def __init__(self, scorer: Scorer, max_batch: int = DEFAULT_MAX_BATCH):
        self.scorer = scorer
        self.max_batch = max_batch

    @property
    def num_classes(self) -> int:
        return self.scorer.num_classes

    def score_batch(self, images: Sequence[ContextualImage]) -> list[ScoreVector]:
        out: list[ScoreVector] = []
        for start in range(0, len(images), self.max_batch):
            chunk = images[start : start + self.max_batch]
            scores = self.scorer.score_batch(chunk)
            if len(scores) != len(chunk):
                raise ProtocolError(
                    f"scorer returned {len(scores)} vectors for {len(chunk)} inputs"
                )
            out.extend(validate_scores(v, self.num_classes) for v in scores)
        return out

    def averaged_score(
        self,
        image: AnnotatedImage,
        box: Box,
        rng: np.random.Generator,
        k: int = 3,
    ) -> ScoreVector:
        """Mean score over k independent contextual extractions of the same box."""
        if k < 1:
            raise ValueError("k must be >= 1")
        variants = [make_contextual(image, box, rng) for _ in range(k)]
        scores = self.score_batch(variants)
        return np.mean(scores, axis=0)

    def close(self) -> None:
        self.scorer.close()


def make_scorer(
    spec: str,
    dataset: Sequence[AnnotatedImage] | None = None,
    num_classes: int | None = None,
) -> Scorer:
    """Build a scorer from a CLI backend spec.

    Accepted forms: ``uniform``, ``oracle``, ``process:<command>``,
    ``tcp:<host>:<port>``.
    """
    if spec == "uniform":
        if num_classes is None:
            raise ValueError("uniform scorer needs the class count")
        return UniformScorer(num_classes)
    if spec == "oracle":
        if dataset is None or num_classes is None:
            raise ValueError("oracle scorer needs the dataset and class count")
        return OracleScorer(dataset, num_classes)
    if spec.startswith("process:"):
        return ProcessScorer(spec[len("process:") :])
    if spec.startswith("tcp:"):
        host, _, port = spec[len("tcp:") :].rpartition(":")
        if not host or not port.isdigit():
            raise ConfigError(f"malformed tcp scorer spec {spec!r}")
        return TcpScorer(host, int(port))
    raise ConfigError(f"unknown scorer backend {spec!r}")
