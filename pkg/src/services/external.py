"""Adapter for a SUT living in another process, one JSON record per line over stdin/stdout.

Handshake: we send ``{"hello": 1, "k": k}`` and expect ``{"ok": true}``. Then every
request is an ic record and every response carries actual/predicted positions and the
face size.
"""
from __future__ import annotations

import logging
import queue
import shlex
import subprocess
import threading
from typing import List, Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel, ValidationError

from src.models import EvaluateResponse, Hello, HelloReply

from .data import ic_to_record
from .errors import InvalidInputError, ProtocolError, TransportError
from .fitness import fitness_vector
from .types import EvaluatedTestCase, GroundTruth, ImageCharacteristics, Prediction

logger = logging.getLogger(__name__)

_EOF = object()


class ExternalSut:
    """Serializes requests over a single process channel; concurrent callers queue on a lock."""

    def __init__(self, command: Union[str, Sequence[str]], k: int, timeout: float = 30.0,
                 cwd: Optional[str] = None):
        self.k = k
        self.timeout = timeout
        self.command: List[str] = shlex.split(command) if isinstance(command, str) else list(command)
        if not self.command:
            raise InvalidInputError("external SUT command is empty")
        self._lock = threading.Lock()
        self._lines: "queue.Queue[object]" = queue.Queue()
        self.evaluations = 0
        try:
            self._proc = subprocess.Popen(
                self.command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                encoding="utf-8",
                bufsize=1,
                cwd=cwd,
            )
        except OSError as e:
            raise TransportError(f"could not launch {self.command!r}: {e}") from e
        logger.info("launched external SUT pid=%d: %s", self._proc.pid, " ".join(self.command))
        self._reader = threading.Thread(target=self._pump, daemon=True)
        self._reader.start()
        self._handshake()

    def _pump(self) -> None:
        for line in self._proc.stdout:
            self._lines.put(line)
        self._lines.put(_EOF)

    def _send(self, message: BaseModel) -> None:
        try:
            self._proc.stdin.write(message.model_dump_json() + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError, ValueError) as e:
            raise TransportError(f"external SUT closed its input: {e}") from e

    def _receive(self) -> str:
        try:
            line = self._lines.get(timeout=self.timeout)
        except queue.Empty:
            raise TransportError(f"external SUT gave no answer within {self.timeout}s") from None
        if line is _EOF:
            code = self._proc.poll()
            raise TransportError(f"external SUT exited (status {code})")
        return str(line).strip()

    def _handshake(self) -> None:
        try:
            self._send(Hello(k=self.k))
            reply = self._receive()
            try:
                HelloReply.model_validate_json(reply)
            except ValidationError as e:
                raise ProtocolError(f"bad handshake reply {reply!r}") from e
        except TransportError:
            self.close()
            raise

    def _to_test(self, ic: ImageCharacteristics, raw: str) -> EvaluatedTestCase:
        try:
            resp = EvaluateResponse.model_validate_json(raw)
        except ValidationError as e:
            raise ProtocolError(f"malformed response {raw[:200]!r}: {e.error_count()} error(s)") from e
        if len(resp.actual) != self.k or len(resp.predicted) != self.k:
            raise ProtocolError(
                f"expected {self.k} key-points, got {len(resp.actual)} actual / {len(resp.predicted)} predicted"
            )
        actual = np.array([[np.nan, np.nan] if p is None else p for p in resp.actual], dtype=float)
        try:
            truth = GroundTruth(actual, resp.face_width, resp.face_height)
            prediction = Prediction(np.array(resp.predicted, dtype=float))
        except InvalidInputError as e:
            raise ProtocolError(f"invalid response for {ic}: {e}") from e
        return EvaluatedTestCase(ic, truth, prediction, fitness_vector(truth, prediction))

    def evaluate(self, ic: ImageCharacteristics) -> EvaluatedTestCase:
        with self._lock:
            self._send(ic_to_record(ic))
            raw = self._receive()
            self.evaluations += 1
        return self._to_test(ic, raw)

    def close(self) -> None:
        proc: Optional[subprocess.Popen] = getattr(self, "_proc", None)
        if proc is None or proc.poll() is not None:
            return
        try:
            proc.stdin.close()
        except OSError:
            pass
        try:
            proc.wait(timeout=5)
        except subprocess.TimeoutExpired:
            proc.kill()
            proc.wait()
        logger.info("external SUT pid=%d exited with %s", proc.pid, proc.returncode)

    def __enter__(self) -> "ExternalSut":
        return self

    def __exit__(self, *exc) -> None:
        self.close()
