from __future__ import annotations

import os
import sys
import textwrap

import numpy as np
import pytest
from pydantic import ValidationError

from src.models import EvaluateResponse, FitnessRequest
from src.services.data import apply_overrides
from src.services.errors import ProtocolError, TransportError
from src.services.external import ExternalSut
from src.services.search import run_search
from src.services.types import ImageCharacteristics

REPO_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
DEFAULT_CONFIG = os.path.join(REPO_ROOT, "config", "default.yaml")

STUB_HEAD = """
import json, sys, time
hello = json.loads(sys.stdin.readline())
{handshake}
sys.stdout.flush()
for line in sys.stdin:
    req = json.loads(line)
    k = hello["k"]
{body}
    sys.stdout.flush()
"""

OK = 'print(json.dumps({"ok": True}))'


def stub(tmp_path, body: str, handshake: str = OK, name: str = "stub.py"):
    path = tmp_path / name
    path.write_text(STUB_HEAD.format(handshake=handshake, body=textwrap.indent(textwrap.dedent(body), "    ")))
    return [sys.executable, str(path)]


ECHO = """
pts = [[100.0 + i, 200.0 - i] for i in range(k)]
print(json.dumps({"actual": pts, "predicted": pts, "face_width": 80.0, "face_height": 90.0}))
"""


def test_echo_stub_scores_zero(tmp_path):
    with ExternalSut(stub(tmp_path, ECHO), k=27, timeout=10) as ext:
        test = ext.evaluate(ImageCharacteristics(1.0, 2.0, 3.0, 4))
    assert test.fitness.shape == (27,)
    assert not test.fitness.any()
    assert test.truth.face_width == 80.0


def test_short_response_is_a_protocol_error(tmp_path):
    body = """
pts = [[1.0, 1.0]] * (k - 1)
print(json.dumps({"actual": pts, "predicted": pts, "face_width": 10.0, "face_height": 10.0}))
"""
    with ExternalSut(stub(tmp_path, body), k=27, timeout=10) as ext:
        with pytest.raises(ProtocolError):
            ext.evaluate(ImageCharacteristics(0.0, 0.0, 0.0, 0))


def test_garbage_response_is_a_protocol_error(tmp_path):
    with ExternalSut(stub(tmp_path, 'print("not json at all")'), k=3, timeout=10) as ext:
        with pytest.raises(ProtocolError):
            ext.evaluate(ImageCharacteristics(0.0, 0.0, 0.0, 0))


def test_invalid_values_are_a_protocol_error(tmp_path):
    body = """
pts = [[1.0, 1.0]] * k
print(json.dumps({"actual": [None] * k, "predicted": pts, "face_width": 10.0, "face_height": 10.0}))
"""
    with ExternalSut(stub(tmp_path, body), k=3, timeout=10) as ext:
        with pytest.raises(ProtocolError):
            ext.evaluate(ImageCharacteristics(0.0, 0.0, 0.0, 0))


def test_half_missing_coordinate_is_a_protocol_error(tmp_path):
    body = """
pts = [[1.0, 1.0]] * k
actual = [[float("nan"), 5.0]] + pts[1:]
print(json.dumps({"actual": actual, "predicted": [[90.0, 90.0]] * k, "face_width": 10.0, "face_height": 10.0}))
"""
    with ExternalSut(stub(tmp_path, body), k=3, timeout=10) as ext:
        with pytest.raises(ProtocolError):
            ext.evaluate(ImageCharacteristics(0.0, 0.0, 0.0, 0))


def test_non_finite_literals_fail_validation():
    raw = '{"actual": [[NaN, 5.0]], "predicted": [[1.0, 1.0]], "face_width": 10.0, "face_height": 10.0}'
    with pytest.raises(ValidationError):
        EvaluateResponse.model_validate_json(raw)
    with pytest.raises(ValidationError):
        FitnessRequest.model_validate_json(raw.replace("NaN", "Infinity"))


def test_bad_handshake(tmp_path):
    with pytest.raises(ProtocolError):
        ExternalSut(stub(tmp_path, ECHO, handshake='print(json.dumps({"ok": False}))'), k=27, timeout=10)


def test_process_exit_is_a_transport_error(tmp_path):
    with ExternalSut(stub(tmp_path, "sys.exit(3)"), k=27, timeout=10) as ext:
        with pytest.raises(TransportError):
            ext.evaluate(ImageCharacteristics(0.0, 0.0, 0.0, 0))


def test_timeout_is_a_transport_error(tmp_path):
    with ExternalSut(stub(tmp_path, "time.sleep(30)"), k=27, timeout=0.5) as ext:
        with pytest.raises(TransportError):
            ext.evaluate(ImageCharacteristics(0.0, 0.0, 0.0, 0))


def test_missing_executable():
    with pytest.raises(TransportError):
        ExternalSut(["/nonexistent/sut-binary"], k=27)


def loopback(k: int = 27) -> ExternalSut:
    cmd = [sys.executable, "-m", "src.services.loopback", "--config", DEFAULT_CONFIG]
    return ExternalSut(cmd, k=k, timeout=60, cwd=REPO_ROOT)


def test_loopback_matches_in_process(sut, rng):
    with loopback() as ext:
        for _ in range(20):
            ic = ImageCharacteristics(*rng.uniform(-30, 30, 3), int(rng.integers(10)))
            remote, local = ext.evaluate(ic), sut.evaluate(ic)
            np.testing.assert_array_equal(remote.fitness, local.fitness)
            np.testing.assert_array_equal(remote.prediction.predicted, local.prediction.predicted)
            np.testing.assert_array_equal(remote.truth.visible, local.truth.visible)


def test_loopback_run_equals_in_process_run(default_config, sut):
    cfg = apply_overrides(default_config, evaluation_budget=27 * 3, seed=5).search
    local_archive, local_trace = run_search(cfg, sut)
    with loopback() as ext:
        remote_archive, remote_trace = run_search(cfg, ext)
    assert remote_trace.records == local_trace.records
    assert list(remote_archive.entries) == list(local_archive.entries)


def test_loopback_rejects_wrong_k():
    with pytest.raises(TransportError):
        loopback(k=5)
