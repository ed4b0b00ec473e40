"""Serves the synthetic SUT over the external-process protocol.

    python -m src.services.loopback [--config config/default.yaml]

Useful as a reference implementation for real pipelines and to check that the
process adapter reproduces in-process runs exactly.
"""
from __future__ import annotations

import argparse
import sys
from typing import List, Optional, TextIO

from pydantic import ValidationError

from src.models import EvaluateResponse, Hello, HelloReply, IcRecord

from .data import ic_from_record, load_config
from .errors import InvalidInputError
from .sut import SyntheticSut


def _xy(arr) -> List[Optional[tuple]]:
    return [None if x != x else (float(x), float(y)) for x, y in arr]


def serve(sut: SyntheticSut, stdin: TextIO, stdout: TextIO) -> int:
    lines = (line.strip() for line in stdin)
    lines = (line for line in lines if line)

    first = next(lines, None)
    try:
        hello = Hello.model_validate_json(first or "")
    except ValidationError:
        print(f"loopback: bad handshake {first!r}", file=sys.stderr)
        return 2
    if hello.k != sut.k:
        print(f"loopback: caller expects k={hello.k}, SUT has k={sut.k}", file=sys.stderr)
        return 2
    stdout.write(HelloReply(ok=True).model_dump_json() + "\n")
    stdout.flush()

    for line in lines:
        try:
            ic = ic_from_record(IcRecord.model_validate_json(line))
            test = sut.evaluate(ic)
        except (ValidationError, InvalidInputError) as e:
            print(f"loopback: {e}", file=sys.stderr)
            return 1
        resp = EvaluateResponse(
            actual=_xy(test.truth.actual),
            predicted=[(float(x), float(y)) for x, y in test.prediction.predicted],
            face_width=test.truth.face_width,
            face_height=test.truth.face_height,
        )
        stdout.write(resp.model_dump_json() + "\n")
        stdout.flush()
    return 0


def main(argv: Optional[List[str]] = None) -> int:
    parser = argparse.ArgumentParser(prog="python -m src.services.loopback")
    parser.add_argument("--config", default=None, help="run config (YAML); defaults to config/default.yaml")
    args = parser.parse_args(argv)
    cfg = load_config(args.config)
    return serve(SyntheticSut.from_config(cfg), sys.stdin, sys.stdout)


if __name__ == "__main__":
    sys.exit(main())
