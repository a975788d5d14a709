"""
Fiat-Shamir transcripts.

A transcript absorbs labelled items (bytes, scalars, group elements) in a
fixed order and squeezes a challenge scalar. Prover and verifier must build
byte-identical transcripts, so every proof appends its public inputs in one
canonical order and each append carries its label and length.
"""

from typing import Iterable

from .group import Point
from .params import PublicParams


class Transcript:
    def __init__(self, params: PublicParams, protocol: bytes) -> None:
        self.params = params
        self._parts = [protocol, params.digest]

    def _append(self, label: bytes, data: bytes) -> "Transcript":
        self._parts.append(len(label).to_bytes(1, "little") + label)
        self._parts.append(len(data).to_bytes(4, "little") + data)
        return self

    def raw(self, label: bytes, data: bytes) -> "Transcript":
        return self._append(label, data)

    def scalar(self, label: bytes, value: int) -> "Transcript":
        return self._append(label, (value % self.params.order).to_bytes(32, "big"))

    def g1(self, label: bytes, point: Point) -> "Transcript":
        return self._append(label, self.params.group.g1_to_bytes(point))

    def g2(self, label: bytes, point: Point) -> "Transcript":
        return self._append(label, self.params.group.g2_to_bytes(point))

    def g1_many(self, label: bytes, points: Iterable[Point]) -> "Transcript":
        for point in points:
            self.g1(label, point)
        return self

    def challenge(self) -> int:
        return self.params.group.hash_to_scalar(b"zef/fiat-shamir", b"".join(self._parts))
