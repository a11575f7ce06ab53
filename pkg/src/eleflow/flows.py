"""Flow records and the heuristic elephant/mouse labeling policy.

A flow is labeled Elephant when it exceeds the configured duration,
packet-count and flow-byte thresholds (all three, under the default
rule). Mean packet size is tracked as an advisory signal and only
gates the label under the ``all-plus-packet-size`` rule, because the
mean shrinks as packet counts grow and would break monotonicity.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from enum import IntEnum
from typing import Iterable, Sequence

from .errors import ConfigError, DataError


class FlowLabel(IntEnum):
    """Binary flow class; serialized as 0/1 in the class column."""

    MOUSE = 0
    ELEPHANT = 1


_STAT_GROUPS = (
    ("fpktl_min", "fpktl_mean", "fpktl_max", "fpktl_std"),
    ("bpktl_min", "bpktl_mean", "bpktl_max", "bpktl_std"),
    ("fiat_min", "fiat_mean", "fiat_max", "fiat_std"),
    ("biat_min", "biat_mean", "biat_max", "biat_std"),
)


@dataclass(frozen=True)
class FlowRecord:
    """One bidirectional flow's statistical summary.

    Packet-length stats are bytes, inter-arrival stats are seconds,
    duration is seconds. A zero-packet flow is a valid (empty) flow.
    """

    duration: float = 0.0
    total_fpackets: int = 0
    total_bpackets: int = 0
    total_fvolume: int = 0
    total_bvolume: int = 0
    fpktl_min: float = 0.0
    fpktl_mean: float = 0.0
    fpktl_max: float = 0.0
    fpktl_std: float = 0.0
    bpktl_min: float = 0.0
    bpktl_mean: float = 0.0
    bpktl_max: float = 0.0
    bpktl_std: float = 0.0
    fiat_min: float = 0.0
    fiat_mean: float = 0.0
    fiat_max: float = 0.0
    fiat_std: float = 0.0
    biat_min: float = 0.0
    biat_mean: float = 0.0
    biat_max: float = 0.0
    biat_std: float = 0.0
    protocol: str = ""

    def __post_init__(self):
        for f in fields(self):
            if f.name == "protocol":
                continue
            value = getattr(self, f.name)
            if value < 0:
                raise DataError(f"{f.name} must be non-negative, got {value!r}")
        for lo, mid, hi, _std in _STAT_GROUPS:
            if not (getattr(self, lo) <= getattr(self, mid) <= getattr(self, hi)):
                raise DataError(f"stat group {lo[:-4]}: requires min <= mean <= max")
        if self.total_packets == 0:
            zeroed = [self.total_fvolume, self.total_bvolume]
            zeroed += [getattr(self, name) for group in _STAT_GROUPS[:2] for name in group]
            if any(v != 0 for v in zeroed):
                raise DataError("zero-packet flow must have zero volumes and length stats")

    @property
    def total_packets(self) -> int:
        return self.total_fpackets + self.total_bpackets

    @property
    def total_bytes(self) -> int:
        return self.total_fvolume + self.total_bvolume

    @property
    def mean_packet_size(self) -> float:
        """Bytes per packet over both directions; 0 for an empty flow."""
        if self.total_packets == 0:
            return 0.0
        return self.total_bytes / self.total_packets


#: Rule identifiers accepted by LabelingPolicy.combination.
#: all-exceeded          duration AND packets AND flow bytes (default)
#: all-plus-packet-size  all-exceeded AND mean packet size >= min_bytes_per_packet
#: any-exceeded          duration OR packets OR flow bytes
COMBINATION_RULES = ("all-exceeded", "all-plus-packet-size", "any-exceeded")


@dataclass(frozen=True)
class LabelingPolicy:
    """Thresholds for the elephant heuristics; comparisons are strict.

    Defaults: 10 s duration, 15 packets, 500 bytes/packet, 10 KB flow size.
    """

    min_duration: float = 10.0
    min_packets: int = 15
    min_bytes_per_packet: int = 500
    min_flow_bytes: int = 10240
    combination: str = "all-exceeded"

    def __post_init__(self):
        for name in ("min_duration", "min_packets", "min_bytes_per_packet", "min_flow_bytes"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be > 0")
        if self.combination not in COMBINATION_RULES:
            raise ConfigError(
                f"unknown combination rule {self.combination!r}; "
                f"expected one of {', '.join(COMBINATION_RULES)}"
            )

    @classmethod
    def from_file(cls, path) -> "LabelingPolicy":
        """Load a policy from a flat JSON key/value file.

        Unknown keys are rejected; missing keys keep their defaults.
        """
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
        if not isinstance(raw, dict):
            raise ConfigError(f"policy file {path}: expected a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"policy file {path}: unknown keys {sorted(unknown)}")
        return cls(**raw)


@dataclass(frozen=True)
class FlowDecision:
    """A label plus the advisory packet-size flag behind it."""

    label: FlowLabel
    mean_packet_size: float
    packet_size_ok: bool = field(default=False)


def decide_flow(record: FlowRecord, policy: LabelingPolicy = LabelingPolicy()) -> FlowDecision:
    """Apply the policy to one record, keeping the advisory flag."""
    long_lived = record.duration > policy.min_duration
    many_packets = record.total_packets > policy.min_packets
    big_flow = record.total_bytes > policy.min_flow_bytes
    fat_packets = record.mean_packet_size >= policy.min_bytes_per_packet

    if policy.combination == "all-exceeded":
        is_elephant = long_lived and many_packets and big_flow
    elif policy.combination == "all-plus-packet-size":
        is_elephant = long_lived and many_packets and big_flow and fat_packets
    else:  # any-exceeded
        is_elephant = long_lived or many_packets or big_flow

    label = FlowLabel.ELEPHANT if is_elephant else FlowLabel.MOUSE
    return FlowDecision(label=label, mean_packet_size=record.mean_packet_size,
                        packet_size_ok=fat_packets)


def label_flow(record: FlowRecord, policy: LabelingPolicy = LabelingPolicy()) -> FlowLabel:
    """Label one flow; total functions: every valid record gets a label."""
    return decide_flow(record, policy).label


def label_dataset(records: Iterable[FlowRecord],
                  policy: LabelingPolicy = LabelingPolicy()) -> list[FlowLabel]:
    """Label each record independently; output order matches input order."""
    return [label_flow(r, policy) for r in records]


def class_balance(labels: Sequence[FlowLabel]) -> dict[str, int]:
    """Count labels per class for summaries."""
    elephants = sum(1 for lab in labels if lab == FlowLabel.ELEPHANT)
    return {"elephant": elephants, "mouse": len(labels) - elephants}
