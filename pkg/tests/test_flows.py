import json

import pytest
from hypothesis import given, strategies as st

from eleflow.errors import ConfigError, DataError
from eleflow.flows import (
    FlowLabel,
    FlowRecord,
    LabelingPolicy,
    class_balance,
    decide_flow,
    label_dataset,
    label_flow,
)


def record(duration=0.0, packets=0, nbytes=0):
    return FlowRecord(duration=duration, total_fpackets=packets, total_fvolume=nbytes)


ELEPHANT = record(duration=12.0, packets=200, nbytes=150_000)
MOUSE = record(duration=0.5, packets=3, nbytes=900)


class TestLabelFlow:
    def test_clear_elephant(self):
        # every default gate exceeded: 12>10, 200>15, 150000>10240
        assert label_flow(ELEPHANT) == FlowLabel.ELEPHANT

    def test_clear_mouse(self):
        assert label_flow(MOUSE) == FlowLabel.MOUSE

    def test_empty_flow_is_mouse(self):
        assert label_flow(record()) == FlowLabel.MOUSE

    def test_boundary_values_are_mouse(self):
        # thresholds are strict: equality stays mouse
        at_threshold = record(duration=10.0, packets=15, nbytes=10240)
        assert label_flow(at_threshold) == FlowLabel.MOUSE

    def test_conjunction_needs_every_gate(self):
        assert label_flow(record(duration=12.0, packets=200, nbytes=900)) == FlowLabel.MOUSE
        assert label_flow(record(duration=12.0, packets=3, nbytes=150_000)) == FlowLabel.MOUSE
        assert label_flow(record(duration=0.5, packets=200, nbytes=150_000)) == FlowLabel.MOUSE

    def test_mean_packet_size_is_advisory_not_gate(self):
        # 150000/200 = 750 >= 500 -> ok flag; label unchanged either way
        decision = decide_flow(ELEPHANT)
        assert decision.packet_size_ok
        thin = record(duration=12.0, packets=2000, nbytes=150_000)  # 75 B/packet
        assert label_flow(thin) == FlowLabel.ELEPHANT
        assert not decide_flow(thin).packet_size_ok

    def test_packet_size_gate_rule(self):
        thin = record(duration=12.0, packets=2000, nbytes=150_000)
        policy = LabelingPolicy(combination="all-plus-packet-size")
        assert label_flow(thin, policy) == FlowLabel.MOUSE
        assert label_flow(ELEPHANT, policy) == FlowLabel.ELEPHANT

    def test_any_exceeded_rule(self):
        policy = LabelingPolicy(combination="any-exceeded")
        assert label_flow(record(duration=12.0), policy) == FlowLabel.ELEPHANT
        assert label_flow(record(), policy) == FlowLabel.MOUSE


class TestLabelDataset:
    def test_empty(self):
        assert label_dataset([]) == []

    def test_per_element(self):
        assert label_dataset([ELEPHANT, MOUSE]) == [FlowLabel.ELEPHANT, FlowLabel.MOUSE]

    def test_pointwise_consistency(self):
        records = [ELEPHANT, MOUSE, record(), record(duration=11.0, packets=16, nbytes=10241)]
        assert label_dataset(records) == [label_flow(r) for r in records]

    def test_idempotent_relabeling(self):
        records = [ELEPHANT, MOUSE]
        once = label_dataset(records)
        assert label_dataset(records) == once

    def test_class_balance(self):
        balance = class_balance(label_dataset([ELEPHANT, MOUSE, MOUSE]))
        assert balance == {"elephant": 1, "mouse": 2}


@st.composite
def flows(draw):
    duration = draw(st.floats(0, 1e4, allow_nan=False))
    packets = draw(st.integers(0, 10**6))
    nbytes = draw(st.integers(0, 10**9)) if packets else 0
    return record(duration, packets, nbytes)

bumps = st.tuples(st.floats(0, 1e4, allow_nan=False),
                  st.integers(0, 10**6), st.integers(0, 10**9))


@given(flows(), bumps)
def test_monotonic_under_default_policy(r, bump):
    # growing duration/packets/bytes never demotes an elephant
    d_dur, d_pkt, d_byte = bump
    bigger = record(duration=r.duration + d_dur,
                    packets=r.total_fpackets + d_pkt,
                    nbytes=r.total_fvolume + d_byte)
    if label_flow(r) == FlowLabel.ELEPHANT:
        assert label_flow(bigger) == FlowLabel.ELEPHANT


class TestValidation:
    def test_negative_field_rejected(self):
        with pytest.raises(DataError):
            FlowRecord(duration=-1.0)

    def test_stat_order_enforced(self):
        with pytest.raises(DataError):
            FlowRecord(total_fpackets=2, total_fvolume=10,
                       fpktl_min=5.0, fpktl_mean=3.0, fpktl_max=9.0)

    def test_zero_packet_flow_must_be_empty(self):
        with pytest.raises(DataError):
            FlowRecord(total_fvolume=100)

    def test_zero_packet_flow_valid_when_empty(self):
        assert FlowRecord().mean_packet_size == 0.0

    def test_policy_thresholds_positive(self):
        with pytest.raises(ConfigError):
            LabelingPolicy(min_packets=0)

    def test_policy_unknown_rule(self):
        with pytest.raises(ConfigError):
            LabelingPolicy(combination="sometimes")


class TestPolicyFile:
    def test_defaults_match_documented_heuristics(self):
        policy = LabelingPolicy()
        assert policy.min_duration == 10.0
        assert policy.min_packets == 15
        assert policy.min_bytes_per_packet == 500
        assert policy.min_flow_bytes == 10240

    def test_load(self, tmp_path):
        path = tmp_path / "policy.json"
        path.write_text(json.dumps({"min_duration": 5, "combination": "any-exceeded"}))
        policy = LabelingPolicy.from_file(path)
        assert policy.min_duration == 5
        assert policy.combination == "any-exceeded"
        assert policy.min_packets == 15  # untouched default

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "policy.json"
        path.write_text(json.dumps({"min_elephants": 2}))
        with pytest.raises(ConfigError):
            LabelingPolicy.from_file(path)
