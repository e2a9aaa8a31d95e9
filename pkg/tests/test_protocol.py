import json
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from resqsim import protocol
from resqsim.errors import ProtocolError, SchemaVersionError

FOV = {"conventional_deg": 60.0, "immersive_deg": 110.0, "range_m": 6.0}

finite = st.floats(allow_nan=False, allow_infinity=False, width=32).map(float)

message_strategy = st.one_of(
    st.builds(lambda m, s: protocol.make("hello", mode=m, scenario_id=s),
              st.sampled_from(protocol.MODES), st.text(max_size=16)),
    st.builds(
        lambda ok, sid, m, r: protocol.make("hello_ack", ok=ok, scenario_id=sid,
                                            mode=m, snapshot_rate=r),
        st.booleans(), st.text(max_size=12), st.sampled_from(protocol.MODES), finite,
    ),
    st.builds(
        lambda v, w, b, strap, t: protocol.command_message(v, w, b, strap, t),
        finite, finite, st.booleans(), st.booleans(), finite,
    ),
    st.builds(lambda seq, d: protocol.make("snapshot", seq=seq, data=d),
              st.integers(0, 10**9), st.dictionaries(st.text(max_size=8), finite, max_size=4)),
    st.builds(lambda t, p: protocol.make("phase_event", t=t, phase=p),
              finite, st.sampled_from(["PoseAdjustment", "Approaching", "Loading"])),
    st.builds(
        lambda t, n, v, lim: protocol.make("safety_event", t=t, name=n, value=v, limit=lim),
        finite, st.text(min_size=1, max_size=12), finite, finite,
    ),
    st.builds(lambda c, d: protocol.error_frame(c, d), st.text(max_size=8), st.text(max_size=32)),
    st.builds(lambda r: protocol.make("bye", reason=r), st.text(max_size=16)),
)


class TestCodec:
    @given(message_strategy)
    @settings(max_examples=300, deadline=None)
    def test_round_trip_identity(self, msg):
        assert protocol.decode(protocol.encode(msg)) == msg

    def test_truncated_frame_rejected_without_crash(self):
        frame = protocol.encode(protocol.command_message(0.1))
        with pytest.raises(ProtocolError):
            protocol.decode(frame[: len(frame) // 2])

    def test_unknown_type_rejected(self):
        with pytest.raises(ProtocolError, match="unknown message type"):
            protocol.decode(json.dumps({"type": "warp", "v": 1}))

    def test_version_mismatch_reports_supported_list(self):
        frame = json.dumps({"type": "bye", "v": 99, "reason": "x"})
        with pytest.raises(SchemaVersionError) as exc:
            protocol.decode(frame)
        assert exc.value.supported == [1]

    def test_missing_field_rejected(self):
        with pytest.raises(ProtocolError, match="missing field"):
            protocol.decode(json.dumps({"type": "bye", "v": 1}))

    def test_wrong_type_rejected(self):
        with pytest.raises(ProtocolError, match="wrong type"):
            protocol.decode(json.dumps({"type": "bye", "v": 1, "reason": 7}))

    def test_unknown_extra_fields_tolerated(self):
        msg = json.dumps({"type": "bye", "v": 1, "reason": "x", "future": True})
        assert protocol.decode(msg)["future"] is True


def full_snapshot(head_xy, pose=(0.0, 0.0, 0.0)):
    hx, hy = head_xy
    return {
        "t": 1.0,
        "phase": "Approaching",
        "contact": False,
        "robot": {"v_base": 0.05, "v_belt": -0.05, "omega": 0.0, "duty": 0.1,
                  "strap": "Open"},
        "pose": {"x": pose[0], "y": pose[1], "theta": pose[2]},
        "casualty": {"head": [hx, hy], "segments": [[hx, hy, hx + 0.7, hy],
                                                    [hx + 0.7, hy, hx + 1.6, hy]]},
        "onboard": 0.0,
        "safety": {"a": 0.0, "a_max": 0.0, "f_max": 22.94},
    }


class TestVisibility:
    def test_direct_mask_empty(self):
        snap = full_snapshot((1.0, 0.5))
        out = protocol.apply_visibility(snap, "direct", FOV)
        assert out["visible"] == ["casualty"]
        assert out["casualty"]["head"] == [1.0, 0.5]
        assert out["pose"] == snap["pose"]

    def test_bearing_outside_narrow_cone_absent(self):
        # 40 degrees off-axis at 2 m: outside the 60-degree cone (half 30)
        b = math.radians(40.0)
        snap = full_snapshot((2 * math.cos(b), 2 * math.sin(b)))
        out = protocol.apply_visibility(snap, "conventional", FOV)
        assert out["visible"] == []
        assert "casualty" not in out
        assert "pose" not in out

    def test_same_bearing_inside_wide_cone_with_depth(self):
        b = math.radians(40.0)
        snap = full_snapshot((2 * math.cos(b), 2 * math.sin(b)))
        out = protocol.apply_visibility(snap, "immersive", FOV)
        assert out["visible"] == ["casualty"]
        assert out["casualty"]["depth"] == pytest.approx(2.0)
        rel = out["casualty"]["rel"]
        assert math.hypot(*rel) == pytest.approx(2.0)

    def test_out_of_range_absent(self):
        snap = full_snapshot((FOV["range_m"] + 1.0, 0.0))
        out = protocol.apply_visibility(snap, "immersive", FOV)
        assert out["visible"] == []

    def test_conventional_has_no_depth(self):
        snap = full_snapshot((1.0, 0.0))
        out = protocol.apply_visibility(snap, "conventional", FOV)
        assert out["visible"] == ["casualty"]
        assert "depth" not in out["casualty"]
        assert "head" not in out["casualty"]

    @given(
        hx=st.floats(-8.0, 8.0),
        hy=st.floats(-8.0, 8.0),
        px=st.floats(-2.0, 2.0),
        py=st.floats(-2.0, 2.0),
        theta=st.floats(-math.pi, math.pi),
    )
    @settings(max_examples=200, deadline=None)
    def test_visibility_monotone_across_modes(self, hx, hy, px, py, theta):
        snap = full_snapshot((hx, hy), pose=(px, py, theta))
        seen = {
            mode: set(protocol.apply_visibility(snap, mode, FOV)["visible"])
            for mode in protocol.MODES
        }
        assert seen["conventional"] <= seen["immersive"] <= seen["direct"]

    def test_snapshot_message_under_size_limit(self):
        snap = full_snapshot((1.0, 0.2))
        for mode in protocol.MODES:
            masked = protocol.apply_visibility(snap, mode, FOV)
            frame = protocol.encode(protocol.make("snapshot", seq=123456, data=masked))
            assert len(frame.encode()) < 4096
