"""Ingestion tests: label parsing, transcripts, kinematics files, catalog."""

import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from surgact.dataset import (
    COLUMNS_PER_ARM,
    IDLE,
    Catalog,
    CatalogEntry,
    KinematicTrial,
    LabelTranscript,
    MotionPrimitiveLabel,
    Segment,
    arm_columns_at,
    both_arms_spec,
    build_catalog,
    densify,
    encode_frames,
    feature_spec_for_granularity,
    load_transcript,
    load_trial_kinematics,
    mp_verb,
    select_features,
    single_arm_spec,
    split_by_arm,
)
from surgact.errors import (
    ChannelMismatch,
    DataError,
    DuplicateColumn,
    DuplicateTrialKey,
    GapWithoutFill,
    IndexOutOfRange,
    InvalidConfig,
    MissingFile,
    MissingTranscript,
    NonNumericCell,
    OutOfOrderSegments,
    OverlappingSegments,
    RaggedRows,
    SegmentBeyondTrial,
    UnattributedSegment,
    UnknownLabel,
    UntiledTranscript,
)


class TestMotionPrimitiveLabel:
    def test_parse_full_label(self):
        mp = MotionPrimitiveLabel.parse("Grasp(L, Needle)")
        assert (mp.verb, mp.tool, mp.object) == ("Grasp", "L", "Needle")

    def test_parse_tolerates_spacing(self):
        mp = MotionPrimitiveLabel.parse("  Push( R ,  Block 2 ) ")
        assert (mp.verb, mp.tool, mp.object) == ("Push", "R", "Block 2")

    def test_parse_idle(self):
        mp = MotionPrimitiveLabel.parse("Idle")
        assert (mp.verb, mp.tool, mp.object) == ("Idle", "none", "")

    def test_format_round_trip(self):
        for text in ("Grasp(L, Needle)", "Release(R, Thread)", "Idle"):
            assert MotionPrimitiveLabel.parse(text).format() == text

    def test_unknown_verb(self):
        with pytest.raises(UnknownLabel):
            MotionPrimitiveLabel.parse("Juggle(L, Ball)")

    def test_unknown_tool_side(self):
        with pytest.raises(UnknownLabel):
            MotionPrimitiveLabel.parse("Grasp(M, Needle)")

    def test_idle_takes_no_arguments(self):
        with pytest.raises(UnknownLabel):
            MotionPrimitiveLabel(verb="Idle", tool="L", object="x")

    def test_unparseable(self):
        with pytest.raises(UnknownLabel):
            MotionPrimitiveLabel.parse("123")

    def test_mp_verb(self):
        assert mp_verb("Push(R, Block)") == "Push"
        assert mp_verb("Idle") == "Idle"


class TestSegment:
    def test_inclusive_frame_count(self):
        assert Segment(0, 29, "A").num_frames == 30
        assert Segment(5, 5, "A").num_frames == 1

    def test_reversed_range(self):
        with pytest.raises(OutOfOrderSegments):
            Segment(10, 9, "A")

    def test_negative_start(self):
        with pytest.raises(OutOfOrderSegments):
            Segment(-1, 5, "A")


def transcript(segments, length, granularity="mp", vocabulary=None):
    if vocabulary is None:
        vocabulary = tuple(sorted({s.label for s in segments}))
    return LabelTranscript(granularity=granularity, vocabulary=tuple(vocabulary),
                           segments=tuple(segments), length=length)


class TestLabelTranscript:
    def test_valid(self):
        tr = transcript([Segment(0, 4, "A"), Segment(10, 14, "B")], 20)
        assert tr.labels_present == {"A", "B"}
        assert tr.labeled_frame_count == 10

    def test_label_outside_vocabulary(self):
        with pytest.raises(UnknownLabel):
            transcript([Segment(0, 4, "A")], 10, vocabulary=("B",))

    def test_segment_beyond_length(self):
        with pytest.raises(SegmentBeyondTrial):
            transcript([Segment(0, 10, "A")], 10)

    def test_overlap(self):
        with pytest.raises(OverlappingSegments):
            transcript([Segment(0, 5, "A"), Segment(5, 9, "B")], 10)

    def test_out_of_order(self):
        with pytest.raises(OutOfOrderSegments):
            transcript([Segment(5, 9, "A"), Segment(0, 4, "B")], 10)

    def test_per_arm_must_tile(self):
        with pytest.raises(UntiledTranscript):
            transcript([Segment(0, 4, "A")], 10, granularity="mp-left")
        with pytest.raises(UntiledTranscript):
            transcript([Segment(2, 9, "A")], 10, granularity="mp-left")

    def test_per_arm_tiled_ok(self):
        tr = transcript([Segment(0, 4, "A"), Segment(5, 9, "B")], 10,
                        granularity="mp-right")
        assert tr.labeled_frame_count == 10

    def test_duplicate_vocabulary(self):
        with pytest.raises(DataError):
            transcript([Segment(0, 4, "A")], 10, vocabulary=("A", "A"))

    def test_bad_granularity(self):
        with pytest.raises(InvalidConfig):
            transcript([Segment(0, 4, "A")], 10, granularity="frame")


class TestLoadTranscript:
    VOCAB = ("Grasp(L, Needle)", "Push(R, Block)", "Idle")

    def test_labels_may_contain_spaces(self, tmp_path):
        p = tmp_path / "t.txt"
        p.write_text("0 29 Grasp(L, Needle)\n\n30 59 Push(R, Block)\n")
        tr = load_transcript(p, self.VOCAB, 60)
        assert tr.segments == (Segment(0, 29, "Grasp(L, Needle)"),
                               Segment(30, 59, "Push(R, Block)"))

    def test_missing_file(self, tmp_path):
        with pytest.raises(MissingFile):
            load_transcript(tmp_path / "nope.txt", self.VOCAB, 60)

    def test_short_row(self, tmp_path):
        p = tmp_path / "t.txt"
        p.write_text("0 29\n")
        with pytest.raises(RaggedRows):
            load_transcript(p, self.VOCAB, 60)

    def test_non_integer_frame(self, tmp_path):
        p = tmp_path / "t.txt"
        p.write_text("0 x Idle\n")
        with pytest.raises(NonNumericCell):
            load_transcript(p, self.VOCAB, 60)

    def test_unknown_label(self, tmp_path):
        p = tmp_path / "t.txt"
        p.write_text("0 29 Wave(L, Hand)\n")
        with pytest.raises(UnknownLabel):
            load_transcript(p, self.VOCAB, 60)

    def test_segment_beyond_trial(self, tmp_path):
        p = tmp_path / "t.txt"
        p.write_text("0 60 Idle\n")
        with pytest.raises(SegmentBeyondTrial):
            load_transcript(p, self.VOCAB, 60)

    def test_overlap_rejected_by_default(self, tmp_path):
        p = tmp_path / "t.txt"
        p.write_text("0 10 Idle\n5 20 Push(R, Block)\n")
        with pytest.raises(OverlappingSegments):
            load_transcript(p, self.VOCAB, 60)

    def test_overlap_earliest_keeps_contested_frames(self, tmp_path):
        p = tmp_path / "t.txt"
        p.write_text("0 10 Idle\n5 20 Push(R, Block)\n")
        tr = load_transcript(p, self.VOCAB, 60, overlap_policy="earliest")
        assert tr.segments == (Segment(0, 10, "Idle"),
                               Segment(11, 20, "Push(R, Block)"))

    def test_overlap_earliest_drops_swallowed_segment(self, tmp_path):
        p = tmp_path / "t.txt"
        p.write_text("0 10 Idle\n2 6 Push(R, Block)\n")
        tr = load_transcript(p, self.VOCAB, 60, overlap_policy="earliest")
        assert tr.segments == (Segment(0, 10, "Idle"),)

    def test_unknown_policy(self, tmp_path):
        p = tmp_path / "t.txt"
        p.write_text("0 1 Idle\n")
        with pytest.raises(InvalidConfig):
            load_transcript(p, self.VOCAB, 60, overlap_policy="latest")


class TestDensifyAndEncode:
    def test_densify_tiled(self):
        tr = transcript([Segment(0, 1, "A"), Segment(2, 3, "B")], 4)
        assert densify(tr) == ["A", "A", "B", "B"]

    def test_densify_fills_gaps(self):
        tr = transcript([Segment(1, 2, "A")], 5)
        assert densify(tr, fill="-") == ["-", "A", "A", "-", "-"]

    def test_densify_gap_without_fill(self):
        tr = transcript([Segment(1, 2, "A")], 5)
        with pytest.raises(GapWithoutFill):
            densify(tr)

    def test_encode_with_fill(self):
        tr = transcript([Segment(1, 2, "A")], 4)
        ids, mask = encode_frames(tr, {"A": 1, IDLE: 0}, fill=IDLE)
        np.testing.assert_array_equal(ids, [0, 1, 1, 0])
        assert mask.all()

    def test_encode_without_fill_masks_gaps(self):
        tr = transcript([Segment(1, 2, "A")], 4)
        ids, mask = encode_frames(tr, {"A": 1})
        np.testing.assert_array_equal(ids, [0, 1, 1, 0])
        np.testing.assert_array_equal(mask, [False, True, True, False])

    def test_encode_unknown_fill(self):
        tr = transcript([Segment(0, 3, "A")], 4)
        with pytest.raises(UnknownLabel):
            encode_frames(tr, {"A": 0}, fill="B")

    def test_encode_unmapped_label(self):
        tr = transcript([Segment(0, 3, "A")], 4)
        with pytest.raises(UnknownLabel):
            encode_frames(tr, {"B": 0})


GRASP_L = "Grasp(L, Needle)"
PUSH_R = "Push(R, Block)"
TOUCH_L = "Touch(L, Fabric)"


class TestSplitByArm:
    def test_worked_example(self):
        tr = transcript([Segment(0, 29, GRASP_L), Segment(30, 59, PUSH_R)], 60,
                        vocabulary=(GRASP_L, PUSH_R))
        left, right = split_by_arm(tr)
        assert left.granularity == "mp-left"
        assert left.segments == (Segment(0, 29, GRASP_L), Segment(30, 59, IDLE))
        assert right.segments == (Segment(0, 29, IDLE), Segment(30, 59, PUSH_R))
        assert IDLE in left.vocabulary and IDLE in right.vocabulary

    def test_idle_source_segments_dropped(self):
        tr = transcript(
            [Segment(0, 9, GRASP_L), Segment(10, 19, IDLE), Segment(20, 29, GRASP_L)],
            30, vocabulary=(GRASP_L, IDLE))
        left, right = split_by_arm(tr)
        assert left.segments == (Segment(0, 9, GRASP_L), Segment(10, 19, IDLE),
                                 Segment(20, 29, GRASP_L))
        assert right.segments == (Segment(0, 29, IDLE),)

    def test_adjacent_same_label_segments_merge(self):
        tr = transcript([Segment(0, 9, GRASP_L), Segment(10, 19, GRASP_L)], 20,
                        vocabulary=(GRASP_L,))
        left, _ = split_by_arm(tr)
        assert left.segments == (Segment(0, 19, GRASP_L),)

    def test_frame_count_extends_tail(self):
        tr = transcript([Segment(0, 9, GRASP_L)], 10, vocabulary=(GRASP_L,))
        left, right = split_by_arm(tr, frame_count=16)
        assert left.length == 16
        assert left.segments == (Segment(0, 9, GRASP_L), Segment(10, 15, IDLE))
        assert right.segments == (Segment(0, 15, IDLE),)

    def test_frame_count_cannot_shrink(self):
        tr = transcript([Segment(0, 9, GRASP_L)], 10, vocabulary=(GRASP_L,))
        with pytest.raises(DataError):
            split_by_arm(tr, frame_count=9)

    def test_only_combined_transcripts(self):
        tr = transcript([Segment(0, 9, "G1")], 10, granularity="gesture")
        with pytest.raises(InvalidConfig):
            split_by_arm(tr)

    def test_toolless_segment_rejected(self):
        tr = transcript([Segment(0, 9, "Touch")], 10, vocabulary=("Touch",))
        with pytest.raises(UnattributedSegment):
            split_by_arm(tr)

    @given(st.lists(st.tuples(st.sampled_from([GRASP_L, PUSH_R, TOUCH_L, IDLE]),
                              st.integers(1, 6)),
                    min_size=1, max_size=10))
    def test_split_preserves_every_frame(self, runs):
        # build a tiled transcript, then check the per-arm view frame by frame
        segments = []
        pos = 0
        for label, n in runs:
            if segments and segments[-1].label == label:
                prev = segments.pop()
                segments.append(Segment(prev.start, prev.end + n, label))
            else:
                segments.append(Segment(pos, pos + n - 1, label))
            pos += n
        tr = transcript(segments, pos, vocabulary=(GRASP_L, PUSH_R, TOUCH_L, IDLE))
        left, right = split_by_arm(tr)
        dense = densify(tr)
        dense_left = densify(left)
        dense_right = densify(right)
        for f in range(pos):
            label = dense[f]
            side = "none" if label == IDLE else MotionPrimitiveLabel.parse(label).tool
            assert dense_left[f] == (label if side == "L" else IDLE)
            assert dense_right[f] == (label if side == "R" else IDLE)


class TestKinematics:
    def test_loads_mixed_delimiters(self, tmp_path):
        p = tmp_path / "k.txt"
        p.write_text("1.0 2.0, 3.0\n4,5,6\n")
        trial = load_trial_kinematics(p, task="T", subject="S", trial="1")
        np.testing.assert_allclose(trial.data, [[1, 2, 3], [4, 5, 6]])
        assert trial.data.dtype == np.float64
        assert trial.key == ("T", "S", "1")

    def test_data_is_read_only(self, tmp_path):
        p = tmp_path / "k.txt"
        p.write_text("1 2\n")
        trial = load_trial_kinematics(p)
        with pytest.raises(ValueError):
            trial.data[0, 0] = 9.0

    def test_ragged_rows(self, tmp_path):
        p = tmp_path / "k.txt"
        p.write_text("1 2 3\n4 5\n")
        with pytest.raises(RaggedRows, match="k.txt:2"):
            load_trial_kinematics(p)

    def test_non_numeric_cell_with_location(self, tmp_path):
        p = tmp_path / "k.txt"
        p.write_text("1 2\n3 oops\n")
        with pytest.raises(NonNumericCell, match="k.txt:2: column 1"):
            load_trial_kinematics(p)

    def test_non_finite_cell(self, tmp_path):
        p = tmp_path / "k.txt"
        p.write_text("1 nan\n")
        with pytest.raises(NonNumericCell):
            load_trial_kinematics(p)

    def test_empty_file(self, tmp_path):
        p = tmp_path / "k.txt"
        p.write_text("\n\n")
        with pytest.raises(DataError):
            load_trial_kinematics(p)

    def test_missing_file(self, tmp_path):
        with pytest.raises(MissingFile):
            load_trial_kinematics(tmp_path / "nope.txt")

    def test_channel_check(self, tmp_path):
        p = tmp_path / "k.txt"
        p.write_text("1 2 3\n")
        with pytest.raises(ChannelMismatch):
            load_trial_kinematics(p, expected_channels=38)

    def test_duration(self):
        trial = KinematicTrial(task="T", subject="S", trial="1",
                               data=np.zeros((60, 2)), sample_rate=30.0)
        assert trial.duration_seconds == pytest.approx(2.0)


class TestFeatureSelection:
    def test_both_arms_columns(self):
        # per arm: position 0-2, linear velocity 12-14, gripper 18
        assert both_arms_spec().columns() == (
            0, 1, 2, 12, 13, 14, 18,
            19, 20, 21, 31, 32, 33, 37)

    def test_single_arm_offsets(self):
        assert single_arm_spec("L").columns() == (0, 1, 2, 12, 13, 14, 18)
        assert single_arm_spec("R").columns() == tuple(
            c + COLUMNS_PER_ARM for c in (0, 1, 2, 12, 13, 14, 18))

    def test_granularity_defaults(self):
        assert feature_spec_for_granularity("gesture").num_features == 14
        assert feature_spec_for_granularity("mp").num_features == 14
        assert feature_spec_for_granularity("mp-left").num_features == 7
        assert feature_spec_for_granularity("mp-right").num_features == 7

    def test_select_is_bit_exact(self):
        rng = np.random.default_rng(3)
        trial = KinematicTrial(task="T", subject="S", trial="1",
                               data=rng.normal(size=(5, 38)))
        spec = both_arms_spec()
        got = select_features(trial, spec)
        np.testing.assert_array_equal(got, trial.data[:, list(spec.columns())])
        assert got.shape == (5, 14)

    def test_out_of_range_column(self):
        trial = KinematicTrial(task="T", subject="S", trial="1",
                               data=np.zeros((3, 10)))
        with pytest.raises(IndexOutOfRange):
            select_features(trial, both_arms_spec())

    def test_duplicate_column(self):
        trial = KinematicTrial(task="T", subject="S", trial="1",
                               data=np.zeros((3, 38)))
        spec = both_arms_spec(left_offset=0, right_offset=0)
        with pytest.raises(DuplicateColumn):
            select_features(trial, spec)

    def test_bad_side(self):
        with pytest.raises(InvalidConfig):
            single_arm_spec("both")

    def test_arm_columns_at_offset(self):
        arm = arm_columns_at(19)
        assert arm.position == (19, 20, 21)
        assert arm.linear_velocity == (31, 32, 33)
        assert arm.gripper == 37


def entry(dataset="JIGSAWS", task="S", subject="B", trial="001",
          granularities=("gesture", "mp")):
    from pathlib import Path
    return CatalogEntry(
        dataset=dataset, task=task, subject=subject, trial=trial,
        kinematics=Path(f"/x/{task}_{subject}_{trial}.txt"),
        transcripts=tuple((g, Path(f"/x/{task}_{subject}_{trial}_{g}.txt"))
                          for g in granularities))


class TestCatalog:
    def test_keys(self):
        e = entry()
        assert e.key == ("S", "B", "001")
        assert e.subject_key == ("JIGSAWS", "B")
        assert e.transcript_path("gesture") is not None
        assert e.transcript_path("mp-left") is None

    def test_duplicate_key(self):
        with pytest.raises(DuplicateTrialKey):
            Catalog(entries=(entry(), entry()))

    def test_rosma_cannot_declare_gestures(self):
        with pytest.raises(DataError):
            Catalog(entries=(entry(dataset="ROSMA", task="PaS"),))

    def test_queries(self):
        cat = Catalog(entries=(
            entry(task="S", subject="B"),
            entry(task="S", subject="C"),
            entry(task="NP", subject="B", granularities=("mp",)),
        ))
        assert cat.tasks() == ("NP", "S")
        assert len(cat.entries_for_tasks(["S"])) == 2
        assert cat.subject_keys(["S"]) == (("JIGSAWS", "B"), ("JIGSAWS", "C"))
        assert cat.datasets_of_tasks(["S", "NP"]) == {"JIGSAWS"}
        assert cat.task_has_granularity("S", "gesture")
        assert not cat.task_has_granularity("NP", "gesture")
        assert not cat.task_has_granularity("KT", "mp")

    def test_get_unknown_trial(self):
        cat = Catalog(entries=(entry(),))
        with pytest.raises(DataError):
            cat.get("S", "B", "999")


class TestBuildCatalog:
    def write_corpus(self, root):
        (root / "k.txt").write_text("1 2\n3 4\n")
        (root / "t.txt").write_text("0 1 G1\n")
        manifest = {
            "sample_rate": 30.0,
            "entries": [{
                "dataset": "JIGSAWS", "task": "S", "subject": "B",
                "trial": "001", "kinematics": "k.txt",
                "transcripts": {"gesture": "t.txt"},
            }],
        }
        mp = root / "manifest.json"
        mp.write_text(json.dumps(manifest))
        return mp

    def test_builds_and_resolves_paths(self, tmp_path):
        cat = build_catalog(self.write_corpus(tmp_path))
        assert len(cat.entries) == 1
        e = cat.entries[0]
        assert e.kinematics == tmp_path / "k.txt"
        assert e.transcript_path("gesture") == tmp_path / "t.txt"

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(MissingFile):
            build_catalog(tmp_path / "nope.json")

    def test_invalid_json(self, tmp_path):
        mp = tmp_path / "manifest.json"
        mp.write_text("{not json")
        with pytest.raises(DataError):
            build_catalog(mp)

    def test_missing_kinematics_file(self, tmp_path):
        mp = self.write_corpus(tmp_path)
        (tmp_path / "k.txt").unlink()
        with pytest.raises(MissingFile):
            build_catalog(mp)

    def test_missing_transcript_file(self, tmp_path):
        mp = self.write_corpus(tmp_path)
        (tmp_path / "t.txt").unlink()
        with pytest.raises(MissingTranscript):
            build_catalog(mp)

    def test_malformed_entry(self, tmp_path):
        mp = tmp_path / "manifest.json"
        mp.write_text(json.dumps({"entries": [{"dataset": "X"}]}))
        with pytest.raises(DataError):
            build_catalog(mp)

    def test_non_list_entries(self, tmp_path):
        mp = tmp_path / "manifest.json"
        mp.write_text(json.dumps({"entries": 5}))
        with pytest.raises(DataError):
            build_catalog(mp)
