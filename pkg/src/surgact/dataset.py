"""Kinematic trial ingestion, label transcripts, and the trial catalog.

A trial is a fixed-rate multichannel recording stored as delimiter-separated
numeric text, one row per frame. Labels arrive as transcripts: ordered
`start end label` records over inclusive frame ranges. Motion-primitive (MP)
labels are strings like ``Grasp(L, Needle)``; gesture labels are opaque
strings. A catalog maps (task, subject, trial) keys to the files on disk.

Frame indexing is 0-based and segment ranges are inclusive on both ends, so
a segment (start=0, end=29) covers 30 frames.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .errors import (
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

GRANULARITIES = ("gesture", "mp", "mp-left", "mp-right")

MP_VERBS = ("Grasp", "Release", "Touch", "Untouch", "Pull", "Push")
IDLE = "Idle"

DEFAULT_SAMPLE_RATE = 30.0

# One arm contributes 19 columns in the standard export: tool position (3),
# rotation matrix (9), linear velocity (3), angular velocity (3), gripper
# angle (1). Two arms, left first, give 38 columns total.
COLUMNS_PER_ARM = 19

TrialKey = tuple[str, str, str]


# ---------------------------------------------------------------------------
# labels

_MP_PATTERN = re.compile(r"^\s*([A-Za-z]+)\s*(?:\(\s*([^,()]*?)\s*,\s*([^()]*?)\s*\))?\s*$")


@dataclass(frozen=True)
class MotionPrimitiveLabel:
    """Structured MP label: verb, acting tool side, manipulated object."""

    verb: str
    tool: str = "none"
    object: str = ""

    def __post_init__(self):
        if self.verb != IDLE and self.verb not in MP_VERBS:
            raise UnknownLabel(f"unknown motion primitive verb: {self.verb!r}")
        if self.tool not in ("L", "R", "none"):
            raise UnknownLabel(f"unknown tool side: {self.tool!r}")
        if self.verb == IDLE and (self.tool != "none" or self.object):
            raise UnknownLabel("Idle takes no tool or object")

    @classmethod
    def parse(cls, text: str) -> "MotionPrimitiveLabel":
        m = _MP_PATTERN.match(text)
        if not m:
            raise UnknownLabel(f"cannot parse motion primitive label: {text!r}")
        verb, tool, obj = m.group(1), m.group(2), m.group(3)
        if tool is None:
            return cls(verb=verb)
        return cls(verb=verb, tool=tool, object=obj)

    def format(self) -> str:
        if self.tool == "none" and not self.object:
            return self.verb
        return f"{self.verb}({self.tool}, {self.object})"


def mp_verb(label: str) -> str:
    """Collapse an MP label string to its verb (used for verb-level scoring)."""
    return MotionPrimitiveLabel.parse(label).verb


# ---------------------------------------------------------------------------
# transcripts

@dataclass(frozen=True, order=True)
class Segment:
    """Inclusive labeled frame range [start, end]."""

    start: int
    end: int
    label: str

    def __post_init__(self):
        if self.start < 0:
            raise OutOfOrderSegments(f"segment start must be >= 0, got {self.start}")
        if self.end < self.start:
            raise OutOfOrderSegments(
                f"segment end {self.end} precedes start {self.start}")

    @property
    def num_frames(self) -> int:
        return self.end - self.start + 1


@dataclass(frozen=True)
class LabelTranscript:
    """Ordered non-overlapping segments over a trial of `length` frames.

    Per-arm granularities (mp-left, mp-right) must tile the trial exactly:
    every frame labeled, no gaps, because the arm models are trained on
    every frame. Gesture and combined-MP transcripts may leave gaps.
    """

    granularity: str
    vocabulary: tuple[str, ...]
    segments: tuple[Segment, ...]
    length: int

    def __post_init__(self):
        if self.granularity not in GRANULARITIES:
            raise InvalidConfig(f"unknown granularity: {self.granularity!r}")
        if self.length < 1:
            raise DataError(f"transcript length must be >= 1, got {self.length}")
        if not self.vocabulary:
            raise DataError("vocabulary must not be empty")
        if len(set(self.vocabulary)) != len(self.vocabulary):
            raise DataError("vocabulary contains duplicates")
        vocab = set(self.vocabulary)
        prev: Optional[Segment] = None
        for seg in self.segments:
            if seg.label not in vocab:
                raise UnknownLabel(f"label {seg.label!r} not in vocabulary")
            if seg.end >= self.length:
                raise SegmentBeyondTrial(
                    f"segment [{seg.start}, {seg.end}] exceeds trial length {self.length}")
            if prev is not None:
                if seg.start <= prev.start:
                    raise OutOfOrderSegments(
                        f"segment at {seg.start} does not follow segment at {prev.start}")
                if seg.start <= prev.end:
                    raise OverlappingSegments(
                        f"segment [{seg.start}, {seg.end}] overlaps [{prev.start}, {prev.end}]")
            prev = seg
        if self.granularity in ("mp-left", "mp-right"):
            pos = 0
            for seg in self.segments:
                if seg.start != pos:
                    raise UntiledTranscript(
                        f"{self.granularity} transcript leaves frames "
                        f"[{pos}, {seg.start - 1}] unlabeled")
                pos = seg.end + 1
            if pos != self.length:
                raise UntiledTranscript(
                    f"{self.granularity} transcript leaves frames "
                    f"[{pos}, {self.length - 1}] unlabeled")

    @property
    def labels_present(self) -> frozenset[str]:
        return frozenset(seg.label for seg in self.segments)

    @property
    def labeled_frame_count(self) -> int:
        return sum(seg.num_frames for seg in self.segments)


def _resolve_overlaps_keep_earliest(segments: list[Segment]) -> list[Segment]:
    # earliest start keeps the contested frames; a swallowed segment is dropped
    out: list[Segment] = []
    for seg in segments:
        if out and seg.start <= out[-1].end:
            new_start = out[-1].end + 1
            if new_start > seg.end:
                continue
            seg = Segment(new_start, seg.end, seg.label)
        out.append(seg)
    return out


def load_transcript(
    path,
    vocabulary: Sequence[str],
    trial_length: int,
    granularity: str = "mp",
    overlap_policy: str = "reject",
) -> LabelTranscript:
    """Parse a `start end label` transcript file.

    Records must be ordered by start frame. Overlaps are rejected unless
    overlap_policy="earliest", in which case the earlier-started segment
    keeps the contested frames (the rule used when combining per-arm
    annotations into one bimanual transcript).
    """
    if overlap_policy not in ("reject", "earliest"):
        raise InvalidConfig(f"unknown overlap_policy: {overlap_policy!r}")
    p = Path(path)
    if not p.is_file():
        raise MissingFile(f"transcript file not found: {p}")
    vocab = set(vocabulary)
    segments: list[Segment] = []
    prev: Optional[Segment] = None
    for lineno, raw in enumerate(p.read_text().splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        parts = line.split(None, 2)
        if len(parts) != 3:
            raise RaggedRows(f"{p}:{lineno}: expected 'start end label', got {raw!r}")
        try:
            start, end = int(parts[0]), int(parts[1])
        except ValueError:
            raise NonNumericCell(f"{p}:{lineno}: frame indices must be integers")
        label = parts[2].strip()
        if label not in vocab:
            raise UnknownLabel(f"{p}:{lineno}: label {label!r} not in vocabulary")
        if start < 0 or end < start:
            raise OutOfOrderSegments(f"{p}:{lineno}: bad segment range [{start}, {end}]")
        if end >= trial_length:
            raise SegmentBeyondTrial(
                f"{p}:{lineno}: segment [{start}, {end}] exceeds trial length {trial_length}")
        seg = Segment(start, end, label)
        if prev is not None:
            if seg.start <= prev.start:
                raise OutOfOrderSegments(
                    f"{p}:{lineno}: segment starts must increase "
                    f"({seg.start} after {prev.start})")
            if seg.start <= prev.end and overlap_policy == "reject":
                raise OverlappingSegments(
                    f"{p}:{lineno}: segment [{seg.start}, {seg.end}] overlaps "
                    f"[{prev.start}, {prev.end}]")
        segments.append(seg)
        prev = seg
    if overlap_policy == "earliest":
        segments = _resolve_overlaps_keep_earliest(segments)
    return LabelTranscript(
        granularity=granularity,
        vocabulary=tuple(vocabulary),
        segments=tuple(segments),
        length=trial_length,
    )


def densify(transcript: LabelTranscript, fill: Optional[str] = None) -> list[str]:
    """Expand segments to one label per frame.

    Frames not covered by any segment take `fill`; with fill=None any gap is
    an error.
    """
    out: list[str] = []
    pos = 0
    for seg in transcript.segments:
        if seg.start > pos:
            if fill is None:
                raise GapWithoutFill(
                    f"frames [{pos}, {seg.start - 1}] are unlabeled and no fill "
                    f"label was given")
            out.extend([fill] * (seg.start - pos))
        out.extend([seg.label] * seg.num_frames)
        pos = seg.end + 1
    if pos < transcript.length:
        if fill is None:
            raise GapWithoutFill(
                f"frames [{pos}, {transcript.length - 1}] are unlabeled and no "
                f"fill label was given")
        out.extend([fill] * (transcript.length - pos))
    return out


def encode_frames(
    transcript: LabelTranscript,
    label_to_id: Mapping[str, int],
    fill: Optional[str] = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Per-frame integer targets plus a validity mask.

    With a fill label every frame is valid. Without one, uncovered frames get
    target 0 and mask False so the loss and the metrics can skip them.
    """
    ids = np.zeros(transcript.length, dtype=np.int64)
    mask = np.zeros(transcript.length, dtype=bool)
    if fill is not None:
        if fill not in label_to_id:
            raise UnknownLabel(f"fill label {fill!r} not in label mapping")
        ids[:] = label_to_id[fill]
        mask[:] = True
    for seg in transcript.segments:
        if seg.label not in label_to_id:
            raise UnknownLabel(f"label {seg.label!r} not in label mapping")
        ids[seg.start:seg.end + 1] = label_to_id[seg.label]
        mask[seg.start:seg.end + 1] = True
    return ids, mask


def _tile_with_idle(kept: list[Segment], length: int) -> list[Segment]:
    tiled: list[Segment] = []
    pos = 0
    for seg in kept:
        if seg.start > pos:
            tiled.append(Segment(pos, seg.start - 1, IDLE))
        tiled.append(seg)
        pos = seg.end + 1
    if pos < length:
        tiled.append(Segment(pos, length - 1, IDLE))
    # merge adjacent identical labels so run-length segments match exactly
    merged: list[Segment] = []
    for seg in tiled:
        if merged and merged[-1].label == seg.label and merged[-1].end + 1 == seg.start:
            merged[-1] = Segment(merged[-1].start, seg.end, seg.label)
        else:
            merged.append(seg)
    return merged


def split_by_arm(
    transcript: LabelTranscript,
    frame_count: Optional[int] = None,
) -> tuple[LabelTranscript, LabelTranscript]:
    """Split a bimanual MP transcript into per-arm transcripts.

    Each segment goes to the arm named by its tool field; Idle segments are
    dropped. Gaps left on either side are filled with Idle so both outputs
    tile the trial. A non-Idle segment without a tool side cannot be
    attributed and is an error.
    """
    if transcript.granularity != "mp":
        raise InvalidConfig(
            f"can only split combined 'mp' transcripts, got {transcript.granularity!r}")
    length = transcript.length if frame_count is None else frame_count
    if length < transcript.length:
        raise DataError(
            f"frame_count {length} is shorter than the transcript ({transcript.length})")
    left: list[Segment] = []
    right: list[Segment] = []
    for seg in transcript.segments:
        mp = MotionPrimitiveLabel.parse(seg.label)
        if mp.verb == IDLE:
            continue
        if mp.tool == "L":
            left.append(seg)
        elif mp.tool == "R":
            right.append(seg)
        else:
            raise UnattributedSegment(
                f"segment [{seg.start}, {seg.end}] {seg.label!r} names no tool side")
    vocab = tuple(transcript.vocabulary)
    if IDLE not in vocab:
        vocab = vocab + (IDLE,)
    out = []
    for granularity, kept in (("mp-left", left), ("mp-right", right)):
        out.append(LabelTranscript(
            granularity=granularity,
            vocabulary=vocab,
            segments=tuple(_tile_with_idle(kept, length)),
            length=length,
        ))
    return out[0], out[1]


# ---------------------------------------------------------------------------
# kinematics

@dataclass(frozen=True)
class KinematicTrial:
    """One trial's kinematic signal: frames by channels, fixed sample rate."""

    task: str
    subject: str
    trial: str
    data: np.ndarray
    sample_rate: float = DEFAULT_SAMPLE_RATE

    def __post_init__(self):
        arr = np.ascontiguousarray(np.asarray(self.data, dtype=np.float64))
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise DataError(
                f"kinematic data must be a non-empty 2-D array, got shape {arr.shape}")
        if not np.isfinite(arr).all():
            raise NonNumericCell("kinematic data contains non-finite values")
        if self.sample_rate <= 0:
            raise DataError(f"sample_rate must be positive, got {self.sample_rate}")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def key(self) -> TrialKey:
        return (self.task, self.subject, self.trial)

    @property
    def num_frames(self) -> int:
        return self.data.shape[0]

    @property
    def num_channels(self) -> int:
        return self.data.shape[1]

    @property
    def duration_seconds(self) -> float:
        return self.num_frames / self.sample_rate


def load_trial_kinematics(
    path,
    expected_channels: Optional[int] = None,
    *,
    task: str = "",
    subject: str = "",
    trial: str = "",
    sample_rate: float = DEFAULT_SAMPLE_RATE,
) -> KinematicTrial:
    """Read a delimiter-separated numeric trial file.

    Accepts whitespace or comma delimiters. Every row must have the same
    number of columns and every cell must parse to a finite float.
    """
    p = Path(path)
    if not p.is_file():
        raise MissingFile(f"kinematics file not found: {p}")
    rows: list[list[float]] = []
    width: Optional[int] = None
    for lineno, raw in enumerate(p.read_text().splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        tokens = line.replace(",", " ").split()
        if width is None:
            width = len(tokens)
        elif len(tokens) != width:
            raise RaggedRows(
                f"{p}:{lineno}: {len(tokens)} columns, expected {width}")
        values = []
        for col, tok in enumerate(tokens):
            try:
                v = float(tok)
            except ValueError:
                raise NonNumericCell(f"{p}:{lineno}: column {col}: {tok!r}")
            if not np.isfinite(v):
                raise NonNumericCell(f"{p}:{lineno}: column {col}: non-finite {tok!r}")
            values.append(v)
        rows.append(values)
    if not rows:
        raise DataError(f"kinematics file has no data rows: {p}")
    data = np.array(rows, dtype=np.float64)
    if expected_channels is not None and data.shape[1] != expected_channels:
        raise ChannelMismatch(
            f"{p}: {data.shape[1]} channels, expected {expected_channels}")
    return KinematicTrial(task=task, subject=subject, trial=trial,
                          data=data, sample_rate=sample_rate)


# ---------------------------------------------------------------------------
# feature selection

@dataclass(frozen=True)
class ArmColumns:
    """Column indices of one arm's modeling variables in the raw file."""

    position: tuple[int, int, int]
    linear_velocity: tuple[int, int, int]
    gripper: int

    def columns(self) -> tuple[int, ...]:
        return (*self.position, *self.linear_velocity, self.gripper)


@dataclass(frozen=True)
class FeatureSpec:
    """Which raw columns feed the model; arms ordered left then right."""

    arms: tuple[ArmColumns, ...]

    def columns(self) -> tuple[int, ...]:
        out: list[int] = []
        for arm in self.arms:
            out.extend(arm.columns())
        return tuple(out)

    @property
    def num_features(self) -> int:
        return 7 * len(self.arms)


def arm_columns_at(offset: int) -> ArmColumns:
    return ArmColumns(
        position=(offset, offset + 1, offset + 2),
        linear_velocity=(offset + 12, offset + 13, offset + 14),
        gripper=offset + 18,
    )


def both_arms_spec(left_offset: int = 0, right_offset: int = COLUMNS_PER_ARM) -> FeatureSpec:
    return FeatureSpec(arms=(arm_columns_at(left_offset), arm_columns_at(right_offset)))


def single_arm_spec(side: str) -> FeatureSpec:
    if side == "L":
        return FeatureSpec(arms=(arm_columns_at(0),))
    if side == "R":
        return FeatureSpec(arms=(arm_columns_at(COLUMNS_PER_ARM),))
    raise InvalidConfig(f"side must be 'L' or 'R', got {side!r}")


def feature_spec_for_granularity(granularity: str) -> FeatureSpec:
    """Default variable selection: both arms for bimanual models, one arm
    for the per-arm MP models."""
    if granularity in ("gesture", "mp"):
        return both_arms_spec()
    if granularity == "mp-left":
        return single_arm_spec("L")
    if granularity == "mp-right":
        return single_arm_spec("R")
    raise InvalidConfig(f"unknown granularity: {granularity!r}")


def select_features(trial: KinematicTrial, spec: FeatureSpec) -> np.ndarray:
    """Gather the spec's columns into a (T, F) array, order preserved."""
    cols = spec.columns()
    if len(set(cols)) != len(cols):
        seen = set()
        dup = next(c for c in cols if c in seen or seen.add(c))
        raise DuplicateColumn(f"column {dup} selected more than once")
    d = trial.num_channels
    for c in cols:
        if c < 0 or c >= d:
            raise IndexOutOfRange(f"column {c} outside [0, {d})")
    return np.ascontiguousarray(trial.data[:, list(cols)])


# ---------------------------------------------------------------------------
# catalog

@dataclass(frozen=True)
class CatalogEntry:
    """Where one trial's files live, plus its identity."""

    dataset: str
    task: str
    subject: str
    trial: str
    kinematics: Path
    transcripts: tuple[tuple[str, Path], ...]  # (granularity, path), sorted

    def __post_init__(self):
        for granularity, _ in self.transcripts:
            if granularity not in GRANULARITIES:
                raise InvalidConfig(f"unknown granularity: {granularity!r}")

    @property
    def key(self) -> TrialKey:
        return (self.task, self.subject, self.trial)

    @property
    def subject_key(self) -> tuple[str, str]:
        # subjects are only comparable within one source dataset
        return (self.dataset, self.subject)

    def transcript_path(self, granularity: str) -> Optional[Path]:
        for g, p in self.transcripts:
            if g == granularity:
                return p
        return None

    @property
    def granularities(self) -> tuple[str, ...]:
        return tuple(g for g, _ in self.transcripts)


@dataclass(frozen=True)
class Catalog:
    """All known trials. Keys (task, subject, trial) are unique."""

    entries: tuple[CatalogEntry, ...]

    def __post_init__(self):
        seen: dict[TrialKey, CatalogEntry] = {}
        for e in self.entries:
            if e.key in seen:
                raise DuplicateTrialKey(f"duplicate trial key {e.key}")
            seen[e.key] = e
            if e.dataset == "ROSMA" and e.transcript_path("gesture") is not None:
                raise DataError(
                    f"trial {e.key}: ROSMA recordings carry no gesture labels")
        object.__setattr__(self, "_by_key", seen)

    def get(self, task: str, subject: str, trial: str) -> CatalogEntry:
        key = (task, subject, trial)
        entry = self._by_key.get(key)
        if entry is None:
            raise DataError(f"trial {key} not in catalog")
        return entry

    def tasks(self) -> tuple[str, ...]:
        return tuple(sorted({e.task for e in self.entries}))

    def entries_for_tasks(self, tasks: Iterable[str]) -> tuple[CatalogEntry, ...]:
        wanted = set(tasks)
        return tuple(e for e in self.entries if e.task in wanted)

    def subject_keys(self, tasks: Optional[Iterable[str]] = None) -> tuple[tuple[str, str], ...]:
        pool = self.entries if tasks is None else self.entries_for_tasks(tasks)
        return tuple(sorted({e.subject_key for e in pool}))

    def datasets_of_tasks(self, tasks: Iterable[str]) -> frozenset[str]:
        return frozenset(e.dataset for e in self.entries_for_tasks(tasks))

    def task_has_granularity(self, task: str, granularity: str) -> bool:
        pool = self.entries_for_tasks([task])
        if not pool:
            return False
        return all(e.transcript_path(granularity) is not None for e in pool)


def build_catalog(manifest_path, root=None) -> Catalog:
    """Load a JSON manifest and verify every referenced file exists.

    The manifest is either a list of entries or {"entries": [...]}; each
    entry carries dataset/task/subject/trial ids, a kinematics path, and a
    granularity-to-path transcript map. Relative paths resolve against
    `root` (default: the manifest's directory).
    """
    mp = Path(manifest_path)
    if not mp.is_file():
        raise MissingFile(f"catalog manifest not found: {mp}")
    base = Path(root) if root is not None else mp.parent
    try:
        doc = json.loads(mp.read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"catalog manifest is not valid JSON: {mp}: {exc}")
    raw_entries = doc.get("entries") if isinstance(doc, dict) else doc
    if not isinstance(raw_entries, list):
        raise DataError(f"catalog manifest must hold a list of entries: {mp}")
    entries: list[CatalogEntry] = []
    for i, item in enumerate(raw_entries):
        try:
            dataset = item["dataset"]
            task = item["task"]
            subject = item["subject"]
            trial = item["trial"]
            kin_rel = item["kinematics"]
            transcripts = item.get("transcripts", {})
        except (TypeError, KeyError) as exc:
            raise DataError(f"manifest entry {i} is malformed: missing {exc}")
        kin = base / kin_rel
        if not kin.is_file():
            raise MissingFile(f"manifest entry {i}: kinematics file not found: {kin}")
        tpairs = []
        for granularity in sorted(transcripts):
            tp = base / transcripts[granularity]
            if not tp.is_file():
                raise MissingTranscript(
                    f"manifest entry {i}: {granularity} transcript not found: {tp}")
            tpairs.append((granularity, tp))
        entries.append(CatalogEntry(
            dataset=dataset, task=task, subject=subject, trial=trial,
            kinematics=kin, transcripts=tuple(tpairs)))
    return Catalog(entries=tuple(entries))
