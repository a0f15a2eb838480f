"""Shared fixtures: a study-shaped in-memory catalog and a synthetic corpus."""

from pathlib import Path

import pytest
from hypothesis import settings

from surgact.dataset import Catalog, CatalogEntry
from surgact.synth import generate_synthetic_dataset

settings.register_profile("suite", deadline=None, max_examples=60)
settings.load_profile("suite")

# trials per task and the subject pool each task draws from, matching the
# published six-task corpus: 8 shared subjects for the three teleoperation
# tasks, 8 for the simulator task, 12 for the two dry-lab tasks
STUDY_SHAPE = {
    "S": (39, "JIGSAWS"),
    "NP": (28, "JIGSAWS"),
    "KT": (36, "JIGSAWS"),
    "PT": (47, "DESK"),
    "PaS": (65, "ROSMA"),
    "PoaP": (71, "ROSMA"),
}
SUBJECT_POOLS = {
    "JIGSAWS": tuple("BCDEFGHI"),
    "DESK": tuple(f"D{i+1}" for i in range(8)),
    "ROSMA": tuple(f"R{i+1:02d}" for i in range(12)),
}
GESTURE_DATASETS = {"JIGSAWS", "DESK"}


def make_study_catalog() -> Catalog:
    """In-memory catalog with the published per-task trial/subject counts.

    File paths are placeholders; fold planning never opens them.
    """
    entries = []
    for task, (num_trials, dataset) in STUDY_SHAPE.items():
        subjects = SUBJECT_POOLS[dataset]
        for i in range(num_trials):
            subject = subjects[i % len(subjects)]
            trial = f"{i // len(subjects) + 1:03d}"
            granularities = ["mp", "mp-left", "mp-right"]
            if dataset in GESTURE_DATASETS:
                granularities.append("gesture")
            stem = f"{task}_{subject}_{trial}"
            entries.append(CatalogEntry(
                dataset=dataset,
                task=task,
                subject=subject,
                trial=trial,
                kinematics=Path(f"/placeholder/{stem}.txt"),
                transcripts=tuple(
                    (g, Path(f"/placeholder/{stem}_{g}.txt"))
                    for g in sorted(granularities)),
            ))
    return Catalog(entries=tuple(entries))


@pytest.fixture(scope="session")
def study_catalog() -> Catalog:
    return make_study_catalog()


@pytest.fixture(scope="session")
def synth_manifest(tmp_path_factory) -> Path:
    root = tmp_path_factory.mktemp("synth")
    return generate_synthetic_dataset(
        root, num_tasks=2, num_subjects=3, trials_per_subject=2,
        num_classes=4, frames_range=(120, 160), seed=42)
