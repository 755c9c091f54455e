import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings, strategies as st

from fallrep.data_model import (
    BodyRegion,
    ContactDescriptor,
    Dataset,
    PhysicsLabel,
    TrajectoryRecord,
    WindowRecord,
)

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("default", deadline=None, max_examples=100)
settings.load_profile("default")


def window(wid="w", traj="T", t0=0, t1=32, label=None, features=(0.0, 0.0), fall=True):
    return WindowRecord(wid, traj, t0, t1, tuple(features), fall, label)


def contact(region, t_s, t_e, impulse=1.0, source="in_window", traj="T"):
    return ContactDescriptor(traj, BodyRegion(region), t_s, t_e, impulse, source)


descriptors = st.builds(
    lambda region, t_s, length, impulse, source: contact(region, t_s, t_s + length, impulse, source),
    st.sampled_from([r.value for r in BodyRegion]),
    st.integers(0, 120),
    st.integers(1, 40),
    st.floats(0.0, 10.0, allow_nan=False),
    st.sampled_from(["in_window", "continuation"]),
)


def labeled_batch(rng, n, n_traj):
    """Random labeled windows spread over ``n_traj`` trajectories."""
    out = []
    for i in range(n):
        traj = f"T{rng.integers(n_traj)}"
        label = PhysicsLabel(int(rng.integers(3)))
        out.append(window(f"w{i}", traj, label=label))
    return out


def tiny_dataset(rng, n_traj=6, windows_per=4, dim=3):
    trajs, wins, cons = [], [], []
    splits = ["train", "train", "train", "train", "val", "test"]
    for t in range(n_traj):
        tid = f"t{t:02d}"
        fall = bool(t % 2 == 0)
        trajs.append(TrajectoryRecord(tid, fall, 32 * windows_per, splits[t % len(splits)]))
        for k in range(windows_per):
            wins.append(WindowRecord(f"{tid}_w{k}", tid, 32 * k, 32 * (k + 1),
                                     tuple(float(x) for x in rng.normal(size=dim)), fall))
        if fall:
            cons.append(ContactDescriptor(tid, BodyRegion.Torso, 40, 45, 2.5, "in_window"))
            cons.append(ContactDescriptor(tid, BodyRegion.Head, 70, 71, 0.75, "continuation"))
    return Dataset(trajs, wins, cons)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES = []


def record_acceptance(number, passed, detail):
    line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append((number, line))
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
