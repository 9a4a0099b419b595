import numpy as np
import pytest

from conftest import random_bundle
from hoikit import container as cont
from hoikit.diffusion import ConditionBundle, toy_text_embed
from hoikit.errors import ContainerError
from hoikit.geometry import BpsFeature, encode_bps, icosphere, sample_basis_points
from hoikit.keyaction import KeyActionSet, build_training_windows, extract_key_actions
from hoikit.synth import TaskSpec, generate_sequence
from hoikit.tracking import (
    NoiseModel,
    RewardWeights,
    TerminationConfig,
    oracle_rollout,
)


@pytest.fixture(scope="module")
def bundle(skeleton):
    rng = np.random.default_rng(31)
    return random_bundle(skeleton, 12, rng)


def assert_motion_equal(a, b):
    assert np.array_equal(a.root, b.root)
    assert np.array_equal(a.rot6d, b.rot6d)
    assert a.frame_rate == b.frame_rate
    assert a.skeleton.names == b.skeleton.names
    assert np.array_equal(a.skeleton.parents, b.skeleton.parents)
    assert np.array_equal(a.skeleton.offsets, b.skeleton.offsets)
    assert a.skeleton.roles == b.skeleton.roles
    assert a.skeleton.key_joints == b.skeleton.key_joints


@pytest.mark.parametrize("text", [False, True])
def test_motion_round_trip(tmp_path, bundle, text):
    motion, objects, contacts = bundle
    path = tmp_path / "m.hoi"
    cont.save_motion_file(path, motion, objects, contacts, text=text)
    m2, o2, c2, task = cont.load_motion_file(path)
    assert_motion_equal(motion, m2)
    assert np.array_equal(objects.positions, o2.positions)
    assert np.array_equal(objects.rotations, o2.rotations)
    assert np.array_equal(contacts.values, c2.values)
    assert task is None


@pytest.mark.parametrize("text", [False, True])
def test_keyset_round_trip(tmp_path, bundle, text):
    motion, objects, contacts = bundle
    keys = extract_key_actions(motion, objects, contacts, epsilon=0.1)
    path = tmp_path / "k.hoi"
    cont.write_chunks(path, [("keyset", cont.keyset_payload(keys))], text=text)
    (tag, payload), = cont.read_chunks(path)
    back = cont.payload_keyset(payload)
    assert np.array_equal(back.indices, keys.indices)
    assert np.array_equal(back.root, keys.root)
    assert np.array_equal(back.rot6d, keys.rot6d)
    assert np.array_equal(back.obj_rotations, keys.obj_rotations)
    assert back.source_length == keys.source_length


@pytest.mark.parametrize("text", [False, True])
def test_bps_round_trip(tmp_path, text):
    basis = sample_basis_points(5, 64, 1.0)
    feat = encode_bps(icosphere(1, 0.5), basis)
    feat.projected = np.arange(48, dtype=float).reshape(16, 3)
    path = tmp_path / "b.hoi"
    cont.write_chunks(path, [("bps", cont.bps_payload(basis, feat))], text=text)
    (_, payload), = cont.read_chunks(path)
    basis2, feat2 = cont.payload_bps(payload)
    assert np.array_equal(basis2.points, basis.points)
    assert np.array_equal(feat2.vectors, feat.vectors)
    assert np.array_equal(feat2.projected, feat.projected)
    assert basis2.seed == 5


@pytest.mark.parametrize("text", [False, True])
def test_rollout_round_trip(tmp_path, text):
    motion, objects, contacts, task = generate_sequence(3, 0)
    log = oracle_rollout(
        motion, objects, contacts, np.zeros((8, 3)),
        NoiseModel(sigma_pos=0.002), seed=1,
        weights=RewardWeights(), termination=TerminationConfig(),
        target_position=task.target,
    )
    path = tmp_path / "r.hoi"
    cont.write_chunks(path, [("rollout", cont.rollout_payload(log))], text=text)
    (_, payload), = cont.read_chunks(path)
    back = cont.payload_rollout(payload)
    assert np.array_equal(back.sim_positions, log.sim_positions)
    assert np.array_equal(back.reward_total, log.reward_total)
    assert back.termination_frame == log.termination_frame
    assert back.source_length == log.source_length
    assert np.array_equal(back.target_position, log.target_position)


@pytest.mark.parametrize("text", [False, True])
def test_windows_round_trip(tmp_path, bundle, text):
    motion, objects, contacts = bundle
    keys = extract_key_actions(motion, objects, contacts, epsilon=0.1)
    wins = build_training_windows(
        motion, keys, objects, contacts, window_key_count=3, stride=1, prompt="carry it"
    )
    path = tmp_path / "w.hoi"
    cont.write_chunks(path, [("windows", cont.windows_payload(wins))], text=text)
    (_, payload), = cont.read_chunks(path)
    back = cont.payload_windows(payload)
    assert len(back) == len(wins)
    for a, b in zip(wins, back):
        assert np.array_equal(a.key_root, b.key_root)
        assert np.array_equal(a.key_offsets, b.key_offsets)
        assert np.array_equal(a.valid, b.valid)
        assert a.prompt == b.prompt
        assert a.start_frame == b.start_frame


@pytest.mark.parametrize("text", [False, True])
def test_condition_round_trip_bit_identical(tmp_path, text):
    rng = np.random.default_rng(2)
    geometry = BpsFeature(rng.normal(size=(64, 3)))
    cond = ConditionBundle(
        geometry,
        rng.normal(size=(5, 20)),
        (rng.uniform(size=(5, 20)) < 0.4).astype(float),
        toy_text_embed("lift the box"),
    )
    path = tmp_path / "c.hoi"
    cont.write_chunks(path, [("cond", cont.cond_payload(cond))], text=text)
    (_, payload), = cont.read_chunks(path)
    back = cont.payload_cond(payload)
    assert np.array_equal(back.s, cond.s)
    assert np.array_equal(back.mask, cond.mask)
    assert np.array_equal(back.e_text, cond.e_text)
    assert np.array_equal(back.geometry.vectors, cond.geometry.vectors)


@pytest.mark.parametrize("text", [False, True])
def test_task_round_trip(tmp_path, text):
    task = TaskSpec(
        seq_id=4, prompt="move the box", t_total=90, frame_rate=30.0,
        start_obj=np.array([0.1, 0.2, 1.5]), target=np.array([1.0, -1.0, 1.5]),
        waypoints=np.array([[40.0, 0.5, 0.5]]), pick_frame=20, place_frame=80,
    )
    path = tmp_path / "t.hoi"
    cont.write_chunks(path, [("task", cont.task_payload(task))], text=text)
    (_, payload), = cont.read_chunks(path)
    back = cont.payload_task(payload)
    assert back.prompt == task.prompt
    assert np.array_equal(back.waypoints, task.waypoints)
    assert back.pick_frame == 20


def test_rewrite_is_byte_identical(tmp_path, bundle):
    motion, objects, contacts = bundle
    p1, p2 = tmp_path / "a.hoi", tmp_path / "b.hoi"
    cont.save_motion_file(p1, motion, objects, contacts)
    cont.save_motion_file(p2, motion, objects, contacts)
    assert p1.read_bytes() == p2.read_bytes()


def test_reader_rejects_unknown_version(tmp_path, bundle):
    motion, objects, contacts = bundle
    path = tmp_path / "v.hoi"
    cont.save_motion_file(path, motion, objects, contacts)
    data = bytearray(path.read_bytes())
    data[4] = 99  # bump the version field
    path.write_bytes(bytes(data))
    with pytest.raises(ContainerError, match="version"):
        cont.read_chunks(path)


def test_reader_rejects_unknown_text_version(tmp_path):
    path = tmp_path / "v.hoi"
    path.write_text("hoic 9\n")
    with pytest.raises(ContainerError, match="version"):
        cont.read_chunks(path)


def test_reader_rejects_garbage(tmp_path):
    path = tmp_path / "g.hoi"
    path.write_bytes(b"\x00\x01\x02\x03not a container")
    with pytest.raises(ContainerError):
        cont.read_chunks(path)


def test_truncated_binary_rejected(tmp_path, bundle):
    motion, objects, contacts = bundle
    path = tmp_path / "t.hoi"
    cont.save_motion_file(path, motion, objects, contacts)
    data = path.read_bytes()
    path.write_bytes(data[: len(data) // 2])
    with pytest.raises(ContainerError):
        cont.read_chunks(path)


def test_validate_file_rejects_unknown_tag(tmp_path):
    path = tmp_path / "u.hoi"
    cont.write_chunks(path, [("mystery", {"x": 1})])
    with pytest.raises(ContainerError, match="unknown chunk tag"):
        cont.validate_file(path)


def test_validate_file_summary(tmp_path, bundle):
    motion, objects, contacts = bundle
    path = tmp_path / "s.hoi"
    cont.save_motion_file(path, motion, objects, contacts)
    assert cont.validate_file(path) == {"motion": 1}


def test_text_form_is_human_readable(tmp_path, bundle):
    motion, objects, contacts = bundle
    path = tmp_path / "h.hoi"
    cont.save_motion_file(path, motion, objects, contacts, text=True)
    text = path.read_text()
    assert text.startswith("hoic 1\nchunk motion\n")
    assert "i T 12" in text
    assert "a frames f8 12x" in text
