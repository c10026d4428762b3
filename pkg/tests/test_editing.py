import numpy as np
import pytest

from slotmvd.denoiser import Denoiser, UNetConfig
from slotmvd.diffusion import SamplerConfig
from slotmvd.editing import (
    EditRequest,
    default_transfer_subset,
    paired_render,
    remove_slot,
    transfer_slots,
)
from slotmvd.errors import ContractViolation
from slotmvd.scenegen import sample_poses
from slotmvd.slotcore import SlotSet


def _slots(seed=0, k=4, d=6):
    rng = np.random.default_rng(seed)
    return SlotSet(rng.standard_normal((k, d)).astype(np.float32), "oracle")


@pytest.fixture(scope="module")
def model():
    cfg = UNetConfig(
        resolution=8,
        channels=(8, 12, 16),
        blocks_per_level=1,
        head_dim=4,
        token_dim=8,
        emb_dim=8,
        num_slots=4,
        slot_dim=6,
        pose_octaves=2,
    )
    return Denoiser(cfg, seed=0)


def test_remove_slot_idempotent_and_bounds():
    s = _slots()
    r1 = remove_slot(s, 2)
    r2 = remove_slot(r1, 2)
    np.testing.assert_array_equal(r1.active, r2.active)
    assert not r1.active[2] and r1.active[[0, 1, 3]].all()
    assert s.active.all()  # original untouched
    with pytest.raises(ContractViolation):
        remove_slot(s, 4)


def test_transfer_slots_identities():
    a, b = _slots(1), _slots(2)
    empty = transfer_slots(a, b, [])
    np.testing.assert_array_equal(empty.slots, a.slots)
    full = transfer_slots(a, b, list(range(a.k)))
    np.testing.assert_array_equal(full.slots, b.slots)
    half = transfer_slots(a, b, [0, 1])
    np.testing.assert_array_equal(half.slots[:2], b.slots[:2])
    np.testing.assert_array_equal(half.slots[2:], a.slots[2:])


def test_transfer_involutive():
    a, b = _slots(3), _slots(4)
    subset = default_transfer_subset(a.k)
    c = transfer_slots(a, b, subset)
    d = transfer_slots(c, a, subset)
    np.testing.assert_array_equal(d.slots, a.slots)
    np.testing.assert_array_equal(d.active, a.active)


def test_transfer_rejects_mismatched_sets():
    a = _slots(5, k=4, d=6)
    b = _slots(6, k=3, d=6)
    with pytest.raises(ContractViolation):
        transfer_slots(a, b, [0])
    with pytest.raises(ContractViolation):
        transfer_slots(a, _slots(7, k=4, d=6), [9])


def test_paired_render_deterministic_and_masked_invariance(model):
    poses = sample_poses(2, "uniform", seed=1)
    base = _slots(8)
    cfg = SamplerConfig(num_steps=6, guidance_weight=2.0, seed=3)
    edits = [EditRequest("remove", remove_index=1)]
    un1, ed1 = paired_render(model, base, edits, poses, cfg)
    un2, ed2 = paired_render(model, base, edits, poses, cfg)
    np.testing.assert_array_equal(un1, un2)
    np.testing.assert_array_equal(ed1[0], ed2[0])
    # perturbing the removed slot's value changes nothing, bitwise
    tampered = base.copy()
    tampered.slots[1] = 99.0
    _, ed3 = paired_render(model, tampered, edits, poses, cfg)
    np.testing.assert_array_equal(ed1[0], ed3[0])


def test_paired_render_empty_edit_list(model):
    poses = sample_poses(2, "uniform", seed=2)
    cfg = SamplerConfig(num_steps=4, guidance_weight=1.0, seed=5)
    unedited, edited = paired_render(model, _slots(9), [], poses, cfg)
    assert edited == []
    assert unedited.shape == (2, 8, 8, 3)


def test_paired_render_removing_inactive_null_slot_is_noop(model):
    # oracle-style set: slot 3 is a null (inactive) slot
    base = _slots(10)
    base.active[3] = False
    poses = sample_poses(2, "uniform", seed=3)
    cfg = SamplerConfig(num_steps=6, guidance_weight=2.0, seed=7)
    unedited, edited = paired_render(model, base, [EditRequest("remove", remove_index=3)], poses, cfg)
    np.testing.assert_array_equal(unedited, edited[0])


def test_removing_all_slots_leaves_pose_token(model):
    base = _slots(11)
    slots = base
    for k in range(base.k):
        slots = remove_slot(slots, k)
    poses = sample_poses(1, "uniform", seed=4)
    cfg = SamplerConfig(num_steps=4, guidance_weight=1.0, seed=8)
    unedited, edited = paired_render(model, base, [], poses, cfg)
    out = paired_render(model, slots, [], poses, cfg)[0]
    assert np.all(np.isfinite(out))
    assert out.shape == unedited.shape
