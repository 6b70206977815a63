import numpy as np
import pytest

from pltt.ellipsometry import (
    AngleSchedule,
    capture,
    design_matrix,
    drr_schedule,
    forward_intensity,
    load_schedule,
    pinv_truncated,
    reconstruct,
    save_schedule,
)
from pltt.polarization import linear_polarizer, quarter_wave_plate
from pltt.scene import generate_ensemble
from pltt.tensor import TransportTensor, epipolar_masks, probe

BIN = 1e-10
UNPOL = np.array([1.0, 0.0, 0.0, 0.0])


def random_schedule(rng, k, sensor_mode="intensity"):
    return AngleSchedule(
        theta1=rng.uniform(0, np.pi, k),
        theta2=rng.uniform(0, np.pi, k),
        theta3=rng.uniform(0, np.pi, k),
        theta4=rng.uniform(0, np.pi, k),
        sensor_mode=sensor_mode,
    )


def chain_intensity(m, th1, th2, th3, th4):
    # the full element chain, written out longhand as the oracle
    source = quarter_wave_plate(th2) @ linear_polarizer(th1) @ UNPOL
    analyzed = linear_polarizer(th4) @ quarter_wave_plate(th3) @ m @ source
    return analyzed[0]


def test_forward_intensity_matches_longhand_chain():
    rng = np.random.default_rng(0)
    schedule = random_schedule(rng, 6)
    m = rng.normal(size=(4, 4))
    for k in range(6):
        expected = chain_intensity(
            m, schedule.theta1[k], schedule.theta2[k],
            schedule.theta3[k], schedule.theta4[k],
        )
        assert forward_intensity(m, schedule, k) == pytest.approx(expected, abs=1e-12)


def test_forward_intensity_identity_all_zero_angles():
    schedule = drr_schedule(1)
    assert forward_intensity(np.eye(4), schedule, 0) == pytest.approx(0.5, abs=1e-12)


def test_polarizer_array_rows_are_capture_major():
    rng = np.random.default_rng(1)
    schedule = random_schedule(rng, 3, "polarizer_array")
    m = rng.normal(size=(4, 4))
    analyzer_angles = np.deg2rad([0.0, 45.0, 90.0, 135.0])
    for k in range(3):
        source = quarter_wave_plate(schedule.theta2[k]) \
            @ linear_polarizer(schedule.theta1[k]) @ UNPOL
        for q, ang in enumerate(analyzer_angles):
            expected = (linear_polarizer(ang) @ quarter_wave_plate(schedule.theta3[k])
                        @ m @ source)[0]
            assert forward_intensity(m, schedule, k, q=q) == pytest.approx(
                expected, abs=1e-12
            )


def test_forward_intensity_argument_validation():
    schedule = drr_schedule(2)
    with pytest.raises(ValueError):
        forward_intensity(np.eye(4), schedule, 5)
    with pytest.raises(ValueError):
        forward_intensity(np.eye(4), schedule, 0, q=1)   # intensity mode has no q
    pa = drr_schedule(2, sensor_mode="polarizer_array")
    with pytest.raises(ValueError):
        forward_intensity(np.eye(4), pa, 0)              # needs q
    with pytest.raises(ValueError):
        forward_intensity(np.eye(4), pa, 0, q=4)


def test_design_matrix_rows_reproduce_forward_model():
    rng = np.random.default_rng(2)
    m = rng.normal(size=(4, 4))
    vec = m.reshape(16)
    for mode in ("intensity", "polarizer_array"):
        schedule = random_schedule(rng, 5, mode)
        design = design_matrix(schedule)
        predicted = design.a @ vec
        row = 0
        for k in range(5):
            if mode == "intensity":
                assert predicted[row] == pytest.approx(
                    forward_intensity(m, schedule, k), abs=1e-12
                )
                row += 1
            else:
                for q in range(4):
                    assert predicted[row] == pytest.approx(
                        forward_intensity(m, schedule, k, q=q), abs=1e-12
                    )
                    row += 1


def test_drr_schedule_structure():
    schedule = drr_schedule(36)
    assert schedule.n_captures == 36
    assert schedule.fixed == (True, False, False, True)
    np.testing.assert_allclose(schedule.theta1, 0.0, atol=1e-15)
    np.testing.assert_allclose(schedule.theta4, 0.0, atol=1e-15)
    np.testing.assert_allclose(schedule.theta2, np.deg2rad(5.0 * np.arange(36)), atol=1e-12)
    np.testing.assert_allclose(schedule.theta3, np.deg2rad(25.0 * np.arange(36)), atol=1e-12)
    # the retarders keep their 1:5 ratio capture by capture
    ratio = schedule.theta3[1:] / schedule.theta2[1:]
    np.testing.assert_allclose(ratio, 5.0, atol=1e-12)


def test_design_rank_by_schedule_size():
    assert design_matrix(drr_schedule(36)).rank == 16
    assert design_matrix(drr_schedule(15)).rank == 15
    assert design_matrix(drr_schedule(8)).rank == 8
    assert design_matrix(drr_schedule(15, sensor_mode="polarizer_array")).rank == 16
    assert design_matrix(drr_schedule(36), coaxial=True).rank == 16


def test_schedule_json_round_trip(tmp_path):
    rng = np.random.default_rng(3)
    schedule = random_schedule(rng, 7, "polarizer_array")
    path = tmp_path / "sched.json"
    save_schedule(path, schedule)
    back = load_schedule(path)
    assert back.sensor_mode == "polarizer_array"
    for name in ("theta1", "theta2", "theta3", "theta4"):
        np.testing.assert_allclose(getattr(back, name), getattr(schedule, name),
                                   atol=1e-12)
    assert back.fixed == schedule.fixed


def random_tensor(rng, coaxial, cam=(2, 2), bins=2):
    n = cam[0] * cam[1]
    if coaxial:
        data = rng.normal(size=(n, 1, 4, 4, bins))
    else:
        data = rng.normal(size=(n, n, 4, 4, bins))
    return TransportTensor(data, cam, cam, BIN, coaxial=coaxial)


@pytest.mark.parametrize("coaxial", [False, True])
def test_noiseless_round_trip(coaxial):
    rng = np.random.default_rng(4)
    tensor = random_tensor(rng, coaxial)
    meas = capture(tensor, drr_schedule(36))
    result = reconstruct(meas)
    assert not result.underdetermined
    assert result.rank == 16
    np.testing.assert_allclose(result.tensor.data, tensor.data, atol=1e-9)
    assert result.residual_norms.max() < 1e-9


def test_reconstruction_is_linear_in_the_tensor():
    rng = np.random.default_rng(5)
    tensor = random_tensor(rng, False)
    scaled = TransportTensor(3.5 * tensor.data, tensor.cam_shape, tensor.proj_shape,
                             BIN, coaxial=False)
    rec = reconstruct(capture(tensor, drr_schedule(20))).tensor.data
    rec_scaled = reconstruct(capture(scaled, drr_schedule(20))).tensor.data
    np.testing.assert_allclose(rec_scaled, 3.5 * rec, atol=1e-9)


def test_underdetermined_schedule_is_flagged():
    rng = np.random.default_rng(6)
    tensor = random_tensor(rng, True, cam=(1, 1), bins=1)
    meas = capture(tensor, drr_schedule(8))
    result = reconstruct(meas)
    assert result.underdetermined
    assert result.rank == 8
    # the minimum-norm solution still reproduces the measurements
    assert result.residual_norms.max() < 1e-9


def test_capture_noise_is_seeded():
    rng = np.random.default_rng(7)
    tensor = random_tensor(rng, True)
    a = capture(tensor, drr_schedule(12), noise_sigma=1e-3, seed=5)
    b = capture(tensor, drr_schedule(12), noise_sigma=1e-3, seed=5)
    c = capture(tensor, drr_schedule(12), noise_sigma=1e-3, seed=6)
    np.testing.assert_array_equal(a.intensities, b.intensities)
    assert not np.array_equal(a.intensities, c.intensities)
    assert a.noise_sigma == 1e-3
    assert a.seed == 5


def test_capture_with_mask_equals_probe_then_capture():
    rng = np.random.default_rng(8)
    tensor = random_tensor(rng, False)
    epi, _ = epipolar_masks(tensor.cam_shape, tensor.proj_shape)
    masked = capture(tensor, drr_schedule(10), masks=epi)
    probed = capture(probe(tensor, epi), drr_schedule(10))
    np.testing.assert_array_equal(masked.intensities, probed.intensities)


def test_capture_mask_on_coaxial_tensor_raises():
    rng = np.random.default_rng(9)
    tensor = random_tensor(rng, True)
    epi, _ = epipolar_masks(tensor.cam_shape, tensor.cam_shape)
    with pytest.raises(ValueError, match="projector_camera"):
        capture(tensor, drr_schedule(10), masks=epi)


def test_coaxial_capture_folds_the_optics():
    # one coaxial pixel: the measured row must equal the coaxial design
    # matrix applied to the block, which bakes in splitter and galvo
    rng = np.random.default_rng(10)
    tensor = random_tensor(rng, True, cam=(1, 1), bins=1)
    schedule = drr_schedule(9)
    meas = capture(tensor, schedule, split=0.4)
    design = design_matrix(schedule, coaxial=True, split=0.4)
    expected = design.a @ tensor.data[0, 0, :, :, 0].reshape(16)
    np.testing.assert_allclose(meas.intensities[:, 0, 0, 0], expected, atol=1e-12)


def test_noise_floor_matches_pseudoinverse_norm():
    # mean squared reconstruction error under pure noise is
    # sigma^2 * sum of squared pseudoinverse entries
    rng = np.random.default_rng(11)
    design = design_matrix(drr_schedule(36))
    a_pinv, rank, _ = pinv_truncated(design.a)
    assert rank == 16
    sigma = 5e-4
    floor = sigma**2 * np.sum(a_pinv**2)
    draws = rng.normal(0.0, sigma, size=(3000, 36))
    errors = draws @ a_pinv.T
    empirical = np.mean(np.sum(errors**2, axis=1))
    assert abs(empirical - floor) / floor < 0.1


def test_reconstruction_is_unbiased_under_noise():
    rng = np.random.default_rng(12)
    sample = generate_ensemble(3, 1).samples[0]
    schedule = drr_schedule(36)
    design = design_matrix(schedule)
    a_pinv, _, _ = pinv_truncated(design.a)
    vec = sample.reshape(16)
    clean = design.a @ vec
    draws = 4000
    noisy = clean[None, :] + rng.normal(0.0, 5e-4, size=(draws, 36))
    mean_rec = (noisy @ a_pinv.T).mean(axis=0)
    # the mean over draws approaches the true vector at sigma/sqrt(draws)
    assert np.abs(mean_rec - vec).max() < 6 * 5e-4 / np.sqrt(draws) * np.abs(a_pinv).sum(axis=1).max()


def test_pinv_truncated_rejects_zero_matrix():
    with pytest.raises(ValueError):
        pinv_truncated(np.zeros((4, 16)))


def test_schedule_validation():
    with pytest.raises(ValueError):
        AngleSchedule(np.zeros(3), np.zeros(2), np.zeros(3), np.zeros(3))
    with pytest.raises(ValueError):
        AngleSchedule(np.zeros(0), np.zeros(0), np.zeros(0), np.zeros(0))
    with pytest.raises(ValueError):
        AngleSchedule(np.zeros(2), np.zeros(2), np.zeros(2), np.zeros(2),
                      sensor_mode="telepathy")
