import json

import numpy as np
import pytest

from pltt.cli import main, parse_slice_expression
from pltt.ellipsometry import drr_schedule, save_schedule
from pltt.fileio import read_pltt
from pltt.polarization import ideal_mirror

def mirror_scene(depth=0.15):
    return {
        "geometry_mode": "coaxial",
        "surfaces": [
            {"patch": [0, 2, 0, 2], "depth_m": depth,
             "material": {"kind": "ideal_mirror"}},
        ],
    }


def dense_scene(depth=0.15):
    return {
        "geometry_mode": "projector_camera",
        "surfaces": [
            {"patch": [0, 2, 0, 2], "depth_m": depth,
             "material": {"kind": "fresnel_dielectric", "eta": 1.5,
                          "incidence_deg": 35.0}},
        ],
    }


MIRROR_SCENE = mirror_scene()
DENSE_SCENE = dense_scene()


def write_scene(tmp_path, scene, name="scene.json"):
    path = tmp_path / name
    path.write_text(json.dumps(scene))
    return str(path)


def simulate(tmp_path, scene, out_name="tensor.pltt", bins=16):
    out = str(tmp_path / out_name)
    rc = main([
        "simulate", "--scene", write_scene(tmp_path, scene),
        "--resolution", "2x2", "--bins", str(bins), "--bin-width", "1e-10",
        "--out", out,
    ])
    assert rc == 0
    return out


def test_no_subcommand_is_a_usage_error(capsys):
    assert main([]) == 2
    assert "error:" in capsys.readouterr().err


def test_unknown_flag_exits_with_usage_code():
    with pytest.raises(SystemExit) as info:
        main(["simulate", "--bogus"])
    assert info.value.code == 2


def test_version_flag(capsys):
    with pytest.raises(SystemExit) as info:
        main(["--version"])
    assert info.value.code == 0
    assert "pltt" in capsys.readouterr().out


def test_simulate_places_the_mirror_echo(tmp_path):
    out = simulate(tmp_path, MIRROR_SCENE)
    tensor = read_pltt(out)
    assert tensor.coaxial
    # round trip 0.3 m at 1e-10 s/bin -> bin 10
    np.testing.assert_array_equal(tensor.data[0, 0, :, :, 10], ideal_mirror())
    zeroed = tensor.data.copy()
    zeroed[:, :, :, :, 10] = 0.0
    assert np.all(zeroed == 0.0)
    manifest = json.loads((tmp_path / "tensor.pltt.manifest.json").read_text())
    assert manifest["command"] == "simulate"
    assert manifest["outputs"] == [out]
    assert len(manifest["config_hash"]) == 64
    assert manifest["duration_s"] >= 0


def test_simulate_output_is_byte_deterministic(tmp_path):
    first = simulate(tmp_path, MIRROR_SCENE, "a.pltt")
    second = simulate(tmp_path, MIRROR_SCENE, "b.pltt")
    with open(first, "rb") as fa, open(second, "rb") as fb:
        assert fa.read() == fb.read()


def test_simulate_reports_the_offending_scene_field(tmp_path, capsys):
    bad = {"surfaces": []}
    rc = main([
        "simulate", "--scene", write_scene(tmp_path, bad),
        "--resolution", "2x2", "--bins", "4", "--bin-width", "1e-10",
        "--out", str(tmp_path / "x.pltt"),
    ])
    assert rc == 2
    err = capsys.readouterr().err
    assert err.startswith("error:")
    assert "geometry_mode" in err


def test_simulate_rejects_malformed_resolution(tmp_path, capsys):
    rc = main([
        "simulate", "--scene", write_scene(tmp_path, MIRROR_SCENE),
        "--resolution", "2by2", "--bins", "4", "--bin-width", "1e-10",
        "--out", str(tmp_path / "x.pltt"),
    ])
    assert rc == 2
    assert "HxW" in capsys.readouterr().err


def test_capture_reconstruct_round_trip(tmp_path, capsys):
    tensor_path = simulate(tmp_path, MIRROR_SCENE)
    meas_path = str(tmp_path / "meas.pltt")
    assert main(["capture", "--tensor", tensor_path, "--noise", "0",
                 "--out", meas_path]) == 0
    recon_path = str(tmp_path / "recon.pltt")
    assert main(["reconstruct", "--measurements", meas_path,
                 "--out", recon_path]) == 0
    out = capsys.readouterr().out
    assert "rank=16" in out
    assert "UNDERDETERMINED" not in out
    original = read_pltt(tensor_path)
    recovered = read_pltt(recon_path)
    assert np.abs(recovered.data - original.data).max() < 1e-9
    diag = (tmp_path / "recon_diagnostics.csv").read_text().strip().splitlines()
    assert diag[0] == "cam_index,proj_index,bin,residual_norm"
    assert len(diag) == 1 + 4 * 1 * 16


def test_reconstruct_warns_when_underdetermined(tmp_path, capsys):
    tensor_path = simulate(tmp_path, mirror_scene(0.015), bins=4)
    meas_path = str(tmp_path / "meas8.pltt")
    assert main(["capture", "--tensor", tensor_path, "--k", "8",
                 "--out", meas_path]) == 0
    assert main(["reconstruct", "--measurements", meas_path,
                 "--out", str(tmp_path / "r8.pltt")]) == 0
    assert "UNDERDETERMINED" in capsys.readouterr().out


def test_reconstruct_rejects_a_transport_tensor(tmp_path, capsys):
    tensor_path = simulate(tmp_path, mirror_scene(0.015), bins=4)
    rc = main(["reconstruct", "--measurements", tensor_path,
               "--out", str(tmp_path / "r.pltt")])
    assert rc == 2
    assert "measurement set" in capsys.readouterr().err


def test_capture_mask_needs_a_projector(tmp_path, capsys):
    tensor_path = simulate(tmp_path, mirror_scene(0.015), bins=4)
    rc = main(["capture", "--tensor", tensor_path, "--mask", "epipolar",
               "--out", str(tmp_path / "m.pltt")])
    assert rc == 2
    assert "coaxial" in capsys.readouterr().err


def test_capture_mode_conflicting_with_schedule_file(tmp_path, capsys):
    tensor_path = simulate(tmp_path, mirror_scene(0.015), bins=4)
    sched_path = str(tmp_path / "sched.json")
    save_schedule(sched_path, drr_schedule(5))
    rc = main(["capture", "--tensor", tensor_path, "--schedule", sched_path,
               "--mode", "polarizer_array", "--out", str(tmp_path / "m.pltt")])
    assert rc == 2
    assert "conflicts" in capsys.readouterr().err


def test_slice_enumerates_free_polarimetric_indices(tmp_path):
    tensor_path = simulate(tmp_path, DENSE_SCENE, bins=16)
    out_prefix = str(tmp_path / "view")
    assert main(["slice", "--tensor", tensor_path,
                 "--expr", "T(s,s,:,:,t=10)", "--out", out_prefix]) == 0
    tensor = read_pltt(tensor_path)
    diag = tensor.data[np.arange(4), np.arange(4)]
    for p in range(4):
        for q in range(4):
            grid = np.loadtxt(tmp_path / ("view_p%d_q%d.csv" % (p, q)),
                              delimiter=",", ndmin=2)
            np.testing.assert_allclose(grid, diag[:, p, q, 10].reshape(2, 2), atol=0)
    manifest = json.loads((tmp_path / "view.manifest.json").read_text())
    assert len(manifest["outputs"]) == 16 * 3


def test_slice_sum_and_negation(tmp_path):
    tensor_path = simulate(tmp_path, DENSE_SCENE, bins=16)
    out_prefix = str(tmp_path / "neg")
    assert main(["slice", "--tensor", tensor_path,
                 "--expr", "-sum_t T(s,s,3,3,t)", "--out", out_prefix]) == 0
    tensor = read_pltt(tensor_path)
    expected = -tensor.data[np.arange(4), np.arange(4), 3, 3, :].sum(axis=1)
    grid = np.loadtxt(tmp_path / "neg.csv", delimiter=",", ndmin=2)
    np.testing.assert_allclose(grid, expected.reshape(2, 2), atol=0)


def test_slice_probe_views_partition_the_projector_sum(tmp_path):
    tensor_path = simulate(tmp_path, DENSE_SCENE, bins=16)
    for expr, name in [("T(s,s_e,0,0,t=10)", "epi"), ("T(s,s_n,0,0,t=10)", "non")]:
        assert main(["slice", "--tensor", tensor_path, "--expr", expr,
                     "--out", str(tmp_path / name)]) == 0
    epi = np.loadtxt(tmp_path / "epi.csv", delimiter=",", ndmin=2)
    non = np.loadtxt(tmp_path / "non.csv", delimiter=",", ndmin=2)
    tensor = read_pltt(tensor_path)
    total = tensor.data[:, :, 0, 0, 10].sum(axis=1)
    np.testing.assert_allclose(epi + non, total.reshape(2, 2), atol=0)


def test_slice_grammar_errors(tmp_path, capsys):
    tensor_path = simulate(tmp_path, mirror_scene(0.015), bins=4)
    for expr in ("garbage", "T(s,s,9,0,t)", "sum_t T(s,s,0,0,t=2)"):
        rc = main(["slice", "--tensor", tensor_path, "--expr", expr,
                   "--out", str(tmp_path / "g")])
        assert rc == 2
        err = capsys.readouterr().err
        assert err.startswith("error:")
    with pytest.raises(ValueError, match="expected"):
        parse_slice_expression("T(s,s)")


def test_slice_coaxial_tensor_has_no_projector_index(tmp_path, capsys):
    tensor_path = simulate(tmp_path, mirror_scene(0.015), bins=4)
    rc = main(["slice", "--tensor", tensor_path, "--expr", "T(s,2,0,0,t=1)",
               "--out", str(tmp_path / "c")])
    assert rc == 2
    assert "coaxial" in capsys.readouterr().err


def write_learn_config(tmp_path, **overrides):
    config = {
        "seed": 3, "n_samples": 40, "k": 6, "iterations": 12,
        "batch_size": 16, "eval_every": 6, "noise_sigma": 1e-3, "n_eval": 20,
    }
    config.update(overrides)
    path = tmp_path / "train.json"
    path.write_text(json.dumps(config))
    return str(path)


def test_learn_angles_writes_schedule_report_and_comparison(tmp_path):
    out = str(tmp_path / "learned.json")
    assert main(["learn-angles", "--config", write_learn_config(tmp_path),
                 "--out", out]) == 0
    schedule = json.loads((tmp_path / "learned.json").read_text())
    assert len(schedule["theta2_deg"]) == 6
    report = json.loads((tmp_path / "learned_report.json").read_text())
    assert report["best_heldout_loss"] <= report["init_heldout_loss"]
    assert len(report["batch_loss_curve"]) == 12
    rows = (tmp_path / "learned_comparison.csv").read_text().strip().splitlines()
    assert rows[0].startswith("schedule,captures,rows,design_rank,")
    names = [line.split(",")[0] for line in rows[1:]]
    assert names == ["learned", "drr_6_intensity", "drr_36_intensity"]
    manifest = json.loads((tmp_path / "learned.json.manifest.json").read_text())
    assert manifest["seed"] == 3


def test_learn_angles_is_reproducible(tmp_path):
    first = str(tmp_path / "one.json")
    second = str(tmp_path / "two.json")
    config = write_learn_config(tmp_path)
    assert main(["learn-angles", "--config", config, "--out", first]) == 0
    assert main(["learn-angles", "--config", config, "--out", second]) == 0
    assert (tmp_path / "one.json").read_text() == (tmp_path / "two.json").read_text()


def test_learn_angles_rejects_unknown_config_keys(tmp_path, capsys):
    config = write_learn_config(tmp_path, typo_key=1)
    rc = main(["learn-angles", "--config", config, "--out", str(tmp_path / "o.json")])
    assert rc == 2
    assert "typo_key" in capsys.readouterr().err


def test_decompose_writes_retardance_map(tmp_path, capsys):
    tensor_path = simulate(tmp_path, MIRROR_SCENE)
    out_prefix = str(tmp_path / "maps")
    assert main(["decompose", "--tensor", tensor_path, "--bin", "10",
                 "--out", out_prefix]) == 0
    grid = np.loadtxt(tmp_path / "maps_retardance_t10.csv", delimiter=",", ndmin=2)
    # the mirror flips both oblique components: a half-wave signature
    np.testing.assert_allclose(grid, np.pi, atol=1e-12)
    summary = json.loads((tmp_path / "maps_summary.json").read_text())
    assert summary["n_blocks"] == 4 * 16
    assert summary["n_null"] == 4 * 15
    assert summary["bins"] == [10]
    assert "60/64 blocks below floor" in capsys.readouterr().out
    for name in ("polarizance", "diattenuation"):
        assert (tmp_path / ("maps_%s_t10.pgm" % name)).exists()


def test_pca_outputs_spectrum_and_basis(tmp_path):
    tensor_path = simulate(tmp_path, dense_scene(0.045), bins=8)
    out_prefix = str(tmp_path / "basis")
    assert main(["pca", "--tensor", tensor_path, "--out", out_prefix]) == 0
    lines = (tmp_path / "basis_singular_values.csv").read_text().strip().splitlines()
    assert len(lines) == 17
    components = np.loadtxt(tmp_path / "basis_components.csv", delimiter=",")
    np.testing.assert_allclose(components @ components.T, np.eye(16), atol=1e-12)
    summary = json.loads((tmp_path / "basis_summary.json").read_text())
    assert summary["components_for_95pct"] >= 1


def test_descatter_cli_fits_the_intensity_channel(tmp_path):
    tensor_path = simulate(tmp_path, dense_scene(0.045), bins=8)
    tensor = read_pltt(tensor_path)
    target = tensor.data.sum(axis=(1, 4))[:, 0, 0].reshape(2, 2)
    target_path = str(tmp_path / "target.csv")
    np.savetxt(target_path, target, delimiter=",")
    out_prefix = str(tmp_path / "fit")
    assert main(["descatter", "--tensor", tensor_path, "--target", target_path,
                 "--out", out_prefix]) == 0
    model = json.loads((tmp_path / "fit_model.json").read_text())
    assert model["objective"] < 1e-18
    predicted = np.loadtxt(tmp_path / "fit_prediction.csv", delimiter=",", ndmin=2)
    np.testing.assert_allclose(predicted, target, atol=1e-9)


def test_descatter_target_size_mismatch(tmp_path, capsys):
    tensor_path = simulate(tmp_path, dense_scene(0.045), bins=8)
    target_path = str(tmp_path / "bad.csv")
    np.savetxt(target_path, np.zeros((3, 3)), delimiter=",")
    rc = main(["descatter", "--tensor", tensor_path, "--target", target_path,
               "--out", str(tmp_path / "f")])
    assert rc == 2
    assert "camera pixels" in capsys.readouterr().err


def test_missing_input_file_is_a_usage_error(tmp_path, capsys):
    rc = main(["capture", "--tensor", str(tmp_path / "nope.pltt"),
               "--out", str(tmp_path / "m.pltt")])
    assert rc == 2
    assert "error:" in capsys.readouterr().err
