"""splat PLY codec tests: activations, round trips, and format errors."""

import struct

import numpy as np
import pytest

from gsdeform import (
    EmptyCloudError,
    GaussianCloud,
    SplatFormatError,
    ValidationError,
    load_ply,
    save_ply,
)

from conftest import make_cloud


def reference_ply_bytes(fields, order):
    """Independent mini writer: struct-packed rows, naive header."""
    n = len(fields[order[0]])
    header = ["ply", "format binary_little_endian 1.0", f"element vertex {n}"]
    header += [f"property float {name}" for name in order]
    header.append("end_header")
    body = b""
    for i in range(n):
        body += struct.pack("<" + "f" * len(order), *[fields[name][i] for name in order])
    return ("\n".join(header) + "\n").encode("ascii") + body


def stored_buffer(n=5, seed=0, rest=0, fmt="binary"):
    """A stored-convention PLY buffer plus the raw stored fields."""
    rng = np.random.default_rng(seed)
    fields = {
        "x": rng.uniform(-1, 1, n), "y": rng.uniform(-1, 1, n), "z": rng.uniform(-1, 1, n),
        "nx": np.zeros(n), "ny": np.zeros(n), "nz": np.zeros(n),
        "f_dc_0": rng.uniform(-1, 1, n), "f_dc_1": rng.uniform(-1, 1, n),
        "f_dc_2": rng.uniform(-1, 1, n),
        "opacity": rng.uniform(-3, 3, n),
        "scale_0": rng.uniform(-3, 0, n), "scale_1": rng.uniform(-3, 0, n),
        "scale_2": rng.uniform(-3, 0, n),
        "rot_0": rng.uniform(0.5, 2, n), "rot_1": rng.uniform(-1, 1, n),
        "rot_2": rng.uniform(-1, 1, n), "rot_3": rng.uniform(-1, 1, n),
    }
    order = ["x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2"]
    for j in range(rest):
        name = f"f_rest_{j}"
        fields[name] = rng.uniform(-0.5, 0.5, n)
        order.append(name)
    order += ["opacity", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3"]
    fields = {k: v.astype(np.float32) for k, v in fields.items()}
    if fmt == "binary":
        return reference_ply_bytes(fields, order), fields
    header = ["ply", "format ascii 1.0", f"element vertex {n}"]
    header += [f"property float {name}" for name in order]
    header.append("end_header")
    rows = [
        " ".join(repr(float(fields[name][i])) for name in order) for i in range(n)
    ]
    return ("\n".join(header + rows) + "\n").encode("ascii"), fields


class TestLoad:
    def test_activations_applied(self):
        buf, fields = stored_buffer(n=8, seed=1)
        cloud = load_ply(buf)
        assert np.allclose(cloud.opacities, 1.0 / (1.0 + np.exp(-fields["opacity"].astype(np.float64))), atol=1e-7)
        assert np.allclose(cloud.scales[:, 0], np.exp(fields["scale_0"].astype(np.float64)), rtol=1e-6)
        assert np.allclose(np.linalg.norm(cloud.rotations, axis=1), 1.0, atol=1e-12)

    def test_scaled_identity_quat_normalizes(self):
        buf, fields = stored_buffer(n=1, seed=2)
        # rewrite rot as (2,0,0,0)
        fields = dict(fields)
        fields["rot_0"] = np.array([2.0], np.float32)
        for name in ("rot_1", "rot_2", "rot_3"):
            fields[name] = np.array([0.0], np.float32)
        order = ["x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2",
                 "opacity", "scale_0", "scale_1", "scale_2",
                 "rot_0", "rot_1", "rot_2", "rot_3"]
        cloud = load_ply(reference_ply_bytes(fields, order))
        assert np.allclose(cloud.rotations[0], [1, 0, 0, 0], atol=1e-7)

    def test_sigmoid_and_exp_of_zero(self):
        fields = {name: np.zeros(1, np.float32) for name in (
            "x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2",
            "opacity", "scale_0", "scale_1", "scale_2", "rot_1", "rot_2", "rot_3")}
        fields["rot_0"] = np.ones(1, np.float32)
        order = list(fields.keys())
        cloud = load_ply(reference_ply_bytes(fields, order))
        assert cloud.opacities[0] == pytest.approx(0.5)
        assert np.all(cloud.scales[0] == pytest.approx(1.0))

    def test_ascii_format(self):
        buf, _ = stored_buffer(n=4, seed=3, fmt="ascii")
        cloud = load_ply(buf)
        assert len(cloud) == 4

    def test_missing_property_named(self):
        buf, fields = stored_buffer(n=2, seed=4)
        order = ["x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2",
                 "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3"]
        broken = reference_ply_bytes(fields, order)  # opacity dropped
        with pytest.raises(SplatFormatError, match="opacity"):
            load_ply(broken)

    def test_zero_vertices(self):
        buf, fields = stored_buffer(n=2, seed=5)
        text = buf.split(b"end_header")[0].replace(b"element vertex 2", b"element vertex 0")
        with pytest.raises(EmptyCloudError):
            load_ply(text + b"end_header\n")

    def test_non_finite_reports_index(self):
        buf, fields = stored_buffer(n=3, seed=6)
        fields = dict(fields)
        fields["x"] = fields["x"].copy()
        fields["x"][1] = np.nan
        order = ["x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2",
                 "opacity", "scale_0", "scale_1", "scale_2",
                 "rot_0", "rot_1", "rot_2", "rot_3"]
        with pytest.raises(ValidationError, match="index 1"):
            load_ply(reference_ply_bytes(fields, order))

    def test_pure_function_of_bytes(self):
        buf, _ = stored_buffer(n=6, seed=7)
        a = load_ply(buf)
        b = load_ply(buf)
        assert np.array_equal(a.centers, b.centers)
        assert np.array_equal(a.rotations, b.rotations)

    def test_log_scale_floor(self):
        buf, fields = stored_buffer(n=1, seed=8)
        fields = dict(fields)
        fields["scale_0"] = np.array([-80.0], np.float32)
        order = ["x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2",
                 "opacity", "scale_0", "scale_1", "scale_2",
                 "rot_0", "rot_1", "rot_2", "rot_3"]
        cloud = load_ply(reference_ply_bytes(fields, order))
        assert cloud.scales[0, 0] == pytest.approx(np.exp(-20.0))


class TestSave:
    def test_round_trip_identity(self):
        for seed in range(5):
            cloud = make_cloud(20, seed=seed, sh_rest=9 if seed % 2 else 0)
            back = load_ply(save_ply(cloud))
            assert np.allclose(back.centers, cloud.centers, atol=1e-6)
            assert np.allclose(back.opacities, cloud.opacities, atol=1e-6)
            assert np.allclose(back.scales, cloud.scales, atol=1e-6)
            assert np.allclose(back.rotations, cloud.rotations, atol=1e-6)
            assert np.allclose(back.colors_dc, cloud.colors_dc, atol=1e-6)
            if cloud.colors_rest is not None:
                assert np.allclose(back.colors_rest, cloud.colors_rest, atol=1e-6)

    def test_activated_round_trip(self):
        cloud = make_cloud(12, seed=11)
        back = load_ply(save_ply(cloud, activated=True), activated=True)
        assert np.allclose(back.centers, cloud.centers, atol=1e-6)
        assert np.allclose(back.opacities, cloud.opacities, atol=1e-6)

    def test_identity_quat_survives(self):
        cloud = GaussianCloud(
            centers=[[0.0, 0.0, 0.0]],
            opacities=[0.7],
            scales=[[0.1, 0.1, 0.1]],
            rotations=[[1.0, 0.0, 0.0, 0.0]],
            colors_dc=[[0.2, 0.3, 0.4]],
        )
        back = load_ply(save_ply(cloud))
        assert np.allclose(back.rotations[0], [1, 0, 0, 0], atol=1e-7)

    def test_header_matches_reference_writer(self):
        """45 SH-rest coefficients declare f_rest_0..44 in reference order."""
        cloud = make_cloud(3, seed=13, sh_rest=45)
        ours = save_ply(cloud, activated=True)
        fields = {
            "x": cloud.centers[:, 0], "y": cloud.centers[:, 1], "z": cloud.centers[:, 2],
            "nx": np.zeros(3), "ny": np.zeros(3), "nz": np.zeros(3),
        }
        for j in range(3):
            fields[f"f_dc_{j}"] = cloud.colors_dc[:, j]
        for j in range(45):
            fields[f"f_rest_{j}"] = cloud.colors_rest[:, j]
        fields["opacity"] = cloud.opacities
        for j in range(3):
            fields[f"scale_{j}"] = cloud.scales[:, j]
        for j in range(4):
            fields[f"rot_{j}"] = cloud.rotations[:, j]
        order = ["x", "y", "z", "nx", "ny", "nz"]
        order += [f"f_dc_{j}" for j in range(3)]
        order += [f"f_rest_{j}" for j in range(45)]
        order += ["opacity", "scale_0", "scale_1", "scale_2",
                  "rot_0", "rot_1", "rot_2", "rot_3"]
        fields = {k: np.asarray(v, np.float32) for k, v in fields.items()}
        reference = reference_ply_bytes(fields, order)
        assert ours == reference


class TestCloudInvariants:
    def test_rejects_non_unit_quaternion(self):
        with pytest.raises(ValidationError, match="unit norm"):
            GaussianCloud(
                centers=[[0, 0, 0]], opacities=[0.5], scales=[[1, 1, 1]],
                rotations=[[2.0, 0, 0, 0]], colors_dc=[[0, 0, 0]],
            )

    def test_rejects_bad_opacity_and_scale(self):
        with pytest.raises(ValidationError):
            GaussianCloud(
                centers=[[0, 0, 0]], opacities=[1.0], scales=[[1, 1, 1]],
                rotations=[[1, 0, 0, 0]], colors_dc=[[0, 0, 0]],
            )
        with pytest.raises(ValidationError):
            GaussianCloud(
                centers=[[0, 0, 0]], opacities=[0.5], scales=[[0.0, 1, 1]],
                rotations=[[1, 0, 0, 0]], colors_dc=[[0, 0, 0]],
            )

    def test_arrays_read_only(self):
        cloud = make_cloud(4, seed=1)
        with pytest.raises(ValueError):
            cloud.centers[0, 0] = 5.0
