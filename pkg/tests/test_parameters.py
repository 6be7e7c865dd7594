import math

import numpy as np
import pytest

from bikedyn import (BicycleParams, ParseError, ValidationError,
                     load_params, paper_table1)


def test_bundled_table_values(params):
    assert params.w == 0.935
    assert params.c == 0.046
    assert params.lam == 0.175
    assert params.g == 9.81
    assert params.m_r == params.m_f == 1.0865
    assert params.R_r == params.R_f == 0.260
    assert params.m_b == 13.2490
    assert params.x_b == 0.424 and params.z_b == 0.402
    assert params.I_bxz == 0.1215
    assert params.m_h == 2.8315
    assert params.x_h == 0.865 and params.z_h == 0.554
    assert params.I_hxz == -0.0157
    assert params.I_rxx == params.I_fxx == 0.0293
    assert params.I_ryy == params.I_fyy == 0.0584


def test_total_mass(params):
    assert params.total_mass() == pytest.approx(18.2535, abs=1e-12)


def test_inertia_tensors_shape_and_symmetry(params):
    tensors = params.inertia_tensors()
    assert set(tensors) == {"rear_wheel", "rear_frame", "front_frame",
                            "front_wheel"}
    for I in tensors.values():
        assert I.shape == (3, 3)
        assert np.allclose(I, I.T)
        assert np.linalg.eigvalsh(I)[0] > 0


def test_wheels_axisymmetric(params):
    I = params.inertia_tensors()["rear_wheel"]
    assert I[0, 0] == I[2, 2] == params.I_rxx
    assert I[1, 1] == params.I_ryy


def test_replace(params):
    doubled = params.replace(g=2 * params.g)
    assert doubled.g == 2 * params.g
    assert doubled.w == params.w
    assert params.g == 9.81  # original untouched


def test_load_params_matches_bundled(tmp_path, params):
    import shutil
    from importlib.resources import as_file, files
    resource = files("bikedyn.data").joinpath("paper_table1.toml")
    with as_file(resource) as src:
        dst = tmp_path / "p.toml"
        shutil.copy(src, dst)
    loaded = load_params(dst)
    assert loaded == params


def _write(tmp_path, text):
    path = tmp_path / "bike.toml"
    path.write_text(text)
    return path


_MINIMAL = """
w = 0.935
c = 0.046
lambda = 0.175

[rear_wheel]
m = 1.0865
R = 0.260
Ixx = 0.0293
Iyy = 0.0584

[rear_frame]
m = 13.2490
x = 0.424
z = 0.402
Ixx = 0.2513
Iyy = 0.5147
Izz = 0.3320
Ixz = 0.1215

[front_frame]
m = 2.8315
x = 0.865
z = 0.554
Ixx = 0.0365
Iyy = 0.0445
Izz = 0.0132
Ixz = -0.0157

[front_wheel]
m = 1.0865
R = 0.260
Ixx = 0.0293
Iyy = 0.0584
"""


def test_g_defaults_to_standard(tmp_path):
    p = load_params(_write(tmp_path, _MINIMAL))
    assert p.g == 9.81


def test_g_override(tmp_path):
    p = load_params(_write(tmp_path, "g = 9.8\n" + _MINIMAL))
    assert p.g == 9.8


def test_negative_mass_rejected(tmp_path):
    bad = _MINIMAL.replace("m = 13.2490", "m = -1.0")
    with pytest.raises(ValidationError, match="positive"):
        load_params(_write(tmp_path, bad))


def test_missing_key_named(tmp_path):
    bad = _MINIMAL.replace("Ixz = 0.1215\n", "")
    with pytest.raises(ParseError, match="Ixz"):
        load_params(_write(tmp_path, bad))


def test_missing_table_named(tmp_path):
    bad = _MINIMAL.replace("[front_wheel]", "[front_wheel_typo]")
    with pytest.raises(ParseError, match="front_wheel"):
        load_params(_write(tmp_path, bad))


def test_invalid_toml(tmp_path):
    with pytest.raises(ParseError, match="TOML"):
        load_params(_write(tmp_path, "w = = 1"))


def test_missing_file(tmp_path):
    with pytest.raises(ParseError):
        load_params(tmp_path / "nope.toml")


def test_non_numeric_value_rejected(tmp_path):
    bad = _MINIMAL.replace("w = 0.935", 'w = "wide"')
    with pytest.raises(ParseError, match="number"):
        load_params(_write(tmp_path, bad))


def test_lambda_range_enforced():
    with pytest.raises(ValidationError, match="lam"):
        paper_table1().replace(lam=math.pi / 2)


def test_indefinite_inertia_rejected(params):
    # product of inertia too large for the diagonal entries
    with pytest.raises(ValidationError, match="positive definite"):
        params.replace(I_hxz=0.05)
