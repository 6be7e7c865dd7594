"""Bicycle parameter set and TOML ingestion.

The 25 geometric and inertial parameters describe a four-body bicycle
(rear wheel, rear frame, front frame, front wheel) in its upright,
straight reference configuration.  Lengths are in meters, masses in kg,
inertias in kg*m^2, angles in radians.  The inertial frame has x forward,
y to the left and z up; mass-center heights ``z_b``, ``z_h`` are measured
up from the ground and ``x_b``, ``x_h`` forward from the rear contact
point.  Body-fixed axes are aligned with the inertial axes in the
reference configuration, so the products of inertia ``I_bxz``, ``I_hxz``
are expressed with z up.
"""

from dataclasses import dataclass, fields
import math

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

import numpy as np

from .errors import ParseError, ValidationError


@dataclass(frozen=True)
class BicycleParams:
    """Geometric and inertial parameters of the bicycle.

    Attributes
    ----------
    w : float
        Wheelbase (m).
    c : float
        Trail: ground distance by which the front contact point follows
        the steer-axis/ground intersection (m).
    lam : float
        Steer-axis tilt from vertical (rad), 0 <= lam < pi/2.
    g : float
        Gravitational acceleration (m/s^2).
    m_r, m_b, m_h, m_f : float
        Masses of rear wheel, rear frame, front frame, front wheel (kg).
    R_r, R_f : float
        Wheel radii (m).
    x_b, z_b, x_h, z_h : float
        Mass-center coordinates of the two frames in the reference
        configuration (m).
    I_rxx, I_ryy, I_fxx, I_fyy : float
        Wheel inertia components; wheels are axisymmetric about their
        spin (y) axis so ``I_zz = I_xx``.
    I_bxx, I_byy, I_bzz, I_bxz, I_hxx, I_hyy, I_hzz, I_hxz : float
        Frame inertia components in body-fixed axes (x forward, z up).
    """

    w: float
    c: float
    lam: float
    m_r: float
    R_r: float
    I_rxx: float
    I_ryy: float
    m_b: float
    x_b: float
    z_b: float
    I_bxx: float
    I_byy: float
    I_bzz: float
    I_bxz: float
    m_h: float
    x_h: float
    z_h: float
    I_hxx: float
    I_hyy: float
    I_hzz: float
    I_hxz: float
    m_f: float
    R_f: float
    I_fxx: float
    I_fyy: float
    g: float = 9.81

    def __post_init__(self):
        positive = ["w", "m_r", "m_b", "m_h", "m_f", "R_r", "R_f", "g"]
        for name in positive:
            if not getattr(self, name) > 0.0:
                raise ValidationError(f"parameter {name!r} must be strictly "
                                      f"positive, got {getattr(self, name)}")
        if not 0.0 <= self.lam < math.pi / 2:
            raise ValidationError("steer-axis tilt lam must lie in "
                                  "[0, pi/2)")
        for name, I in self.inertia_tensors().items():
            eigs = np.linalg.eigvalsh(I)
            if eigs[0] <= 0.0:
                raise ValidationError(f"inertia tensor of {name} is not "
                                      f"positive definite (eigenvalues "
                                      f"{eigs})")

    def inertia_tensors(self):
        """Body-frame inertia tensors as 3x3 arrays, keyed by body name."""
        def frame(Ixx, Iyy, Izz, Ixz):
            return np.array([[Ixx, 0.0, Ixz],
                             [0.0, Iyy, 0.0],
                             [Ixz, 0.0, Izz]])

        return {
            "rear_wheel": np.diag([self.I_rxx, self.I_ryy, self.I_rxx]),
            "rear_frame": frame(self.I_bxx, self.I_byy, self.I_bzz,
                                self.I_bxz),
            "front_frame": frame(self.I_hxx, self.I_hyy, self.I_hzz,
                                 self.I_hxz),
            "front_wheel": np.diag([self.I_fxx, self.I_fyy, self.I_fxx]),
        }

    def total_mass(self):
        return self.m_r + self.m_b + self.m_h + self.m_f

    def replace(self, **kwargs):
        """Return a copy with some fields overridden."""
        values = {f.name: getattr(self, f.name) for f in fields(self)}
        values.update(kwargs)
        return BicycleParams(**values)


_WHEEL_KEYS = ("m", "R", "Ixx", "Iyy")
_FRAME_KEYS = ("m", "x", "z", "Ixx", "Iyy", "Izz", "Ixz")
_TABLES = {
    "rear_wheel": _WHEEL_KEYS,
    "rear_frame": _FRAME_KEYS,
    "front_frame": _FRAME_KEYS,
    "front_wheel": _WHEEL_KEYS,
}


def load_params(path):
    """Load and validate a :class:`BicycleParams` from a TOML file.

    The file carries top-level keys ``w``, ``c``, ``lambda`` and
    optionally ``g`` (default 9.81), plus the four body tables
    ``[rear_wheel]``, ``[rear_frame]``, ``[front_frame]``,
    ``[front_wheel]``.

    Raises
    ------
    ParseError
        If the file cannot be parsed or a required key is missing.
    ValidationError
        If a value violates a physical invariant.
    """
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except OSError as exc:
        raise ParseError(f"cannot read parameter file {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ParseError(f"invalid TOML in {path}: {exc}") from exc

    def need(mapping, key, where):
        if key not in mapping:
            raise ParseError(f"{path}: missing key {key!r} in {where}")
        value = mapping[key]
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise ParseError(f"{path}: key {key!r} in {where} must be a "
                             f"number, got {value!r}")
        return float(value)

    top = {key: need(doc, key, "top level") for key in ("w", "c", "lambda")}
    g = float(doc.get("g", 9.81))
    body = {}
    for table, keys in _TABLES.items():
        if table not in doc:
            raise ParseError(f"{path}: missing table [{table}]")
        body[table] = {key: need(doc[table], key, f"[{table}]")
                       for key in keys}

    return BicycleParams(
        w=top["w"], c=top["c"], lam=top["lambda"], g=g,
        m_r=body["rear_wheel"]["m"], R_r=body["rear_wheel"]["R"],
        I_rxx=body["rear_wheel"]["Ixx"], I_ryy=body["rear_wheel"]["Iyy"],
        m_b=body["rear_frame"]["m"], x_b=body["rear_frame"]["x"],
        z_b=body["rear_frame"]["z"], I_bxx=body["rear_frame"]["Ixx"],
        I_byy=body["rear_frame"]["Iyy"], I_bzz=body["rear_frame"]["Izz"],
        I_bxz=body["rear_frame"]["Ixz"],
        m_h=body["front_frame"]["m"], x_h=body["front_frame"]["x"],
        z_h=body["front_frame"]["z"], I_hxx=body["front_frame"]["Ixx"],
        I_hyy=body["front_frame"]["Iyy"], I_hzz=body["front_frame"]["Izz"],
        I_hxz=body["front_frame"]["Ixz"],
        m_f=body["front_wheel"]["m"], R_f=body["front_wheel"]["R"],
        I_fxx=body["front_wheel"]["Ixx"], I_fyy=body["front_wheel"]["Iyy"],
    )


def paper_table1():
    """The bundled parameter set of the powered autonomous bicycle."""
    from importlib.resources import as_file, files
    resource = files("bikedyn.data").joinpath("paper_table1.toml")
    with as_file(resource) as path:
        return load_params(path)
