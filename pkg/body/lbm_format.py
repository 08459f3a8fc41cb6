"""
lbm_format.py
-------------
Body-model container (.lbm), little-endian.

    "LBM1"
    VERT  u32 V            | V×3 f32 vertices
    FACE  u32 F            | F×3 u32 faces
    JOIN  u32 J            | J×3 f32 rest joints | J i32 parents (-1 = root)
    SKIN  u32 V | u32 J    | V×J f32 skin weights
    SHAP  u32 V | u32 B    | V×3×B f32 shape basis
    JREG  u32 J | u32 V    | J×V f32 joint regressor
    REGN  u32 V            | V u8 region labels (0 body, 1 head)

Each section is prefixed by its 4-byte tag and u64 byte length.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from loguru import logger

from body.body_model import BodyTemplate
from utils.binio import ByteReader, SectionWriter, pack_array, read_sections
from utils.config import LBM_MAGIC
from utils.errors import FormatError

SECTIONS = ("VERT", "FACE", "JOIN", "SKIN", "SHAP", "JREG", "REGN")


def encode_body_model(template: BodyTemplate) -> bytes:
    t = template
    v, j, b = t.n_vertices, t.n_joints, t.n_shape
    u32 = lambda *xs: np.array(xs, dtype="<u4").tobytes()  # noqa: E731

    writer = SectionWriter(LBM_MAGIC)
    writer.add("VERT", u32(v), pack_array(t.vertices, "<f4"))
    writer.add("FACE", u32(t.faces.shape[0]), pack_array(t.faces, "<u4"))
    writer.add("JOIN", u32(j), pack_array(t.joints, "<f4"), pack_array(t.parents, "<i4"))
    writer.add("SKIN", u32(v, j), pack_array(t.skin_weights, "<f4"))
    writer.add("SHAP", u32(v, b), pack_array(t.shape_basis, "<f4"))
    writer.add("JREG", u32(j, v), pack_array(t.joint_regressor, "<f4"))
    writer.add("REGN", u32(v), pack_array(t.regions, "|u1"))
    return writer.to_bytes()


def _section(sections: dict[str, bytes], tag: str) -> ByteReader:
    return ByteReader(sections[tag], tag)


def _done(reader: ByteReader, tag: str) -> None:
    if reader.remaining:
        raise FormatError(f"section {tag} has {reader.remaining} unexpected trailing bytes")


def decode_body_model(data: bytes) -> BodyTemplate:
    sections = read_sections(data, LBM_MAGIC, SECTIONS)

    r = _section(sections, "VERT")
    (v,) = r.unpack("<I", "vertex count")
    vertices = r.array("<f4", (v, 3), "vertices")
    _done(r, "VERT")

    r = _section(sections, "FACE")
    (f,) = r.unpack("<I", "face count")
    faces = r.array("<u4", (f, 3), "faces")
    _done(r, "FACE")

    r = _section(sections, "JOIN")
    (j,) = r.unpack("<I", "joint count")
    joints = r.array("<f4", (j, 3), "joints")
    parents = r.array("<i4", (j,), "parents")
    _done(r, "JOIN")

    r = _section(sections, "SKIN")
    sv, sj = r.unpack("<II", "skin dims")
    if (sv, sj) != (v, j):
        raise FormatError(f"SKIN dims {sv}x{sj} disagree with V={v}, J={j}")
    skin = r.array("<f4", (v, j), "skin weights")
    _done(r, "SKIN")

    r = _section(sections, "SHAP")
    bv, b = r.unpack("<II", "shape dims")
    if bv != v:
        raise FormatError(f"SHAP vertex count {bv} disagrees with V={v}")
    basis = r.array("<f4", (v, 3, b), "shape basis")
    _done(r, "SHAP")

    r = _section(sections, "JREG")
    rj, rv = r.unpack("<II", "regressor dims")
    if (rj, rv) != (j, v):
        raise FormatError(f"JREG dims {rj}x{rv} disagree with J={j}, V={v}")
    regressor = r.array("<f4", (j, v), "joint regressor")
    _done(r, "JREG")

    r = _section(sections, "REGN")
    (rv,) = r.unpack("<I", "label count")
    if rv != v:
        raise FormatError(f"REGN count {rv} disagrees with V={v}")
    regions = r.array("|u1", (v,), "regions")
    _done(r, "REGN")

    template = BodyTemplate(
        vertices=vertices.astype(np.float64),
        faces=faces.astype(np.int64),
        joints=joints.astype(np.float64),
        parents=parents.astype(np.int64),
        skin_weights=skin.astype(np.float64),
        shape_basis=basis.astype(np.float64),
        joint_regressor=regressor.astype(np.float64),
        regions=regions.astype(np.uint8),
    )
    return template.validate()


def load_body_model(path: str | Path) -> BodyTemplate:
    path = Path(path)
    template = decode_body_model(path.read_bytes())
    logger.debug(
        "[BODY] loaded {} (V={}, J={}, B={})", path.name, template.n_vertices, template.n_joints, template.n_shape
    )
    return template


def write_body_model(template: BodyTemplate, path: str | Path) -> None:
    Path(path).write_bytes(encode_body_model(template))
