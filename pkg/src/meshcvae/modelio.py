"""Binary model file.

Layout (all integers little-endian)::

    magic    8 bytes  b"MCVAEMDL"
    version  u32
    count    u32      number of sections
    section  repeated:
        name_len u32, name utf-8,
        payload_len u64, payload
    crc32    u32      of every preceding byte

Sections: ``meta`` (UTF-8 JSON: model kind, config snapshot, layer shapes,
activation, provenance), ``kmeans`` (centroid array) and one ``param:<name>``
section per weight/bias. Array payloads are ``ndim u32``, ``ndim`` dims as
u64, then little-endian float64 data in C order.
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .cluster import ClusterModel
from .errors import CorruptModel, VersionMismatch
from .neural import AeParams, CvaeParams
from .pipeline import DenoiseConfig, ModelBundle

MAGIC = b"MCVAEMDL"
FORMAT_VERSION = 1


def _pack_array(a: np.ndarray) -> bytes:
    a = np.ascontiguousarray(a, dtype="<f8")
    head = struct.pack("<I", a.ndim) + b"".join(struct.pack("<Q", d) for d in a.shape)
    return head + a.tobytes()


def _unpack_array(buf: bytes) -> np.ndarray:
    try:
        (ndim,) = struct.unpack_from("<I", buf, 0)
        shape = struct.unpack_from("<" + "Q" * ndim, buf, 4)
        off = 4 + 8 * ndim
        count = int(np.prod(shape)) if ndim else 1
        if len(buf) != off + 8 * count:
            raise CorruptModel("array payload length mismatch")
        return np.frombuffer(buf, dtype="<f8", offset=off, count=count).astype(np.float64).reshape(shape)
    except struct.error as exc:
        raise CorruptModel(f"bad array payload: {exc}") from None


def _config_dict(cfg: DenoiseConfig) -> dict:
    d = asdict(cfg)
    d["a_c"] = list(cfg.a_c)
    return d


def save_model(bundle: ModelBundle) -> bytes:
    meta = {
        "kind": bundle.kind,
        "config": _config_dict(bundle.config),
        "provenance": bundle.provenance,
    }
    sections: list[tuple[str, bytes]] = []
    p = bundle.params
    if isinstance(p, CvaeParams):
        meta["cvae"] = {
            "n_in": p.n_in, "n_labels": p.n_labels, "latent_dim": p.latent_dim,
            "enc_widths": list(p.enc_widths), "dec_widths": list(p.dec_widths),
            "keep_ratio": p.keep_ratio, "activation": p.activation,
            "layer_shapes": {k: list(v) for k, v in p.layer_shapes().items()},
        }
    elif isinstance(p, AeParams):
        meta["ae"] = {
            "n_in": p.n_in, "widths": list(p.widths),
            "layer_shapes": {k: list(v) for k, v in p.layer_shapes().items()},
        }
    if bundle.cluster is not None:
        meta["kmeans"] = {"seed": bundle.cluster.seed, "n_iter": bundle.cluster.n_iter}
    sections.append(("meta", json.dumps(meta, sort_keys=True).encode("utf-8")))
    if bundle.cluster is not None:
        sections.append(("kmeans", _pack_array(bundle.cluster.centroids)))
    if p is not None:
        for name in sorted(p.weights):
            sections.append(("param:" + name, _pack_array(p.weights[name])))

    out = bytearray(MAGIC)
    out += struct.pack("<II", FORMAT_VERSION, len(sections))
    for name, payload in sections:
        nb = name.encode("utf-8")
        out += struct.pack("<I", len(nb)) + nb + struct.pack("<Q", len(payload)) + payload
    out += struct.pack("<I", zlib.crc32(bytes(out)))
    return bytes(out)


def load_model(data: bytes) -> ModelBundle:
    data = bytes(data)
    if len(data) < 20 or data[:8] != MAGIC:
        raise CorruptModel("not a model file (bad magic or too short)")
    version, count = struct.unpack_from("<II", data, 8)
    if version != FORMAT_VERSION:
        raise VersionMismatch(f"model format version {version}, expected {FORMAT_VERSION}")
    (crc,) = struct.unpack_from("<I", data, len(data) - 4)
    if zlib.crc32(data[:-4]) != crc:
        raise CorruptModel("checksum mismatch (truncated or damaged file)")
    off = 16
    sections: dict[str, bytes] = {}
    try:
        for _ in range(count):
            (nl,) = struct.unpack_from("<I", data, off)
            name = data[off + 4:off + 4 + nl].decode("utf-8")
            off += 4 + nl
            (pl,) = struct.unpack_from("<Q", data, off)
            off += 8
            if off + pl > len(data) - 4:
                raise CorruptModel(f"section {name!r} overruns the file")
            sections[name] = data[off:off + pl]
            off += pl
    except (struct.error, UnicodeDecodeError) as exc:
        raise CorruptModel(f"bad section table: {exc}") from None
    if off != len(data) - 4:
        raise CorruptModel("trailing bytes after the last section")
    if "meta" not in sections:
        raise CorruptModel("missing meta section")
    try:
        meta = json.loads(sections["meta"].decode("utf-8"))
        cfg_d = meta["config"]
        cfg = DenoiseConfig(**{**cfg_d, "a_c": tuple(cfg_d["a_c"])})
        weights = {k[6:]: _unpack_array(v) for k, v in sections.items() if k.startswith("param:")}
        params = None
        if "cvae" in meta:
            c = meta["cvae"]
            params = CvaeParams(c["n_in"], c["n_labels"], c["latent_dim"], tuple(c["enc_widths"]),
                                tuple(c["dec_widths"]), c["keep_ratio"], c["activation"], weights)
        elif "ae" in meta:
            a = meta["ae"]
            params = AeParams(a["n_in"], tuple(a["widths"]), weights)
        km = None
        if "kmeans" in sections:
            km = ClusterModel(_unpack_array(sections["kmeans"]), seed=meta["kmeans"]["seed"],
                              n_iter=meta["kmeans"]["n_iter"])
        if params is not None:
            missing = set(n + s for n in params.layer_shapes() for s in (".W", ".b")) - set(weights)
            if missing:
                raise CorruptModel(f"missing parameters: {sorted(missing)}")
        return ModelBundle(meta["kind"], cfg, params, km, meta.get("provenance", {}))
    except CorruptModel:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptModel(f"inconsistent model file: {exc}") from None


def write_model(bundle: ModelBundle, path) -> None:
    Path(path).write_bytes(save_model(bundle))


def read_model(path) -> ModelBundle:
    return load_model(Path(path).read_bytes())
