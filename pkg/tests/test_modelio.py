import struct

import numpy as np
import pytest

from meshcvae.errors import CorruptModel, VersionMismatch
from meshcvae.modelio import MAGIC, load_model, read_model, save_model, write_model
from meshcvae.pipeline import DenoiseConfig, identity_bundle


def test_round_trip_bitwise(toy_bundle, tmp_path):
    data = save_model(toy_bundle)
    assert data[:8] == MAGIC
    back = load_model(data)
    assert save_model(back) == data
    assert back.config == toy_bundle.config
    assert back.kind == "cvae" and back.provenance == toy_bundle.provenance
    for k, w in toy_bundle.params.weights.items():
        assert back.params.weights[k].tobytes() == w.tobytes()
    assert back.cluster.centroids.tobytes() == toy_bundle.cluster.centroids.tobytes()
    write_model(toy_bundle, tmp_path / "m.bin")
    assert save_model(read_model(tmp_path / "m.bin")) == data


def test_identity_round_trip():
    b = identity_bundle(DenoiseConfig(n=8, K=3))
    assert load_model(save_model(b)).kind == "identity"


@pytest.mark.parametrize("cut", [0, 7, 20, 100, -1])
def test_truncation(toy_bundle, cut):
    data = save_model(toy_bundle)
    with pytest.raises(CorruptModel):
        load_model(data[:cut])


def test_bit_flip(toy_bundle):
    data = bytearray(save_model(toy_bundle))
    data[len(data) // 2] ^= 0x10
    with pytest.raises(CorruptModel):
        load_model(bytes(data))


def test_version_bump(toy_bundle):
    data = bytearray(save_model(toy_bundle))
    data[8:12] = struct.pack("<I", 2)
    with pytest.raises(VersionMismatch):
        load_model(bytes(data))
