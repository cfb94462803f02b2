import struct

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import array_shapes, arrays

from mdcoherence.errors import IoError, TensorFormatError
from mdcoherence.model import ArchSpec, ModelParams
from mdcoherence.tensorfile import (
    decode_tensor,
    encode_tensor,
    load_checkpoint,
    read_tensor,
    save_checkpoint,
    write_tensor,
)

DTYPES = [np.float32, np.float64, np.complex64, np.complex128]


@given(st.sampled_from(DTYPES).flatmap(lambda dt: arrays(dt, array_shapes(min_dims=0, max_dims=4, max_side=6))))
def test_roundtrip_bit_exact(x):
    y = decode_tensor(encode_tensor(x))
    assert y.dtype == x.dtype and y.shape == x.shape
    assert y.tobytes() == np.ascontiguousarray(x).tobytes()


def test_header_layout():
    buf = encode_tensor(np.arange(6, dtype=np.complex64).reshape(2, 3))
    assert buf[:4] == b"MDT1"
    assert struct.unpack_from("<HBB", buf, 4) == (1, 2, 2)
    assert struct.unpack_from("<2I", buf, 8) == (2, 3)
    assert len(buf) == 16 + 6 * 8
    # interleaved little-endian float pairs
    assert struct.unpack_from("<ff", buf, 16 + 8) == (1.0, 0.0)


def test_big_endian_input_written_little_endian():
    x = np.arange(4, dtype=">f8")
    assert decode_tensor(encode_tensor(x)).tolist() == [0.0, 1.0, 2.0, 3.0]


@pytest.mark.parametrize(
    "buf",
    [b"", b"MDT2" + bytes(4), b"MDT1" + struct.pack("<HBB", 2, 0, 0), b"MDT1" + struct.pack("<HBB", 1, 9, 0),
     b"MDT1" + struct.pack("<HBBI", 1, 0, 1, 3) + bytes(8)],
)
def test_malformed_rejected(buf):
    with pytest.raises(TensorFormatError):
        decode_tensor(buf)


def test_unsupported_dtype():
    with pytest.raises(TensorFormatError):
        encode_tensor(np.arange(3))


def test_file_roundtrip_and_io_errors(tmp_path):
    x = np.random.default_rng(0).standard_normal((3, 4))
    write_tensor(tmp_path / "x.mdt", x)
    assert read_tensor(tmp_path / "x.mdt").tobytes() == x.tobytes()
    with pytest.raises(IoError, match="missing.mdt"):
        read_tensor(tmp_path / "missing.mdt")
    with pytest.raises(IoError, match="nodir"):
        write_tensor(tmp_path / "nodir" / "x.mdt", x)


def test_checkpoint_roundtrip(tmp_path):
    arch = ArchSpec(input_side=16, conv_layers=2, channels=(3, 5), latent_dim=7, hidden=4)
    p = ModelParams.init(arch, 3)
    save_checkpoint(tmp_path / "ck.mdt", p, arch, {"beta": 4.0})
    q, arch2 = load_checkpoint(tmp_path / "ck.mdt")
    assert arch2 == arch and q.layout == p.layout
    assert q.theta.tobytes() == p.theta.tobytes()
    assert (tmp_path / "ck.json").exists()


def test_checkpoint_layout_tamper(tmp_path):
    arch = ArchSpec(input_side=16, conv_layers=2, channels=(3, 5), latent_dim=7, hidden=4)
    save_checkpoint(tmp_path / "ck.mdt", ModelParams.init(arch, 0), arch)
    side = tmp_path / "ck.json"
    side.write_text(side.read_text().replace('"latent_dim": 7', '"latent_dim": 8'))
    with pytest.raises(TensorFormatError):
        load_checkpoint(tmp_path / "ck.mdt")
