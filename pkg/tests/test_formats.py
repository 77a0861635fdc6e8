import numpy as np
import pytest

from fppkit.formats import (
    FloatMap,
    FringeStack,
    InvalidLabelError,
    LabelMap,
    MagicError,
    FormatError,
    NonFiniteValueError,
    PMIImage,
    SizeMismatchError,
    decode_fpm,
    decode_k16,
    decode_labelmap,
    encode_fpm,
    encode_k16,
    encode_labelmap,
    load_stack,
    save_stack,
)


class TestFloatMapContainer:
    def test_rejects_nan(self):
        with pytest.raises(NonFiniteValueError):
            FloatMap(np.array([[0.0, np.nan]]))

    def test_rejects_inf(self):
        with pytest.raises(NonFiniteValueError):
            FloatMap(np.array([[np.inf]]))

    def test_rejects_validity_shape_mismatch(self):
        with pytest.raises(ValueError):
            FloatMap(np.zeros((2, 3)), validity=np.ones((3, 2), dtype=bool))

    def test_immutable_after_construction(self):
        m = FloatMap(np.zeros((2, 2)))
        with pytest.raises(ValueError):
            m.data[0, 0] = 1.0

    def test_valid_mask_defaults_to_all_true(self):
        m = FloatMap(np.zeros((2, 3)))
        assert m.valid_mask().all()
        assert m.valid_mask().shape == (2, 3)


class TestFringeStackContainer:
    def test_requires_three_steps(self):
        frames = [np.zeros((2, 2))] * 2
        with pytest.raises(ValueError):
            FringeStack(tuple(frames))

    def test_requires_matching_dims(self):
        with pytest.raises(ValueError):
            FringeStack((np.zeros((2, 2)), np.zeros((2, 2)), np.zeros((3, 2))))

    def test_as_array_shape(self):
        s = FringeStack(tuple(np.full((4, 5), float(i)) for i in range(3)))
        assert s.as_array().shape == (3, 4, 5)
        assert s.n_steps == 3


class TestPMIContainer:
    def test_rejects_out_of_range_channel(self):
        ok = FloatMap(np.full((2, 2), 0.5))
        bad = FloatMap(np.full((2, 2), 1.5))
        with pytest.raises(ValueError):
            PMIImage(ok, bad, ok)


class TestFpmCodec:
    def test_layout_half_and_minus_one(self):
        # 1x2 map (width 2, height 1) holding [0.5, -1.0]
        m = FloatMap(np.array([[0.5, -1.0]]))
        blob = encode_fpm(m)
        assert blob == b"FPM1\n2 1\n" + bytes.fromhex("0000003f000080bf")

    def test_zero_payload(self):
        blob = encode_fpm(FloatMap(np.array([[0.0]])))
        assert blob.endswith(bytes.fromhex("00000000"))
        assert blob == b"FPM1\n1 1\n" + b"\x00" * 4

    def test_round_trip_random_bits(self):
        rng = np.random.default_rng(7)
        # binary32 grid: what the file carries is exactly representable
        values = rng.standard_normal((64, 64)).astype(np.float32).astype(np.float64)
        m = FloatMap(values)
        blob = encode_fpm(m)
        again = encode_fpm(decode_fpm(blob))
        assert blob == again
        assert np.array_equal(decode_fpm(blob).data, values)

    def test_decode_is_inverse(self):
        m = FloatMap(np.arange(12, dtype=np.float32).reshape(3, 4))
        out = decode_fpm(encode_fpm(m))
        assert np.array_equal(out.data, m.data)
        assert out.shape == (3, 4)

    def test_truncated_payload(self):
        blob = encode_fpm(FloatMap(np.zeros((2, 2))))
        with pytest.raises(SizeMismatchError):
            decode_fpm(blob[:-1])

    def test_bad_magic(self):
        blob = encode_fpm(FloatMap(np.zeros((2, 2))))
        with pytest.raises(MagicError):
            decode_fpm(b"FPMX" + blob[4:])

    def test_non_finite_payload(self):
        payload = np.array([np.inf], dtype="<f4").tobytes()
        with pytest.raises(NonFiniteValueError):
            decode_fpm(b"FPM1\n1 1\n" + payload)

    def test_malformed_dimensions(self):
        with pytest.raises(FormatError):
            decode_fpm(b"FPM1\ntwo 1\n" + b"\x00" * 4)


class TestLabelmapCodec:
    def test_layout(self):
        blob = encode_labelmap(LabelMap(np.array([[0, 2]])))
        assert blob == b"P5\n2 1\n255\n\x00\x02"

    def test_all_zero(self):
        blob = encode_labelmap(LabelMap(np.zeros((3, 3), dtype=np.uint8)))
        assert blob.endswith(b"\x00" * 9)

    def test_round_trip(self):
        rng = np.random.default_rng(3)
        labels = LabelMap(rng.integers(0, 3, size=(17, 9)))
        blob = encode_labelmap(labels)
        assert encode_labelmap(decode_labelmap(blob)) == blob
        assert np.array_equal(decode_labelmap(blob).labels, labels.labels)

    def test_container_rejects_invalid_value(self):
        with pytest.raises(InvalidLabelError):
            LabelMap(np.array([[0, 3]]))

    def test_decode_rejects_invalid_pixel(self):
        with pytest.raises(InvalidLabelError):
            decode_labelmap(b"P5\n2 1\n255\n\x00\x03")

    def test_decode_rejects_wrong_maxval(self):
        with pytest.raises(FormatError):
            decode_labelmap(b"P5\n2 1\n65535\n\x00\x01")

    def test_decode_rejects_bad_magic(self):
        with pytest.raises(MagicError):
            decode_labelmap(b"P6\n2 1\n255\n\x00\x01")


class TestK16Codec:
    def test_round_trip(self):
        k = np.array([[-3, 0], [7, 15]])
        assert np.array_equal(decode_k16(encode_k16(k)), k)

    def test_rejects_non_integer(self):
        with pytest.raises(ValueError):
            encode_k16(np.array([[0.5]]))

    def test_truncated(self):
        with pytest.raises(SizeMismatchError):
            decode_k16(encode_k16(np.zeros((2, 2), dtype=int))[:-1])


class TestStackFiles:
    def test_save_load_round_trip(self, tmp_path):
        rng = np.random.default_rng(11)
        frames = tuple(
            rng.standard_normal((6, 5)).astype(np.float32) for _ in range(4)
        )
        stack = FringeStack(frames)
        save_stack(tmp_path / "scan", stack)
        names = sorted(p.name for p in tmp_path.iterdir())
        assert names == [f"scan_{i:02d}.fpm" for i in range(4)]
        again = load_stack(tmp_path / "scan", 4)
        assert np.array_equal(again.as_array(), stack.as_array())
