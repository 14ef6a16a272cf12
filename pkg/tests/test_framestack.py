import json
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_stack
from padenoise.errors import ValidationError
from padenoise.framestack import (
    FrameStack,
    from_casorati,
    load_framestack,
    save_framestack,
    slice_window,
    to_casorati,
)


def write_pair(tmp_path, header, data: bytes, name="stack"):
    (tmp_path / f"{name}.f32").write_bytes(data)
    (tmp_path / f"{name}.json").write_text(json.dumps(header))
    return tmp_path / f"{name}.json"


def header_for(n_x, n_z, n_t, name="stack"):
    return {
        "n_x": n_x, "n_z": n_z, "n_t": n_t,
        "dx_mm": 0.3, "dz_mm": 0.1, "dt_s": 0.01,
        "data_file": f"{name}.f32",
    }


class TestLoad:
    def test_single_sample(self, tmp_path):
        path = write_pair(tmp_path, header_for(1, 1, 1), struct.pack("<f", 3.5))
        fs = load_framestack(path)
        assert fs.samples.shape == (1, 1, 1)
        assert fs.samples[0, 0, 0] == 3.5

    def test_short_data_file(self, tmp_path):
        path = write_pair(tmp_path, header_for(1, 1, 2), struct.pack("<f", 3.5))
        with pytest.raises(ValidationError, match="expected 2"):
            load_framestack(path)

    def test_long_data_file(self, tmp_path):
        path = write_pair(tmp_path, header_for(1, 1, 1), struct.pack("<ff", 1.0, 2.0))
        with pytest.raises(ValidationError, match="expected 1"):
            load_framestack(path)

    @pytest.mark.parametrize("missing", ["n_x", "n_z", "n_t", "dx_mm", "dz_mm", "dt_s", "data_file"])
    def test_missing_header_field_named(self, tmp_path, missing):
        header = header_for(1, 1, 1)
        del header[missing]
        path = write_pair(tmp_path, header, struct.pack("<f", 0.0))
        with pytest.raises(ValidationError, match=missing):
            load_framestack(path)

    def test_bad_json(self, tmp_path):
        (tmp_path / "stack.json").write_text("{not json")
        with pytest.raises(ValidationError, match="JSON"):
            load_framestack(tmp_path / "stack.json")

    def test_nonpositive_pitch_rejected(self, tmp_path):
        header = header_for(1, 1, 1)
        header["dx_mm"] = 0.0
        path = write_pair(tmp_path, header, struct.pack("<f", 0.0))
        with pytest.raises(ValidationError, match="dx_mm"):
            load_framestack(path)

    def test_nonfinite_data_rejected(self, tmp_path):
        path = write_pair(tmp_path, header_for(1, 1, 1), struct.pack("<f", float("nan")))
        with pytest.raises(ValidationError, match="non-finite"):
            load_framestack(path)


class TestSave:
    def test_zero_stack_is_zero_bytes(self, tmp_path, rng):
        fs = FrameStack(samples=np.zeros((2, 3, 4)), dx_mm=0.3, dz_mm=0.1, dt_s=0.01)
        save_framestack(fs, tmp_path / "z.json")
        raw = (tmp_path / "z.f32").read_bytes()
        assert raw == b"\x00" * (4 * 24)

    def test_unit_sample_word(self, tmp_path):
        samples = np.zeros((2, 2, 3))
        samples[1, 0, 2] = 1.0  # flat index 1*(2*3) + 0*3 + 2 = 8
        fs = FrameStack(samples=samples, dx_mm=0.3, dz_mm=0.1, dt_s=0.01)
        save_framestack(fs, tmp_path / "u.json")
        raw = (tmp_path / "u.f32").read_bytes()
        assert raw[8 * 4 : 9 * 4] == struct.pack("<I", 0x3F800000)

    def test_roundtrip_within_one_f32_ulp(self, tmp_path, rng):
        fs = random_stack(rng, n_t=10, n_x=4, n_z=6)
        save_framestack(fs, tmp_path / "r.json")
        back = load_framestack(tmp_path / "r.json")
        ulp = np.spacing(np.abs(fs.samples).astype(np.float32)).astype(np.float64)
        assert (np.abs(back.samples - fs.samples) <= ulp).all()

    def test_f32_valued_stack_roundtrips_bit_exactly(self, tmp_path, rng):
        exact = rng.standard_normal((10, 4, 6)).astype(np.float32).astype(np.float64)
        fs = FrameStack(samples=exact, dx_mm=0.3, dz_mm=0.1, dt_s=0.01)
        save_framestack(fs, tmp_path / "e.json")
        back = load_framestack(tmp_path / "e.json")
        assert np.array_equal(back.samples, exact)
        assert (back.dx_mm, back.dz_mm, back.dt_s) == (0.3, 0.1, 0.01)

    def test_unwritable_path_raises_oserror(self, tmp_path, rng):
        fs = random_stack(rng)
        with pytest.raises(OSError):
            save_framestack(fs, tmp_path / "no_such_dir" / "x.json")


class TestCasorati:
    def test_single_frame_column_layout(self):
        # v(x, z) = 10 x + z on a 2x3 grid
        samples = np.array([[[0.0, 1.0, 2.0], [10.0, 11.0, 12.0]]])
        fs = FrameStack(samples=samples, dx_mm=0.3, dz_mm=0.1, dt_s=0.01)
        mat = to_casorati(fs)
        assert mat.shape == (6, 1)
        assert np.array_equal(mat[:, 0], [0, 1, 2, 10, 11, 12])

    def test_identical_frames_give_equal_columns(self, rng):
        frame = rng.standard_normal((3, 4))
        fs = FrameStack(samples=np.stack([frame] * 3), dx_mm=0.3, dz_mm=0.1, dt_s=0.01)
        mat = to_casorati(fs)
        assert np.array_equal(mat[:, 0], mat[:, 1])
        assert np.array_equal(mat[:, 0], mat[:, 2])

    def test_exhaustive_index_map(self, rng):
        fs = random_stack(rng, n_t=7, n_x=4, n_z=5)
        mat = to_casorati(fs)
        for t in range(7):
            for x in range(4):
                for z in range(5):
                    assert mat[x * 5 + z, t] == fs.samples[t, x, z]

    def test_layout_law_single_entry(self, rng):
        fs = random_stack(rng, n_t=5, n_x=3, n_z=4)
        before = to_casorati(fs)
        bumped = fs.samples.copy()
        bumped[2, 1, 3] += 1.0
        after = to_casorati(fs.with_samples(bumped))
        diff = np.nonzero(after != before)
        assert diff[0].tolist() == [1 * 4 + 3] and diff[1].tolist() == [2]

    def test_roundtrip_bit_exact(self, rng):
        fs = random_stack(rng)
        assert np.array_equal(from_casorati(to_casorati(fs), fs).samples, fs.samples)

    def test_zero_matrix_gives_zero_stack(self, rng):
        fs = random_stack(rng, n_t=3, n_x=2, n_z=2)
        out = from_casorati(np.zeros((4, 3)), fs)
        assert not out.samples.any()

    def test_shape_mismatch(self, rng):
        fs = random_stack(rng, n_t=3, n_x=2, n_z=2)
        with pytest.raises(ValidationError, match="shape"):
            from_casorati(np.zeros((5, 3)), fs)

    @given(
        n_t=st.integers(1, 6), n_x=st.integers(1, 5), n_z=st.integers(1, 5),
        seed=st.integers(0, 2**16),
    )
    @settings(max_examples=40, deadline=None)
    def test_roundtrip_property(self, n_t, n_x, n_z, seed):
        samples = np.random.default_rng(seed).standard_normal((n_t, n_x, n_z))
        fs = FrameStack(samples=samples, dx_mm=1.0, dz_mm=1.0, dt_s=1.0)
        assert np.array_equal(from_casorati(to_casorati(fs), fs).samples, samples)


class TestSliceWindow:
    def test_full_window_is_identity(self, rng):
        fs = random_stack(rng)
        out = slice_window(fs, 0, fs.n_t)
        assert np.array_equal(out.samples, fs.samples)

    def test_single_frame(self, rng):
        fs = random_stack(rng)
        out = slice_window(fs, 3, 1)
        assert out.n_t == 1
        assert np.array_equal(out.samples[0], fs.samples[3])

    def test_overlapping_windows_tile(self, rng):
        fs = random_stack(rng, n_t=12)
        rebuilt = np.concatenate(
            [slice_window(fs, start, 4).samples[-2:] for start in range(0, 10, 2)]
        )
        assert np.array_equal(rebuilt, fs.samples[2:])

    @pytest.mark.parametrize("start,length", [(-1, 2), (0, 0), (9, 2), (0, 11)])
    def test_out_of_range(self, rng, start, length):
        fs = random_stack(rng, n_t=10)
        with pytest.raises(ValidationError):
            slice_window(fs, start, length)


def test_nonfinite_samples_rejected():
    samples = np.zeros((1, 1, 2))
    samples[0, 0, 1] = np.inf
    with pytest.raises(ValidationError, match="non-finite"):
        FrameStack(samples=samples, dx_mm=0.3, dz_mm=0.1, dt_s=0.01)
