import numpy as np
import pytest

from hitframe.io import (
    TENSOR_MAGIC,
    SchemaError,
    load_frames,
    read_jsonl,
    read_tensor,
    save_png_frames,
    write_jsonl,
    write_tensor,
)
from hitframe.nn import AdamState
from hitframe.nn.checkpoint import load_checkpoint, save_checkpoint


class TestJsonLines:
    def test_round_trip_and_version(self, tmp_path):
        write_jsonl(tmp_path / "a.jsonl", [{"b": 1, "a": [1, 2]}])
        assert read_jsonl(tmp_path / "a.jsonl") == [{"schema_version": 1, "a": [1, 2], "b": 1}]
        assert (tmp_path / "a.jsonl").read_text() == '{"a":[1,2],"b":1,"schema_version":1}\n'

    def test_future_version_rejected(self, tmp_path):
        (tmp_path / "a.jsonl").write_text('{"schema_version": 99}\n')
        with pytest.raises(SchemaError):
            read_jsonl(tmp_path / "a.jsonl")


class TestTensorContainer:
    @pytest.mark.parametrize("dtype", [np.uint8, np.float32, np.float64])
    def test_round_trip(self, tmp_path, dtype):
        arr = (np.arange(24).reshape(2, 3, 4) % 200).astype(dtype)
        write_tensor(tmp_path / "t.hft", arr)
        back = read_tensor(tmp_path / "t.hft")
        assert back.dtype == dtype and np.array_equal(back, arr)
        assert (tmp_path / "t.hft").read_bytes()[:8] == TENSOR_MAGIC

    def test_bad_magic(self, tmp_path):
        (tmp_path / "t.hft").write_bytes(b"NOTATENSOR")
        with pytest.raises(SchemaError):
            read_tensor(tmp_path / "t.hft")

    def test_truncated(self, tmp_path):
        write_tensor(tmp_path / "t.hft", np.zeros((4, 4)))
        data = (tmp_path / "t.hft").read_bytes()
        (tmp_path / "t.hft").write_bytes(data[:-8])
        with pytest.raises(SchemaError):
            read_tensor(tmp_path / "t.hft")


class TestFrames:
    def test_png_directory(self, tmp_path):
        frames = np.random.default_rng(0).integers(0, 256, (3, 3, 5, 7)) / 255.0
        save_png_frames(tmp_path / "f", frames)
        np.testing.assert_allclose(load_frames(tmp_path / "f"), frames, atol=1e-12)

    def test_container_uint8_scaled(self, tmp_path):
        write_tensor(tmp_path / "f.hft", np.full((1, 3, 2, 2), 255, dtype=np.uint8))
        assert np.all(load_frames(tmp_path / "f.hft") == 1.0)

    def test_empty_directory(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_frames(tmp_path)

    def test_wrong_layout(self, tmp_path):
        write_tensor(tmp_path / "f.hft", np.zeros((2, 4, 4)))
        with pytest.raises(SchemaError):
            load_frames(tmp_path / "f.hft")


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        params = {"a.W": np.random.default_rng(0).standard_normal((3, 2)), "a.b": np.array([0.1, -1e-300])}
        state = AdamState()
        state.m = {k: v * 0.5 for k, v in params.items()}
        state.v = {k: v ** 2 for k, v in params.items()}
        state.t = 7
        save_checkpoint(tmp_path / "c.json", "demo", {"x": 1}, params, {"r": np.ones(2)}, state, {"note": "n"})
        ck = load_checkpoint(tmp_path / "c.json", "demo")
        assert ck["config"] == {"x": 1} and ck["extra"] == {"note": "n"}
        for k in params:
            assert np.array_equal(ck["params"][k], params[k])
            assert np.array_equal(ck["optimizer"].m[k], state.m[k])
        assert ck["optimizer"].t == 7 and np.array_equal(ck["buffers"]["r"], np.ones(2))

    def test_kind_mismatch(self, tmp_path):
        save_checkpoint(tmp_path / "c.json", "demo", {}, {"w": np.zeros(1)})
        with pytest.raises(ValueError):
            load_checkpoint(tmp_path / "c.json", "other")
