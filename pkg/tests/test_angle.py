import numpy as np
import pytest

from hitframe.angle import (
    IMAGENET_MEAN,
    IMAGENET_STD,
    DegenerateDataError,
    PreprocessConfig,
    SaCnnConfig,
    SaCnnModel,
    bilinear_resize,
    classify_stream,
    reference_schedule,
    predict_classes,
    preprocess,
    sacnn_forward,
    train_sacnn,
)
from hitframe.nn import LrSchedule, ShapeError, grad_check, softmax_cross_entropy
from hitframe.rally import ShotAngle
from hitframe.synth import SynthConfig, angle_image_set


def desk_images(count, offset=0):
    imgs, labels = angle_image_set(SynthConfig(), count, offset)
    pre = PreprocessConfig.desk()
    return np.stack([preprocess(i / 255.0, pre) for i in imgs]), labels


class TestPreprocess:
    def test_full_hd_shape(self):
        frame = np.random.default_rng(0).random((3, 1080, 1920))
        assert preprocess(frame, PreprocessConfig()).shape == (3, 216, 216)

    def test_constant_image(self):
        out = preprocess(np.full((3, 500, 700), 0.3), PreprocessConfig())
        for c in range(3):
            np.testing.assert_allclose(out[c], (0.3 - IMAGENET_MEAN[c]) / IMAGENET_STD[c], atol=1e-12)

    def test_crop_offset(self):
        frame = np.broadcast_to(np.arange(384.0), (3, 216, 384)).copy()
        pre = PreprocessConfig(channel_means=(0, 0, 0), channel_stds=(1, 1, 1))
        out = preprocess(frame, pre)
        assert out[0, 0, 0] == 84 and out[0, 0, -1] == 299

    def test_small_frame_rejected(self):
        with pytest.raises(ValueError):
            preprocess(np.zeros((3, 1, 5)), PreprocessConfig())

    def test_bad_crop(self):
        with pytest.raises(ValueError):
            PreprocessConfig(resize_h=100, resize_w=384, crop=216)

    def test_resize_linear_ramp_is_exact(self):
        # bilinear interpolation reproduces affine images away from the clamped border
        ramp = np.broadcast_to(np.arange(10.0), (1, 4, 10))
        out = bilinear_resize(ramp, 4, 20)
        np.testing.assert_allclose(out[0, 0, 1:-1], (np.arange(1, 19) + 0.5) / 2 - 0.5, atol=1e-12)

    @pytest.mark.parametrize("shape", [(3, 300, 300), (3, 217, 1000), (3, 720, 1280)])
    def test_shape_independent_of_resolution(self, shape):
        assert preprocess(np.zeros(shape), PreprocessConfig()).shape == (3, 216, 216)


class TestForward:
    def test_batch_of_eight(self):
        model = SaCnnModel.init(SaCnnConfig.desk(), PreprocessConfig.desk(), seed=0)
        x = np.random.default_rng(0).standard_normal((8, 3, 32, 32))
        assert sacnn_forward(x, model, training=True).shape == (8, 2)

    def test_zero_parameters(self):
        model = SaCnnModel.init(SaCnnConfig.desk(), PreprocessConfig.desk(), seed=0)
        for t in model.params.values():
            t.data[:] = 0.0
        x = np.random.default_rng(1).standard_normal((4, 3, 32, 32))
        logits = sacnn_forward(x, model, training=True).data
        assert np.all(logits == 0.0)
        sacnn_forward(x, model, training=True)  # populate running stats
        assert np.all(predict_classes(x, model) == 0)

    def test_full_scale_flat_size(self):
        assert SaCnnConfig().flat_size == 64 * 27 * 27

    def test_wrong_input_size(self):
        model = SaCnnModel.init(SaCnnConfig.desk(), PreprocessConfig.desk())
        with pytest.raises(ShapeError):
            sacnn_forward(np.zeros((1, 3, 16, 16)), model)

    def test_faithful_relu_clamps_logits(self):
        cfg = SaCnnConfig(input_size=8, channels=(2,), fc_width=4, faithful_relu=True)
        model = SaCnnModel.init(cfg, PreprocessConfig.desk(), seed=3)
        logits = sacnn_forward(np.random.default_rng(0).standard_normal((5, 3, 8, 8)), model, True).data
        assert np.all(logits >= 0)

    @pytest.mark.parametrize("seed", [0, 2, 4])
    def test_tiny_end_to_end_gradient(self, seed):
        cfg = SaCnnConfig(input_size=8, channels=(3,), fc_width=5)
        model = SaCnnModel.init(cfg, PreprocessConfig.desk(), seed=seed)
        names = list(model.params)
        rng = np.random.default_rng(seed + 2)
        x = rng.standard_normal((3, 3, 8, 8))
        labels = [0, 1, 1]

        def op(t):
            model.params = dict(zip(names, t))
            return softmax_cross_entropy(sacnn_forward(x, model, training=True), labels)

        point = [model.params[k].data.copy() for k in names]
        assert grad_check(op, point) <= 1e-5


class TestTraining:
    def test_reference_schedule(self):
        s = reference_schedule()
        for epoch in range(20):
            assert s.lr(epoch) == pytest.approx(1e-3 * 0.1 ** (epoch // 6), rel=1e-12)

    def test_zero_epochs_is_identity(self):
        model = SaCnnModel.init(SaCnnConfig.desk(), PreprocessConfig.desk(), seed=0)
        before = {k: v.copy() for k, v in model.arrays().items()}
        x, y = desk_images(8)
        _, history = train_sacnn(x, y, model, reference_schedule(), epochs=0)
        assert history == []
        assert all(np.array_equal(before[k], v) for k, v in model.arrays().items())

    def test_single_class_rejected(self):
        model = SaCnnModel.init(SaCnnConfig.desk(), PreprocessConfig.desk())
        with pytest.raises(DegenerateDataError):
            train_sacnn(np.zeros((4, 3, 32, 32)), [1, 1, 1, 1], model, reference_schedule(), 1)

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_memorization_loss_non_increasing(self, seed):
        x, y = desk_images(16)
        model = SaCnnModel.init(SaCnnConfig.desk(), PreprocessConfig.desk(), seed=seed)
        _, history = train_sacnn(x, y, model, LrSchedule(1e-3), 6, batch_size=16, seed=seed)
        assert all(b <= a for a, b in zip(history, history[1:]))

    def test_deterministic(self, tmp_path):
        x, y = desk_images(16)
        blobs = []
        for run in range(2):
            model = SaCnnModel.init(SaCnnConfig.desk(), PreprocessConfig.desk(), seed=4)
            train_sacnn(x, y, model, reference_schedule(), 2, seed=4)
            model.save(tmp_path / f"m{run}.json")
            blobs.append((tmp_path / f"m{run}.json").read_bytes())
        assert blobs[0] == blobs[1]


class TestClassifyStream:
    def _model(self, bias):
        cfg = SaCnnConfig(input_size=32, channels=(2,), fc_width=4)
        model = SaCnnModel.init(cfg, PreprocessConfig.desk(), seed=0)
        model.params["out.W"].data[:] = 0.0
        model.params["out.b"].data[:] = bias
        model.bn_state["block0"] = {"running_mean": np.zeros(2), "running_var": np.ones(2)}
        return model

    def test_all_high(self):
        frames = np.random.default_rng(0).random((5, 3, 18, 32))
        s = classify_stream(frames, self._model([0.0, 1.0]), "v", 30)
        assert s.tokens == (ShotAngle.HIGH,) * 5

    def test_ties_are_other(self):
        frames = np.random.default_rng(0).random((4, 3, 18, 32))
        s = classify_stream(frames, self._model([0.5, 0.5]), "v", 30)
        assert s.tokens == (ShotAngle.OTHER,) * 4

    def test_length_preserved(self):
        frames = np.random.default_rng(0).random((7, 3, 18, 32))
        assert len(classify_stream(frames, self._model([0.0, 0.0]), batch_size=3)) == 7

    def test_checkpoint_round_trip(self, tmp_path):
        model = self._model([0.1, -0.2])
        model.save(tmp_path / "m.json")
        back = SaCnnModel.load(tmp_path / "m.json")
        x = np.random.default_rng(5).standard_normal((3, 3, 32, 32))
        np.testing.assert_array_equal(sacnn_forward(x, model).data, sacnn_forward(x, back).data)
