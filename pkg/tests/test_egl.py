import itertools

import numpy as np
import pytest

from fblearn.data import synth_dataset
from fblearn.dsp import Waveform
from fblearn.egl import (
    PRESETS,
    ExperimentConfig,
    WeightMode,
    format_config,
    majority_vote,
    parse_config,
    predict_clip,
    run_experiment,
    write_reports,
)
from fblearn.errors import ConfigError, InvalidArgument
from fblearn.fblayer import FBLayerState
from fblearn.melbank import Provenance, load_filterbank, triangular_filterbank
from fblearn.nn import Model, ModelConfig, TrainSchedule
from fblearn.smoothing import smooth_filterbank

from oracles import vote_oracle


def tiny_config(**overrides):
    base = dict(arch="Shallow", n_filt=8, clip_seconds=0.25, segment_seconds=0.25, sample_rate_hz=8000,
                nfft=512, schedule=TrainSchedule(epochs=2, batch_size=8))
    base.update(overrides)
    return ExperimentConfig(**base)


@pytest.fixture(scope="module")
def tiny_clips():
    return synth_dataset(3, 10, 0.25, 8000, seed=0)


@pytest.fixture(scope="module")
def improved_reports(tiny_clips):
    return run_experiment(tiny_config(weight_mode="Improved", rounds=1), tiny_clips, test_fold=1)


class TestMajorityVote:
    def test_examples(self):
        assert majority_vote([2, 2, 7, 2]) == 2
        assert majority_vote([5]) == 5
        scores = [[0, 0.4, 0, 0.1], [0, 0.1, 0, 0.9]]
        assert majority_vote([1, 3], scores) == 3

    def test_tie_without_scores_goes_low(self):
        assert majority_vote([4, 1]) == 1

    def test_score_tie_goes_low(self):
        assert majority_vote([0, 2], [[0.5, 0, 0.5], [0.5, 0, 0.5]]) == 0

    def test_empty(self):
        with pytest.raises(InvalidArgument):
            majority_vote([])

    def test_against_oracle_small(self):
        rng = np.random.default_rng(0)
        for n in range(1, 4):
            for preds in itertools.product(range(3), repeat=n):
                scores = rng.uniform(size=(n, 3)).round(1)
                assert majority_vote(preds, scores) == vote_oracle(list(preds), scores.tolist())


class TestConfig:
    def test_defaults(self):
        cfg = ExperimentConfig()
        assert cfg.frame_spec.nfft == 8000 and cfg.frame_spec.hop == 2000
        assert cfg.unit_seconds == 4.0

    def test_parse_preset_and_override(self):
        cfg = parse_config("preset = desk\nweight_mode = Improved\nrounds = 2\nseed = 7  # comment\n")
        assert cfg.n_filt == 16 and cfg.nfft == 1024
        assert cfg.weight_mode is WeightMode.IMPROVED and cfg.rounds == 2
        assert cfg.schedule.epochs == 30 and cfg.schedule.rng_seed == 7

    def test_round_trip(self):
        cfg = parse_config("preset = urban-22k-mv\nsavgol_window = 11\nfmax = 8000\n")
        assert parse_config(format_config(cfg)) == cfg

    @pytest.mark.parametrize("text,line", [
        ("n_filt = 4\nbogus = 1\n", 2),
        ("n_filt = four\n", 1),
        ("\n\nnot a pair\n", 3),
        ("n_filt = 4\nn_filt = 5\n", 2),
        ("preset = nope\n", 1),
        ("majority_vote = maybe\n", 1),
    ])
    def test_errors_carry_line(self, text, line):
        with pytest.raises(ConfigError) as info:
            parse_config(text)
        assert info.value.line == line

    def test_semantic_error(self):
        with pytest.raises(ConfigError):
            parse_config("weight_mode = Fix\nrounds = 2\n")

    def test_invalid_direct(self):
        with pytest.raises(InvalidArgument):
            ExperimentConfig(clip_seconds=1.0, segment_seconds=2.0)

    def test_presets_valid(self):
        for name in PRESETS:
            parse_config(f"preset = {name}\n")


def constant_model(cfg, n_classes=3, T=None):
    """A model whose logits favour class 1 for every input."""
    T = T or (int(cfg.unit_seconds * cfg.sample_rate_hz) - cfg.frame_spec.nfft) // cfg.frame_spec.hop + 1
    model = Model(ModelConfig(cfg.arch, n_classes, cfg.leaky_slope, (cfg.n_filt, T)),
                  rng=np.random.default_rng(0))
    model.params["fc2.w"][:] = 0.0
    model.params["fc2.b"][:] = [0.0, 1.0, 0.0]
    return model


class TestPredictClip:
    def test_one_second_vote_equals_single(self, tiny_clips):
        cfg_mv = tiny_config(majority_vote=True)
        cfg = tiny_config()
        model = Model(ModelConfig("Shallow", 3, 0.33, (8, 12)), rng=np.random.default_rng(3))
        fb = FBLayerState(triangular_filterbank(8, 512, 8000).weights, trainable=False)
        for clip in tiny_clips[:6]:
            assert predict_clip(model, fb, clip.waveform, cfg_mv) == predict_clip(model, fb, clip.waveform, cfg)

    def test_four_segments_feed_vote(self, monkeypatch):
        import fblearn.egl as egl
        cfg = tiny_config(clip_seconds=1.0, majority_vote=True)
        seen = {}
        real = egl.majority_vote

        def spy(preds, scores=None):
            seen["n"] = len(preds)
            return real(preds, scores)

        monkeypatch.setattr(egl, "majority_vote", spy)
        model = constant_model(cfg)
        fb = FBLayerState(triangular_filterbank(8, 512, 8000).weights)
        clip = Waveform(np.random.default_rng(0).standard_normal(8000) * 0.1, 8000)
        assert predict_clip(model, fb, clip, cfg) == 1
        assert seen["n"] == 4

    def test_deterministic(self, tiny_clips):
        cfg = tiny_config()
        model = Model(ModelConfig("Shallow", 3, 0.33, (8, 12)), rng=np.random.default_rng(1))
        fb = FBLayerState(triangular_filterbank(8, 512, 8000).weights)
        clip = tiny_clips[4].waveform
        assert len({predict_clip(model, fb, clip, cfg) for _ in range(3)}) == 1

    def test_resamples_foreign_rate(self):
        cfg = tiny_config()
        model = constant_model(cfg)
        fb = FBLayerState(triangular_filterbank(8, 512, 8000).weights)
        clip = Waveform(np.random.default_rng(0).standard_normal(4000) * 0.1, 16000)
        assert predict_clip(model, fb, clip, cfg) == 1


class TestRunExperiment:
    def test_fix_keeps_bank(self, tiny_clips):
        (rep,) = run_experiment(tiny_config(weight_mode="Fix"), tiny_clips, test_fold=2)
        assert rep.post_bank.weights.tobytes() == rep.pre_bank.weights.tobytes()
        assert rep.pre_bank.weights.tobytes() == triangular_filterbank(8, 512, 8000).weights.tobytes()
        assert rep.post_bank.provenance is Provenance.TRIANGULAR_INIT
        assert rep.fb_state.W.tobytes() == rep.pre_bank.weights.tobytes()
        assert 0 <= rep.test_accuracy <= 1
        assert rep.confusion.sum() == 6  # fold 2 holds 2 clips per class

    def test_trained_changes_bank(self, tiny_clips):
        (rep,) = run_experiment(tiny_config(weight_mode="Trained"), tiny_clips, test_fold=1)
        assert rep.post_bank.provenance is Provenance.TRAINED
        assert not np.array_equal(rep.post_bank.weights, rep.pre_bank.weights)

    def test_improved_structure(self, improved_reports):
        assert len(improved_reports) == 2
        first, second = improved_reports
        assert first.pre_bank.provenance is Provenance.TRIANGULAR_INIT
        assert second.pre_bank.provenance is Provenance.SMOOTHED
        np.testing.assert_array_equal(second.pre_bank.weights, smooth_filterbank(first.post_bank).weights)
        assert [r.round_index for r in improved_reports] == [0, 1]

    def test_rounds_plus_one_reports(self, tiny_clips):
        reps = run_experiment(tiny_config(weight_mode="Improved", rounds=2,
                                          schedule=TrainSchedule(epochs=1, batch_size=8)),
                              tiny_clips, test_fold=3)
        assert len(reps) == 3

    def test_validation_fold_is_last_training_fold(self, improved_reports):
        rep = improved_reports[0]
        assert rep.validation_accuracy is not None
        assert len(rep.history) == 2
        assert all("val_accuracy" in h for h in rep.history)

    def test_reproducible(self, tiny_clips, improved_reports):
        again = run_experiment(tiny_config(weight_mode="Improved", rounds=1), tiny_clips, test_fold=1)
        for a, b in zip(improved_reports, again):
            assert a.to_dict() == b.to_dict()
            assert a.post_bank.weights.tobytes() == b.post_bank.weights.tobytes()

    def test_seed_changes_run(self, tiny_clips, improved_reports):
        other = run_experiment(tiny_config(weight_mode="Improved", rounds=1), tiny_clips, test_fold=1, seed=99)
        assert other[0].post_bank.weights.tobytes() != improved_reports[0].post_bank.weights.tobytes()

    def test_serialisation_fidelity(self, tmp_path, tiny_clips, improved_reports):
        write_reports(improved_reports, tmp_path)
        cfg = tiny_config(weight_mode="Improved", rounds=1)
        for rep in improved_reports:
            back = load_filterbank(tmp_path / f"round{rep.round_index}_post.csv")
            reloaded = FBLayerState(back.weights, trainable=False)
            for clip in tiny_clips:
                assert (predict_clip(rep.model, reloaded, clip.waveform, cfg)
                        == predict_clip(rep.model, rep.fb_state, clip.waveform, cfg))

    def test_report_files(self, tmp_path, improved_reports):
        written = write_reports(improved_reports, tmp_path)
        names = sorted(p.name for p in tmp_path.iterdir())
        assert len(written) == 8
        assert "round1_pre.csv" in names and "round1_post.svg" in names and "round0.json" in names

    def test_missing_test_fold(self, tiny_clips):
        with pytest.raises(InvalidArgument):
            run_experiment(tiny_config(), tiny_clips, test_fold=9)
