from dataclasses import replace

import numpy as np
import pytest

from pulsebench import extraction, nn, pipeline, regressor, roi, spectral, synth
from pulsebench.pipeline import PipelineConfig


@pytest.fixture(scope="module")
def world(tiny_world):
    root, paths = tiny_world
    manifest = root / "clips" / "manifest.json"
    full = PipelineConfig(**{k: paths[k] for k in ("roi_model", "s_model", "e_model")})
    return manifest, full, paths


def test_classical_baseline(world):
    manifest, _, _ = world
    cfg = PipelineConfig(extractor="oracle", estimator="spectral")
    rows = pipeline.run_pipeline(manifest, cfg)
    for row, m in zip(rows, synth.read_manifest(manifest)):
        clip = synth.load_clip(m["clip_path"])
        patches = [roi.crop_resize(clip.frame_u8(i), roi.clamp_box(clip.truth_roi[i]))
                   for i in range(660)]
        sig = extraction.extract_signal(patches, "oracle", extraction.StrategyConfig("A"))
        assert row["pred_bpm"] == spectral.estimate_hr_spectral(sig.values, 22.0, strict=False)


def test_runs_are_byte_identical(world, tmp_path):
    manifest, cfg, _ = world
    for name in ("a.csv", "b.csv"):
        regressor.write_predictions(pipeline.run_pipeline(manifest, cfg), tmp_path / name)
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    threaded = pipeline.run_pipeline(manifest, replace(cfg, threads=2))
    regressor.write_predictions(threaded, tmp_path / "c.csv")
    assert (tmp_path / "c.csv").read_bytes() == (tmp_path / "a.csv").read_bytes()


def test_composition_without_refiners(world):
    manifest, cfg, _ = world
    # one chunk per clip, so both sides push identical batches through the networks
    cfg = replace(cfg, chunk=660)
    models = pipeline.load_models(cfg)
    rows = pipeline.run_pipeline(manifest, cfg, models)
    for row, m in zip(rows, synth.read_manifest(manifest)):
        clip = synth.load_clip(m["clip_path"])
        frames = [clip.frame_u8(i) for i in range(660)]
        boxes = roi.detect_many(models.roi, frames)
        patches = [roi.crop_resize(f, b) for f, b in zip(frames, boxes)]
        sig = extraction.extract_signal(patches, models.s, extraction.StrategyConfig("A"))
        assert row["pred_bpm"] == regressor.estimate_hr(models.e, sig).bpm


def test_chunking_does_not_change_results(world):
    manifest, cfg, _ = world
    a = pipeline.run_pipeline(manifest, cfg)
    b = pipeline.run_pipeline(manifest, replace(cfg, chunk=660))
    assert np.allclose([r["pred_bpm"] for r in a], [r["pred_bpm"] for r in b], rtol=0, atol=1e-9)


def test_signal_refiner_stage(world):
    manifest, cfg, paths = world
    with_g2 = replace(cfg, g2=True, g2_model=paths["g2_model"])
    rows = pipeline.run_pipeline(manifest, with_g2)
    assert all(np.isfinite(r["pred_bpm"]) for r in rows)


def test_config_round_trip(world, tmp_path):
    manifest, cfg, _ = world
    (tmp_path / "cfg.json").write_text(cfg.to_json())
    again = PipelineConfig.load(tmp_path / "cfg.json")
    assert again == cfg
    assert pipeline.run_pipeline(manifest, again) == pipeline.run_pipeline(manifest, cfg)
    with pytest.raises(ValueError, match="unknown"):
        PipelineConfig.from_dict({"strategy": "A", "gpu": True})


def test_missing_model(world):
    _, cfg, _ = world
    with pytest.raises(FileNotFoundError):
        pipeline.load_models(replace(cfg, e_model="/nonexistent/e.w"))
    with pytest.raises(FileNotFoundError):
        pipeline.load_models(replace(cfg, g2=True))


def test_dimension_mismatch(world):
    _, cfg, _ = world
    with pytest.raises(nn.ShapeError):
        pipeline.load_models(replace(cfg, window=600))
    with pytest.raises(nn.ShapeError):
        pipeline.load_models(replace(cfg, strategy="B"))


def test_short_clip(world):
    manifest, cfg, _ = world
    clip = synth.load_clip(synth.read_manifest(manifest)[0]["clip_path"])
    with pytest.raises(pipeline.ClipTooShort):
        pipeline.estimate_clip(clip, pipeline.load_models(cfg), replace(cfg, window=700))


def test_bench_accounting(world):
    manifest, cfg, _ = world
    clip = synth.load_clip(synth.read_manifest(manifest)[0]["clip_path"])
    models = pipeline.load_models(cfg)
    rep = pipeline.bench(cfg, clip, 3, models)
    assert rep.fps == pytest.approx(rep.frames / rep.seconds)
    total_ms = 1000 * rep.seconds / rep.frames
    assert abs(rep.stage_total_ms - total_ms) <= 0.1 * total_ms
    assert len(rep.rep_fps) == 3 and rep.lines()[0].startswith("frames 660")
    longer = pipeline.bench(cfg, clip, 6, models)
    assert abs(longer.fps - rep.fps) < 0.15 * rep.fps


def test_bench_needs_a_repetition(world):
    manifest, cfg, _ = world
    clip = synth.load_clip(synth.read_manifest(manifest)[0]["clip_path"])
    with pytest.raises(ValueError):
        pipeline.bench(cfg, clip, 0)


def test_config_validation():
    with pytest.raises(ValueError):
        PipelineConfig(extractor="magic")
    with pytest.raises(ValueError):
        PipelineConfig(strategy="Z")
