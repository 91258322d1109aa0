import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, max_examples=40,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture],
)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def tiny_world(tmp_path_factory):
    """Three short clips at 160 x 96 plus small saved models for every stage."""
    from pulsebench import experiments, extraction, refiner, regressor, roi, synth

    root = tmp_path_factory.mktemp("world")
    spec = synth.DatasetSpec(3, (55.0, 100.0), 30.0, 22.0, 160, 96, 0.01, 5)
    synth.gen_dataset(spec, root / "clips")
    paths = {}

    thumbs, boxes = experiments.corpus_arrays(60, 1, 160, 96)
    paths["roi_model"] = root / "r.w"
    roi.save_roi_model(roi.train_roi(thumbs, boxes, roi.RoiHyper(epochs=3)), paths["roi_model"])

    patches = experiments.extractor_patches(80, 2, sizes=((160, 96),))
    paths["s_model"] = root / "s.w"
    extraction.save_s_model(extraction.train_s(patches, hyper=extraction.SHyper(epochs=3)),
                            paths["s_model"])

    bank, hr = experiments.clean_signal_bank(40, 3)
    paths["e_model"] = root / "e.w"
    regressor.save_e_model(regressor.train_e(bank, hr, regressor.EHyper(epochs=2, shifts=2)),
                           paths["e_model"])
    paths["g2_model"] = root / "g2.w"
    pair = refiner.train_gan(bank, refiner.RefinerConfig(steps=30, batch_size=8))
    refiner.save_pair(pair, paths["g2_model"], root / "d2.w")
    return root, {k: str(v) for k, v in paths.items()}


ACCEPTANCE_LINES = {}


@pytest.fixture
def criterion():
    """Record one pass/fail line per acceptance criterion for the terminal summary."""
    def record(number, ok, detail):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES[number] = line
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
