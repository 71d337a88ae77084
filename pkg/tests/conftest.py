import warnings

import pytest

from switchadvisor.encoder import EncoderConfig
from switchadvisor.heads import HeadsConfig
from switchadvisor.pipeline import PipelineConfig, run_pipeline
from switchadvisor.synthgen import (GeneratorConfig, generate_cards,
                                    generate_population)


@pytest.fixture(scope="session")
def catalog():
    return generate_cards()


@pytest.fixture(scope="session")
def tiny_pop(catalog):
    """60 players: big enough for a full pipeline pass, fast to generate."""
    config = GeneratorConfig(n_players=60, rng_seed=11)
    histories, truth = generate_population(config, catalog)
    return histories, truth


def quick_pipeline_config(master_seed=5):
    """Small dims / few epochs: exercises every stage in a few seconds.
    Model quality is NOT meaningful at this setting."""
    return PipelineConfig(
        master_seed=master_seed,
        restarts=8,
        n_boot=2000,
        encoder=EncoderConfig(cat_dim=4, card_dim=8, cont_dim=4, hidden=16,
                              d_z=16, learning_rate=0.05, epochs=2),
        heads=HeadsConfig(hidden=64, epochs=4),
    )


@pytest.fixture(scope="session")
def small_run(tiny_pop, catalog, tmp_path_factory):
    """Full pipeline on the tiny population with quick settings."""
    histories, _ = tiny_pop
    out = tmp_path_factory.mktemp("small_run")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        result = run_pipeline(histories, catalog, quick_pipeline_config(),
                              out_dir=str(out))
    return result, out


def trained_pipeline_config():
    """The operating point for model-quality assertions: a 300-player corpus
    with a desk-sized encoder.  Roughly three minutes to train."""
    return PipelineConfig(
        master_seed=1,
        encoder=EncoderConfig(cat_dim=4, card_dim=8, cont_dim=4, hidden=32,
                              d_z=32, learning_rate=0.05, epochs=20),
        heads=HeadsConfig(learning_rate=0.05, epochs=30, patience=5),
    )


@pytest.fixture(scope="session")
def trained_run(catalog, tmp_path_factory):
    """Trained 300-player pipeline; shared by the acceptance suite."""
    config = GeneratorConfig(n_players=300, rng_seed=7)
    histories, truth = generate_population(config, catalog)
    out = tmp_path_factory.mktemp("trained_run")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        result = run_pipeline(histories, catalog, trained_pipeline_config(),
                              out_dir=str(out))
    return result, histories, truth, out
