"""Shared fixtures: the pinned Gaussian-mixture pipeline used across suites.

Everything is seeded, so the fixtures are deterministic; they are session
scoped because the attack fine-tune is the expensive step.
"""

import time

import numpy as np
import pytest

from abstain_audit.data import gen_gaussian_mixture
from abstain_audit.mirage import MirageConfig, finetune_mirage
from abstain_audit.nets import OptConfig, fit_temperature, init_model, train_ce

# pinned recipe: data/init/shuffle/attack seeds chosen once and frozen
DATA_SEED = 28
INIT_SEED = 1
TRAIN_SEED = 2
ATTACK_SEED = 3
UNDERSAMPLE_SEED = 14

TRAIN_CFG = OptConfig(epochs=40, lr=0.1, batch_size=64, seed=TRAIN_SEED,
                      momentum=0.9)
ATTACK_OPT = OptConfig(epochs=6000, lr=0.2, batch_size=128, seed=ATTACK_SEED,
                       momentum=0.9)


@pytest.fixture(scope="session")
def gauss():
    train, test, region = gen_gaussian_mixture(DATA_SEED)
    return train, test, region


@pytest.fixture(scope="session")
def baseline_model(gauss):
    train, _, _ = gauss
    model = init_model([2, 32, 3], seed=INIT_SEED)
    return train_ce(model, train, TRAIN_CFG)


@pytest.fixture(scope="session")
def calibrated_model(gauss, baseline_model):
    _, test, _ = gauss
    m = baseline_model.copy()
    m.temperature = fit_temperature(m, test)
    return m.fold_temperature()


PIPELINE_RUNTIME = {}  # stage name -> wall-clock seconds


@pytest.fixture(scope="session")
def attacked_model(gauss, calibrated_model):
    train, _, region = gauss
    cfg = MirageConfig(epsilon=0.15, lam=0.9, opt=ATTACK_OPT)
    t0 = time.perf_counter()
    out = finetune_mirage(calibrated_model, train, region, cfg)
    PIPELINE_RUNTIME["attack"] = time.perf_counter() - t0
    return out


@pytest.fixture()
def rng():
    return np.random.default_rng(0)
