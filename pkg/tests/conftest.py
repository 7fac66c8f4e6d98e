import numpy as np
import pytest

from safecert import (
    KernelSpec,
    SafeRegion,
    SynthSystemParams,
    default_safe_region,
    extract_onestep_pairs,
    gen_dataset,
)


@pytest.fixture(scope="session")
def region() -> SafeRegion:
    return default_safe_region()


@pytest.fixture(scope="session")
def markov_params() -> SynthSystemParams:
    return SynthSystemParams(alpha=0.0)


@pytest.fixture(scope="session")
def small_trajs(markov_params, region):
    return gen_dataset(markov_params, region, n=80, T=5, seed=11)


@pytest.fixture(scope="session")
def small_pairs(markov_params, region):
    return extract_onestep_pairs(
        None, 400, "iid", 11, params=markov_params, region=region
    )


@pytest.fixture(scope="session")
def dp_spec() -> KernelSpec:
    return KernelSpec.from_variances((0.596, 0.361), 1.456e-6)


@pytest.fixture(scope="session")
def direct_spec() -> KernelSpec:
    return KernelSpec.from_variances((0.772, 1.572), 3.004e-8)
