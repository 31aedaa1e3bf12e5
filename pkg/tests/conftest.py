import math

import pytest

from icrt_lab import (
    AngleTable,
    MeasureState,
    Skeleton,
    StopRule,
    ThetaSpec,
    assemble_sample,
    sample_icrt,
)


@pytest.fixture(scope="session")
def skeleton_fixture():
    return Skeleton([1.0, 2.0, 3.0], [0.5, 1.5])


@pytest.fixture(scope="session")
def hand_sample():
    """Two atoms (0.6 at 0.25, 0.3 at 1.25), density 0.55, three branches."""
    spec = ThetaSpec(math.sqrt(0.55), (0.6, 0.3))
    measure = MeasureState(0.55, [0.25, 1.25], [0.6, 0.3])
    angles = AngleTable([0.2, 0.8], [0.7, 0.4])
    return assemble_sample(spec, measure, [1.0, 2.0], [0.5, 1.5], angles, 3.0)


@pytest.fixture(scope="session")
def brownian_sample():
    return sample_icrt(ThetaSpec.brownian(), 5, StopRule(max_level=6.0))


@pytest.fixture(scope="session")
def powerlaw_sample():
    return sample_icrt(
        ThetaSpec.power_law(1.5, 60, theta0=0.4), 6, StopRule(max_level=6.0)
    )


@pytest.fixture(scope="session")
def cycle_sample():
    return sample_icrt(ThetaSpec.single_atom(), 42, StopRule(max_branches=6))
