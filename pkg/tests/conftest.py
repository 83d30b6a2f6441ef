import pytest

from spherefit import SceneConfig, generate_scene, perturb_observations


@pytest.fixture(scope="session")
def lab_scene():
    """Default tabletop scene: 30 cameras on an arc, 9 spheres, exact data."""
    return generate_scene(SceneConfig())


@pytest.fixture(scope="session")
def noisy_lab_scene(lab_scene):
    """The lab scene with 0.5 px parameter noise and truthful covariances."""
    return perturb_observations(lab_scene, 0.5, lab_scene.config.seed)
