import math

import numpy as np
import pytest

from spherefit import (
    ConfigInfeasible,
    SceneConfig,
    Sphere,
    SphereModel,
    best_pair,
    classify_spherical,
    generate_scene,
    monte_carlo_views,
    p_rmse,
    p_rmse_combined,
    perturb_observations,
    reconstruct_subset,
)


class TestGenerateScene:
    def test_on_axis_sphere_projects_to_circles(self):
        config = SceneConfig(n_cameras=2, arc_span_deg=60.0,
                             spheres=[["s", [0.0, 0.0, 0.0], 0.1]],
                             n_tie_points=6)
        scene = generate_scene(config)
        for view in scene.views:
            (e,) = scene.observations[view.image_id]
            assert math.isclose(e.a_e, e.b_e, rel_tol=1e-12)
            assert math.isclose(e.x_ce, view.px, abs_tol=1e-9)
            assert math.isclose(e.y_ce, view.py, abs_tol=1e-9)

    def test_determinism(self):
        a = generate_scene(SceneConfig(clutter_per_image=3))
        b = generate_scene(SceneConfig(clutter_per_image=3))
        assert [v.image_id for v in a.views] == [v.image_id for v in b.views]
        for vid in a.observations:
            for ea, eb in zip(a.observations[vid], b.observations[vid]):
                assert (ea.x_ce, ea.y_ce, ea.a_e, ea.b_e, ea.theta) == \
                       (eb.x_ce, eb.y_ce, eb.a_e, eb.b_e, eb.theta)
        for ta, tb in zip(a.tie_points, b.tie_points):
            assert np.array_equal(ta.xyz, tb.xyz)
            assert ta.visible_in == tb.visible_in

    def test_default_scene_observations_pass_gate(self, lab_scene):
        count = 0
        for view in lab_scene.views:
            for e in lab_scene.observations[view.image_id]:
                report = classify_spherical(e, view.f, view.px, view.py, k=2.0)
                assert report.accepted
                count += 1
        assert count == 30 * 9

    def test_clutter_fails_gate(self):
        scene = generate_scene(SceneConfig(clutter_per_image=4))
        checked = 0
        for view in scene.views:
            for e in scene.observations[view.image_id]:
                if e.ellipse_id in scene.clutter_ids:
                    report = classify_spherical(e, view.f, view.px, view.py, k=2.0)
                    assert not report.accepted
                    checked += 1
        assert checked == 30 * 4

    def test_infeasible_sphere_raises(self):
        config = SceneConfig(spheres=[["s", [4.0, 0.0, 1.0], 0.1]])
        with pytest.raises(ConfigInfeasible):
            generate_scene(config)

    def test_placements(self):
        for placement in ("ring", "arc", "hemisphere"):
            scene = generate_scene(SceneConfig(n_cameras=6, placement=placement,
                                               n_tie_points=10))
            assert len(scene.views) == 6
        with pytest.raises(ValueError, match="placement"):
            generate_scene(SceneConfig(placement="grid"))

    def test_config_round_trip(self):
        config = SceneConfig(n_cameras=12, clutter_per_image=2, seed=9)
        back = SceneConfig.from_dict(config.to_dict())
        assert back.to_dict() == config.to_dict()
        with pytest.raises(ValueError, match="unknown scene config key"):
            SceneConfig.from_dict({"n_camera": 5})


class TestPerturb:
    def test_zero_sigma_is_identity(self, lab_scene):
        same = perturb_observations(lab_scene, 0.0, 1)
        assert same is lab_scene

    def test_sample_mean_is_unbiased(self):
        # Clearly eccentric silhouette: with a - b >> sigma the ordering
        # repair never fires, so the noise must average out.
        config = SceneConfig(n_cameras=2, spheres=[["s", [0.4, 0.3, 0.1], 0.1]],
                             n_tie_points=0)
        scene = generate_scene(config)
        truth = scene.observations["img-00"][0].x_ce
        sigma = 0.5
        n = 100_000
        draws = np.empty(n)
        for s in range(n):
            noisy = perturb_observations(scene, sigma, s)
            draws[s] = noisy.observations["img-00"][0].x_ce
        assert abs(draws.mean() - truth) < 4.0 * sigma / math.sqrt(n)

    def test_stored_covariance_is_truthful(self, noisy_lab_scene):
        for obs in noisy_lab_scene.observations.values():
            for e in obs:
                assert np.array_equal(e.cov, np.eye(4) * 0.25)

    def test_axis_order_preserved(self, lab_scene):
        noisy = perturb_observations(lab_scene, 3.0, 5)
        for obs in noisy.observations.values():
            for e in obs:
                assert e.a_e >= e.b_e > 0.0

    def test_per_parameter_sigma(self, lab_scene):
        noisy = perturb_observations(lab_scene, [0.0, 0.0, 1.0, 1.0], 3)
        exact = lab_scene.observations["img-00"][0]
        jittered = noisy.observations["img-00"][0]
        assert jittered.a_e == exact.a_e and jittered.b_e == exact.b_e
        assert jittered.x_ce != exact.x_ce
        assert np.array_equal(jittered.cov, np.diag([0.0, 0.0, 1.0, 1.0]))

    def test_rejects_negative_sigma(self, lab_scene):
        with pytest.raises(ValueError):
            perturb_observations(lab_scene, -0.1, 0)


class TestPRmse:
    def test_exact_estimate(self):
        truth = Sphere([1.0, 2.0, 3.0], 0.5)
        assert p_rmse(truth, truth) == (0.0, 0.0)

    def test_center_percentage(self):
        truth = Sphere([0.0, 0.0, 0.0], 2.0)
        est = Sphere([0.02, 0.0, 0.0], 2.0)  # offset 1% of the radius
        center, radius = p_rmse(est, truth)
        assert math.isclose(center, 1.0, rel_tol=1e-12)
        assert radius == 0.0

    def test_radius_percentage(self):
        truth = Sphere([0.0, 0.0, 0.0], 1.0)
        est = Sphere([0.0, 0.0, 0.0], 1.0062)
        center, radius = p_rmse(est, truth)
        assert math.isclose(radius, 0.62, rel_tol=1e-9)

    def test_accepts_models_and_checks_frames(self):
        truth = Sphere([0.0, 0.0, 0.0], 1.0)
        model = SphereModel(sphere=Sphere([0.01, 0.0, 0.0], 1.0),
                            per_view_radii=[("a", 1.0), ("b", 1.0)],
                            radius_spread=0.0, triangulation_residual=0.0)
        center, _ = p_rmse(model, truth)
        assert math.isclose(center, 1.0)
        with pytest.raises(ValueError, match="frame"):
            p_rmse(Sphere([0, 0, 1], 1.0, frame="camera:x"), truth)

    def test_combined_value(self):
        truth = Sphere([0.0, 0.0, 0.0], 1.0)
        est = Sphere([0.01, 0.0, 0.0], 1.01)
        combined = p_rmse_combined(est, truth)
        assert math.isclose(combined, 100.0 * math.sqrt((0.01 ** 2 + 0.01 ** 2) / 4.0))


@pytest.fixture(scope="module")
def small_scene():
    return generate_scene(SceneConfig(n_cameras=8, n_tie_points=16))


class TestMonteCarlo:
    def test_subset_counts(self, small_scene):
        stats = monte_carlo_views(small_scene, [2, 8], seed=0, timing=False,
                                  include_best_pair=False)
        assert stats[0].k == 2 and stats[0].p == min(50, math.comb(8, 2))
        assert stats[1].k == 8 and stats[1].p == 1

    def test_lab_subset_count_is_capped(self, noisy_lab_scene):
        stats = monte_carlo_views(noisy_lab_scene, [2], seed=1, timing=False,
                                  include_best_pair=False)
        assert stats[0].p == 50  # min(50, C(30, 2) = 435)

    def test_zero_noise_is_exact_for_every_k(self, small_scene):
        stats = monte_carlo_views(small_scene, [2, 4, 8], seed=3, timing=False)
        for s in stats:
            assert s.failures == 0
            assert s.center_max < 1e-6
            assert s.radius_max < 1e-6
            assert s.center_min <= s.center_mean <= s.center_max
            assert s.radius_min <= s.radius_mean <= s.radius_max

    def test_seed_determinism(self, small_scene):
        noisy = perturb_observations(small_scene, 0.5, 7)
        a = monte_carlo_views(noisy, [2, 4], seed=5, timing=False)
        b = monte_carlo_views(noisy, [2, 4], seed=5, timing=False)
        assert a == b

    def test_rejects_bad_subset_size(self, small_scene):
        with pytest.raises(ValueError):
            monte_carlo_views(small_scene, [1], seed=0)
        with pytest.raises(ValueError):
            monte_carlo_views(small_scene, [9], seed=0)

    def test_best_pair_beats_random_pairs_in_aggregate(self):
        # Aggregated over independent scenes, the scored pair should be at
        # least as accurate as the average randomly drawn admissible pair.
        def combined_error(scene, noisy, view_ids):
            truth = dict(scene.spheres)
            models = reconstruct_subset([scene.view(v) for v in view_ids],
                                        noisy.observations)
            values = [p_rmse_combined(model, truth[max(set(track.values()),
                                                       key=list(track.values()).count)])
                      for track, model in models]
            return float(np.mean(values))

        rng = np.random.default_rng(123)
        best_vals, random_vals = [], []
        for seed in range(20):
            scene = generate_scene(SceneConfig(seed=seed))
            noisy = perturb_observations(scene, 0.5, seed)
            pair = best_pair(scene.network)
            best_vals.append(combined_error(scene, noisy, (pair.i, pair.j)))
            ids = [v.image_id for v in scene.views]
            for _ in range(10):
                i, j = rng.choice(len(ids), size=2, replace=False)
                random_vals.append(combined_error(scene, noisy, (ids[i], ids[j])))
        assert float(np.mean(best_vals)) <= float(np.mean(random_vals))
