from unittest import TestCase

import numpy as np

from urnn.dummy import FrozenPredictor, GroundTruthPredictor
from urnn.metrics import (ade, collisions, comparison_table, evaluate, evaluate_scene, fde, format_table,
                          interpolate)
from urnn.scenes import InteractionSubtype, SceneKind, SceneType, scene_from_arrays

from helpers import OBS_LEN, PRED_LEN

FRAMES = OBS_LEN + PRED_LEN


def walker(y: float, speed: float = 0.4) -> np.ndarray:
    return np.column_stack([speed * np.arange(FRAMES), np.full(FRAMES, y)])


def tagged(scene_id: int, tag: SceneType, *paths):
    scene = scene_from_arrays(scene_id, np.stack(paths))
    scene.tag = tag
    return scene


class TestDisplacement(TestCase):

    def test_01_ade_fde(self):
        truth = np.zeros((3, 2))
        pred = np.array([[3.0, 4.0], [0.0, 0.0], [0.0, 1.0]])
        self.assertAlmostEqual(ade(pred, truth), 2.0)
        self.assertAlmostEqual(fde(pred, truth), 1.0)
        with self.assertRaises(ValueError):
            ade(np.zeros((2, 2)), np.zeros((3, 2)))

    def test_02_interpolate(self):
        dense = interpolate(np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0]]), 1)
        np.testing.assert_allclose(dense, [[0.0, 0.0], [0.5, 0.0], [1.0, 0.0], [1.0, 0.5], [1.0, 1.0]])
        with_gap = interpolate(np.array([[0.0, 0.0], [np.nan, np.nan], [1.0, 1.0]]), 1)
        self.assertTrue(np.isnan(with_gap[1:4]).all())


class TestCollisions(TestCase):

    def test_01_pass_through_needs_subframes(self):
        a = np.array([[-0.4, 0.0], [0.6, 0.0]])
        b = np.array([[0.0, -0.4], [0.0, 0.6]])
        self.assertTrue(collisions(a, [b], 0.1, 4))
        self.assertFalse(collisions(a, [b], 0.1, 0))

    def test_02_strict_threshold_and_nan(self):
        a = np.array([[0.0, 0.0], [1.0, 0.0]])
        self.assertFalse(collisions(a, [a + [0.0, 0.1]], 0.1, 0))
        self.assertTrue(collisions(a, [a + [0.0, 0.099]], 0.1, 0))
        self.assertFalse(collisions(a, [np.full((2, 2), np.nan)]))
        self.assertFalse(collisions(a, []))
        with self.assertRaises(ValueError):
            collisions(a, [np.zeros((3, 2))])


class TestEvaluate(TestCase):

    def setUp(self):
        group = SceneType(SceneKind.INTERACTING, InteractionSubtype.GROUP)
        self.scenes = [
            tagged(0, SceneType(SceneKind.LINEAR), walker(0.0), walker(2.0)),
            tagged(1, SceneType(SceneKind.LINEAR), walker(0.0)),
            tagged(2, group, walker(0.0), walker(0.6)),
        ]

    def test_01_ground_truth_scores_zero(self):
        report = evaluate(GroundTruthPredictor(), self.scenes, OBS_LEN, PRED_LEN)
        overall = report.bucket("overall")
        self.assertEqual((overall.ade, overall.fde, overall.col_ii, overall.count), (0.0, 0.0, 0.0, 3))

    def test_02_frozen_displacement(self):
        report = evaluate(FrozenPredictor(), self.scenes, OBS_LEN, PRED_LEN)
        # steps of 0.4 per frame, frozen for 3 frames
        self.assertAlmostEqual(report.bucket("overall").ade, 0.8)
        self.assertAlmostEqual(report.bucket("overall").fde, 1.2)
        self.assertEqual(report.bucket("II").count, 2)
        self.assertEqual(report.bucket("III/Grp").count, 1)
        self.assertIsNone(report.bucket("IV"))

    def test_03_collision_kinds(self):
        observed_close = walker(0.05)
        observed_close[OBS_LEN:] = walker(3.0)[OBS_LEN:]
        scene = tagged(0, SceneType(SceneKind.OTHER), walker(0.0), observed_close)
        result = evaluate_scene(FrozenPredictor(), scene, OBS_LEN, PRED_LEN)
        # the frozen neighbor sits next to the frozen primary, the real one walked away
        self.assertTrue(result.col_i)
        self.assertFalse(result.col_ii)
        result = evaluate_scene(GroundTruthPredictor(), scene, OBS_LEN, PRED_LEN)
        self.assertFalse(result.col_i)

    def test_04_buckets_restrict_and_tables(self):
        report = evaluate(FrozenPredictor(), self.scenes, OBS_LEN, PRED_LEN, jobs=2)
        self.assertEqual([r.scene_id for r in report.results], [0, 1, 2])
        self.assertEqual(list(report.to_frame()["Bucket"]), ["overall", "II", "III", "III/Grp"])
        self.assertEqual(report.restrict(["III"]).bucket("overall").count, 1)
        with self.assertRaises(ValueError):
            report.restrict(["V"])
        table = comparison_table([("Frozen", "-", report), ("Empty", "-", report.restrict(["I"]))])
        self.assertEqual(list(table["Scenes"]), [3, 0])
        self.assertTrue(np.isnan(table["ADE"].iloc[1]))
        self.assertIn("0.80", format_table(table))
        self.assertEqual(set(report.to_dict()["overall"]), {"ADE", "FDE", "Col-I", "Col-II", "Scenes"})

    def test_05_untagged_scenes_are_categorized(self):
        scene = scene_from_arrays(0, np.stack([np.column_stack([0.5 * np.arange(21), np.zeros(21)])]))
        result = evaluate_scene(FrozenPredictor(), scene)
        self.assertIs(result.scene_type.kind, SceneKind.LINEAR)
