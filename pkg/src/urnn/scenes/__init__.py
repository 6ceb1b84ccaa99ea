from urnn.scenes.data import (DEFAULT_FRAMERATE, InteractionSubtype, Scene, SceneArrays, SceneKind, SceneType,
                              Track, rotate_points, rotate_scene, rotation_matrix, scene_from_arrays, velocities)
from urnn.scenes.io import parse_scenes, write_scenes
from urnn.scenes.categorize import CategoryThresholds, categorize, interaction_subtype, type_histogram
from urnn.scenes.synth import SynthParams, synth_scenes
from urnn.scenes.split import split
