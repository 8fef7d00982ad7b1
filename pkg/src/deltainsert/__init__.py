"""Kinematic peg-in-hole benchmark built around delta-pose regression.

A predictor estimates the offset from the gripper pose to the seated pose, a
three-phase controller turns that estimate into waypoints, and a clamped
kinematic world executes them.
"""
from .geometry import DeltaPose, Pose4, apply, delta, planar_distance, wrap_angle
from .world import (ContactEvents, CrossSection, SceneConfig, SceneState, SocketSpec,
                    footprint_inside, goal_pose, is_success, make_scene, perturb_socket,
                    resolve_motion)
from .observation import Observation, features, render, unflatten
from .predictor import (LearnedPredictor, NoiseSpec, OraclePredictor, PredictionContext,
                        PredictionModel, fit_knn, fit_ridge, load_model, predict_model,
                        predict_oracle, save_model)
from .collector import (CollectionConfig, DatasetRecord, collect_close_contact,
                        collect_dataset, collect_free_space, dataset_stats, read_dataset,
                        write_dataset)
from .controller import (ControllerParams, EpisodeTrace, Perturbation, Phase, next_waypoint,
                         next_waypoint_direct, read_trace, run_episode, select_phase,
                         write_trace)
from .harness import (EvalConfig, EvalReport, PredictorSpec, ablation_data_amount, adapt,
                      emit_report, replay, run_eval, run_perturbation_eval, standard_suite)

__version__ = "0.1.0"
