"""Inverse kinematics and RRT* planning for serial arms whose joints are
driven by a single actuator travelling along the links."""
from .errors import DomainError, GenerationError, MasrError, TrainingDiverged, ValidationError
from .kinematics import (Configuration, PoseSE2, RobotModel, Twist, decompose_ma_position, fk_jacobian,
                         forward_kinematics, pose_exp, pose_log, wrap_angle)
from .motion import Action, Move, Path, Rotate, action_cost, expand_action, path_cost, traverse_length
from .geometry import Environment, Polygon, config_free, inflate_obstacles, motion_free, random_environment
from .planner import PlannerParams, plan

__version__ = "0.1.0"
