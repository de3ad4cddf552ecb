"""Plantar-pressure sway analysis for an optical (FTIR) pressure plate.

Reads and writes trial recordings, calibrates camera intensity to pressure
against a force sensor, segments the two feet, tracks the center of pressure,
computes sway metrics and paired tests across poses, and simulates coarser
sensor grids to find the resolution needed to tell the poses apart.
"""

from .calib import (
    CalibrationConstant,
    CalibrationError,
    OpticalParams,
    PressureMap,
    calibrate_frame,
    calibrate_trial,
    reconstruct_pressure,
    theoretical_kappa,
    total_force,
)
from .cohort import TrialSpec, generate_trial, trial_specs
from .cop import CopError, CopSample, CopSeries, TrialUnusable, cop_frame, cop_series, foot_cop, total_cop
from .frameio import (
    ForceSample,
    IntensityFrame,
    Pose,
    PPMFError,
    TrialMeta,
    TrialRecording,
    read_trial,
    validate_trial,
    write_trial,
)
from .resolution import (
    SensorGridSpec,
    SweepResult,
    cop_error_at_pitch,
    downsample_pressure,
    minimum_resolution,
    resolution_sweep,
)
from .scene import ConfigError, Scene, copy_scene, load_scene
from .segment import FootRegion, SegmentationError, SegmentationParams, segment_frame
from .stats import Sidedness, TTestResult, paired_t_test, student_t_sf
from .sway import GroupingOutcome, SwayMetrics, pose_grouping, standard_error
from .synth import FootTemplate, GroundTruth, SwayModelParams, make_foot_template, render_trial, sway_trajectory

__version__ = "0.1.0"
