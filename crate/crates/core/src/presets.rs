//! Ready-made scenes used by the examples, the CLI and the acceptance tests.

use crate::policy::{GridSpec, MixedPolicyParams, UtilitySpec};
use crate::scenario::{RareEventSpec, Scene, ScenarioConfig, SpeedMarginal};

/// A scene paired with the nominal mixed policy that drives it.
#[derive(Debug, Clone)]
pub struct Preset {
    pub scene: Scene,
    pub nominal: MixedPolicyParams,
}

/// Slow traffic where near-crashes come from cut-ins that stall well below
/// the subject's speed. Nominal event probability is about 4e-3.
pub fn toy() -> Preset {
    let scenario = ScenarioConfig {
        dt: 0.1,
        horizon: 12.0,
        lane_change_duration: 2.0,
        v_limit: 30.0,
        subject_speed_sampler: SpeedMarginal::uniform(10.0, 16.0, 8).expect("valid marginal"),
        follower: crate::scenario::KraussParams { sigma_imperfection: 0.0, ..Default::default() },
        ..ScenarioConfig::default()
    };
    let scene = Scene {
        scenario,
        utility: UtilitySpec::new(10.0, 4.0, 6.0).expect("valid utility"),
        grid: GridSpec { v_min: 0.0, v_max: 45.0, nv: 128, gap_min: 4.0, gap_max: 60.0, ng: 128 },
        rare_event: RareEventSpec { gap_threshold: 3.0, stopped_speed: 0.1 },
        lambda_max: 100.0,
    };
    let nominal = MixedPolicyParams::new([5.0; 3], [-5.0; 3], [0.05, 0.05, 0.98]).expect("valid nominal");
    Preset { scene, nominal }
}

/// Fast traffic where a near-crash needs a short gap, a short time to
/// collision and a cut-in faster than the preferred speed, so one
/// category clearly dominates the others.
pub fn rigged() -> Preset {
    let scenario = ScenarioConfig {
        dt: 0.5,
        horizon: 5.0,
        lane_change_duration: 2.0,
        v_limit: 40.0,
        subject_speed_sampler: SpeedMarginal::uniform(30.0, 40.0, 8).expect("valid marginal"),
        follower: crate::scenario::KraussParams { sigma_imperfection: 0.0, ..Default::default() },
        ..ScenarioConfig::default()
    };
    let scene = Scene {
        scenario,
        utility: UtilitySpec::new(5.0, 2.0, 20.0).expect("valid utility"),
        grid: GridSpec { v_min: 0.0, v_max: 40.0, nv: 128, gap_min: 1.0, gap_max: 41.0, ng: 64 },
        rare_event: RareEventSpec { gap_threshold: 1.0, stopped_speed: 18.0 },
        lambda_max: 100.0,
    };
    let nominal = MixedPolicyParams::new([5.0; 3], [-5.0; 3], [0.5; 3]).expect("valid nominal");
    Preset { scene, nominal }
}
