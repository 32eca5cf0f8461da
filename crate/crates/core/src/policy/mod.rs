//! Stochastic driving policy of the cut-in target vehicle.

pub mod category;
pub mod density;
pub mod grid;
pub mod utility;

pub use category::{behavior_category_of, sample_lambda_in_category, BehaviorCategory};
pub use density::{
    component_cdf, component_cdf_inverse, component_density, mixed_density, mixture_density,
    MixedPolicyParams, QuantalDensity, RationalityComponent, RationalityVector, UtilityId,
    DEFAULT_LAMBDA_MAX,
};
pub use grid::{build_action_grid, sample_action, ActionGrid, Axis, GridSpec, UtilityTable};
pub use utility::{
    sigmoid, ttc_of, utility_gap, utility_progress, utility_ttc, CutInAction, SubjectState,
    Utilities, UtilitySpec,
};
