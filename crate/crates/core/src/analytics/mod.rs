//! Closed-form and semi-closed-form quantities of the model.

mod ga;
mod laplace;
mod moments;

pub use ga::{check_expl_ext, ga, stable_ga_integral, stable_ga_truncation_bias, GaAssumption, GaCriterion, GaPoint};
pub use laplace::{
    classify_mean_cells, equal_sharing_growth_threshold, equal_sharing_threshold, regime_map,
    two_point_malthus_boundary, uniform_threshold, write_regime_map_csv, LaplaceExponent, RegimeCell,
    RegimeClass, RegimeVerdict,
};
pub use moments::{
    asymptotic_ratio, mean_population, mean_population_constant, second_moment_n, second_moment_ratio,
    LinearDivisionParams,
};
