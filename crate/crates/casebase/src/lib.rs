//! Case-base sampling for fully parametric survival analysis.
//!
//! The workflow has three steps: sample person-moments from survival data
//! ([`sampling`]), fit a smooth-in-time hazard model by offset logistic or
//! multinomial regression ([`glm`], optionally penalized via [`penalized`]),
//! and convert the fitted hazard into survival and cumulative-incidence
//! curves ([`risk`]). [`poptime`] renders population-time plots and
//! [`simulate`] generates datasets with known ground truth.

pub mod basis;
pub mod data;
pub mod design;
pub mod error;
pub mod glm;
pub mod linalg;
pub mod penalized;
pub mod poptime;
pub mod risk;
pub mod rng;
pub mod simulate;
pub mod sampling;
pub mod table;

pub use basis::{BSplineBasis, TimeBasis};
pub use data::{load_dataset, ColumnSchema, CovValue, SubjectRecord, SurvivalDataset};
pub use design::{
    build_design_matrix, BSplineTerm, DesignInfo, DesignMatrix, MainTerm, ModelSpec, Profile,
    TimeTerm,
};
pub use error::{Error, ErrorClass, Result};
pub use glm::{
    fit_logistic_offset, fit_multinomial_offset, Family, FitStats, GlmFit, HazardModel,
    HazardRatioCurve, LrtResult, WaldInterval,
};
pub use penalized::{
    cv_elastic_net, default_penalty_factors, fit_elastic_net, lambda_path, CvResult,
    PenalizedOptions, PenalizedPath,
};
pub use poptime::{poptime_layout, render_svg, PlotStyle, PopTimeLayout, StratumLayout};
pub use risk::{
    cif_competing, cif_single, cumulative_incidence, hazard_at, survival_curve,
    IntegrationMethod, RiskCurve, SurvivalCurve,
};
pub use sampling::{compute_offset, sample_base_series, total_person_time, PersonMomentTable};
pub use simulate::{
    exponential_mle, simulate_dataset, weibull_truth_coefficients, Censoring, CovariateSampler,
    HazardFamily, TruthSpec,
};
pub use table::Table;
