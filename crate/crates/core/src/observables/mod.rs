//! Deflection parameters and the observables built from them.

mod dparams;
mod params;

pub use dparams::{
    compare_with_propagation, compute_deflection_parameters, compute_deflection_parameters_at_times,
    deflected_momentum, read_dparams, retained_momentum, retained_population, write_dparams, DParamCache,
    DeflectionParameterSet, MomentumComparison,
};
pub use params::{
    alignment_coefficients, alignment_expansion, alignment_parameter, coherence_coefficient, coherence_expansion,
    coherence_parameter, k_coefficients, l_perp_from_measurement, measure_momenta, orientation_expansion,
    orientation_parameter, shape_from_density, stretched_superposition, AlignmentCoefficients, KCoefficients,
    ModeMomenta, ShapeParameters, K2_THRESHOLD,
};
