use alloc::string::String;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("dimension {requested} exceeds the configured cap of {cap}")]
    MemoryCap { requested: usize, cap: usize },
    #[error("invalid layout: {0}")]
    InvalidLayout(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("matrix is not Hermitian (max deviation {deviation:e})")]
    NonHermitian { deviation: f64 },
    #[error("trace differs from one by {deviation:e}")]
    TraceNotOne { deviation: f64 },
    #[error("matrix is not positive semidefinite (min eigenvalue {min_eigenvalue:e})")]
    NotPsd { min_eigenvalue: f64 },
    #[error("operator is not unitary (max deviation {deviation:e})")]
    NonUnitary { deviation: f64 },
    #[error("Gibbs weights overflow: beta * spectral width = {exponent:e}")]
    GibbsOverflow { exponent: f64 },
    #[error("state construction failed after {attempts} attempts")]
    ConstructionFailed { attempts: usize },
    #[error("preparation outcome has probability {probability:e}")]
    ZeroProbability { probability: f64 },
    #[error("[P⊗I, H0] = {norm:e}: the perturbative population needs a model that conserves P")]
    FreeEvolutionExcites { norm: f64 },
    #[error("state has g-e blocks of norm {norm:e}; expected a manifold-diagonal state")]
    NotManifoldDiagonal { norm: f64 },
    #[error("phase family has {size} masks, at least 2 are required")]
    FamilyTooSmall { size: usize },
    #[error("pulses in a family must share one amplitude mask")]
    AmplitudeMismatch,
    #[error("empty or malformed grid: {0}")]
    InvalidGrid(String),
    #[error("field does not cover the propagation grid")]
    FieldMismatch,
    #[error("halving the time step changed p(T) by {change:e} (tolerance {tolerance:e})")]
    GridNotConverged { change: f64, tolerance: f64 },
}
