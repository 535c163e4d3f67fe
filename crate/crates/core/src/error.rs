use thiserror::Error;

/// Everything that can go wrong in the laboratory. Variants carry enough
/// context to diagnose a failed run from the error message alone; the CLI
/// maps any `Err` to exit code 1.
#[derive(Debug, Error)]
pub enum Error {
    // ---- geometry ----
    #[error("chart radius must be positive and finite, got R0 = {0}")]
    BadChartRadius(f64),
    #[error("hyperbolic chart requires R0 < 1 (pole of the conformal factor at |x| = 1), got R0 = {0}")]
    HyperbolicPoleInsideChart(f64),
    #[error("point ({0}, {1}) lies outside the chart domain")]
    PointOutsideChart(f64, f64),

    // ---- discretize ----
    #[error("grid size must be even and >= 4, got n = {0}")]
    BadGridSize(usize),
    #[error("Hoelder exponent must lie in (0, 1], got alpha = {0}")]
    InvalidAlpha(f64),
    #[error("fields live on different grids ({0} vs {1})")]
    GridMismatch(String, String),
    #[error("potential bound must be positive and finite, got {0}")]
    BadPotentialBound(f64),

    // ---- linear algebra ----
    #[error("dense path only supported up to dimension 4096, got {0}")]
    DimensionTooLarge(usize),
    #[error("factorization hit a zero pivot at index {0}: shift target coincides with an eigenvalue; retry with a jittered target")]
    FactorizationSingular(usize),
    #[error("{method} did not converge within {iters} iterations (residual {residual:.3e}, wanted {wanted:.3e})")]
    NoConvergence {
        method: &'static str,
        iters: usize,
        residual: f64,
        wanted: f64,
    },
    #[error("banded factorization of dimension {dim} bandwidth {bw} would need {mb} MB (budget {budget} MB)")]
    FactorizationTooLarge {
        dim: usize,
        bw: usize,
        mb: usize,
        budget: usize,
    },

    // ---- perforate ----
    #[error("h = {h} out of admissible range (0, {hmax}) for this schedule")]
    HOutOfRange { h: f64, hmax: f64 },
    #[error("ball radius {radius:.3e} below grid resolution {spacing:.3e}")]
    RadiusBelowResolution { radius: f64, spacing: f64 },
    #[error("perforation scale h*eps = {heps:.3e} below 2 grid spacings ({spacing:.3e}): refine the grid or enlarge h")]
    ResolutionTooCoarse { heps: f64, spacing: f64 },
    #[error("mask is empty{0}")]
    EmptyMask(&'static str),
    #[error("separation constant must exceed 2, got C = {0}")]
    BadSeparation(f64),
    #[error("ball (center ({0:.4}, {1:.4}), radius {2:.3e}) leaves the chart domain")]
    BallOutsideChart(f64, f64, f64),

    // ---- corrector ----
    #[error("smallness precondition violated: h^-2 k^2 |V-E| = {0:.4} > 0.1; shrink the potential or enlarge h")]
    SmallnessViolated(f64),
    #[error("corrector max deviation {dev:.4e} exceeds contract bound {bound:.4e}")]
    CorrectorTooLarge { dev: f64, bound: f64 },

    // ---- beltrami ----
    #[error("Beltrami coefficient support touches the periodic cell boundary; enlarge the cell or use the periodic test mode")]
    SupportTouchesBoundary,
    #[error("sup |mu| = {0:.4} >= 1: not uniformly elliptic, Neumann series diverges")]
    MuNotContractive(f64),
    #[error("integrability exponent must satisfy p > 1, got p = {0}")]
    POutOfRange(f64),
    #[error("condition C_2p * sup|mu| = {0:.4} >= 1 violated; shrink mu or lower p")]
    ConditionViolated(f64),
    #[error("map inversion failed at ({0:.4}, {1:.4}): Newton and grid fallback both stalled")]
    InversionFailed(f64, f64),

    // ---- carleman ----
    #[error("boundary layer of the mask is empty")]
    EmptyBoundary,
    #[error("sign condition still violated after {0} resamples")]
    SignConditionUnsatisfiable(usize),
    #[error("test function support violates the weight precondition: {0}")]
    SupportViolatesPrecondition(&'static str),
    #[error("interior weight 1/|x| needs support away from the origin (min |x| = {0:.3e})")]
    InteriorWeightAtOrigin(f64),
    #[error("cutoff is not compactly supported inside the domain")]
    EtaNotCompact,

    // ---- pipeline ----
    #[error("observation region is empty after masking")]
    EmptyObservationRegion,
    #[error("observation region must be contained in the total region for a nonnegative ratio")]
    ObservationNotContained,
    #[error("need at least 2 sweep points for a fit, got {0}")]
    DegenerateSweep(usize),
    #[error("unknown check suite '{0}'")]
    UnknownSuite(String),
    #[error("config error: {0}")]
    Config(String),

    // ---- io ----
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed field container: {0}")]
    BadContainer(String),
    #[error("config parse error: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
