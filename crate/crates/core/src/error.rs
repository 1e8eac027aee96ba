use thiserror::Error;

/// Errors raised while building networks, parsing scenarios, or running
/// simulations and analyses.
#[derive(Debug, Error)]
pub enum Error {
    #[error("network is disconnected: node `{0}` is unreachable")]
    Disconnected(String),
    #[error("duplicate {kind} id `{id}`")]
    DuplicateId { kind: &'static str, id: String },
    #[error("unknown node id `{0}`")]
    UnknownNode(String),
    #[error("unknown pipe id `{0}`")]
    UnknownPipe(String),
    #[error("network has no slack node")]
    NoSlackNode,
    #[error("pipe `{pipe}`: {what}")]
    InvalidGeometry { pipe: String, what: String },
    #[error("pipe `{0}` is a self-loop")]
    SelfLoop(String),
    #[error("pipe `{0}` enters slack node; slack nodes may only have outgoing pipes")]
    EdgeIntoSlack(String),
    #[error("non-slack node `{0}` has no incoming pipe")]
    NoIncomingPipe(String),
    #[error("control ratio {value} on pipe `{pipe}` is below 1")]
    ControlRatio { pipe: String, value: f64 },
    #[error("invalid refinement length {0} km")]
    InvalidRefinement(f64),

    #[error("gas: {0}")]
    Gas(String),
    #[error("undefined mixture: both partial densities are zero")]
    EmptyMixture,

    #[error("scenario schema: {0}")]
    Schema(String),
    #[error("node `{node}` is missing boundary `{field}`")]
    MissingBoundary { node: String, field: &'static str },
    #[error("profile `{field}`: {reason}")]
    InvalidProfile { field: String, reason: String },
    #[error("time {t} hr lies outside the horizon [0, {horizon}]")]
    OutsideHorizon { t: f64, horizon: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("nonpositive total density {value} at node {node}")]
    NonPositiveDensity { node: usize, value: f64 },
    #[error("nonpositive density-like argument {value} on edge {edge}")]
    NonPositiveFluxArgument { edge: usize, value: f64 },
    #[error("non-finite flux on edge {edge}")]
    NonFiniteFlux { edge: usize },
    #[error("isolated pressure system requires constant concentration profiles")]
    VaryingConcentration,
    #[error("steady state did not converge after {iterations} iterations (residual {residual:e})")]
    SteadyState { iterations: usize, residual: f64 },
    #[error("infeasible demand: {0}")]
    InfeasibleDemand(String),
    #[error("flux solve failed at collocation node {0}")]
    FluxSolve(usize),

    #[error("step size collapsed at t = {t_hr} hr")]
    StepCollapse { t_hr: f64 },
    #[error("positivity violated at t = {t_hr} hr: {detail}")]
    Positivity { t_hr: f64, detail: String },
    #[error("integrator configuration: {0}")]
    Config(String),

    #[error("time grids differ")]
    GridMismatch,
    #[error("signal is identically zero; normalization undefined")]
    ZeroSignal,
    #[error("identical initial samples; divergence ratio undefined")]
    IdenticalStart,
    #[error("invalid interval: {0}")]
    Interval(String),
    #[error("unknown quantity `{0}`")]
    UnknownQuantity(String),
    #[error("sweep: {0}")]
    Sweep(String),
    #[error("spectral solver supports single-pipe scenarios only")]
    SpectralNetwork,
}

impl Error {
    /// True for failures caused by invalid input rather than numerics.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Disconnected(_)
                | Error::DuplicateId { .. }
                | Error::UnknownNode(_)
                | Error::UnknownPipe(_)
                | Error::NoSlackNode
                | Error::InvalidGeometry { .. }
                | Error::SelfLoop(_)
                | Error::EdgeIntoSlack(_)
                | Error::NoIncomingPipe(_)
                | Error::ControlRatio { .. }
                | Error::InvalidRefinement(_)
                | Error::Gas(_)
                | Error::Schema(_)
                | Error::MissingBoundary { .. }
                | Error::InvalidProfile { .. }
                | Error::OutsideHorizon { .. }
                | Error::Config(_)
                | Error::UnknownQuantity(_)
                | Error::Interval(_)
                | Error::SpectralNetwork
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
