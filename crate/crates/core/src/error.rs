use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("non-finite value encountered: {0}")]
    NumericalDomain(String),
    #[error("integration blew up after t = {last_good_t}")]
    IntegrationBlowup { last_good_t: f64 },
    #[error("state entered the singular region of chart '{chart}' at t = {t}")]
    ChartSingularity { chart: String, t: f64 },
    #[error("velocity Hessian is singular (condition number {condition:.3e})")]
    SingularLagrangian { condition: f64 },
    #[error("constraint violated: residual {residual:.3e}")]
    ConstraintViolation { residual: f64 },
    #[error("diagnostics channel '{0}' is missing")]
    DiagnosticsMissing(String),
    #[error("Lagrangian is not G-regular (worst condition {worst_condition:.3e})")]
    NotGRegular { worst_condition: f64 },
    #[error("{what} is not invariant (defect {defect:.3e})")]
    NotInvariant { what: String, defect: f64 },
    #[error("momentum equation solve failed: residual {residual:.3e} after {iterations} iterations")]
    KappaSolve { residual: f64, iterations: usize },
    #[error("anchor does not project onto the initial reduced point (distance {distance:.3e})")]
    GaugeAnchor { distance: f64 },
    #[error("trajectories cannot be compared: {0}")]
    Comparison(String),
    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
