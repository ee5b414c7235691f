use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("hopping block out of range: offset1={offset1}, rows ({x2},{y2}) exceed range {range}")]
    OutOfRange { offset1: i32, x2: usize, y2: usize, range: f64 },

    #[error("hopping block touches Dirichlet row: offset1={offset1}, rows ({x2},{y2})")]
    DirichletRow { offset1: i32, x2: usize, y2: usize },

    #[error(
        "non-Hermitian hopping: block (offset1={offset1}; {x2},{y2}) is not the adjoint of \
         block (offset1={neg}; {y2},{x2}) (deviation {deviation:.3e})",
        neg = -offset1
    )]
    NonHermitian { offset1: i32, x2: usize, y2: usize, deviation: f64 },

    #[error("invalid model parameters: {0}")]
    Model(String),

    #[error("model file: {0}")]
    ModelFile(String),

    #[error("eigensolver did not converge at k-index {k_index} (k1={k1})")]
    Eigensolver { k_index: usize, k1: f64 },

    #[error("bulk state in the energy window at k1={k1}, E={energy}: lower weight {lower:.3}, upper weight {upper:.3}")]
    BulkStateInWindow { k1: f64, energy: f64, lower: f64, upper: f64 },

    #[error("branch {branch} does not cross the chemical potential")]
    NoCrossing { branch: usize },

    #[error("branch {branch} is tangent to the Fermi level at k1={k1}: |v|={velocity:.3e} below v_min={v_min:.3e}")]
    TangentCrossing { branch: usize, k1: f64, velocity: f64, v_min: f64 },

    #[error("current operator needs hopping range at most sqrt(2), got {0}")]
    CurrentRange(f64),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("degenerate pair straddling the Fermi level at k1={k1}; shift the momentum grid or mu")]
    DegenerateCrossing { k1: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("bosonic frequency nearest to eta={eta} at beta={beta} is zero")]
    ZeroBosonicFrequency { eta: f64, beta: f64 },

    #[error("inadmissible Luttinger parameters: {0}")]
    Params(String),

    #[error("near-singular channel matrix at p=({p0}, {p1}): condition number {condition:.3e}")]
    Singular { p0: f64, p1: f64, condition: f64 },

    #[error("quadrature did not converge: estimate {estimate} with error {error:.3e} after {nodes} nodes")]
    Quadrature { estimate: String, error: f64, nodes: usize },

    #[error("flow left the controlled region at scale {scale}: {reason}")]
    FlowDivergence { scale: i32, reason: String },
}
