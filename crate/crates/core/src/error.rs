use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("topology mismatch: expected {expected} joints, found {found}")]
    Topology { expected: usize, found: usize },
    #[error("invalid skeleton: {0}")]
    Skeleton(String),

    #[error("calibration error: {0}")]
    Calibration(String),
    #[error("point is behind the camera (depth {depth})")]
    BehindCamera { depth: f64 },
    #[error("rotation axis must have unit norm (got {norm})")]
    InvalidAxis { norm: f64 },
    #[error("invalid engine-frame config: {0}")]
    EngineConfig(String),

    #[error("invalid bounding box ({x1}, {y1}, {x2}, {y2}, score {score})")]
    InvalidBox { x1: f64, y1: f64, x2: f64, y2: f64, score: f64 },
    #[error("invalid pixel patch: {0}")]
    InvalidPatch(String),
    #[error("color descriptor layout mismatch")]
    DescriptorLayout,
    #[error("no detection boxes in frame")]
    NoDetections,
    #[error("tracking lost: color fallback needs both candidate patches and a reference appearance")]
    TrackingLost,

    #[error("invalid heatmap: {0}")]
    InvalidHeatmap(String),
    #[error("heatmap plane {joint} is not normalized (sum {sum})")]
    NotNormalized { joint: usize, sum: f64 },

    #[error("triangulation needs at least 2 positively weighted views, got {0}")]
    InsufficientViews(usize),
    #[error("no calibration for camera `{0}`")]
    UnknownCamera(String),
    #[error("invalid joint observation: {0}")]
    InvalidObservation(String),
    #[error("triangulated point lies at infinity (w = {w})")]
    PointAtInfinity { w: f64 },
    #[error("degenerate view geometry (singular value ratio {ratio})")]
    DegenerateGeometry { ratio: f64 },
    #[error("views are not synchronized: expected frame {expected}, found {found}")]
    Synchronization { expected: u64, found: u64 },

    #[error("refiner model error: {0}")]
    Model(String),
    #[error("loss inputs have mismatched shapes: {0}")]
    LossShape(String),
    #[error("training dataset error: {0}")]
    Dataset(String),
    #[error("training diverged: loss {current} exceeds 10x the initial loss {initial}")]
    Divergence { initial: f64, current: f64 },

    #[error("invalid chain: {0}")]
    Chain(String),
    #[error("target coincides with joint {joint}")]
    CoincidentTarget { joint: usize },

    #[error("time step must be positive, got {0}")]
    TimeStep(f64),
    #[error("invalid muscle configuration: {0}")]
    MuscleConfig(String),

    #[error("prediction has zero spatial variance; similarity alignment is undefined")]
    DegenerateAlignment,
    #[error("sequence error: {0}")]
    Sequence(String),
}
