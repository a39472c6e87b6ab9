use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T, E = Error> = core::result::Result<T, E>;

/// Why a single edit event could not be applied during replay.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ReplayFault {
    UnknownErrorId,
    DuplicateErrorId,
    MissingPayload,
    PayloadIdMismatch,
    OutOfOrder,
}

impl core::fmt::Display for ReplayFault {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(match self {
            ReplayFault::UnknownErrorId => "unknown error id",
            ReplayFault::DuplicateErrorId => "error id already present",
            ReplayFault::MissingPayload => "add/modify without payload",
            ReplayFault::PayloadIdMismatch => "payload id differs from event error id",
            ReplayFault::OutOfOrder => "timestamp earlier than previous event",
        })
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("unknown category `{0}`")]
    UnknownCategory(String),
    #[error("malformed category `{0}`")]
    MalformedCategory(String),
    #[error("replay failed at event #{index} (error id `{error_id}`): {fault}")]
    Replay {
        index: usize,
        error_id: String,
        fault: ReplayFault,
    },
    #[error("invalid weight scheme: {0}")]
    InvalidWeights(String),
    #[error("cannot aggregate an empty annotation set")]
    EmptyAnnotationSet,
    #[error("pairwise ranking needs at least two systems, got {0}")]
    TooFewSystems(usize),
    #[error("score sets cover different systems for {0}")]
    SystemMismatch(String),
    #[error("character labelings are not comparable: {0}")]
    LabelingMismatch(&'static str),
    #[error("annotation sets cover different keys (missing on left: {missing_left:?}; missing on right: {missing_right:?})")]
    KeyMismatch {
        missing_left: Vec<String>,
        missing_right: Vec<String>,
    },
    #[error("duplicate annotation for {0}")]
    DuplicateKey(String),
    #[error("invalid corpus: {0}")]
    InvalidCorpus(String),
    #[error("segment {0} is not in the corpus")]
    UnknownSegment(String),
    #[error("no re-annotator has any prior errors")]
    NoPriorErrors,
    #[error("automatic annotators produced no errors")]
    NoAutoErrors,
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("infeasible campaign configuration: {0}")]
    InfeasibleConfig(String),
    #[error("no annotations to select from")]
    NoAnnotations,
    #[error("no re-annotations in the export")]
    NoReannotations,
    #[error("no prior annotation found for {0}")]
    MissingPrior(String),
    #[error("no shared annotations for `{row}` vs `{col}`")]
    EmptyIntersection { row: String, col: String },
    #[error("`{row}` and `{col}` share raters {raters:?}")]
    RaterOverlap {
        row: String,
        col: String,
        raters: Vec<String>,
    },
    #[error("no injected errors were re-annotated")]
    NoInjectedErrors,
    #[error("invalid simulation parameter: {0}")]
    InvalidSimulation(String),
}
