// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

use thiserror::Error;

/// Errors produced by the analysis library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("degenerate signal: {0}")]
    DegenerateSignal(String),

    #[error("fisher z domain error: |r| = {0} must be < 1")]
    FisherDomain(f64),

    #[error("empty graph: total edge weight is zero")]
    EmptyGraph,

    #[error("empty layer {0}: total edge weight is zero")]
    EmptyLayer(usize),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("undefined measure: {0}")]
    UndefinedMeasure(String),

    #[error("normalization degenerate for target {0}: null mean is zero")]
    NormalizationDegenerate(String),

    #[error("collinear design matrix: {0}")]
    Collinearity(String),

    #[error("sample size: {0}")]
    SampleSize(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("infeasible spec: {0}")]
    InfeasibleSpec(String),

    #[error("format error in field `{field}`: {message}")]
    Format { field: String, message: String },

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}

pub(crate) fn format_err(field: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Format {
        field: field.into(),
        message: message.into(),
    }
}
