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

//! Dynamic brain-network analysis: tapered sliding-window connectivity,
//! static and multilayer modularity, allegiance-based measures with a
//! permutation null, and covariate-adjusted group statistics.

pub mod atlas;
pub mod connectivity;
pub mod error;
pub mod io;
pub mod measures;
pub mod multilayer;
pub mod seed;
pub mod static_mod;
pub mod stats;
pub mod synth;

pub use connectivity::{
    dfc_estimate, make_taper, static_fc, ClampWarning, ConnectivityKind, ConnectivityMatrix, DynamicConnectivity,
    TimeSeries, WindowTaper,
};
pub use error::{Error, Result};
pub use measures::{MeasureKind, MeasureTable, SystemPartition, Target};
pub use multilayer::{build_supra, CommunityAssignment, ModularityParams, MultilayerNetwork};
pub use static_mod::{DensityCurve, Partition};
pub use stats::{CohortMetadata, Group, SubjectMeta, TestResult};
