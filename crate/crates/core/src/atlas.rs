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

//! The 32-region, 8-system parcellation used by default.

use crate::measures::SystemPartition;

const SYSTEMS: [(&str, &[&str]); 8] = [
    ("DMN", &["MPFC", "PCC", "LP_L", "LP_R"]),
    ("SMN", &["Superior", "Lateral_L", "Lateral_R"]),
    ("VIS", &["Medial", "Occipital", "Lateral_L", "Lateral_R"]),
    ("SAN", &["ACC", "AInsula_L", "AInsula_R", "RPFC_L", "RPFC_R", "SMG_L", "SMG_R"]),
    ("DAN", &["FEF_L", "FEF_R", "IPS_L", "IPS_R"]),
    ("FPN", &["LPFC_L", "LPFC_R", "PPC_L", "PPC_R"]),
    ("LN", &["IFG_L", "IFG_R", "pSTG_L", "pSTG_R"]),
    ("CE", &["Anterior", "Posterior"]),
];

/// Region labels are `<system>.<region>`, e.g. `DMN.MPFC`.
pub fn default_systems() -> SystemPartition {
    let mut labels = Vec::new();
    let mut assignment = Vec::new();
    for (s, (name, regions)) in SYSTEMS.iter().enumerate() {
        for r in regions.iter() {
            labels.push(format!("{name}.{r}"));
            assignment.push(s);
        }
    }
    SystemPartition::new(labels, assignment, SYSTEMS.iter().map(|(n, _)| n.to_string()).collect())
        .expect("built-in atlas is valid")
}
