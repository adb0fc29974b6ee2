//! Aggregated verification reports: machine-readable JSON and an aligned
//! text table. Records are kept sorted by name so identical runs serialize
//! byte-identically; volatile run metadata lives in a separate `meta` field
//! that comparisons can drop.

use serde::{Deserialize, Serialize};

use crate::verification::ResidualRecord;

/// Default tolerances for the named suite checks, quoted at the desk-scale
/// resolution L = 20, N = 4097 with the conjugated construction.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct CheckTolerances {
    /// Flat-weight reduction of `Tw` to `T0`, relative per node.
    pub flat_reduction: f64,
    /// Raw Hermiticity residual relative to ||phi|| ||psi||, conjugated.
    pub hermiticity_conjugated: f64,
    /// Same for the direct construction, which only vanishes at the stencil
    /// order.
    pub hermiticity_direct: f64,
    /// Agreement between the raw residual and the explicit boundary term for
    /// out-of-domain inputs (relative).
    pub boundary_agreement: f64,
    /// Unitary-equivalence residual for the conjugated construction.
    pub unitary_equivalence_conjugated: f64,
    /// Unitary-equivalence residual for the direct construction at stencil
    /// order 2.
    pub unitary_equivalence_direct_order2: f64,
    /// Same at stencil order 4.
    pub unitary_equivalence_direct_order4: f64,
    /// Commutation residual at stencil order 2.
    pub commutation_order2: f64,
    /// Commutation residual at stencil order 4.
    pub commutation_order4: f64,
    /// Interior-scaled matrix Hermiticity defect, conjugated.
    pub matrix_hermiticity_conjugated: f64,
    /// Same for the direct construction (entrywise O(h) defect).
    pub matrix_hermiticity_direct: f64,
    /// Propagator norm preservation at aligned shifts.
    pub propagator_unitarity: f64,
    /// Propagator group law at aligned shifts.
    pub propagator_group_law: f64,
    /// |measured generator-consistency order - 1|.
    pub generator_order_window: f64,
}

impl Default for CheckTolerances {
    fn default() -> Self {
        CheckTolerances {
            flat_reduction: 1e-15,
            hermiticity_conjugated: 1e-10,
            hermiticity_direct: 1e-7,
            boundary_agreement: 0.1,
            unitary_equivalence_conjugated: 1e-13,
            unitary_equivalence_direct_order2: 5e-4,
            unitary_equivalence_direct_order4: 1e-7,
            commutation_order2: 5e-4,
            commutation_order4: 1e-6,
            matrix_hermiticity_conjugated: 1e-12,
            matrix_hermiticity_direct: 1e-1,
            propagator_unitarity: 1e-10,
            propagator_group_law: 1e-12,
            generator_order_window: 0.3,
        }
    }
}

impl CheckTolerances {
    pub fn hermiticity(&self, conjugated: bool) -> f64 {
        if conjugated {
            self.hermiticity_conjugated
        } else {
            self.hermiticity_direct
        }
    }

    pub fn unitary_equivalence(&self, conjugated: bool, order: usize) -> f64 {
        if conjugated {
            self.unitary_equivalence_conjugated
        } else if order == 2 {
            self.unitary_equivalence_direct_order2
        } else {
            self.unitary_equivalence_direct_order4
        }
    }

    pub fn commutation(&self, order: usize) -> f64 {
        if order == 2 {
            self.commutation_order2
        } else {
            self.commutation_order4
        }
    }

    pub fn matrix_hermiticity(&self, conjugated: bool) -> f64 {
        if conjugated {
            self.matrix_hermiticity_conjugated
        } else {
            self.matrix_hermiticity_direct
        }
    }
}

/// Volatile run metadata, excluded from determinism comparisons.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Default)]
pub struct RunMeta {
    pub timestamp: String,
    pub tool_version: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct VerificationReport {
    pub meta: RunMeta,
    /// Resolved configuration the run used, for reproducibility.
    pub config: serde_json::Value,
    pub records: Vec<ResidualRecord>,
    pub all_passed: bool,
}

impl VerificationReport {
    pub fn new(meta: RunMeta, config: serde_json::Value, mut records: Vec<ResidualRecord>) -> Self {
        records.sort_by(|a, b| a.name.cmp(&b.name));
        let all_passed = records.iter().all(|r| r.passed);
        VerificationReport {
            meta,
            config,
            records,
            all_passed,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Aligned text table, one row per record.
    pub fn to_table(&self) -> String {
        let name_width = self
            .records
            .iter()
            .map(|r| r.name.len())
            .max()
            .unwrap_or(4)
            .max("check".len());
        let mut out = String::new();
        out.push_str(&format!(
            "{:<name_width$}  {:>13}  {:>13}  {}\n",
            "check", "value", "tolerance", "result"
        ));
        for r in &self.records {
            out.push_str(&format!(
                "{:<name_width$}  {:>13.6e}  {:>13.6e}  {}\n",
                r.name,
                r.value,
                r.tolerance,
                if r.passed { "pass" } else { "FAIL" }
            ));
        }
        out.push_str(&format!(
            "overall: {}\n",
            if self.all_passed { "pass" } else { "FAIL" }
        ));
        out
    }
}
