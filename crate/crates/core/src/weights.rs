//! Weight functions w(E) — the metric density of the weighted energy space —
//! and the validator for the three admissibility constraints:
//!
//! 1. w(E) > 0 everywhere,
//! 2. w and ln w locally absolutely continuous (checked by a sampled proxy),
//! 3. bounded between some 0 < m <= M outside a compact set |E| <= E0.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::discretization::Grid;
use crate::error::{Error, Result};

type EvalFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A weight function w(E) with optional analytic derivative w'(E).
///
/// Immutable after construction; evaluation is pure, so values can be shared
/// across threads freely.
#[derive(Clone)]
pub struct Weight {
    id: String,
    params: BTreeMap<String, f64>,
    eval_w: EvalFn,
    eval_dw: Option<EvalFn>,
}

impl fmt::Debug for Weight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Weight")
            .field("id", &self.id)
            .field("params", &self.params)
            .field("analytic_dw", &self.eval_dw.is_some())
            .finish()
    }
}

/// Serializable weight specification as consumed by the CLI:
/// `{"name": "...", "params": {...}}`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct WeightSpec {
    pub name: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

impl Weight {
    /// Build a weight from closures. `eval_dw = None` means "differentiate
    /// numerically" (central difference, step 1e-6 * max(1, |E|)).
    pub fn from_fns(
        id: impl Into<String>,
        params: BTreeMap<String, f64>,
        eval_w: impl Fn(f64) -> f64 + Send + Sync + 'static,
        eval_dw: Option<EvalFn>,
    ) -> Self {
        Weight {
            id: id.into(),
            params,
            eval_w: Arc::new(eval_w),
            eval_dw,
        }
    }

    /// Construct one of the registry weights:
    ///
    /// - `flat`: w = c (default c = 1)
    /// - `shifted_gaussian`: w = 1 + a * exp(-E^2/s^2) (defaults a = 1, s = 1)
    /// - `sinusoidal`: w = c + a * sin E, requires c > |a| (defaults c = 2, a = 1)
    /// - `gaussian_violating`: w = exp(-E^2), deliberately unbounded below at
    ///   large |E| so the bounds constraint fails
    ///
    /// All registry weights carry an analytic derivative.
    pub fn builtin(name: &str, params: &BTreeMap<String, f64>) -> Result<Self> {
        let get = |key: &str, default: f64| params.get(key).copied().unwrap_or(default);
        let mut used = BTreeMap::new();
        let weight = match name {
            "flat" => {
                let c = get("c", 1.0);
                if c <= 0.0 || !c.is_finite() {
                    return Err(Error::BadParameter(format!(
                        "flat weight needs c > 0, got {c}"
                    )));
                }
                used.insert("c".to_string(), c);
                Weight::from_fns(name, used, move |_| c, Some(Arc::new(|_| 0.0)))
            }
            "shifted_gaussian" => {
                let a = get("a", 1.0);
                let s = get("s", 1.0);
                if !a.is_finite() || a <= -1.0 {
                    return Err(Error::BadParameter(format!(
                        "shifted_gaussian needs a > -1 so w stays positive, got a = {a}"
                    )));
                }
                if s <= 0.0 || !s.is_finite() {
                    return Err(Error::BadParameter(format!(
                        "shifted_gaussian needs s > 0, got s = {s}"
                    )));
                }
                used.insert("a".to_string(), a);
                used.insert("s".to_string(), s);
                let s2 = s * s;
                Weight::from_fns(
                    name,
                    used,
                    move |e| 1.0 + a * (-e * e / s2).exp(),
                    Some(Arc::new(move |e| a * (-e * e / s2).exp() * (-2.0 * e / s2))),
                )
            }
            "sinusoidal" => {
                let c = get("c", 2.0);
                let a = get("a", 1.0);
                if !c.is_finite() || !a.is_finite() || c <= a.abs() {
                    return Err(Error::BadParameter(format!(
                        "sinusoidal needs c > |a| so w stays positive, got c = {c}, a = {a}"
                    )));
                }
                used.insert("c".to_string(), c);
                used.insert("a".to_string(), a);
                Weight::from_fns(
                    name,
                    used,
                    move |e| c + a * e.sin(),
                    Some(Arc::new(move |e| a * e.cos())),
                )
            }
            "gaussian_violating" => Weight::from_fns(
                name,
                used,
                |e| (-e * e).exp(),
                Some(Arc::new(|e| -2.0 * e * (-e * e).exp())),
            ),
            other => return Err(Error::UnknownWeight(other.to_string())),
        };
        Ok(weight)
    }

    /// Construct from a serialized spec.
    pub fn from_spec(spec: &WeightSpec) -> Result<Self> {
        Weight::builtin(&spec.name, &spec.params)
    }

    /// Piecewise-linear weight through sampled `(E, w)` pairs, as read from a
    /// samples file. The derivative is left numeric. Queries outside the
    /// sampled range are an error at evaluation time (returned as NaN and
    /// caught by the finiteness checks downstream).
    pub fn from_samples(id: impl Into<String>, samples: Vec<(f64, f64)>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::BadParameter(
                "sampled weight needs at least two points".into(),
            ));
        }
        if !samples.windows(2).all(|p| p[0].0 < p[1].0) {
            return Err(Error::BadParameter(
                "sampled weight abscissae must be strictly increasing".into(),
            ));
        }
        if samples
            .iter()
            .any(|&(e, w)| !e.is_finite() || !w.is_finite())
        {
            return Err(Error::BadParameter(
                "sampled weight contains non-finite entries".into(),
            ));
        }
        let eval = move |e: f64| -> f64 {
            if e < samples[0].0 || e > samples[samples.len() - 1].0 {
                return f64::NAN;
            }
            let idx = samples.partition_point(|&(x, _)| x <= e);
            if idx == 0 {
                return samples[0].1;
            }
            if idx == samples.len() {
                return samples[samples.len() - 1].1;
            }
            let (x0, y0) = samples[idx - 1];
            let (x1, y1) = samples[idx];
            y0 + (y1 - y0) * (e - x0) / (x1 - x0)
        };
        Ok(Weight::from_fns(id, BTreeMap::new(), eval, None))
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn params(&self) -> &BTreeMap<String, f64> {
        &self.params
    }

    pub fn has_analytic_derivative(&self) -> bool {
        self.eval_dw.is_some()
    }

    /// Evaluate w(E).
    pub fn w(&self, e: f64) -> f64 {
        (self.eval_w)(e)
    }

    /// Evaluate w(E), rejecting non-finite or non-positive values.
    pub fn checked_w(&self, e: f64) -> Result<f64> {
        let v = self.w(e);
        if !v.is_finite() {
            return Err(Error::NonFinite {
                energy: e,
                what: "weight",
            });
        }
        if v <= 0.0 {
            return Err(Error::NonPositiveWeight {
                energy: e,
                value: v,
            });
        }
        Ok(v)
    }

    /// Evaluate w'(E): analytic when available, otherwise a central
    /// difference with step delta = 1e-6 * max(1, |E|).
    pub fn dw(&self, e: f64) -> f64 {
        match &self.eval_dw {
            Some(f) => f(e),
            None => {
                let delta = 1e-6 * e.abs().max(1.0);
                (self.w(e + delta) - self.w(e - delta)) / (2.0 * delta)
            }
        }
    }

    /// The Hermiticity correction term (1/2) d/dE ln w(E) = w'(E) / (2 w(E)).
    pub fn half_log_derivative(&self, e: f64) -> Result<f64> {
        let w = self.checked_w(e)?;
        let dw = self.dw(e);
        let g = dw / (2.0 * w);
        if !g.is_finite() {
            return Err(Error::NonFinite {
                energy: e,
                what: "log-derivative",
            });
        }
        Ok(g)
    }
}

/// Tolerances for [`validate_weight`].
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ValidationTolerances {
    /// Constraint 1: sampled w must stay above this floor to count as
    /// positive (distinguishes genuine zeros from underflow).
    pub positivity_floor: f64,
    /// Constraint 2: bound on the difference quotients of ln w sampled on
    /// three nested grids. A proxy for local absolute continuity, not a proof.
    pub smoothness_bound: f64,
    /// Constraint 3: the estimated lower bound m outside the compact set must
    /// be at least this large.
    pub lower_bound_floor: f64,
}

impl Default for ValidationTolerances {
    fn default() -> Self {
        ValidationTolerances {
            positivity_floor: 1e-12,
            smoothness_bound: 1e3,
            lower_bound_floor: 1e-6,
        }
    }
}

/// Outcome of checking the three weight constraints on a probe grid.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct WeightValidationReport {
    pub weight_id: String,
    /// Constraint 1: every sampled w above the positivity floor.
    pub positivity_ok: bool,
    /// Worst (smallest) sampled value of w.
    pub worst_value: f64,
    /// Constraint 2 proxy: difference quotients of ln w bounded on three
    /// nested grids.
    pub smoothness_ok: bool,
    /// Largest |ln w(E_{i+1}) - ln w(E_i)| / h seen across the nested grids.
    pub max_jump_proxy: f64,
    /// Constraint 3: m <= w <= M for sampled |E| > E0, with m above the floor.
    pub bounds_ok: bool,
    /// First E0 candidate for which the bounds hold (last candidate tried on
    /// failure).
    pub e0: f64,
    pub lower_bound_m: f64,
    pub upper_bound_m_cap: f64,
    /// Probe grid metadata.
    pub probe_half_width: f64,
    pub probe_nodes: usize,
}

impl WeightValidationReport {
    pub fn all_ok(&self) -> bool {
        self.positivity_ok && self.smoothness_ok && self.bounds_ok
    }
}

/// Check the three weight constraints by sampling on `probe` and two
/// refinements of it. Failures are report fields, not errors.
pub fn validate_weight(
    weight: &Weight,
    probe: &Grid,
    tol: &ValidationTolerances,
) -> WeightValidationReport {
    // Constraint 1: positivity on the probe nodes.
    let mut worst = f64::INFINITY;
    let mut all_finite = true;
    for e in probe.nodes() {
        let v = weight.w(e);
        if !v.is_finite() {
            all_finite = false;
        }
        if v < worst {
            worst = v;
        }
    }
    let positivity_ok = all_finite && worst > tol.positivity_floor;

    // Constraint 2 proxy: difference quotients of ln w on three nested grids.
    // Only meaningful where w > 0; a positivity failure makes ln w undefined
    // and the proxy reports the violation as a non-finite (unbounded) jump.
    let mut max_jump = 0.0f64;
    let mut smoothness_ok = true;
    for level in 0..3 {
        let n = (probe.len() - 1) * (1 << level) + 1;
        let grid = match Grid::new(probe.half_width(), n) {
            Ok(g) => g,
            Err(_) => break,
        };
        let h = grid.spacing();
        let mut prev = weight.w(grid.node(0)).ln();
        for i in 1..grid.len() {
            let cur = weight.w(grid.node(i)).ln();
            let quotient = ((cur - prev) / h).abs();
            if !quotient.is_finite() {
                smoothness_ok = false;
                max_jump = f64::INFINITY;
            } else if quotient > max_jump {
                max_jump = quotient;
            }
            prev = cur;
        }
    }
    smoothness_ok = smoothness_ok && max_jump <= tol.smoothness_bound;

    // Constraint 3: try E0 candidates {0, L/4, L/2}; keep the first that
    // yields a positive lower bound.
    let half_width = probe.half_width();
    let candidates = [0.0, half_width / 4.0, half_width / 2.0];
    let mut bounds_ok = false;
    let mut e0 = *candidates.last().unwrap();
    let mut m = 0.0;
    let mut m_cap = 0.0;
    for &cand in &candidates {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let mut seen = false;
        for e in probe.nodes() {
            if e.abs() > cand {
                let v = weight.w(e);
                lo = lo.min(v);
                hi = hi.max(v);
                seen = true;
            }
        }
        if seen && lo.is_finite() && hi.is_finite() && lo >= tol.lower_bound_floor && lo <= hi {
            bounds_ok = true;
            e0 = cand;
            m = lo;
            m_cap = hi;
            break;
        }
        // Remember the last candidate's estimates for the failure report.
        e0 = cand;
        m = if lo.is_finite() { lo } else { 0.0 };
        m_cap = if hi.is_finite() { hi } else { 0.0 };
    }

    WeightValidationReport {
        weight_id: weight.id().to_string(),
        positivity_ok,
        worst_value: worst,
        smoothness_ok,
        max_jump_proxy: max_jump,
        bounds_ok,
        e0,
        lower_bound_m: m,
        upper_bound_m_cap: m_cap,
        probe_half_width: probe.half_width(),
        probe_nodes: probe.len(),
    }
}

/// The registry weights that satisfy all three constraints, used by check
/// suites that sweep "every constraint-passing registry weight".
pub fn constraint_passing_registry() -> Vec<Weight> {
    vec![
        Weight::builtin("flat", &BTreeMap::new()).unwrap(),
        Weight::builtin("shifted_gaussian", &BTreeMap::new()).unwrap(),
        Weight::builtin("sinusoidal", &BTreeMap::new()).unwrap(),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
        pairs.iter().map(|&(k, v)| (k.to_string(), v)).collect()
    }

    #[test]
    fn flat_weight_is_constant() {
        let w = Weight::builtin("flat", &params(&[("c", 1.0)])).unwrap();
        for e in [-10.0, -1.0, 0.0, 3.5, 20.0] {
            assert_eq!(w.w(e), 1.0);
            assert_eq!(w.half_log_derivative(e).unwrap(), 0.0);
        }
    }

    #[test]
    fn shifted_gaussian_limits() {
        let w = Weight::builtin("shifted_gaussian", &params(&[("a", 1.0), ("s", 1.0)])).unwrap();
        assert!((w.w(0.0) - 2.0).abs() < 1e-15);
        assert!((w.w(30.0) - 1.0).abs() < 1e-15);
        assert!((w.w(-30.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn sinusoidal_values() {
        let w = Weight::builtin("sinusoidal", &params(&[("c", 2.0), ("a", 1.0)])).unwrap();
        assert!((w.w(0.0) - 2.0).abs() < 1e-15);
        assert!((w.w(std::f64::consts::FRAC_PI_2) - 3.0).abs() < 1e-15);
        // cos(pi/2) = 0 kills the log-derivative there.
        assert!(
            w.half_log_derivative(std::f64::consts::FRAC_PI_2)
                .unwrap()
                .abs()
                < 1e-16
        );
    }

    #[test]
    fn sinusoidal_rejects_non_positive_params() {
        assert!(Weight::builtin("sinusoidal", &params(&[("c", 1.0), ("a", 1.0)])).is_err());
        assert!(Weight::builtin("sinusoidal", &params(&[("c", 0.5), ("a", 1.0)])).is_err());
    }

    #[test]
    fn unknown_weight_name() {
        let err = Weight::builtin("nope", &BTreeMap::new()).unwrap_err();
        assert_eq!(err, Error::UnknownWeight("nope".into()));
    }

    // Oracle for the shifted-gaussian log-derivative at E = 1: a
    // high-resolution central difference of ln w, cross-checked against the
    // closed form -E exp(-E^2) / (1 + exp(-E^2)).
    #[test]
    fn shifted_gaussian_log_derivative_oracle() {
        let w = Weight::builtin("shifted_gaussian", &params(&[("a", 1.0), ("s", 1.0)])).unwrap();
        let delta = 1e-6;
        let oracle = (w.w(1.0 + delta).ln() - w.w(1.0 - delta).ln()) / (2.0 * delta) / 2.0;
        let closed_form = -(-1.0f64).exp() / (1.0 + (-1.0f64).exp());
        assert!((oracle - closed_form).abs() < 1e-9);
        // Frozen value from the oracle above.
        let expected = -0.2689414213699951;
        assert!((closed_form - expected).abs() < 1e-15);
        assert!((w.half_log_derivative(1.0).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn log_derivative_is_odd_for_even_weights() {
        let w = Weight::builtin("shifted_gaussian", &BTreeMap::new()).unwrap();
        for k in 1..=40 {
            let e = 0.25 * k as f64;
            let plus = w.half_log_derivative(e).unwrap();
            let minus = w.half_log_derivative(-e).unwrap();
            assert!((plus + minus).abs() <= 1e-12, "asymmetry at E = {e}");
        }
    }

    #[test]
    fn numeric_derivative_fallback() {
        let w = Weight::from_fns("quadratic", BTreeMap::new(), |e| 1.0 + e * e, None);
        // w' = 2E; central difference should be accurate to ~1e-9.
        assert!((w.dw(2.0) - 4.0).abs() < 1e-8);
        assert!((w.half_log_derivative(2.0).unwrap() - 4.0 / 10.0).abs() < 1e-8);
    }

    #[test]
    fn validate_accepts_registry_rejects_violator() {
        let probe = Grid::new(20.0, 801).unwrap();
        let tol = ValidationTolerances::default();
        for w in constraint_passing_registry() {
            let report = validate_weight(&w, &probe, &tol);
            assert!(report.all_ok(), "{} should pass: {report:?}", w.id());
        }
        // On a narrow probe the violator still clears the positivity floor
        // (min w = e^-25 ~ 1.4e-11) but its lower bound is already hopeless.
        let bad = Weight::builtin("gaussian_violating", &BTreeMap::new()).unwrap();
        let report = validate_weight(&bad, &Grid::new(5.0, 801).unwrap(), &tol);
        assert!(report.positivity_ok);
        assert!(report.smoothness_ok);
        assert!(!report.bounds_ok);
        // On the wide probe the sampled tail even drops below the positivity
        // floor; the bounds verdict is unchanged.
        let report = validate_weight(&bad, &probe, &tol);
        assert!(!report.bounds_ok);
    }

    #[test]
    fn violator_fails_bounds_for_any_probe_with_half_width_at_least_five() {
        let bad = Weight::builtin("gaussian_violating", &BTreeMap::new()).unwrap();
        let tol = ValidationTolerances::default();
        for half_width in [5.0, 8.0, 12.0, 20.0, 50.0] {
            for n in [101_usize, 257, 1001] {
                let probe = Grid::new(half_width, n).unwrap();
                let report = validate_weight(&bad, &probe, &tol);
                assert!(!report.bounds_ok, "L = {half_width}, N = {n}");
            }
        }
    }

    #[test]
    fn validate_reports_expected_bounds() {
        let probe = Grid::new(20.0, 801).unwrap();
        let tol = ValidationTolerances::default();
        let sg = Weight::builtin("shifted_gaussian", &BTreeMap::new()).unwrap();
        let report = validate_weight(&sg, &probe, &tol);
        assert!(report.bounds_ok);
        assert!(report.lower_bound_m >= 1.0 - 1e-12 && report.lower_bound_m <= 2.0);
        assert!(report.upper_bound_m_cap <= 2.0 + 1e-12);

        let sin = Weight::builtin("sinusoidal", &BTreeMap::new()).unwrap();
        let report = validate_weight(&sin, &probe, &tol);
        assert!(report.bounds_ok);
        assert!(report.lower_bound_m >= 1.0 - 1e-3);
        assert!(report.upper_bound_m_cap <= 3.0 + 1e-12);
    }

    #[test]
    fn flat_weight_validates_for_any_positive_scale() {
        let probe = Grid::new(20.0, 401).unwrap();
        let tol = ValidationTolerances::default();
        for c in [0.1, 1.0, 7.3, 1e6] {
            let w = Weight::builtin("flat", &params(&[("c", c)])).unwrap();
            let report = validate_weight(&w, &probe, &tol);
            assert!(report.all_ok(), "c = {c}: {report:?}");
            assert_eq!(report.lower_bound_m, c);
            assert_eq!(report.upper_bound_m_cap, c);
        }
    }

    #[test]
    fn validate_flags_sampled_non_positive_weight() {
        // Custom weight that dips negative inside the probe range.
        let w = Weight::from_fns(
            "dipping",
            BTreeMap::new(),
            |e| 1.0 - (e / 10.0) * (e / 10.0),
            None,
        );
        let probe = Grid::new(20.0, 801).unwrap();
        let report = validate_weight(&w, &probe, &ValidationTolerances::default());
        assert!(!report.positivity_ok);
        assert!(report.worst_value < 0.0);
    }

    #[test]
    fn sampled_weight_interpolates() {
        let samples: Vec<(f64, f64)> = (0..=40)
            .map(|i| {
                let e = -20.0 + i as f64;
                (e, 2.0 + 0.1 * e)
            })
            .collect();
        let w = Weight::from_samples("ramp", samples).unwrap();
        assert!((w.w(0.5) - 2.05).abs() < 1e-12);
        assert!((w.dw(0.5) - 0.1).abs() < 1e-6);
        assert!(w.w(25.0).is_nan());
    }
}
