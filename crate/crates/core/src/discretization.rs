//! Uniform truncation of the energy line, the weighted trapezoid quadrature
//! realizing <phi|psi>_w, and the library of test functions used as the dense
//! core for every verification run.

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::weights::Weight;

/// Uniform symmetric grid E_i = -L + i h on [-L, L] with h = 2L/(N-1).
///
/// N is required odd so E = 0 is a node, which keeps parity tests exact.
/// Nodes are generated as (i - (N-1)/2) * h, so the grid is antisymmetric to
/// the bit: node(i) == -node(N-1-i).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    half_width: f64,
    len: usize,
    spacing: f64,
}

impl Grid {
    pub fn new(half_width: f64, len: usize) -> Result<Self> {
        if half_width <= 0.0 || !half_width.is_finite() {
            return Err(Error::InvalidHalfWidth(half_width));
        }
        if len < 3 || len.is_multiple_of(2) {
            return Err(Error::InvalidNodeCount(len));
        }
        Ok(Grid {
            half_width,
            len,
            spacing: 2.0 * half_width / (len - 1) as f64,
        })
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// Index of the E = 0 node.
    pub fn center_index(&self) -> usize {
        (self.len - 1) / 2
    }

    pub fn node(&self, i: usize) -> f64 {
        debug_assert!(i < self.len);
        (i as f64 - self.center_index() as f64) * self.spacing
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len).map(move |i| self.node(i))
    }

    /// Index of the node closest to `e`.
    pub fn nearest_index(&self, e: f64) -> usize {
        let raw = (e / self.spacing + self.center_index() as f64).round();
        (raw.max(0.0) as usize).min(self.len - 1)
    }
}

/// Trapezoid weights q_i: h/2 at the endpoints, h inside. The pairing with
/// central difference stencils is exactly skew-symmetric away from the
/// boundary, which is what makes the conjugated operator build Hermitian to
/// roundoff.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    node_weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn trapezoid(grid: &Grid) -> Self {
        let h = grid.spacing();
        let n = grid.len();
        let mut node_weights = vec![h; n];
        node_weights[0] = 0.5 * h;
        node_weights[n - 1] = 0.5 * h;
        QuadratureRule { node_weights }
    }

    pub fn len(&self) -> usize {
        self.node_weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.node_weights.is_empty()
    }

    pub fn node_weight(&self, i: usize) -> f64 {
        self.node_weights[i]
    }

    pub fn node_weights(&self) -> &[f64] {
        &self.node_weights
    }
}

/// Complex samples of a function on a [`Grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct WaveFunction {
    grid: Grid,
    values: Vec<Complex64>,
    label: Option<String>,
    /// Declared compact-support radius: samples are exactly zero for
    /// |E| >= radius. Set automatically for bump functions; other inputs may
    /// declare an effective radius via [`WaveFunction::declare_support`].
    support_radius: Option<f64>,
}

impl WaveFunction {
    pub fn new(grid: Grid, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch);
        }
        if values
            .iter()
            .any(|v| !v.re.is_finite() || !v.im.is_finite())
        {
            return Err(Error::NonFiniteSamples);
        }
        Ok(WaveFunction {
            grid,
            values,
            label: None,
            support_radius: None,
        })
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> Complex64) -> Result<Self> {
        let values = grid.nodes().map(f).collect();
        WaveFunction::new(grid, values)
    }

    pub fn from_real_fn(grid: Grid, f: impl Fn(f64) -> f64) -> Result<Self> {
        WaveFunction::from_fn(grid, |e| Complex64::new(f(e), 0.0))
    }

    pub fn zero(grid: Grid) -> Self {
        WaveFunction {
            values: vec![Complex64::new(0.0, 0.0); grid.len()],
            grid,
            label: None,
            support_radius: None,
        }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    /// Declare that this function is (numerically) supported inside
    /// |E| < radius. Every sample outside must already be below `tol` in
    /// magnitude; the propagator then treats off-grid lookups beyond the
    /// radius as exact zeros instead of erroring.
    pub fn declare_support(mut self, radius: f64, tol: f64) -> Result<Self> {
        for (i, v) in self.values.iter().enumerate() {
            if self.grid.node(i).abs() >= radius && v.norm() > tol {
                return Err(Error::MarginViolation(format!(
                    "sample at E = {} has magnitude {} > {tol}, cannot declare support radius {radius}",
                    self.grid.node(i),
                    v.norm()
                )));
            }
        }
        self.support_radius = Some(radius);
        Ok(self)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn label(&self) -> Option<&str> {
        self.label.as_deref()
    }

    pub fn support_radius(&self) -> Option<f64> {
        self.support_radius
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn value(&self, i: usize) -> Complex64 {
        self.values[i]
    }

    /// Maximum sample magnitude.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn scaled(&self, a: Complex64) -> Self {
        WaveFunction {
            grid: self.grid,
            values: self.values.iter().map(|v| a * v).collect(),
            label: self.label.clone(),
            support_radius: self.support_radius,
        }
    }

    /// Replace the samples, keeping grid and metadata. Internal helper for
    /// operator application.
    pub(crate) fn with_values(&self, values: Vec<Complex64>) -> Self {
        debug_assert_eq!(values.len(), self.grid.len());
        WaveFunction {
            grid: self.grid,
            values,
            label: self.label.clone(),
            support_radius: None,
        }
    }
}

/// Named test functions sampled onto grids. `SmoothBump` is the stand-in for
/// the compactly supported smooth core; `ConstantOne` deliberately violates
/// the decay condition so boundary terms become visible.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TestFunction {
    Gaussian { center: f64, width: f64 },
    Hermite { order: u32, width: f64 },
    SmoothBump { radius: f64 },
    ConstantOne,
}

impl TestFunction {
    /// Parse a `(kind, params)` pair as used in CLI configs.
    pub fn from_spec(kind: &str, params: &BTreeMap<String, f64>) -> Result<Self> {
        let get = |key: &str, default: f64| params.get(key).copied().unwrap_or(default);
        match kind {
            "gaussian" => Ok(TestFunction::Gaussian {
                center: get("center", 0.0),
                width: get("width", 1.0),
            }),
            "hermite" => Ok(TestFunction::Hermite {
                order: get("order", 1.0) as u32,
                width: get("width", 1.0),
            }),
            "smooth_bump" => Ok(TestFunction::SmoothBump {
                radius: get("radius", 5.0),
            }),
            "constant_one" => Ok(TestFunction::ConstantOne),
            other => Err(Error::UnknownTestFunction(other.to_string())),
        }
    }

    pub fn label(&self) -> String {
        match self {
            TestFunction::Gaussian { center, width } => format!("gaussian(mu={center},s={width})"),
            TestFunction::Hermite { order, width } => format!("hermite(n={order},s={width})"),
            TestFunction::SmoothBump { radius } => format!("smooth_bump(r={radius})"),
            TestFunction::ConstantOne => "constant_one".to_string(),
        }
    }

    pub fn sample(&self, grid: &Grid) -> Result<WaveFunction> {
        match *self {
            TestFunction::Gaussian { center, width } => {
                if width <= 0.0 || !width.is_finite() {
                    return Err(Error::BadParameter(format!(
                        "gaussian width must be positive, got {width}"
                    )));
                }
                let wf = WaveFunction::from_real_fn(*grid, |e| {
                    let t = (e - center) / width;
                    (-0.5 * t * t).exp()
                })?;
                Ok(wf.with_label(self.label()))
            }
            TestFunction::Hermite { order, width } => {
                if width <= 0.0 || !width.is_finite() {
                    return Err(Error::BadParameter(format!(
                        "hermite width must be positive, got {width}"
                    )));
                }
                let wf = WaveFunction::from_real_fn(*grid, |e| {
                    let t = e / width;
                    hermite_polynomial(order, t) * (-0.5 * t * t).exp()
                })?;
                Ok(wf.with_label(self.label()))
            }
            TestFunction::SmoothBump { radius } => {
                if radius <= 0.0 || !radius.is_finite() {
                    return Err(Error::BadParameter(format!(
                        "bump radius must be positive, got {radius}"
                    )));
                }
                if radius >= grid.half_width() {
                    return Err(Error::BumpRadiusTooLarge {
                        radius,
                        half_width: grid.half_width(),
                    });
                }
                let wf = WaveFunction::from_real_fn(*grid, |e| {
                    let t = e / radius;
                    if t.abs() < 1.0 {
                        (-1.0 / (1.0 - t * t)).exp()
                    } else {
                        0.0
                    }
                })?;
                Ok(wf.with_label(self.label()).declare_support(radius, 0.0)?)
            }
            TestFunction::ConstantOne => {
                let wf = WaveFunction::from_real_fn(*grid, |_| 1.0)?;
                Ok(wf.with_label(self.label()))
            }
        }
    }
}

/// Physicists' Hermite polynomial H_n(x) by recurrence.
fn hermite_polynomial(n: u32, x: f64) -> f64 {
    let mut h_prev = 1.0;
    if n == 0 {
        return h_prev;
    }
    let mut h = 2.0 * x;
    for k in 1..n {
        let next = 2.0 * x * h - 2.0 * k as f64 * h_prev;
        h_prev = h;
        h = next;
    }
    h
}

/// Compensated (Kahan) sum of complex terms; keeps long weighted quadratures
/// accurate to a few ulps.
fn kahan_sum(terms: impl Iterator<Item = Complex64>) -> Complex64 {
    let mut sum = Complex64::new(0.0, 0.0);
    let mut comp = Complex64::new(0.0, 0.0);
    for t in terms {
        let y = t - comp;
        let s = sum + y;
        comp = (s - sum) - y;
        sum = s;
    }
    sum
}

/// Weighted inner product <phi|psi>_w = sum_i q_i conj(phi_i) psi_i w(E_i),
/// the discrete form of the metric integral.
pub fn inner_product(
    phi: &WaveFunction,
    psi: &WaveFunction,
    weight: &Weight,
    rule: &QuadratureRule,
) -> Result<Complex64> {
    if phi.grid() != psi.grid() || rule.len() != phi.len() {
        return Err(Error::GridMismatch);
    }
    let grid = phi.grid();
    let mut terms = Vec::with_capacity(grid.len());
    for i in 0..grid.len() {
        let e = grid.node(i);
        let w = weight.w(e);
        if !w.is_finite() {
            return Err(Error::NonFinite {
                energy: e,
                what: "weight",
            });
        }
        terms.push(phi.value(i).conj() * psi.value(i) * (rule.node_weight(i) * w));
    }
    Ok(kahan_sum(terms.into_iter()))
}

/// Induced norm ||psi||_w. The self inner product must be real to 1e-14
/// (relative) and non-negative up to the same slack; anything worse signals a
/// broken quadrature or weight.
pub fn weighted_norm(psi: &WaveFunction, weight: &Weight, rule: &QuadratureRule) -> Result<f64> {
    let ip = inner_product(psi, psi, weight, rule)?;
    let scale = ip.norm().max(f64::MIN_POSITIVE);
    if ip.im.abs() > 1e-14 * scale {
        return Err(Error::BrokenNorm(format!(
            "self inner product has imaginary part {} (relative {})",
            ip.im,
            ip.im.abs() / scale
        )));
    }
    if ip.re < -1e-14 * scale.max(1.0) {
        return Err(Error::BrokenNorm(format!(
            "self inner product is negative: {}",
            ip.re
        )));
    }
    Ok(ip.re.max(0.0).sqrt())
}

/// Flat-metric norm (w = 1), used when comparing against the unweighted
/// space.
pub fn flat_norm(psi: &WaveFunction, rule: &QuadratureRule) -> Result<f64> {
    let flat = Weight::builtin("flat", &BTreeMap::new()).expect("flat weight");
    weighted_norm(psi, &flat, rule)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SQRT_PI: f64 = 1.7724538509055159;

    #[test]
    fn grid_basics() {
        let g = Grid::new(10.0, 5).unwrap();
        let nodes: Vec<f64> = g.nodes().collect();
        assert_eq!(nodes, vec![-10.0, -5.0, 0.0, 5.0, 10.0]);
        assert_eq!(g.spacing(), 5.0);

        let g = Grid::new(20.0, 4097).unwrap();
        assert!((g.spacing() - 40.0 / 4096.0).abs() < 1e-18);
        assert!((g.spacing() - 0.009765625).abs() == 0.0);

        let g = Grid::new(1.0, 3).unwrap();
        let nodes: Vec<f64> = g.nodes().collect();
        assert_eq!(nodes, vec![-1.0, 0.0, 1.0]);
    }

    #[test]
    fn grid_rejects_bad_input() {
        assert!(Grid::new(10.0, 4).is_err());
        assert!(Grid::new(10.0, 1).is_err());
        assert!(Grid::new(0.0, 5).is_err());
        assert!(Grid::new(f64::NAN, 5).is_err());
    }

    #[test]
    fn grid_nodes_symmetric_and_increasing() {
        let g = Grid::new(17.3, 1001).unwrap();
        for i in 0..g.len() {
            assert_eq!(g.node(i), -g.node(g.len() - 1 - i));
            if i > 0 {
                assert!(g.node(i) > g.node(i - 1));
            }
        }
        assert_eq!(g.node(g.center_index()), 0.0);
        // h (N-1) = 2L up to one ulp
        let spread = g.node(g.len() - 1) - g.node(0);
        assert!((spread - 2.0 * g.half_width()).abs() <= 2.0 * f64::EPSILON * g.half_width());
    }

    #[test]
    fn quadrature_weights_sum_to_interval() {
        let g = Grid::new(20.0, 4097).unwrap();
        let rule = QuadratureRule::trapezoid(&g);
        let total: f64 = rule.node_weights().iter().sum();
        assert!((total - 40.0).abs() < 1e-12);
    }

    #[test]
    fn gaussian_inner_product_matches_analytic_integral() {
        // Oracle: int exp(-E^2) dE = sqrt(pi); truncation at |E| = 20 is far
        // below double precision.
        let g = Grid::new(20.0, 4097).unwrap();
        let rule = QuadratureRule::trapezoid(&g);
        let psi = TestFunction::Gaussian {
            center: 0.0,
            width: 1.0,
        }
        .sample(&g)
        .unwrap();
        let flat = Weight::builtin("flat", &BTreeMap::new()).unwrap();
        let ip = inner_product(&psi, &psi, &flat, &rule).unwrap();
        assert!((ip.re - SQRT_PI).abs() < 1e-10, "got {}", ip.re);
        assert!(ip.im.abs() < 1e-15);
    }

    #[test]
    fn weighted_gaussian_inner_product_oracle() {
        // Oracle: int exp(-E^2) (1 + exp(-E^2)) dE = sqrt(pi) + sqrt(pi/2).
        let expected = SQRT_PI + (std::f64::consts::PI / 2.0).sqrt();
        assert!((expected - 3.0257679882210162).abs() < 1e-15);
        let g = Grid::new(20.0, 4097).unwrap();
        let rule = QuadratureRule::trapezoid(&g);
        let psi = TestFunction::Gaussian {
            center: 0.0,
            width: 1.0,
        }
        .sample(&g)
        .unwrap();
        let w = Weight::builtin("shifted_gaussian", &BTreeMap::new()).unwrap();
        let ip = inner_product(&psi, &psi, &w, &rule).unwrap();
        assert!((ip.re - expected).abs() < 1e-10, "got {}", ip.re);
    }

    #[test]
    fn odd_integrand_vanishes_on_symmetric_grid() {
        let g = Grid::new(20.0, 4097).unwrap();
        let rule = QuadratureRule::trapezoid(&g);
        let even = WaveFunction::from_real_fn(g, |e| (-0.5 * e * e).exp()).unwrap();
        let odd = WaveFunction::from_real_fn(g, |e| e * (-0.5 * e * e).exp()).unwrap();
        let w = Weight::builtin("shifted_gaussian", &BTreeMap::new()).unwrap();
        let ip = inner_product(&odd, &even, &w, &rule).unwrap();
        assert!(ip.norm() < 1e-12);
    }

    #[test]
    fn norm_oracle_and_homogeneity() {
        let g = Grid::new(20.0, 4097).unwrap();
        let rule = QuadratureRule::trapezoid(&g);
        let flat = Weight::builtin("flat", &BTreeMap::new()).unwrap();

        let zero = WaveFunction::zero(g);
        assert_eq!(weighted_norm(&zero, &flat, &rule).unwrap(), 0.0);

        let psi = TestFunction::Gaussian {
            center: 0.0,
            width: 1.0,
        }
        .sample(&g)
        .unwrap();
        let n = weighted_norm(&psi, &flat, &rule).unwrap();
        // pi^(1/4), the square root of the Gaussian integral oracle.
        assert!((n - 1.3313353638003897).abs() < 1e-10);

        let doubled = psi.scaled(Complex64::new(2.0, 0.0));
        let n2 = weighted_norm(&doubled, &flat, &rule).unwrap();
        assert!((n2 - 2.0 * n).abs() <= 1e-14 * n2);
    }

    #[test]
    fn trapezoid_exact_for_constant_and_linear() {
        let g = Grid::new(20.0, 257).unwrap();
        let rule = QuadratureRule::trapezoid(&g);
        let flat = Weight::builtin("flat", &BTreeMap::new()).unwrap();
        let one = WaveFunction::from_real_fn(g, |_| 1.0).unwrap();
        // int_{-20}^{20} 1 dE = 40
        let ip = inner_product(&one, &one, &flat, &rule).unwrap();
        assert!((ip.re - 40.0).abs() <= 1e-12 * 40.0);
        // int (E + 5) dE = 200 via <1 | E+5>
        let linear = WaveFunction::from_real_fn(g, |e| e + 5.0).unwrap();
        let ip = inner_product(&one, &linear, &flat, &rule).unwrap();
        assert!((ip.re - 200.0).abs() <= 1e-12 * 200.0);
    }

    #[test]
    fn gaussian_quadrature_error_decreases_under_refinement() {
        let flat = Weight::builtin("flat", &BTreeMap::new()).unwrap();
        let mut errors = Vec::new();
        for n in [17_usize, 33, 65] {
            let g = Grid::new(20.0, n).unwrap();
            let rule = QuadratureRule::trapezoid(&g);
            let psi = TestFunction::Gaussian {
                center: 0.0,
                width: 1.0,
            }
            .sample(&g)
            .unwrap();
            let ip = inner_product(&psi, &psi, &flat, &rule).unwrap();
            errors.push((ip.re - SQRT_PI).abs());
        }
        assert!(errors[1] < errors[0]);
        assert!(errors[2] < errors[1]);
        // Entire integrand: far better than O(h^2) by N = 129.
        let g = Grid::new(20.0, 129).unwrap();
        let rule = QuadratureRule::trapezoid(&g);
        let psi = TestFunction::Gaussian {
            center: 0.0,
            width: 1.0,
        }
        .sample(&g)
        .unwrap();
        let ip = inner_product(&psi, &psi, &flat, &rule).unwrap();
        assert!((ip.re - SQRT_PI).abs() < 1e-12);
    }

    #[test]
    fn test_function_samples() {
        let g = Grid::new(20.0, 4097).unwrap();

        let gauss = TestFunction::Gaussian {
            center: 0.0,
            width: 1.0,
        }
        .sample(&g)
        .unwrap();
        assert_eq!(gauss.value(g.center_index()), Complex64::new(1.0, 0.0));

        let bump = TestFunction::SmoothBump { radius: 5.0 }.sample(&g).unwrap();
        for i in 0..g.len() {
            if g.node(i).abs() >= 5.0 {
                assert_eq!(bump.value(i), Complex64::new(0.0, 0.0));
            }
        }
        assert_eq!(bump.support_radius(), Some(5.0));

        let h1 = TestFunction::Hermite {
            order: 1,
            width: 1.0,
        }
        .sample(&g)
        .unwrap();
        assert_eq!(h1.value(g.center_index()), Complex64::new(0.0, 0.0));
        // odd parity
        assert_eq!(h1.value(0), -h1.value(g.len() - 1));
    }

    #[test]
    fn bump_radius_must_leave_margin() {
        let g = Grid::new(20.0, 257).unwrap();
        assert!(TestFunction::SmoothBump { radius: 20.0 }
            .sample(&g)
            .is_err());
        assert!(TestFunction::SmoothBump { radius: 25.0 }
            .sample(&g)
            .is_err());
    }

    #[test]
    fn unknown_test_function_kind() {
        let err = TestFunction::from_spec("wavelet", &BTreeMap::new()).unwrap_err();
        assert_eq!(err, Error::UnknownTestFunction("wavelet".into()));
    }

    #[test]
    fn grid_mismatch_is_an_error() {
        let g1 = Grid::new(20.0, 257).unwrap();
        let g2 = Grid::new(20.0, 259).unwrap();
        let a = WaveFunction::from_real_fn(g1, |_| 1.0).unwrap();
        let b = WaveFunction::from_real_fn(g2, |_| 1.0).unwrap();
        let flat = Weight::builtin("flat", &BTreeMap::new()).unwrap();
        let rule = QuadratureRule::trapezoid(&g1);
        assert_eq!(
            inner_product(&a, &b, &flat, &rule).unwrap_err(),
            Error::GridMismatch
        );
    }

    #[test]
    fn hermite_recurrence_values() {
        // H_0 = 1, H_1 = 2x, H_2 = 4x^2 - 2, H_3 = 8x^3 - 12x
        assert_eq!(hermite_polynomial(0, 0.7), 1.0);
        assert_eq!(hermite_polynomial(1, 0.7), 1.4);
        assert!((hermite_polynomial(2, 0.7) - (4.0 * 0.49 - 2.0)).abs() < 1e-15);
        assert!((hermite_polynomial(3, 0.7) - (8.0 * 0.343 - 12.0 * 0.7)).abs() < 1e-12);
    }
}
