//! Matrix-free applications and dense builds of the operators on the
//! truncated weighted energy space:
//!
//! - `T0 = i hbar d/dE` (central finite differences, one-sided at the edges),
//! - `Tw = i hbar (d/dE + (1/2) w'/w)`, either transcribed directly or built
//!   as the conjugation `Uw^-1 (i hbar D) Uw`,
//! - `H = E .` (pointwise multiplication),
//! - `Uw = w^(1/2) .` (the isometry onto the flat space),
//!
//! plus the commutator `[Tw, H]`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::discretization::{Grid, QuadratureRule, WaveFunction};
use crate::error::{Error, Result};
use crate::weights::Weight;

/// Largest node count for which dense operator matrices are built.
pub const DEFAULT_DENSE_CAP: usize = 8193;

/// Decay required of samples in the boundary exclusion zone before an
/// operator identity is checked there; mirrors the domain condition
/// w^(1/2) psi -> 0.
pub const DECAY_MARGIN: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalConstants {
    hbar: f64,
}

impl PhysicalConstants {
    pub fn new(hbar: f64) -> Result<Self> {
        if hbar <= 0.0 || !hbar.is_finite() {
            return Err(Error::BadParameter(format!(
                "hbar must be positive and finite, got {hbar}"
            )));
        }
        Ok(PhysicalConstants { hbar })
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }
}

impl Default for PhysicalConstants {
    /// Natural units, hbar = 1.
    fn default() -> Self {
        PhysicalConstants { hbar: 1.0 }
    }
}

/// Finite-difference stencil order for d/dE.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StencilOrder {
    Two,
    Four,
}

impl StencilOrder {
    pub fn value(self) -> usize {
        match self {
            StencilOrder::Two => 2,
            StencilOrder::Four => 4,
        }
    }

    pub fn from_value(v: usize) -> Result<Self> {
        match v {
            2 => Ok(StencilOrder::Two),
            4 => Ok(StencilOrder::Four),
            other => Err(Error::BadParameter(format!(
                "stencil order must be 2 or 4, got {other}"
            ))),
        }
    }
}

/// How the discrete `Tw` is assembled.
///
/// `Conjugated` builds `Uw^-1 (i hbar D) Uw`; skew symmetry of the interior
/// stencil against the trapezoid pairing then makes the interior block
/// Hermitian against the weighted metric to roundoff. `Direct` transcribes
/// `i hbar (D + diag((1/2) w'/w))`; its Hermiticity defect vanishes at the
/// stencil order instead. The two agree to O(h^order).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Construction {
    Conjugated,
    Direct,
}

/// Number of nodes at each edge polluted by one-sided stencils; interior
/// restrictions exclude this many.
pub fn boundary_exclusion(order: StencilOrder) -> usize {
    2 * order.value()
}

/// Sparse row of the difference matrix D for d/dE: (column, coefficient)
/// pairs in ascending column order.
pub fn stencil_row(order: StencilOrder, n: usize, i: usize, h: f64) -> Vec<(usize, f64)> {
    match order {
        StencilOrder::Two => {
            let s = 1.0 / (2.0 * h);
            if i == 0 {
                vec![(0, -3.0 * s), (1, 4.0 * s), (2, -s)]
            } else if i == n - 1 {
                vec![(n - 3, s), (n - 2, -4.0 * s), (n - 1, 3.0 * s)]
            } else {
                vec![(i - 1, -s), (i + 1, s)]
            }
        }
        StencilOrder::Four => {
            let s = 1.0 / (12.0 * h);
            if i == 0 {
                vec![
                    (0, -25.0 * s),
                    (1, 48.0 * s),
                    (2, -36.0 * s),
                    (3, 16.0 * s),
                    (4, -3.0 * s),
                ]
            } else if i == 1 {
                vec![
                    (0, -3.0 * s),
                    (1, -10.0 * s),
                    (2, 18.0 * s),
                    (3, -6.0 * s),
                    (4, s),
                ]
            } else if i == n - 2 {
                vec![
                    (n - 5, -s),
                    (n - 4, 6.0 * s),
                    (n - 3, -18.0 * s),
                    (n - 2, 10.0 * s),
                    (n - 1, 3.0 * s),
                ]
            } else if i == n - 1 {
                vec![
                    (n - 5, 3.0 * s),
                    (n - 4, -16.0 * s),
                    (n - 3, 36.0 * s),
                    (n - 2, -48.0 * s),
                    (n - 1, 25.0 * s),
                ]
            } else {
                vec![(i - 2, s), (i - 1, -8.0 * s), (i + 1, 8.0 * s), (i + 2, -s)]
            }
        }
    }
}

/// Apply the difference matrix D row by row.
fn differentiate(values: &[Complex64], h: f64, order: StencilOrder) -> Vec<Complex64> {
    let n = values.len();
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    for (i, slot) in out.iter_mut().enumerate() {
        let mut acc = Complex64::new(0.0, 0.0);
        for (j, c) in stencil_row(order, n, i, h) {
            acc += c * values[j];
        }
        *slot = acc;
    }
    out
}

/// Apply `T0 = i hbar d/dE`. Boundary nodes use one-sided stencils of the
/// same order and the output label records that.
pub fn apply_t0(
    psi: &WaveFunction,
    constants: &PhysicalConstants,
    order: StencilOrder,
) -> WaveFunction {
    let d = differentiate(psi.values(), psi.grid().spacing(), order);
    let factor = Complex64::new(0.0, constants.hbar());
    let values: Vec<Complex64> = d.into_iter().map(|v| factor * v).collect();
    psi.with_values(values)
        .with_label(format!("T0[order={},boundary=one-sided]", order.value()))
}

/// Apply `Tw`.
///
/// `Direct` computes `i hbar (D psi + (1/2)(w'/w) psi)`.
/// `Conjugated` scales by w^(1/2), applies `i hbar D`, then scales by
/// w^(-1/2); for a flat weight both collapse to `T0`.
pub fn apply_tw(
    psi: &WaveFunction,
    weight: &Weight,
    constants: &PhysicalConstants,
    order: StencilOrder,
    construction: Construction,
) -> Result<WaveFunction> {
    let grid = *psi.grid();
    let h = grid.spacing();
    let factor = Complex64::new(0.0, constants.hbar());
    let values = match construction {
        Construction::Direct => {
            let d = differentiate(psi.values(), h, order);
            let mut out = Vec::with_capacity(grid.len());
            for (i, v) in d.into_iter().enumerate() {
                let g = weight.half_log_derivative(grid.node(i))?;
                out.push(factor * (v + g * psi.value(i)));
            }
            out
        }
        Construction::Conjugated => {
            let scaled = apply_uw(psi, weight, UwDirection::Forward)?;
            let d = differentiate(scaled.values(), h, order);
            let mut out = Vec::with_capacity(grid.len());
            for (i, v) in d.into_iter().enumerate() {
                let sqrt_w = weight.checked_w(grid.node(i))?.sqrt();
                out.push(factor * v / sqrt_w);
            }
            out
        }
    };
    Ok(psi.with_values(values).with_label(format!(
        "Tw[{},order={},weight={}]",
        match construction {
            Construction::Conjugated => "conjugated",
            Construction::Direct => "direct",
        },
        order.value(),
        weight.id()
    )))
}

/// Apply the energy operator `H = E .` (diagonal in this representation).
pub fn apply_h(psi: &WaveFunction) -> WaveFunction {
    let grid = *psi.grid();
    let values = (0..grid.len())
        .map(|i| psi.value(i) * grid.node(i))
        .collect();
    psi.with_values(values)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UwDirection {
    /// Multiply by w^(1/2): maps the weighted space onto the flat one.
    Forward,
    /// Divide by w^(1/2).
    Inverse,
}

/// Apply the isometry `Uw` or its inverse.
pub fn apply_uw(
    psi: &WaveFunction,
    weight: &Weight,
    direction: UwDirection,
) -> Result<WaveFunction> {
    let grid = *psi.grid();
    let mut values = Vec::with_capacity(grid.len());
    for i in 0..grid.len() {
        let sqrt_w = weight.checked_w(grid.node(i))?.sqrt();
        let v = match direction {
            UwDirection::Forward => psi.value(i) * sqrt_w,
            UwDirection::Inverse => psi.value(i) / sqrt_w,
        };
        values.push(v);
    }
    Ok(psi.with_values(values))
}

/// The commutator `[Tw, H] psi = Tw(H psi) - H(Tw psi)`.
///
/// In the continuum this equals `i hbar psi` independently of the weight. The
/// order-2 discrete commutator is exactly the symmetric average
/// `i hbar (psi_{i+1} + psi_{i-1}) / 2` at interior nodes, so the residual
/// against `i hbar psi` is the second difference and shrinks as O(h^2).
/// Requires numerically dead edges (decay margin) because boundary stencils
/// are one-sided.
pub fn commutator_th(
    psi: &WaveFunction,
    weight: &Weight,
    constants: &PhysicalConstants,
    order: StencilOrder,
    construction: Construction,
) -> Result<WaveFunction> {
    check_decay_margin(psi, weight, boundary_exclusion(order))?;
    let t_h = apply_tw(&apply_h(psi), weight, constants, order, construction)?;
    let h_t = apply_h(&apply_tw(psi, weight, constants, order, construction)?);
    let values = t_h
        .values()
        .iter()
        .zip(h_t.values())
        .map(|(a, b)| a - b)
        .collect();
    Ok(psi.with_values(values).with_label("[Tw,H]"))
}

/// Verify that `|w^(1/2) psi|` stays below [`DECAY_MARGIN`] on the
/// `exclusion` outermost nodes at each edge.
pub fn check_decay_margin(psi: &WaveFunction, weight: &Weight, exclusion: usize) -> Result<()> {
    let grid = psi.grid();
    let n = grid.len();
    let zone = exclusion.min(n / 2);
    let mut worst = 0.0f64;
    for i in (0..zone).chain(n - zone..n) {
        let w = weight.checked_w(grid.node(i))?;
        worst = worst.max(psi.value(i).norm() * w.sqrt());
    }
    if worst > DECAY_MARGIN {
        return Err(Error::DecayMargin {
            worst,
            limit: DECAY_MARGIN,
        });
    }
    Ok(())
}

/// Dense complex matrix realization of `Tw` together with the weighted
/// quadrature metric `g_i = q_i w(E_i)` it is Hermitian against.
#[derive(Debug, Clone)]
pub struct OperatorMatrix {
    dim: usize,
    entries: Vec<Complex64>,
    metric: Vec<f64>,
    grid: Grid,
    weight_id: String,
    stencil_order: StencilOrder,
    construction: Construction,
    hbar: f64,
}

impl OperatorMatrix {
    /// Diagonal matrix against an arbitrary metric; used by tests to check
    /// the metric-Hermiticity machinery on the (diagonal) energy operator.
    #[cfg(test)]
    pub(crate) fn diagonal(grid: Grid, metric: Vec<f64>, diag: Vec<f64>) -> Self {
        let n = grid.len();
        assert_eq!(metric.len(), n);
        assert_eq!(diag.len(), n);
        let mut entries = vec![Complex64::new(0.0, 0.0); n * n];
        for (i, &d) in diag.iter().enumerate() {
            entries[i * n + i] = Complex64::new(d, 0.0);
        }
        OperatorMatrix {
            dim: n,
            entries,
            metric,
            grid,
            weight_id: "diagonal".to_string(),
            stencil_order: StencilOrder::Two,
            construction: Construction::Direct,
            hbar: 1.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entry(&self, row: usize, col: usize) -> Complex64 {
        self.entries[row * self.dim + col]
    }

    pub fn metric(&self) -> &[f64] {
        &self.metric
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn weight_id(&self) -> &str {
        &self.weight_id
    }

    pub fn stencil_order(&self) -> StencilOrder {
        self.stencil_order
    }

    pub fn construction(&self) -> Construction {
        self.construction
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    pub fn matvec(&self, psi: &WaveFunction) -> Result<WaveFunction> {
        if psi.len() != self.dim {
            return Err(Error::GridMismatch);
        }
        let mut values = vec![Complex64::new(0.0, 0.0); self.dim];
        for (i, slot) in values.iter_mut().enumerate() {
            let row = &self.entries[i * self.dim..(i + 1) * self.dim];
            let mut acc = Complex64::new(0.0, 0.0);
            for (j, m) in row.iter().enumerate() {
                if m.re != 0.0 || m.im != 0.0 {
                    acc += m * psi.value(j);
                }
            }
            *slot = acc;
        }
        Ok(psi.with_values(values))
    }

    /// Nonzero entries as (row, col, value) triplets, row-major order.
    pub fn nonzero_entries(&self) -> impl Iterator<Item = (usize, usize, Complex64)> + '_ {
        (0..self.dim).flat_map(move |i| {
            (0..self.dim).filter_map(move |j| {
                let v = self.entry(i, j);
                if v.re != 0.0 || v.im != 0.0 {
                    Some((i, j, v))
                } else {
                    None
                }
            })
        })
    }
}

/// Assemble the dense matrix of `Tw` on `grid`.
pub fn build_tw_matrix(
    weight: &Weight,
    grid: &Grid,
    constants: &PhysicalConstants,
    order: StencilOrder,
    construction: Construction,
) -> Result<OperatorMatrix> {
    build_tw_matrix_with_cap(
        weight,
        grid,
        constants,
        order,
        construction,
        DEFAULT_DENSE_CAP,
    )
}

pub fn build_tw_matrix_with_cap(
    weight: &Weight,
    grid: &Grid,
    constants: &PhysicalConstants,
    order: StencilOrder,
    construction: Construction,
    dense_cap: usize,
) -> Result<OperatorMatrix> {
    let n = grid.len();
    if n > dense_cap {
        return Err(Error::DenseCapExceeded { n, cap: dense_cap });
    }
    let h = grid.spacing();
    let factor = Complex64::new(0.0, constants.hbar());

    let w: Vec<f64> = grid
        .nodes()
        .map(|e| weight.checked_w(e))
        .collect::<Result<_>>()?;
    let rule = QuadratureRule::trapezoid(grid);
    let metric: Vec<f64> = (0..n).map(|i| rule.node_weight(i) * w[i]).collect();

    let mut entries = vec![Complex64::new(0.0, 0.0); n * n];
    match construction {
        Construction::Conjugated => {
            let sqrt_w: Vec<f64> = w.iter().map(|v| v.sqrt()).collect();
            for i in 0..n {
                for (j, c) in stencil_row(order, n, i, h) {
                    entries[i * n + j] = factor * (c * sqrt_w[j] / sqrt_w[i]);
                }
            }
        }
        Construction::Direct => {
            for i in 0..n {
                for (j, c) in stencil_row(order, n, i, h) {
                    entries[i * n + j] = factor * c;
                }
                let g = weight.half_log_derivative(grid.node(i))?;
                entries[i * n + i] += factor * g;
            }
        }
    }

    Ok(OperatorMatrix {
        dim: n,
        entries,
        metric,
        grid: *grid,
        weight_id: weight.id().to_string(),
        stencil_order: order,
        construction,
        hbar: constants.hbar(),
    })
}
