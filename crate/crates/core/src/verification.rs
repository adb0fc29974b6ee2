//! Quantified residuals for every operator claim: symmetry with boundary-term
//! bookkeeping, unitary equivalence to the flat derivative, the canonical
//! commutation relation with the energy operator, domain membership,
//! deficiency indices, and the (unbounded) energy spectrum.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::discretization::{inner_product, weighted_norm, Grid, QuadratureRule, WaveFunction};
use crate::error::{Error, Result};
use crate::operators::{
    apply_t0, apply_tw, apply_uw, boundary_exclusion, check_decay_margin, commutator_th,
    Construction, OperatorMatrix, PhysicalConstants, StencilOrder, UwDirection,
};
use crate::weights::Weight;

/// A named residual with its tolerance and verdict. `passed` is always
/// `value <= tolerance` (enforced at construction).
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ResidualRecord {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub context: serde_json::Value,
}

impl ResidualRecord {
    pub fn new(
        name: impl Into<String>,
        value: f64,
        tolerance: f64,
        context: serde_json::Value,
    ) -> Self {
        ResidualRecord {
            name: name.into(),
            passed: value <= tolerance,
            value,
            tolerance,
            context,
        }
    }
}

/// Zero the samples inside the boundary exclusion zone so norms and residuals
/// only see interior nodes.
fn restrict_interior(psi: &WaveFunction, exclusion: usize) -> WaveFunction {
    let n = psi.len();
    let zone = exclusion.min(n / 2);
    let values = (0..n)
        .map(|i| {
            if i < zone || i >= n - zone {
                Complex64::new(0.0, 0.0)
            } else {
                psi.value(i)
            }
        })
        .collect();
    WaveFunction::new(*psi.grid(), values).expect("restriction preserves validity")
}

fn difference(a: &WaveFunction, b: &WaveFunction) -> Result<WaveFunction> {
    if a.grid() != b.grid() {
        return Err(Error::GridMismatch);
    }
    let values = a
        .values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| x - y)
        .collect();
    WaveFunction::new(*a.grid(), values)
}

/// Symmetry of `Tw` with explicit boundary-term accounting.
///
/// Returns two records:
/// - raw: `|<phi|Tw psi>_w - <Tw phi|psi>_w|`, with tolerance
///   `raw_rel_tol * ||phi||_w ||psi||_w`;
/// - corrected: `|raw - boundary|` where `boundary = hbar |phi* psi w|` taken
///   at the outermost nodes, which is the discrete image of the integration
///   by parts boundary term. Its tolerance is 10% of the larger of the two,
///   floored at the raw tolerance so the in-domain case (both near zero)
///   still passes.
pub fn hermiticity_residual(
    phi: &WaveFunction,
    psi: &WaveFunction,
    weight: &Weight,
    constants: &PhysicalConstants,
    order: StencilOrder,
    construction: Construction,
    raw_rel_tol: f64,
) -> Result<(ResidualRecord, ResidualRecord)> {
    if phi.grid() != psi.grid() {
        return Err(Error::GridMismatch);
    }
    let grid = phi.grid();
    let rule = QuadratureRule::trapezoid(grid);

    let t_psi = apply_tw(psi, weight, constants, order, construction)?;
    let t_phi = apply_tw(phi, weight, constants, order, construction)?;
    let forward = inner_product(phi, &t_psi, weight, &rule)?;
    let backward = inner_product(&t_phi, psi, weight, &rule)?;
    let raw = (forward - backward).norm();

    let n = grid.len();
    let edge = |i: usize| -> Result<Complex64> {
        let w = weight.checked_w(grid.node(i))?;
        Ok(phi.value(i).conj() * psi.value(i) * w)
    };
    let boundary = constants.hbar() * (edge(n - 1)? - edge(0)?).norm();

    let norm_phi = weighted_norm(phi, weight, &rule)?;
    let norm_psi = weighted_norm(psi, weight, &rule)?;
    let raw_tol = raw_rel_tol * norm_phi * norm_psi;

    let context = json!({
        "weight": weight.id(),
        "construction": construction,
        "order": order.value(),
        "hbar": constants.hbar(),
        "grid": {"half_width": grid.half_width(), "nodes": grid.len()},
        "boundary_term": boundary,
        "norm_phi": norm_phi,
        "norm_psi": norm_psi,
        "phi": phi.label(),
        "psi": psi.label(),
    });

    let raw_record = ResidualRecord::new("hermiticity_raw", raw, raw_tol, context.clone());
    let corrected = (raw - boundary).abs();
    let corrected_tol = (0.1 * raw.max(boundary)).max(raw_tol);
    let corrected_record =
        ResidualRecord::new("hermiticity_corrected", corrected, corrected_tol, context);
    Ok((raw_record, corrected_record))
}

/// Flat-metric norm, interior nodes only, of
/// `(Uw Tw Uw^-1) f - T0 f`. For the conjugated construction the composition
/// collapses to `T0` up to rounding; for the direct construction the residual
/// shrinks at the stencil order.
pub fn unitary_equivalence_residual(
    f: &WaveFunction,
    weight: &Weight,
    constants: &PhysicalConstants,
    order: StencilOrder,
    construction: Construction,
    tol: f64,
) -> Result<ResidualRecord> {
    check_decay_margin(f, weight, boundary_exclusion(order))?;
    let pulled_back = apply_uw(f, weight, UwDirection::Inverse)?;
    let t = apply_tw(&pulled_back, weight, constants, order, construction)?;
    let pushed = apply_uw(&t, weight, UwDirection::Forward)?;
    let reference = apply_t0(f, constants, order);

    let excl = boundary_exclusion(order);
    let diff = restrict_interior(&difference(&pushed, &reference)?, excl);
    let rule = QuadratureRule::trapezoid(f.grid());
    let value = crate::discretization::flat_norm(&diff, &rule)?;

    let context = json!({
        "weight": weight.id(),
        "construction": construction,
        "order": order.value(),
        "hbar": constants.hbar(),
        "grid": {"half_width": f.grid().half_width(), "nodes": f.grid().len()},
        "f": f.label(),
    });
    Ok(ResidualRecord::new(
        "unitary_equivalence",
        value,
        tol,
        context,
    ))
}

/// Canonical conjugacy with the energy operator:
/// `|| [Tw, H] psi - i hbar psi ||_w / ||psi||_w`, interior restriction.
pub fn commutation_residual(
    psi: &WaveFunction,
    weight: &Weight,
    constants: &PhysicalConstants,
    order: StencilOrder,
    construction: Construction,
    tol: f64,
) -> Result<ResidualRecord> {
    let comm = commutator_th(psi, weight, constants, order, construction)?;
    let target = psi.scaled(Complex64::new(0.0, constants.hbar()));
    let excl = boundary_exclusion(order);
    let diff = restrict_interior(&difference(&comm, &target)?, excl);
    let rule = QuadratureRule::trapezoid(psi.grid());
    let denom = weighted_norm(&restrict_interior(psi, excl), weight, &rule)?;
    if denom == 0.0 {
        return Err(Error::BrokenNorm(
            "zero interior norm in commutation residual".into(),
        ));
    }
    let value = weighted_norm(&diff, weight, &rule)? / denom;
    let context = json!({
        "weight": weight.id(),
        "construction": construction,
        "order": order.value(),
        "hbar": constants.hbar(),
        "grid": {"half_width": psi.grid().half_width(), "nodes": psi.grid().len()},
        "psi": psi.label(),
    });
    Ok(ResidualRecord::new("commutation", value, tol, context))
}

/// Tolerances for [`domain_membership_check`].
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct DomainTolerances {
    /// Bound on max |w^(1/2) psi| over the outermost 1% of nodes.
    pub edge: f64,
    /// Bound on the second-difference quotient |psi''| proxy.
    pub smooth: f64,
}

impl Default for DomainTolerances {
    fn default() -> Self {
        DomainTolerances {
            edge: 1e-10,
            smooth: 1e3,
        }
    }
}

/// Does `psi` behave like a member of the operator domain? The conditions
/// sampled are edge decay of `w^(1/2) psi`, finiteness of the derivative in
/// the weighted norm, and a bounded second-difference quotient.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DomainReport {
    pub edge_decay: f64,
    pub derivative_norm: f64,
    pub derivative_finite: bool,
    pub smoothness_proxy: f64,
    pub in_domain: bool,
}

pub fn domain_membership_check(
    psi: &WaveFunction,
    weight: &Weight,
    tol: &DomainTolerances,
) -> DomainReport {
    let grid = psi.grid();
    let n = grid.len();
    let edge_count = (n / 100).max(1);

    let mut edge_decay = 0.0f64;
    for i in (0..edge_count).chain(n - edge_count..n) {
        let w = weight.w(grid.node(i)).max(0.0);
        edge_decay = edge_decay.max(psi.value(i).norm() * w.sqrt());
    }

    let derivative = apply_t0(psi, &PhysicalConstants::default(), StencilOrder::Two);
    let rule = QuadratureRule::trapezoid(grid);
    let (derivative_norm, derivative_finite) = match weighted_norm(&derivative, weight, &rule) {
        Ok(v) if v.is_finite() => (v, true),
        Ok(v) => (v, false),
        Err(_) => (f64::NAN, false),
    };

    let h = grid.spacing();
    let mut smoothness_proxy = 0.0f64;
    for i in 1..n - 1 {
        let second = (psi.value(i + 1) - 2.0 * psi.value(i) + psi.value(i - 1)).norm() / (h * h);
        smoothness_proxy = smoothness_proxy.max(second);
    }

    DomainReport {
        edge_decay,
        derivative_norm,
        derivative_finite,
        smoothness_proxy,
        in_domain: edge_decay <= tol.edge && derivative_finite && smoothness_proxy <= tol.smooth,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DeficiencySign {
    #[serde(rename = "+")]
    Plus,
    #[serde(rename = "-")]
    Minus,
}

impl DeficiencySign {
    pub fn value(self) -> f64 {
        match self {
            DeficiencySign::Plus => 1.0,
            DeficiencySign::Minus => -1.0,
        }
    }
}

/// Closed-form solution of `Tw psi = +/- i kappa psi`:
/// `psi(E) = w(E)^(-1/2) exp(+/- kappa E / hbar)`. Samples beyond
/// exp-argument 700 are clamped and flagged.
#[derive(Debug, Clone)]
pub struct DeficiencySample {
    pub wavefunction: WaveFunction,
    pub overflowed: bool,
}

pub fn deficiency_solution(
    sign: DeficiencySign,
    weight: &Weight,
    constants: &PhysicalConstants,
    grid: &Grid,
    kappa: f64,
) -> Result<DeficiencySample> {
    if kappa <= 0.0 || !kappa.is_finite() {
        return Err(Error::BadParameter(format!(
            "deficiency scale kappa must be positive, got {kappa}"
        )));
    }
    let rate = sign.value() * kappa / constants.hbar();
    let mut overflowed = false;
    let mut values = Vec::with_capacity(grid.len());
    for e in grid.nodes() {
        let w = weight.checked_w(e)?;
        let log_mag = -0.5 * w.ln() + rate * e;
        let v = if log_mag > 700.0 {
            overflowed = true;
            (700.0f64).exp()
        } else {
            log_mag.exp()
        };
        values.push(Complex64::new(v, 0.0));
    }
    let label = match sign {
        DeficiencySign::Plus => "deficiency_plus",
        DeficiencySign::Minus => "deficiency_minus",
    };
    Ok(DeficiencySample {
        wavefunction: WaveFunction::new(*grid, values)?.with_label(label),
        overflowed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeficiencyIndex {
    /// The candidate solution leaves the space: norms diverge with the
    /// truncation, the index is 0.
    Zero,
    /// Norms saturate: the solution is normalizable, the index is >= 1.
    AtLeastOne,
    Inconclusive,
}

/// Verdict of the truncated-norm growth study for both deficiency signs.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DeficiencyVerdict {
    pub n_plus: DeficiencyIndex,
    pub n_minus: DeficiencyIndex,
    /// ln ||psi_+/-||_w^2 on each truncation, in `l_list` order.
    pub log_norms_plus: Vec<f64>,
    pub log_norms_minus: Vec<f64>,
    /// Consecutive-truncation squared-norm ratios (may be infinite).
    pub growth_ratios_plus: Vec<f64>,
    pub growth_ratios_minus: Vec<f64>,
    pub l_list: Vec<f64>,
    pub nodes_per_truncation: usize,
    pub kappa: f64,
    pub hbar: f64,
    /// False when the weight fails its admissibility constraints; the indices
    /// are then reported inconclusive instead of being extrapolated.
    pub weight_constraints_ok: bool,
}

impl DeficiencyVerdict {
    pub fn is_zero_zero(&self) -> bool {
        self.n_plus == DeficiencyIndex::Zero && self.n_minus == DeficiencyIndex::Zero
    }
}

/// ln of the truncated squared norm of the deficiency solution on
/// `[-half_width, half_width]`, computed in log space so arbitrarily large
/// truncations cannot overflow.
fn log_truncated_norm_sq(
    sign: DeficiencySign,
    weight: &Weight,
    constants: &PhysicalConstants,
    grid: &Grid,
    kappa: f64,
) -> Result<f64> {
    let rate = sign.value() * kappa / constants.hbar();
    let rule = QuadratureRule::trapezoid(grid);
    // log of q_i w_i |psi_i|^2 with |psi_i| = w^(-1/2) exp(rate E): the weight
    // enters both factors the way the samples would.
    let mut log_terms = Vec::with_capacity(grid.len());
    for (i, e) in grid.nodes().enumerate() {
        let w = weight.checked_w(e)?;
        let log_psi_mag = -0.5 * w.ln() + rate * e;
        log_terms.push(rule.node_weight(i).ln() + w.ln() + 2.0 * log_psi_mag);
    }
    let max = log_terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = log_terms.iter().map(|t| (t - max).exp()).sum();
    Ok(max + sum.ln())
}

/// Classify the growth of truncated squared norms (given as logs).
///
/// `Zero` when every consecutive log-increment reaches `threshold_rate`
/// times the half-width step (the candidate solution escapes the space);
/// `AtLeastOne` when the norms saturate (relative increase below 1e-6, i.e.
/// the solution is normalizable); `Inconclusive` otherwise.
fn classify_growth(
    log_norms: &[f64],
    l_list: &[f64],
    threshold_rate: f64,
) -> (DeficiencyIndex, Vec<f64>) {
    let mut ratios = Vec::new();
    let mut diverges = true;
    let mut saturates = true;
    for j in 1..log_norms.len() {
        let increment = log_norms[j] - log_norms[j - 1];
        ratios.push(increment.exp());
        if increment < threshold_rate * (l_list[j] - l_list[j - 1]) {
            diverges = false;
        }
        if increment.is_nan() || increment.abs() >= 1e-6 {
            saturates = false;
        }
    }
    let index = if diverges {
        DeficiencyIndex::Zero
    } else if saturates {
        DeficiencyIndex::AtLeastOne
    } else {
        DeficiencyIndex::Inconclusive
    };
    (index, ratios)
}

/// Estimate the deficiency indices by watching the truncated norms of the
/// two candidate solutions grow across an increasing list of half-widths.
///
/// The divergence threshold is `kappa dL / hbar` per step, half the flat
/// analytic rate `2 kappa dL / hbar`, which makes the verdict robust to
/// bounded weight modulation. Weights failing their admissibility
/// constraints are not extrapolated: both indices come back inconclusive.
pub fn deficiency_index_estimate(
    weight: &Weight,
    constants: &PhysicalConstants,
    l_list: &[f64],
    nodes_per_truncation: usize,
    kappa: f64,
) -> Result<DeficiencyVerdict> {
    if l_list.len() < 3 {
        return Err(Error::BadParameter(format!(
            "deficiency estimate needs at least 3 truncations, got {}",
            l_list.len()
        )));
    }
    if !l_list.windows(2).all(|p| p[0] < p[1]) {
        return Err(Error::BadParameter(
            "truncation list must be strictly increasing".into(),
        ));
    }

    let largest = *l_list.last().unwrap();
    let probe = Grid::new(largest, nodes_per_truncation.min(8193) | 1)?;
    let validation = crate::weights::validate_weight(
        weight,
        &probe,
        &crate::weights::ValidationTolerances::default(),
    );
    if !validation.all_ok() {
        // Constraint violators are not extrapolated (the weight may even
        // underflow on the widest truncation); report inconclusive.
        return Ok(DeficiencyVerdict {
            n_plus: DeficiencyIndex::Inconclusive,
            n_minus: DeficiencyIndex::Inconclusive,
            log_norms_plus: Vec::new(),
            log_norms_minus: Vec::new(),
            growth_ratios_plus: Vec::new(),
            growth_ratios_minus: Vec::new(),
            l_list: l_list.to_vec(),
            nodes_per_truncation,
            kappa,
            hbar: constants.hbar(),
            weight_constraints_ok: false,
        });
    }

    let mut log_norms = [Vec::new(), Vec::new()];
    for &half_width in l_list {
        let grid = Grid::new(half_width, nodes_per_truncation)?;
        for (slot, sign) in [DeficiencySign::Plus, DeficiencySign::Minus]
            .into_iter()
            .enumerate()
        {
            log_norms[slot].push(log_truncated_norm_sq(
                sign, weight, constants, &grid, kappa,
            )?);
        }
    }

    let threshold_rate = kappa / constants.hbar();
    let (n_plus, growth_ratios_plus) = classify_growth(&log_norms[0], l_list, threshold_rate);
    let (n_minus, growth_ratios_minus) = classify_growth(&log_norms[1], l_list, threshold_rate);

    Ok(DeficiencyVerdict {
        n_plus,
        n_minus,
        log_norms_plus: log_norms[0].clone(),
        log_norms_minus: log_norms[1].clone(),
        growth_ratios_plus,
        growth_ratios_minus,
        l_list: l_list.to_vec(),
        nodes_per_truncation,
        kappa,
        hbar: constants.hbar(),
        weight_constraints_ok: true,
    })
}

/// The energy operator is diagonal here, so its spectrum on the truncation is
/// exactly the node set and the covered range is the full interval. The
/// unboundedness witness is that the range grows without bound as the
/// truncation does.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SpectrumRecord {
    pub eigenvalues: Vec<f64>,
    pub range: (f64, f64),
}

pub fn energy_spectrum(grid: &Grid) -> SpectrumRecord {
    let eigenvalues: Vec<f64> = grid.nodes().collect();
    let range = (eigenvalues[0], eigenvalues[eigenvalues.len() - 1]);
    SpectrumRecord { eigenvalues, range }
}

/// Max-abs interior entry of `G M - M^dagger G`, scaled by the max-abs
/// interior entry of `G M`. Interior excludes the one-sided stencil zone.
pub fn matrix_hermiticity_check(matrix: &OperatorMatrix, tol: f64) -> Result<ResidualRecord> {
    let n = matrix.dim();
    if let Some(i) = matrix.metric().iter().position(|&g| g == 0.0) {
        return Err(Error::ZeroMetricEntry(i));
    }
    let excl = boundary_exclusion(matrix.stencil_order()).min(n / 2);
    let mut worst = 0.0f64;
    let mut scale = 0.0f64;
    for i in excl..n - excl {
        let g_i = matrix.metric()[i];
        for j in excl..n - excl {
            let gm = g_i * matrix.entry(i, j);
            let mg = matrix.entry(j, i).conj() * matrix.metric()[j];
            worst = worst.max((gm - mg).norm());
            scale = scale.max(gm.norm());
        }
    }
    let value = if scale > 0.0 { worst / scale } else { worst };
    let context = json!({
        "weight": matrix.weight_id(),
        "construction": matrix.construction(),
        "order": matrix.stencil_order().value(),
        "dim": n,
        "scale": scale,
    });
    Ok(ResidualRecord::new(
        "matrix_hermiticity",
        value,
        tol,
        context,
    ))
}
