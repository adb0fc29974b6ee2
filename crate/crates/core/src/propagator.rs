//! Closed-form unitary group generated by `Tw`:
//!
//! `(exp(-i sigma Tw / hbar) psi)(E) = sqrt(w(E + sigma) / w(E)) psi(E + sigma)`,
//!
//! the flat translation group conjugated through `Uw`. Shifts aligned with
//! the grid (`sigma = k h`) are resolved by exact index arithmetic; anything
//! else needs explicit opt-in cubic interpolation and carries a degraded
//! tolerance.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::discretization::{weighted_norm, QuadratureRule, WaveFunction};
use crate::error::{Error, Result};
use crate::operators::{apply_tw, Construction, PhysicalConstants, StencilOrder};
use crate::verification::ResidualRecord;
use crate::weights::Weight;

/// Tolerance within which `sigma / h` must sit on an integer to count as an
/// aligned shift.
const ALIGNMENT_SLOP: f64 = 1e-9;

/// How off-node lookups are resolved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShiftInterpolation {
    /// Only aligned shifts are accepted.
    None,
    /// Four-point Lagrange interpolation for unaligned shifts.
    Cubic,
}

/// Pre-flight record for one propagation step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropagationStep {
    pub sigma: f64,
    /// True when the shifted support still fits inside the grid.
    pub margin_ok: bool,
    /// True when sigma is an integer multiple of the grid spacing.
    pub aligned: bool,
}

impl PropagationStep {
    /// Check margins for shifting `psi` by `sigma`. Functions without a
    /// declared compact support cannot be shifted at all (off-grid samples
    /// would have to be invented; silent zero-fill would fake unitarity).
    pub fn plan(psi: &WaveFunction, sigma: f64) -> Result<Self> {
        if !sigma.is_finite() {
            return Err(Error::BadParameter(format!(
                "shift must be finite, got {sigma}"
            )));
        }
        let grid = psi.grid();
        let h = grid.spacing();
        let aligned = (sigma / h - (sigma / h).round()).abs() <= ALIGNMENT_SLOP;
        let margin_ok = if sigma == 0.0 {
            true
        } else {
            match psi.support_radius() {
                Some(radius) => radius + sigma.abs() <= grid.half_width(),
                None => false,
            }
        };
        Ok(PropagationStep {
            sigma,
            margin_ok,
            aligned,
        })
    }
}

/// Apply the group element for shift `sigma`, aligned shifts only.
pub fn propagate(
    psi: &WaveFunction,
    sigma: f64,
    weight: &Weight,
    constants: &PhysicalConstants,
) -> Result<WaveFunction> {
    propagate_with(psi, sigma, weight, constants, ShiftInterpolation::None)
}

pub fn propagate_with(
    psi: &WaveFunction,
    sigma: f64,
    weight: &Weight,
    constants: &PhysicalConstants,
    interpolation: ShiftInterpolation,
) -> Result<WaveFunction> {
    let _ = constants; // the closed form depends on sigma only through E + sigma
    if sigma == 0.0 {
        return Ok(psi.clone());
    }
    let step = PropagationStep::plan(psi, sigma)?;
    if !step.margin_ok {
        return Err(Error::MarginViolation(match psi.support_radius() {
            Some(radius) => format!(
                "support radius {radius} plus shift {} exceeds half-width {}",
                sigma.abs(),
                psi.grid().half_width()
            ),
            None => "input declares no compact support, off-grid samples would be needed".into(),
        }));
    }
    let grid = psi.grid();
    let h = grid.spacing();
    let support = psi
        .support_radius()
        .expect("margin_ok for nonzero sigma implies declared support");

    let lookup_exact = |index: i64| -> Complex64 {
        if index >= 0 && (index as usize) < grid.len() {
            psi.value(index as usize)
        } else {
            // margin_ok guarantees any off-grid target is outside the support
            Complex64::new(0.0, 0.0)
        }
    };

    let mut values = Vec::with_capacity(grid.len());
    if step.aligned {
        let k = (sigma / h).round() as i64;
        for i in 0..grid.len() {
            let target = i as i64 + k;
            let sample = lookup_exact(target);
            if sample == Complex64::new(0.0, 0.0) {
                values.push(sample);
                continue;
            }
            let e = grid.node(i);
            let w_here = weight.checked_w(e)?;
            let w_there = weight.checked_w(grid.node(target as usize))?;
            values.push((w_there / w_here).sqrt() * sample);
        }
    } else {
        if interpolation == ShiftInterpolation::None {
            return Err(Error::UnalignedShift { sigma, spacing: h });
        }
        for i in 0..grid.len() {
            let e = grid.node(i);
            let target = e + sigma;
            let sample = if target.abs() >= support {
                Complex64::new(0.0, 0.0)
            } else {
                cubic_interpolate(psi, target)
            };
            if sample == Complex64::new(0.0, 0.0) {
                values.push(sample);
                continue;
            }
            let w_here = weight.checked_w(e)?;
            let w_there = weight.checked_w(target)?;
            values.push((w_there / w_here).sqrt() * sample);
        }
    }

    let shifted = psi.with_values(values);
    let grown = support + sigma.abs();
    Ok(shifted
        .declare_support(grown.min(grid.half_width()), f64::INFINITY)
        .expect("infinite tolerance cannot fail")
        .with_label(format!("shifted(sigma={sigma})")))
}

/// Four-point Lagrange interpolation at `x`, using zeros for stencil
/// neighbours outside the grid when they are beyond the declared support.
fn cubic_interpolate(psi: &WaveFunction, x: f64) -> Complex64 {
    let grid = psi.grid();
    let h = grid.spacing();
    let pos = (x - grid.node(0)) / h;
    let base = pos.floor() as i64 - 1;
    let t = pos - (base + 1) as f64;
    // Lagrange weights for nodes at offsets -1, 0, 1, 2 around the cell.
    let weights = [
        -t * (t - 1.0) * (t - 2.0) / 6.0,
        (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0,
        -(t + 1.0) * t * (t - 2.0) / 2.0,
        (t + 1.0) * t * (t - 1.0) / 6.0,
    ];
    let mut acc = Complex64::new(0.0, 0.0);
    for (offset, weight) in weights.iter().enumerate() {
        let idx = base + offset as i64;
        // off-grid neighbours sit beyond the declared support (|E| > L > r),
        // so their true value is zero
        let sample = if idx >= 0 && (idx as usize) < grid.len() {
            psi.value(idx as usize)
        } else {
            Complex64::new(0.0, 0.0)
        };
        acc += *weight * sample;
    }
    acc
}

/// `| ||shifted||_w - ||psi||_w | / ||psi||_w`: the dynamic witness that the
/// generator is self-adjoint.
pub fn propagator_unitarity_residual(
    psi: &WaveFunction,
    sigma: f64,
    weight: &Weight,
    constants: &PhysicalConstants,
    tol: f64,
) -> Result<ResidualRecord> {
    let shifted = propagate(psi, sigma, weight, constants)?;
    let rule = QuadratureRule::trapezoid(psi.grid());
    let before = weighted_norm(psi, weight, &rule)?;
    let after = weighted_norm(&shifted, weight, &rule)?;
    if before == 0.0 {
        return Err(Error::BrokenNorm("cannot normalize by a zero norm".into()));
    }
    let value = (after - before).abs() / before;
    let context = json!({
        "weight": weight.id(),
        "sigma": sigma,
        "norm_before": before,
        "norm_after": after,
        "psi": psi.label(),
    });
    Ok(ResidualRecord::new(
        "propagator_unitarity",
        value,
        tol,
        context,
    ))
}

/// `|| P(sigma2) P(sigma1) psi - P(sigma1 + sigma2) psi ||_w / ||psi||_w`:
/// the one-parameter group law. Exact up to rounding for aligned shifts
/// because the weight ratios telescope.
pub fn group_property_residual(
    psi: &WaveFunction,
    sigma1: f64,
    sigma2: f64,
    weight: &Weight,
    constants: &PhysicalConstants,
    tol: f64,
) -> Result<ResidualRecord> {
    let two_step = propagate(
        &propagate(psi, sigma1, weight, constants)?,
        sigma2,
        weight,
        constants,
    )?;
    let one_step = propagate(psi, sigma1 + sigma2, weight, constants)?;
    let rule = QuadratureRule::trapezoid(psi.grid());
    let norm = weighted_norm(psi, weight, &rule)?;
    if norm == 0.0 {
        return Err(Error::BrokenNorm("cannot normalize by a zero norm".into()));
    }
    let diff = WaveFunction::new(
        *psi.grid(),
        two_step
            .values()
            .iter()
            .zip(one_step.values())
            .map(|(a, b)| a - b)
            .collect(),
    )?;
    let value = weighted_norm(&diff, weight, &rule)? / norm;
    let context = json!({
        "weight": weight.id(),
        "sigma1": sigma1,
        "sigma2": sigma2,
        "psi": psi.label(),
    });
    Ok(ResidualRecord::new(
        "propagator_group_law",
        value,
        tol,
        context,
    ))
}

/// `|| (P(h) - 1) psi / h + (i/hbar) Tw psi ||_w / ||psi||_w`: the
/// finite-difference-in-sigma generator against the operator itself. First
/// order in the step, so halving h should roughly halve the value.
pub fn generator_consistency_residual(
    psi: &WaveFunction,
    weight: &Weight,
    constants: &PhysicalConstants,
    order: StencilOrder,
    construction: Construction,
) -> Result<f64> {
    let h = psi.grid().spacing();
    let shifted = propagate(psi, h, weight, constants)?;
    let t_psi = apply_tw(psi, weight, constants, order, construction)?;
    let factor = Complex64::new(0.0, 1.0 / constants.hbar());
    let diff = WaveFunction::new(
        *psi.grid(),
        (0..psi.len())
            .map(|i| (shifted.value(i) - psi.value(i)) / h + factor * t_psi.value(i))
            .collect(),
    )?;
    let rule = QuadratureRule::trapezoid(psi.grid());
    let norm = weighted_norm(psi, weight, &rule)?;
    Ok(weighted_norm(&diff, weight, &rule)? / norm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretization::{Grid, TestFunction};
    use std::collections::BTreeMap;

    fn flat() -> Weight {
        Weight::builtin("flat", &BTreeMap::new()).unwrap()
    }

    fn shifted_gaussian() -> Weight {
        Weight::builtin("shifted_gaussian", &BTreeMap::new()).unwrap()
    }

    /// Grid with h = 0.01 so integer shifts are aligned.
    fn aligned_grid() -> Grid {
        Grid::new(20.0, 4001).unwrap()
    }

    fn bump(grid: &Grid) -> WaveFunction {
        TestFunction::SmoothBump { radius: 5.0 }
            .sample(grid)
            .unwrap()
    }

    #[test]
    fn zero_shift_is_identity_to_the_bit() {
        let grid = aligned_grid();
        let psi = bump(&grid);
        let out = propagate(
            &psi,
            0.0,
            &shifted_gaussian(),
            &PhysicalConstants::default(),
        )
        .unwrap();
        assert_eq!(out.values(), psi.values());
    }

    #[test]
    fn flat_weight_shift_moves_the_peak() {
        // gaussian with declared numerical support; shifting by +1 puts the
        // peak at the node E = -1 because output(E) = psi(E + 1).
        let grid = aligned_grid();
        let psi = TestFunction::Gaussian {
            center: 0.0,
            width: 1.0,
        }
        .sample(&grid)
        .unwrap()
        .declare_support(15.0, 1e-45)
        .unwrap();
        let out = propagate(&psi, 1.0, &flat(), &PhysicalConstants::default()).unwrap();
        let peak = (0..grid.len())
            .max_by(|&a, &b| out.value(a).norm().total_cmp(&out.value(b).norm()))
            .unwrap();
        assert_eq!(grid.node(peak), -1.0);
        assert!((out.value(peak).re - 1.0).abs() < 1e-14);
    }

    #[test]
    fn constant_weight_ratio_is_identity() {
        let mut params = BTreeMap::new();
        params.insert("c".to_string(), 4.0);
        let w = Weight::builtin("flat", &params).unwrap();
        let grid = aligned_grid();
        let psi = bump(&grid);
        let out = propagate(&psi, 2.0, &w, &PhysicalConstants::default()).unwrap();
        let k = (2.0 / grid.spacing()).round() as usize;
        for i in 0..grid.len() - k {
            assert_eq!(out.value(i), psi.value(i + k));
        }
    }

    #[test]
    fn unitarity_for_aligned_shifts() {
        let grid = aligned_grid();
        let psi = bump(&grid);
        let c = PhysicalConstants::default();
        let record =
            propagator_unitarity_residual(&psi, 2.0, &shifted_gaussian(), &c, 1e-10).unwrap();
        assert!(record.passed, "{}", record.value);

        let record = propagator_unitarity_residual(&psi, -3.0, &flat(), &c, 1e-14).unwrap();
        assert!(record.passed, "{}", record.value);
    }

    #[test]
    fn round_trip_restores_the_state() {
        let grid = aligned_grid();
        let psi = bump(&grid);
        let c = PhysicalConstants::default();
        let w = shifted_gaussian();
        let there = propagate(&psi, 3.0, &w, &c).unwrap();
        let back = propagate(&there, -3.0, &w, &c).unwrap();
        let mut worst = 0.0f64;
        for i in 0..grid.len() {
            worst = worst.max((back.value(i) - psi.value(i)).norm());
        }
        assert!(worst <= 1e-12 * psi.max_abs(), "{worst}");
    }

    #[test]
    fn group_law_telescopes_for_aligned_shifts() {
        let grid = aligned_grid();
        let psi = bump(&grid);
        let c = PhysicalConstants::default();
        let record =
            group_property_residual(&psi, 1.0, 2.0, &shifted_gaussian(), &c, 1e-12).unwrap();
        assert!(record.passed, "{}", record.value);

        // sigma2 = -sigma1 reduces to the round trip
        let record =
            group_property_residual(&psi, 2.0, -2.0, &shifted_gaussian(), &c, 1e-12).unwrap();
        assert!(record.passed, "{}", record.value);
    }

    #[test]
    fn margin_violations_are_errors() {
        let grid = aligned_grid();
        let psi = bump(&grid); // support 5 on half-width 20
        let c = PhysicalConstants::default();
        let err = propagate(&psi, 16.0, &flat(), &c).unwrap_err();
        assert!(matches!(err, Error::MarginViolation(_)));

        // no declared support: any nonzero shift is rejected
        let gauss = TestFunction::Gaussian {
            center: 0.0,
            width: 1.0,
        }
        .sample(&grid)
        .unwrap();
        let err = propagate(&gauss, 1.0, &flat(), &c).unwrap_err();
        assert!(matches!(err, Error::MarginViolation(_)));
    }

    #[test]
    fn unaligned_shift_needs_interpolation_opt_in() {
        let grid = aligned_grid();
        let psi = bump(&grid);
        let c = PhysicalConstants::default();
        let sigma = 0.5 * grid.spacing();
        let err = propagate(&psi, sigma, &flat(), &c).unwrap_err();
        assert!(matches!(err, Error::UnalignedShift { .. }));

        // with cubic interpolation the shift resolves, at degraded accuracy
        let out = propagate_with(&psi, sigma, &flat(), &c, ShiftInterpolation::Cubic).unwrap();
        let rule = QuadratureRule::trapezoid(&grid);
        let before = weighted_norm(&psi, &flat(), &rule).unwrap();
        let after = weighted_norm(&out, &flat(), &rule).unwrap();
        assert!(
            (after - before).abs() / before <= 1e-6,
            "{after} vs {before}"
        );
    }

    #[test]
    fn generator_consistency_is_first_order_in_the_step() {
        let c = PhysicalConstants::default();
        let w = shifted_gaussian();
        let mut residuals = Vec::new();
        for n in [4001_usize, 8001] {
            let grid = Grid::new(20.0, n).unwrap();
            let psi = bump(&grid);
            residuals.push(
                generator_consistency_residual(
                    &psi,
                    &w,
                    &c,
                    StencilOrder::Four,
                    Construction::Conjugated,
                )
                .unwrap(),
            );
        }
        let order = (residuals[0] / residuals[1]).log2();
        assert!(
            (order - 1.0).abs() <= 0.3,
            "measured order {order}, residuals {residuals:?}"
        );
    }
}
