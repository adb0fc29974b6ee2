//! Subcommand implementations. Exit status contract: 0 all checks pass,
//! 1 check failure (including runtime margin violations), 2 config error,
//! 3 I/O error.

use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde_json::json;
use timeop_core::{
    apply_t0, apply_tw, build_tw_matrix, commutation_residual, deficiency_index_estimate,
    domain_membership_check, energy_spectrum, generator_consistency_residual,
    group_property_residual, hermiticity_residual, io, matrix_hermiticity_check, propagate_with,
    propagator_unitarity_residual, unitary_equivalence_residual, validate_weight, Construction,
    Grid, ResidualRecord, RunMeta, ShiftInterpolation, TestFunction, VerificationReport,
    WaveFunction, Weight,
};

use crate::config::{build_wavefunction, Resolved, RunConfig};
use crate::CliError;

/// All named checks of the verify suite, in report order.
pub const CHECK_NAMES: &[&str] = &[
    "boundary",
    "commutation",
    "deficiency",
    "domain",
    "flat_reduction",
    "hermiticity",
    "matrix_hermiticity",
    "propagator",
    "spectrum",
    "unitary_equivalence",
];

fn run_meta() -> RunMeta {
    let timestamp = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| format!("{}.{:09}", d.as_secs(), d.subsec_nanos()))
        .unwrap_or_else(|_| "unknown".to_string());
    RunMeta {
        timestamp,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)
            .map_err(|e| CliError::Io(format!("cannot create {}: {e}", parent.display())))?;
    }
    std::fs::write(path, contents)
        .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

fn check_failure(e: timeop_core::Error) -> CliError {
    CliError::Check(e.to_string())
}

pub fn cmd_validate(config: &RunConfig) -> Result<i32, CliError> {
    let resolved = Resolved::from_config(config)?;
    let report = validate_weight(&resolved.weight, &resolved.grid, &config.validation);
    let path = config.output_dir.join("validation.json");
    write_file(
        &path,
        &serde_json::to_string_pretty(&report).expect("report serializes"),
    )?;
    println!(
        "weight '{}': positivity {} | smoothness {} | bounds {} (m = {:.6e}, M = {:.6e}, E0 = {})",
        report.weight_id,
        if report.positivity_ok { "ok" } else { "FAIL" },
        if report.smoothness_ok { "ok" } else { "FAIL" },
        if report.bounds_ok { "ok" } else { "FAIL" },
        report.lower_bound_m,
        report.upper_bound_m_cap,
        report.e0,
    );
    println!("report: {}", path.display());
    Ok(if report.all_ok() { 0 } else { 1 })
}

struct VerifyContext<'a> {
    config: &'a RunConfig,
    resolved: &'a Resolved,
}

impl VerifyContext<'_> {
    fn bump(&self, fraction: f64) -> Result<WaveFunction, CliError> {
        TestFunction::SmoothBump {
            radius: fraction * self.config.half_width,
        }
        .sample(&self.resolved.grid)
        .map_err(check_failure)
    }

    fn is_conjugated(&self) -> bool {
        self.resolved.construction == Construction::Conjugated
    }
}

fn check_flat_reduction(ctx: &VerifyContext) -> Result<Vec<ResidualRecord>, CliError> {
    let flat = Weight::builtin("flat", &Default::default()).expect("flat weight");
    let psi = ctx.bump(0.25)?;
    let reference = apply_t0(&psi, &ctx.resolved.constants, ctx.resolved.order);
    let scale = reference.max_abs().max(f64::MIN_POSITIVE);
    let mut worst = 0.0f64;
    for construction in [Construction::Conjugated, Construction::Direct] {
        let tw = apply_tw(
            &psi,
            &flat,
            &ctx.resolved.constants,
            ctx.resolved.order,
            construction,
        )
        .map_err(check_failure)?;
        for i in 0..psi.len() {
            worst = worst.max((tw.value(i) - reference.value(i)).norm() / scale);
        }
    }
    Ok(vec![ResidualRecord::new(
        "flat_reduction",
        worst,
        ctx.config.tolerances.flat_reduction,
        json!({"both_constructions": true, "order": ctx.resolved.order.value()}),
    )])
}

fn check_hermiticity(ctx: &VerifyContext) -> Result<Vec<ResidualRecord>, CliError> {
    let phi = ctx.bump(0.20)?;
    let psi = ctx.bump(0.25)?;
    let (raw, corrected) = hermiticity_residual(
        &phi,
        &psi,
        &ctx.resolved.weight,
        &ctx.resolved.constants,
        ctx.resolved.order,
        ctx.resolved.construction,
        ctx.config.tolerances.hermiticity(ctx.is_conjugated()),
    )
    .map_err(check_failure)?;
    Ok(vec![raw, corrected])
}

fn check_boundary(ctx: &VerifyContext) -> Result<Vec<ResidualRecord>, CliError> {
    let one = TestFunction::ConstantOne
        .sample(&ctx.resolved.grid)
        .map_err(check_failure)?;
    let (raw, corrected) = hermiticity_residual(
        &one,
        &one,
        &ctx.resolved.weight,
        &ctx.resolved.constants,
        ctx.resolved.order,
        ctx.resolved.construction,
        ctx.config.tolerances.hermiticity(ctx.is_conjugated()),
    )
    .map_err(check_failure)?;
    let mut context = corrected.context.clone();
    context["raw_residual"] = json!(raw.value);
    context["agreement_tolerance"] = json!(ctx.config.tolerances.boundary_agreement);
    Ok(vec![ResidualRecord::new(
        "boundary_accounting",
        corrected.value,
        corrected.tolerance,
        context,
    )])
}

fn check_unitary_equivalence(ctx: &VerifyContext) -> Result<Vec<ResidualRecord>, CliError> {
    let f = ctx.bump(0.25)?;
    let record = unitary_equivalence_residual(
        &f,
        &ctx.resolved.weight,
        &ctx.resolved.constants,
        ctx.resolved.order,
        ctx.resolved.construction,
        ctx.config
            .tolerances
            .unitary_equivalence(ctx.is_conjugated(), ctx.resolved.order.value()),
    )
    .map_err(check_failure)?;
    Ok(vec![record])
}

fn check_commutation(ctx: &VerifyContext) -> Result<Vec<ResidualRecord>, CliError> {
    let psi = ctx.bump(0.25)?;
    let record = commutation_residual(
        &psi,
        &ctx.resolved.weight,
        &ctx.resolved.constants,
        ctx.resolved.order,
        ctx.resolved.construction,
        ctx.config
            .tolerances
            .commutation(ctx.resolved.order.value()),
    )
    .map_err(check_failure)?;
    Ok(vec![record])
}

fn check_domain(ctx: &VerifyContext) -> Result<Vec<ResidualRecord>, CliError> {
    let grid = &ctx.resolved.grid;
    let weight = &ctx.resolved.weight;
    let tol = &ctx.config.domain;

    let bump_report = domain_membership_check(&ctx.bump(0.25)?, weight, tol);
    let one = TestFunction::ConstantOne
        .sample(grid)
        .map_err(check_failure)?;
    let one_report = domain_membership_check(&one, weight, tol);
    let far = TestFunction::Gaussian {
        center: 0.9 * ctx.config.half_width,
        width: 1.0,
    }
    .sample(grid)
    .map_err(check_failure)?;
    let far_report = domain_membership_check(&far, weight, tol);

    let mismatches = [
        !bump_report.in_domain, // the bump must be inside
        one_report.in_domain,   // the constant must be outside
        far_report.in_domain,   // a gaussian leaning on the edge must be outside
    ]
    .iter()
    .filter(|&&wrong| wrong)
    .count();

    Ok(vec![ResidualRecord::new(
        "domain_membership",
        mismatches as f64,
        0.0,
        json!({
            "smooth_bump": bump_report,
            "constant_one": one_report,
            "edge_gaussian": far_report,
        }),
    )])
}

fn check_deficiency(ctx: &VerifyContext) -> Result<Vec<ResidualRecord>, CliError> {
    let verdict = deficiency_index_estimate(
        &ctx.resolved.weight,
        &ctx.resolved.constants,
        &ctx.config.deficiency_l_list,
        ctx.config.deficiency_nodes,
        ctx.config.kappa,
    )
    .map_err(|e| match e {
        // these come straight from config fields
        timeop_core::Error::BadParameter(_)
        | timeop_core::Error::InvalidNodeCount(_)
        | timeop_core::Error::InvalidHalfWidth(_) => CliError::Config(e.to_string()),
        other => check_failure(other),
    })?;
    let value = if verdict.is_zero_zero() { 0.0 } else { 1.0 };
    Ok(vec![ResidualRecord::new(
        "deficiency_indices",
        value,
        0.0,
        serde_json::to_value(&verdict).expect("verdict serializes"),
    )])
}

fn check_spectrum(ctx: &VerifyContext) -> Result<Vec<ResidualRecord>, CliError> {
    let record = energy_spectrum(&ctx.resolved.grid);
    let half_width = ctx.config.half_width;
    let mut value = (record.range.0 + half_width)
        .abs()
        .max((record.range.1 - half_width).abs());
    if record.eigenvalues.len() != ctx.resolved.grid.len() {
        value += 1.0;
    }
    Ok(vec![ResidualRecord::new(
        "spectrum_range",
        value,
        1e-14 * half_width.max(1.0),
        json!({
            "range": record.range,
            "eigenvalue_count": record.eigenvalues.len(),
            "diagonal": true,
        }),
    )])
}

fn check_matrix_hermiticity(ctx: &VerifyContext) -> Result<Vec<ResidualRecord>, CliError> {
    let matrix = build_tw_matrix(
        &ctx.resolved.weight,
        &ctx.resolved.grid,
        &ctx.resolved.constants,
        ctx.resolved.order,
        ctx.resolved.construction,
    )
    .map_err(|e| match e {
        timeop_core::Error::DenseCapExceeded { .. } => CliError::Config(e.to_string()),
        other => check_failure(other),
    })?;
    let record = matrix_hermiticity_check(
        &matrix,
        ctx.config
            .tolerances
            .matrix_hermiticity(ctx.is_conjugated()),
    )
    .map_err(check_failure)?;
    Ok(vec![record])
}

fn check_propagator(ctx: &VerifyContext) -> Result<Vec<ResidualRecord>, CliError> {
    let psi = ctx.bump(0.25)?;
    let weight = &ctx.resolved.weight;
    let constants = &ctx.resolved.constants;
    let sigma = ctx.config.sigma;

    let unitarity = propagator_unitarity_residual(
        &psi,
        sigma,
        weight,
        constants,
        ctx.config.tolerances.propagator_unitarity,
    )
    .map_err(check_failure)?;

    let group = group_property_residual(
        &psi,
        sigma,
        -sigma,
        weight,
        constants,
        ctx.config.tolerances.propagator_group_law,
    )
    .map_err(check_failure)?;

    // Generator consistency: the sigma-difference quotient converges to the
    // operator at first order; measure between the configured grid and its
    // h-halving.
    let mut residuals = Vec::new();
    for nodes in [ctx.resolved.grid.len(), 2 * ctx.resolved.grid.len() - 1] {
        let grid = Grid::new(ctx.config.half_width, nodes).map_err(check_failure)?;
        let psi = TestFunction::SmoothBump {
            radius: 0.25 * ctx.config.half_width,
        }
        .sample(&grid)
        .map_err(check_failure)?;
        residuals.push(
            generator_consistency_residual(
                &psi,
                weight,
                constants,
                ctx.resolved.order,
                ctx.resolved.construction,
            )
            .map_err(check_failure)?,
        );
    }
    let measured_order = (residuals[0] / residuals[1]).log2();
    let generator = ResidualRecord::new(
        "propagator_generator_order",
        (measured_order - 1.0).abs(),
        ctx.config.tolerances.generator_order_window,
        json!({
            "measured_order": measured_order,
            "residuals": residuals,
            "weight": weight.id(),
        }),
    );

    Ok(vec![unitarity, group, generator])
}

pub fn cmd_verify(config: &RunConfig, force: bool) -> Result<i32, CliError> {
    let resolved = Resolved::from_config(config)?;
    let enabled = |name: &str| -> bool {
        let included = config
            .checks
            .as_ref()
            .map(|list| list.iter().any(|c| c == name))
            .unwrap_or(true);
        included && !config.skip.iter().any(|c| c == name)
    };
    for name in config.checks.iter().flatten().chain(config.skip.iter()) {
        if !CHECK_NAMES.contains(&name.as_str()) {
            return Err(CliError::Config(format!(
                "unknown check '{name}'; known checks: {}",
                CHECK_NAMES.join(", ")
            )));
        }
    }

    let validation = validate_weight(&resolved.weight, &resolved.grid, &config.validation);
    let mut records = vec![ResidualRecord::new(
        "weight_validation",
        if validation.all_ok() { 0.0 } else { 1.0 },
        0.0,
        serde_json::to_value(&validation).expect("validation serializes"),
    )];
    if !validation.all_ok() && !force {
        let report = VerificationReport::new(run_meta(), config.to_json_value(), records);
        write_reports(config, &report)?;
        print!("{}", report.to_table());
        eprintln!(
            "weight '{}' fails validation; rerun with --force to run the suite anyway",
            resolved.weight.id()
        );
        return Ok(1);
    }

    let ctx = VerifyContext {
        config,
        resolved: &resolved,
    };
    type Check = fn(&VerifyContext) -> Result<Vec<ResidualRecord>, CliError>;
    let suite: &[(&str, Check)] = &[
        ("boundary", check_boundary),
        ("commutation", check_commutation),
        ("deficiency", check_deficiency),
        ("domain", check_domain),
        ("flat_reduction", check_flat_reduction),
        ("hermiticity", check_hermiticity),
        ("matrix_hermiticity", check_matrix_hermiticity),
        ("propagator", check_propagator),
        ("spectrum", check_spectrum),
        ("unitary_equivalence", check_unitary_equivalence),
    ];
    if config.checks.is_some() || !config.skip.is_empty() {
        // Restricted runs report exactly the requested records.
        records.clear();
    }
    for (name, runner) in suite {
        if enabled(name) {
            records.extend(runner(&ctx)?);
        }
    }

    let report = VerificationReport::new(run_meta(), config.to_json_value(), records);
    write_reports(config, &report)?;
    print!("{}", report.to_table());
    Ok(if report.all_passed { 0 } else { 1 })
}

fn write_reports(config: &RunConfig, report: &VerificationReport) -> Result<(), CliError> {
    write_file(&config.output_dir.join("report.json"), &report.to_json())?;
    write_file(&config.output_dir.join("report.txt"), &report.to_table())
}

pub fn cmd_propagate(
    config: &RunConfig,
    input_csv: Option<&Path>,
    interpolate: bool,
) -> Result<i32, CliError> {
    let resolved = Resolved::from_config(config)?;
    let psi = match input_csv {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))?;
            let psi = io::wavefunction_from_csv(&text)
                .map_err(|e| CliError::Config(format!("input wavefunction: {e}")))?;
            if psi.grid() != &resolved.grid {
                return Err(CliError::Config(format!(
                    "input wavefunction grid (L = {}, N = {}) does not match the configured grid",
                    psi.grid().half_width(),
                    psi.grid().len()
                )));
            }
            psi
        }
        None => build_wavefunction(&config.wavefunction, &resolved.grid)?,
    };

    let interpolation = if interpolate {
        ShiftInterpolation::Cubic
    } else {
        ShiftInterpolation::None
    };
    let shifted = propagate_with(
        &psi,
        config.sigma,
        &resolved.weight,
        &resolved.constants,
        interpolation,
    )
    .map_err(check_failure)?;

    write_file(
        &config.output_dir.join("before.csv"),
        &io::wavefunction_to_csv(&psi),
    )?;
    write_file(
        &config.output_dir.join("after.csv"),
        &io::wavefunction_to_csv(&shifted),
    )?;

    let mut records = vec![propagator_unitarity_residual(
        &psi,
        config.sigma,
        &resolved.weight,
        &resolved.constants,
        if interpolate && config.sigma != 0.0 {
            1e-6 // interpolated shifts carry a degraded tolerance
        } else {
            config.tolerances.propagator_unitarity
        },
    )
    .map_err(check_failure)?];
    if !interpolate {
        records.push(
            group_property_residual(
                &psi,
                config.sigma,
                -config.sigma,
                &resolved.weight,
                &resolved.constants,
                config.tolerances.propagator_group_law,
            )
            .map_err(check_failure)?,
        );
    }
    let report = VerificationReport::new(run_meta(), config.to_json_value(), records);
    write_file(
        &config.output_dir.join("propagation.json"),
        &report.to_json(),
    )?;
    print!("{}", report.to_table());
    Ok(if report.all_passed { 0 } else { 1 })
}

pub fn cmd_export_matrix(config: &RunConfig) -> Result<i32, CliError> {
    let resolved = Resolved::from_config(config)?;
    let matrix = build_tw_matrix(
        &resolved.weight,
        &resolved.grid,
        &resolved.constants,
        resolved.order,
        resolved.construction,
    )
    .map_err(|e| match e {
        timeop_core::Error::DenseCapExceeded { .. } => CliError::Config(e.to_string()),
        other => check_failure(other),
    })?;
    write_file(
        &config.output_dir.join("matrix.csv"),
        &io::matrix_to_csv(&matrix),
    )?;
    write_file(
        &config.output_dir.join("matrix.meta.json"),
        &serde_json::to_string_pretty(&io::matrix_metadata(&matrix)).expect("metadata serializes"),
    )?;
    println!(
        "exported {}x{} matrix ({} nonzero entries) to {}",
        matrix.dim(),
        matrix.dim(),
        matrix.nonzero_entries().count(),
        config.output_dir.display()
    );
    Ok(0)
}
