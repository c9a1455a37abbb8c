//! One table builder per subcommand. Every builder resolves its inputs as
//! CLI flag, then config-file key, then default, and walks its grid in a
//! fixed order so output is byte-reproducible.

use qubus_core::{
    alpha_for_target_fidelity, effective_pair_concurrence, entanglement_of_formation,
    eta_for_distance, hybrid_bell_outcomes, link_attempt_statistics, link_quantities,
    pattern_probabilities, qubit_bus_state, qubit_qubus_density, sample_pattern_statistics,
    usd_failure_bound_from_fidelity, usd_optimal_failure, BusDiscriminator, Classification,
    HybridBellKind, LinkParams, LinkScheme, MeasurementBranch,
};

use crate::config::{f64_of, range_of, str_of, u64_of, window_of, FileConfig};
use crate::table::Table;
use crate::{CliError, Fig2Args, Fig4Args, Fig6Args, LinkArgs, MonteArgs, SwapArgs};

/// The receiver operating points the three heralding curves are defined at.
const EVEN_LAMBDA: f64 = 0.7;
const ODD_LAMBDA: f64 = 0.01;
const USD_LAMBDA: f64 = 0.4;

pub fn fig2(args: &Fig2Args, file: &FileConfig) -> Result<Table, CliError> {
    let alphas = range_of(&args.alpha_range, file, "alpha_range", "15,450,200")?;
    let theta = f64_of(args.theta, file, "theta", 0.01)?;
    let distances = range_of(&args.distance_range, file, "distance_range", "5,20,4")?;
    let loss = f64_of(args.loss_db_per_km, file, "loss_db_per_km", 0.18)?;
    let lambda = f64_of(args.lambda, file, "lambda", USD_LAMBDA)?;
    let mut table = Table::new(vec!["alpha", "distance_km", "eof"]);
    for &d in &distances {
        for &a in &alphas {
            let params = LinkParams::new(a, theta, d, loss, lambda)?;
            let eof = entanglement_of_formation(&qubit_qubus_density(&params)?);
            table.push(vec![a.into(), d.into(), eof.into()]);
        }
    }
    Ok(table)
}

pub fn fig4(args: &Fig4Args, file: &FileConfig) -> Result<Table, CliError> {
    let fidelities = range_of(&args.fidelity_range, file, "fidelity_range", "0.505,1,100")?;
    let distances = range_of(&args.distance_range, file, "distance_range", "10,50,5")?;
    let loss = f64_of(args.loss_db_per_km, file, "loss_db_per_km", 0.18)?;
    let mut table = Table::new(vec!["F", "distance_km", "optimal_failure"]);
    for &d in &distances {
        let eta = eta_for_distance(d, loss);
        for &f in &fidelities {
            let failure = usd_failure_bound_from_fidelity(f, eta)?;
            table.push(vec![f.into(), d.into(), failure.into()]);
        }
    }
    Ok(table)
}

pub fn fig6(args: &Fig6Args, file: &FileConfig) -> Result<Table, CliError> {
    let fidelities = range_of(&args.fidelity_range, file, "fidelity_range", "0.505,1,100")?;
    let theta = f64_of(args.theta, file, "theta", 0.01)?;
    let distances = range_of(&args.distance_range, file, "distance_range", "10,50,5")?;
    let loss = f64_of(args.loss_db_per_km, file, "loss_db_per_km", 0.18)?;
    let mut table = Table::new(vec!["F", "distance_km", "scheme", "failure_probability"]);
    for &d in &distances {
        let eta = eta_for_distance(d, loss);
        for &f in &fidelities {
            let alpha = alpha_for_target_fidelity(f, theta, eta)?;
            for (scheme, lambda) in [
                ("even", EVEN_LAMBDA),
                ("odd", ODD_LAMBDA),
                ("usd", USD_LAMBDA),
            ] {
                let params = LinkParams::new(alpha, theta, d, loss, lambda)?;
                let budget = pattern_probabilities(&params);
                let failure = match scheme {
                    "even" => 1.0 - budget.p_even,
                    "odd" => 1.0 - budget.p_odd_ent,
                    _ => 1.0 - budget.p_total_usd,
                };
                table.push(vec![f.into(), d.into(), scheme.into(), failure.into()]);
            }
            let bound = usd_failure_bound_from_fidelity(f, eta)?;
            table.push(vec![f.into(), d.into(), "bound".into(), bound.into()]);
        }
    }
    Ok(table)
}

pub fn montecarlo(args: &MonteArgs, file: &FileConfig) -> Result<Table, CliError> {
    let alphas = range_of(&args.alpha_range, file, "alpha_range", "1.2")?;
    let theta = f64_of(args.theta, file, "theta", 0.8)?;
    let distances = range_of(&args.distance_range, file, "distance_range", "5")?;
    let loss = f64_of(args.loss_db_per_km, file, "loss_db_per_km", 0.18)?;
    let lambda = f64_of(args.lambda, file, "lambda", 0.45)?;
    let trials = u64_of(args.trials, file, "trials", 1_000_000)?;
    let seed = u64_of(args.seed, file, "seed", 7)?;
    let mut table = Table::new(vec![
        "alpha",
        "distance_km",
        "pattern",
        "classification",
        "count",
        "frequency",
        "analytic",
        "z_score",
    ]);
    for &d in &distances {
        for &a in &alphas {
            let params = LinkParams::new(a, theta, d, loss, lambda)?;
            for s in sample_pattern_statistics(&params, trials, seed)? {
                table.push(vec![
                    a.into(),
                    d.into(),
                    pattern_text(s.pattern.clicks).into(),
                    classification_text(s.classification).into(),
                    s.count.into(),
                    s.frequency.into(),
                    s.analytic.into(),
                    s.z_score.into(),
                ]);
            }
        }
    }
    Ok(table)
}

pub fn link(args: &LinkArgs, file: &FileConfig) -> Result<Table, CliError> {
    let alphas = range_of(&args.alpha_range, file, "alpha_range", "1.2")?;
    let theta = f64_of(args.theta, file, "theta", 0.8)?;
    let distances = range_of(&args.distance_range, file, "distance_range", "5")?;
    let loss = f64_of(args.loss_db_per_km, file, "loss_db_per_km", 0.18)?;
    let lambda = f64_of(args.lambda, file, "lambda", 0.45)?;
    let scheme_name = str_of(&args.scheme, file, "scheme", "even");
    let window = window_of(args.window, file)?;
    let scheme = link_scheme(&scheme_name, window)?;
    let mut table = Table::new(vec![
        "alpha",
        "theta",
        "distance_km",
        "eta",
        "lambda",
        "mu_b",
        "mu_e",
        "fidelity",
        "xi",
        "p_even",
        "p_odd_usd",
        "p_odd_ent",
        "p_total_usd",
        "usd_bound",
        "scheme",
        "success_probability",
        "expected_attempts",
        "scheme_fidelity",
    ]);
    for &d in &distances {
        for &a in &alphas {
            let params = LinkParams::new(a, theta, d, loss, lambda)?;
            let q = link_quantities(&params);
            let budget = pattern_probabilities(&params);
            let stats = link_attempt_statistics(&params, scheme)?;
            table.push(vec![
                a.into(),
                theta.into(),
                d.into(),
                params.eta().into(),
                lambda.into(),
                q.mu_b.into(),
                q.mu_e.into(),
                q.fidelity_f.into(),
                q.xi.into(),
                budget.p_even.into(),
                budget.p_odd_usd.into(),
                budget.p_odd_ent.into(),
                budget.p_total_usd.into(),
                usd_optimal_failure(&params).into(),
                scheme_name.clone().into(),
                stats.success_probability.into(),
                stats.expected_attempts.into(),
                stats.fidelity.into(),
            ]);
        }
    }
    Ok(table)
}

pub fn swap(args: &SwapArgs, file: &FileConfig) -> Result<Table, CliError> {
    let alphas = range_of(&args.alpha_range, file, "alpha_range", "1.2")?;
    let theta = f64_of(args.theta, file, "theta", 0.8)?;
    let distances = range_of(&args.distance_range, file, "distance_range", "5")?;
    let loss = f64_of(args.loss_db_per_km, file, "loss_db_per_km", 0.18)?;
    let lambda = f64_of(args.lambda, file, "lambda", 0.45)?;
    let scheme_name = str_of(&args.scheme, file, "scheme", "usd");
    let window = window_of(args.window, file)?;
    let discriminator = swap_discriminator(&scheme_name, window)?;
    let mut table = Table::new(vec![
        "alpha",
        "theta",
        "distance_km",
        "lambda",
        "scheme",
        "record",
        "probability",
        "success",
        "identified_pair",
        "concurrence",
    ]);
    for &d in &distances {
        for &a in &alphas {
            let params = LinkParams::new(a, theta, d, loss, lambda)?;
            let pair = qubit_bus_state(&params)?;
            // Two elementary links; the Bell measurement takes the first
            // link's field and the second link's qubit.
            let combined = pair.tensor(&pair);
            for branch in hybrid_bell_outcomes(&combined, 1, 0, &params, discriminator)? {
                let concurrence = match &branch.post_state {
                    Some(state) => effective_pair_concurrence(state)?,
                    None => 0.0,
                };
                table.push(vec![
                    a.into(),
                    theta.into(),
                    d.into(),
                    lambda.into(),
                    scheme_name.clone().into(),
                    record_text(&branch, discriminator).into(),
                    branch.probability.into(),
                    branch.success.into(),
                    pair_text(branch.identified_pair).into(),
                    concurrence.into(),
                ]);
            }
        }
    }
    Ok(table)
}

fn link_scheme(name: &str, window: Option<f64>) -> Result<LinkScheme, CliError> {
    match name {
        "even" => Ok(LinkScheme::Even),
        "odd-ent" => Ok(LinkScheme::OddEnt),
        "total-usd" => Ok(LinkScheme::TotalUsd),
        "homodyne" => Ok(LinkScheme::Homodyne {
            window_halfwidth: window,
        }),
        other => Err(CliError::Config(format!(
            "scheme {other:?} is not one of even, odd-ent, total-usd, homodyne"
        ))),
    }
}

fn swap_discriminator(name: &str, window: Option<f64>) -> Result<BusDiscriminator, CliError> {
    match name {
        "usd" => Ok(BusDiscriminator::UsdUnrotated {
            number_resolving: false,
        }),
        "usd-parity" => Ok(BusDiscriminator::UsdUnrotated {
            number_resolving: true,
        }),
        "homodyne" => Ok(BusDiscriminator::PHomodyne {
            window_halfwidth: window,
        }),
        other => Err(CliError::Config(format!(
            "scheme {other:?} is not one of usd, usd-parity, homodyne"
        ))),
    }
}

fn pattern_text(clicks: [bool; 3]) -> String {
    clicks.iter().map(|&c| if c { 'c' } else { 'n' }).collect()
}

fn classification_text(c: Classification) -> &'static str {
    match c {
        Classification::InconclusiveVacuum => "inconclusive-vacuum",
        Classification::IdentifiesRotatedPair => "identifies-rotated-pair",
        Classification::PartiallyConclusive => "partially-conclusive",
        Classification::IdentifiesPlusTheta => "identifies-plus-theta",
        Classification::IdentifiesMinusTheta => "identifies-minus-theta",
        Classification::IdentifiesUnrotated => "identifies-unrotated",
        Classification::Impossible => "impossible",
    }
}

/// Compact record: qubit outcome, then the discriminator record, e.g.
/// "0:ccn", "1:nnc+odd", "0:accept".
fn record_text(branch: &MeasurementBranch, discriminator: BusDiscriminator) -> String {
    let bits = &branch.classical_bits;
    match discriminator {
        BusDiscriminator::UsdUnrotated { .. } => {
            let mut text = format!("{}:", bits[0]);
            for &b in &bits[1..4] {
                text.push(if b == 1 { 'c' } else { 'n' });
            }
            if bits.len() == 5 {
                text.push_str(if bits[4] == 1 { "+odd" } else { "+even" });
            }
            text
        }
        BusDiscriminator::PHomodyne { .. } => {
            format!("{}:{}", bits[0], if bits[1] == 1 { "accept" } else { "reject" })
        }
    }
}

fn pair_text(kind: Option<HybridBellKind>) -> &'static str {
    match kind {
        None => "-",
        Some(HybridBellKind::ZeroUnrotatedPlus) => "zero-unrotated-plus",
        Some(HybridBellKind::ZeroUnrotatedMinus) => "zero-unrotated-minus",
        Some(HybridBellKind::ZeroRotatedPlus) => "zero-rotated-plus",
        Some(HybridBellKind::ZeroRotatedMinus) => "zero-rotated-minus",
    }
}
