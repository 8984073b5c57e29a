//! One function per verb, all returning the library error type so the exit
//! code mapping lives in `main`.

use std::fs;
use std::path::Path;

use ndarray::Array1;
use serde::Serialize;
use serde_json::value::RawValue;

use sofup_core::io::{self, raw_f64, raw_matrix};
use sofup_core::mdrp::{self, EstimateOptions};
use sofup_core::perturb::{self, PerturbationCoords};
use sofup_core::region::StabilityRegion;
use sofup_core::scan::{self, GridSpec};
use sofup_core::sim;
use sofup_core::statespace::{self, closed_loop, GainMatrix, Perturbation, Provenance};
use sofup_core::streams;
use sofup_core::update::{self, CancellationBasis};
use sofup_core::{Error, Result};

use crate::args::Command;
use crate::emit::{num, sha256_hex, write_json, Csv, Meta};

/// Runs one parsed command to completion.
pub fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Validate { model } => validate(&model),
        Command::Update { model, beta, out } => update_cmd(&model, beta, &out),
        Command::Mdrp { model, tol, seed, starts, out } => {
            mdrp_cmd(&model, tol, seed, starts, out.as_deref())
        }
        Command::Synth { model, rho, tau, theta, seed, out } => {
            synth(&model, rho, tau, theta, seed, &out)
        }
        Command::Region { beta, rho, grid, out, csv } => {
            region(beta, rho, grid, out.as_deref(), csv.as_deref())
        }
        Command::Scan { model, rho, beta, grid, seed, out } => {
            scan_cmd(&model, rho, beta, grid, seed, &out)
        }
        Command::Sim { model, gain, delta, x0, t_end, dt, out } => {
            sim_cmd(&model, &gain, delta.as_deref(), &x0, t_end, dt, &out)
        }
    }
}

/// Reads a model file once, returning the parsed bundle and the digest of
/// the exact bytes read.
fn load_model(path: &Path) -> Result<(io::ModelBundle, String)> {
    let bytes = fs::read(path)?;
    let bundle = io::load_model_bytes(&bytes)?;
    Ok((bundle, sha256_hex(&bytes)))
}

#[derive(Serialize)]
struct ValidateOut {
    meta: Meta,
    n: usize,
    m: usize,
    p: usize,
    rank_b: usize,
    rank_c: usize,
    sigma_min_b: Box<RawValue>,
    sigma_min_c: Box<RawValue>,
    tol_b: Box<RawValue>,
    tol_c: Box<RawValue>,
    b_full_column_rank: bool,
    c_full_row_rank: bool,
    passes: bool,
}

fn validate(model_path: &Path) -> Result<()> {
    let (bundle, digest) = load_model(model_path)?;
    // Errors out (naming the offending matrix) when a rank assumption fails.
    let report = statespace::validate(&bundle.model, None)?;
    let out = ValidateOut {
        meta: Meta::new(None, digest),
        n: bundle.model.n(),
        m: bundle.model.m(),
        p: bundle.model.p(),
        rank_b: report.rank_b,
        rank_c: report.rank_c,
        sigma_min_b: raw_f64(report.sigma_min_b),
        sigma_min_c: raw_f64(report.sigma_min_c),
        tol_b: raw_f64(report.tol_b),
        tol_c: raw_f64(report.tol_c),
        b_full_column_rank: report.b_full_column_rank,
        c_full_row_rank: report.c_full_row_rank,
        passes: report.passes(),
    };
    write_json(&out, None)
}

#[derive(Serialize)]
struct UpdateOut {
    meta: Meta,
    #[serde(rename = "G_star")]
    g_star: Vec<Vec<Box<RawValue>>>,
    #[serde(rename = "F_updated")]
    f_updated: Vec<Vec<Box<RawValue>>>,
    #[serde(rename = "J_star")]
    j_star: Box<RawValue>,
    alpha_closed: Box<RawValue>,
    certified: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    beta: Option<Box<RawValue>>,
}

fn update_cmd(model_path: &Path, beta: Option<f64>, out: &Path) -> Result<()> {
    let (bundle, digest) = load_model(model_path)?;
    let pert = bundle.perturbation()?.ok_or_else(|| {
        Error::Schema("the update verb needs a \"Delta\" entry in the model file".into())
    })?;
    let f_nominal = bundle.f_nominal_or_zero()?;
    let result = update::apply_update(&bundle.model, &f_nominal, &pert, beta)?;
    let payload = UpdateOut {
        meta: Meta::new(None, digest),
        g_star: raw_matrix(&result.g_star.view()),
        f_updated: raw_matrix(&result.f_updated.matrix().view()),
        j_star: raw_f64(result.j_star),
        alpha_closed: raw_f64(result.alpha_closed),
        certified: result.certified,
        beta: beta.map(raw_f64),
    };
    write_json(&payload, Some(out))
}

#[derive(Serialize)]
struct MdrpOut {
    meta: Meta,
    beta: Box<RawValue>,
    upper: Box<RawValue>,
    method: String,
    iterations: usize,
    inner_starts: usize,
    tol: Box<RawValue>,
}

fn mdrp_cmd(
    model_path: &Path,
    tol: Option<f64>,
    seed: u64,
    starts: usize,
    out: Option<&Path>,
) -> Result<()> {
    let (bundle, digest) = load_model(model_path)?;
    let f_nominal = bundle.f_nominal_or_zero()?;
    let loop_matrix = closed_loop(&bundle.model, &f_nominal, None)?;
    let options = EstimateOptions { tol, seed, inner_starts: starts, ..Default::default() };
    let estimate = mdrp::estimate_auto(&loop_matrix.view(), &options)?;
    let payload = MdrpOut {
        meta: Meta::new(Some(seed), digest),
        beta: raw_f64(estimate.beta),
        upper: raw_f64(estimate.upper),
        method: estimate.method.to_string(),
        iterations: estimate.iterations,
        inner_starts: estimate.inner_starts,
        tol: raw_f64(estimate.tol),
    };
    write_json(&payload, out)
}

#[derive(Serialize)]
struct SynthOut {
    meta: Meta,
    rho: Box<RawValue>,
    tau: Box<RawValue>,
    theta: Box<RawValue>,
    fro_norm: Box<RawValue>,
    #[serde(rename = "Delta")]
    delta: Vec<Vec<Box<RawValue>>>,
}

fn synth(model_path: &Path, rho: f64, tau: f64, theta: f64, seed: u64, out: &Path) -> Result<()> {
    let (bundle, digest) = load_model(model_path)?;
    let basis = CancellationBasis::new(&bundle.model.b().view(), &bundle.model.c().view())?;
    let mut rng_c = streams::substream(seed, &[0]);
    let phi_c = streams::unit_vector(&mut rng_c, basis.cancellable_dim());
    let phi_s = if basis.residual_dim() == 0 {
        Array1::zeros(0)
    } else {
        let mut rng_s = streams::substream(seed, &[1]);
        streams::unit_vector(&mut rng_s, basis.residual_dim())
    };
    let coords = PerturbationCoords::new(rho, tau, theta, phi_c, phi_s)?;
    let pert = perturb::synthesize(&basis, &coords)?;
    let payload = SynthOut {
        meta: Meta::new(Some(seed), digest),
        rho: raw_f64(rho),
        tau: raw_f64(tau),
        theta: raw_f64(theta),
        fro_norm: raw_f64(pert.fro_norm()),
        delta: raw_matrix(&pert.delta().view()),
    };
    write_json(&payload, Some(out))
}

#[derive(Serialize)]
struct RegionOut {
    meta: Meta,
    beta: Box<RawValue>,
    rho: Box<RawValue>,
    kappa: Box<RawValue>,
    xi_percent: Box<RawValue>,
    full_square: bool,
    boundary: Vec<[Box<RawValue>; 2]>,
}

fn region(
    beta: f64,
    rho: f64,
    grid: usize,
    out: Option<&Path>,
    csv: Option<&Path>,
) -> Result<()> {
    // No input file here: the digest identifies the defining arguments.
    let canonical = format!("region --beta {} --rho {} --grid {}", num(beta), num(rho), grid);
    let meta = Meta::new(None, sha256_hex(canonical.as_bytes()));
    let reg = StabilityRegion::new(beta, rho)?;
    let boundary = reg.boundary(grid)?;
    let xi = reg.xi()?;
    let payload = RegionOut {
        meta,
        beta: raw_f64(beta),
        rho: raw_f64(rho),
        kappa: raw_f64(reg.kappa()),
        xi_percent: raw_f64(100.0 * xi),
        full_square: reg.is_full_square(),
        boundary: boundary.iter().map(|&(t, z)| [raw_f64(t), raw_f64(z)]).collect(),
    };
    if let Some(csv_path) = csv {
        let mut table = Csv::new();
        table.meta_comments(&payload.meta);
        table.comment("beta", num(beta));
        table.comment("rho", num(rho));
        table.comment("kappa", num(reg.kappa()));
        table.row(["tau", "zeta"]);
        for &(t, z) in &boundary {
            table.row([num(t), num(z)]);
        }
        table.write(csv_path)?;
    }
    write_json(&payload, out)
}

fn scan_cmd(
    model_path: &Path,
    rho: f64,
    beta: f64,
    grid: (usize, usize),
    seed: u64,
    out: &Path,
) -> Result<()> {
    let (bundle, digest) = load_model(model_path)?;
    let f_nominal = bundle.f_nominal_or_zero()?;
    let spec = GridSpec { n_tau: grid.0, n_theta: grid.1 };
    let result = scan::scan(&bundle.model, &f_nominal, rho, beta, spec, seed)?;
    let meta = Meta::new(Some(seed), digest);
    let mut table = Csv::new();
    table.meta_comments(&meta);
    table.comment("rho", num(rho));
    table.comment("beta", num(beta));
    table.comment("grid", format!("{}x{}", grid.0, grid.1));
    table.row(["tau", "theta", "J_closed", "J_residual", "alpha_closed", "guaranteed", "exact_stable"]);
    for cell in &result.cells {
        table.row([
            num(cell.tau),
            num(cell.theta),
            num(cell.j_closed),
            num(cell.j_residual),
            num(cell.alpha_closed),
            cell.guaranteed.to_string(),
            cell.exact_stable.to_string(),
        ]);
    }
    table.write(out)
}

fn sim_cmd(
    model_path: &Path,
    gain_path: &Path,
    delta_path: Option<&Path>,
    x0_path: &Path,
    t_end: f64,
    dt: f64,
    out: &Path,
) -> Result<()> {
    let (bundle, digest) = load_model(model_path)?;
    let gain_matrix = io::parse_gain_bytes(&fs::read(gain_path)?)?;
    let gain = GainMatrix::new(gain_matrix, Provenance::External)?;
    let pert = match delta_path {
        Some(path) => {
            let (delta, rho) = io::parse_delta_bytes(&fs::read(path)?)?;
            let rho = rho.unwrap_or_else(|| sofup_core::linalg::fro_norm(&delta.view()));
            Some(Perturbation::new(delta, rho)?)
        }
        None => None,
    };
    let x0 = io::parse_state_bytes(&fs::read(x0_path)?)?;
    let traj = sim::simulate(&bundle.model, &gain, pert.as_ref(), &x0.view(), t_end, dt)?;

    let meta = Meta::new(None, digest);
    let mut table = Csv::new();
    table.meta_comments(&meta);
    table.comment("dt", num(traj.dt));
    table.comment("t_end", num(t_end));
    let n = bundle.model.n();
    let m = bundle.model.m();
    let mut header = vec!["t".to_string()];
    header.extend((1..=n).map(|i| format!("x{i}")));
    header.extend((1..=m).map(|i| format!("u{i}")));
    table.row(header);
    for (k, &t) in traj.times.iter().enumerate() {
        let mut row = vec![num(t)];
        row.extend(traj.states.row(k).iter().map(|&v| num(v)));
        row.extend(traj.inputs.row(k).iter().map(|&v| num(v)));
        table.row(row);
    }
    table.write(out)
}
