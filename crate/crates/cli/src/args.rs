//! Command-line surface: one subcommand per library pipeline.

use std::path::PathBuf;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "sofup",
    version,
    about = "Static output feedback gain updates under known perturbations, \
             with stability certificates and guaranteed-region analysis"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Check the standing rank assumptions on B and C and report the details
    Validate {
        /// Model JSON file carrying A, B, C (optionally F_nominal, Delta, rho)
        #[arg(long)]
        model: PathBuf,
    },

    /// Compute the corrective gain update for the Delta in the model file
    Update {
        /// Model JSON file; must carry Delta
        #[arg(long)]
        model: PathBuf,
        /// Certificate level: a lower estimate of the nominal closed loop's
        /// distance to instability. Without it no certificate is issued.
        #[arg(long, allow_negative_numbers = true)]
        beta: Option<f64>,
        /// Result JSON file
        #[arg(long)]
        out: PathBuf,
    },

    /// Estimate the distance to instability of the nominal closed loop
    Mdrp {
        /// Model JSON file
        #[arg(long)]
        model: PathBuf,
        /// Absolute bisection tolerance; defaults to 1e-3 of the upper bound
        #[arg(long, allow_negative_numbers = true)]
        tol: Option<f64>,
        /// Seed for the randomized inner searches
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Random inner starts per bisection trial
        #[arg(long, default_value_t = 20)]
        starts: usize,
        /// Result JSON file (stdout if omitted)
        #[arg(long)]
        out: Option<PathBuf>,
    },

    /// Synthesize a perturbation with prescribed size and alignment coordinates
    Synth {
        /// Model JSON file (provides the B, C geometry)
        #[arg(long)]
        model: PathBuf,
        /// Norm budget (the perturbation gets norm rho*sin(pi*tau/2))
        #[arg(long, allow_negative_numbers = true)]
        rho: f64,
        /// Size coordinate in (0, 1]
        #[arg(long, allow_negative_numbers = true)]
        tau: f64,
        /// Alignment coordinate in [0, 1]: 0 fully cancellable, 1 fully residual
        #[arg(long, allow_negative_numbers = true)]
        theta: f64,
        /// Seed for the random direction vectors
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Perturbation JSON file to write
        #[arg(long)]
        out: PathBuf,
    },

    /// Describe the guaranteed stability region for a certificate level and budget
    Region {
        /// Certificate level (lower estimate of the distance to instability)
        #[arg(long, allow_negative_numbers = true)]
        beta: f64,
        /// Perturbation norm budget
        #[arg(long, allow_negative_numbers = true)]
        rho: f64,
        /// Number of boundary sample points
        #[arg(long, default_value_t = 101)]
        grid: usize,
        /// Result JSON file (stdout if omitted)
        #[arg(long)]
        out: Option<PathBuf>,
        /// Optional CSV boundary table
        #[arg(long)]
        csv: Option<PathBuf>,
    },

    /// Scan the coordinate grid: certificate vs exact stability per cell
    Scan {
        /// Model JSON file
        #[arg(long)]
        model: PathBuf,
        /// Perturbation norm budget
        #[arg(long, allow_negative_numbers = true)]
        rho: f64,
        /// Certificate level
        #[arg(long, allow_negative_numbers = true)]
        beta: f64,
        /// Grid as TAUxTHETA cell counts, e.g. 41x41
        #[arg(long, default_value = "41x41", value_parser = parse_grid)]
        grid: (usize, usize),
        /// Seed for the per-cell direction draws
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// CSV file to write
        #[arg(long)]
        out: PathBuf,
    },

    /// Integrate the closed loop and record states and inputs
    Sim {
        /// Model JSON file
        #[arg(long)]
        model: PathBuf,
        /// Gain JSON file: bare matrix or an update result file
        #[arg(long)]
        gain: PathBuf,
        /// Optional perturbation JSON file: bare matrix or a synth result file
        #[arg(long)]
        delta: Option<PathBuf>,
        /// Initial state JSON file: bare vector or {"x0": [...]}
        #[arg(long)]
        x0: PathBuf,
        /// Final time
        #[arg(long = "t", allow_negative_numbers = true)]
        t_end: f64,
        /// Fixed integration step
        #[arg(long, allow_negative_numbers = true)]
        dt: f64,
        /// Trajectory CSV file to write
        #[arg(long)]
        out: PathBuf,
    },
}

/// Parses a `COLSxROWS`-style grid spec like `41x41`.
fn parse_grid(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("grid must look like 41x41, got {s:?}"))?;
    let n_tau: usize = a.trim().parse().map_err(|_| format!("bad grid size {a:?}"))?;
    let n_theta: usize = b.trim().parse().map_err(|_| format!("bad grid size {b:?}"))?;
    if n_tau == 0 || n_theta == 0 {
        return Err("grid sizes must be positive".into());
    }
    Ok((n_tau, n_theta))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_parser_accepts_both_separators() {
        assert_eq!(parse_grid("41x41").unwrap(), (41, 41));
        assert_eq!(parse_grid("7X3").unwrap(), (7, 3));
        assert!(parse_grid("41").is_err());
        assert!(parse_grid("0x3").is_err());
        assert!(parse_grid("ax3").is_err());
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
