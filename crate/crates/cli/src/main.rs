use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use ddstab::{io, simulator, spectrum, MatrixNorm};
use ddstab_cli::{self as cli, AnalyzeOptions, CliError, CliResult};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum NormArg {
    Op2,
    Op1,
    Opinf,
}

impl From<NormArg> for MatrixNorm {
    fn from(n: NormArg) -> Self {
        match n {
            NormArg::Op2 => MatrixNorm::Op2,
            NormArg::Op1 => MatrixNorm::Op1,
            NormArg::Opinf => MatrixNorm::OpInf,
        }
    }
}

/// Stability analysis of x(t) = ∫ dM(θ) x(t+θ) under delay perturbations.
#[derive(Debug, Parser)]
#[command(name = "ddstab", version)]
struct Cli {
    /// Matrix norm for total variations (overrides the system file).
    #[arg(long, global = true, value_enum)]
    norm: Option<NormArg>,
    /// Seed for every randomized step.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Directory receiving reports and CSV files.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    /// Print the JSON report instead of the summary.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Verdict, roots and ρ_HS bounds for one system.
    Analyze {
        system: PathBuf,
        #[arg(long)]
        bins: Option<usize>,
        #[arg(long, default_value_t = 16)]
        restarts: usize,
        #[arg(long)]
        im_max: Option<f64>,
        /// Perturbation size of the sampling run used for likely-stable verdicts.
        #[arg(long, default_value_t = 0.05)]
        eps: f64,
        #[arg(long, default_value_t = 16)]
        trials: usize,
    },
    /// Abscissa of a perturbed system, or a random sampling run.
    Perturb {
        system: PathBuf,
        /// Perturbation file.
        #[arg(long, conflicts_with = "random")]
        phi: Option<PathBuf>,
        /// Sample random perturbations instead.
        #[arg(long)]
        random: bool,
        #[arg(long, default_value_t = 0.1)]
        eps: f64,
        #[arg(long, default_value_t = 50)]
        trials: usize,
        #[arg(long)]
        im_max: Option<f64>,
    },
    /// Build a destabilizing binning perturbation.
    Destabilize {
        system: PathBuf,
        #[arg(long)]
        eps: f64,
        #[arg(long)]
        delta: f64,
    },
    /// Integrate the system and fit the decay rate.
    Simulate {
        system: PathBuf,
        /// const[:v], exp[:re,im] or file:path.
        #[arg(long, default_value = "const")]
        ic: String,
        #[arg(long = "T", default_value_t = 60.0)]
        horizon: f64,
        #[arg(long, default_value_t = 512)]
        n: usize,
        #[arg(long, default_value_t = 0.5)]
        burn_in: f64,
        #[arg(long)]
        im_max: Option<f64>,
    },
    /// Dump the roots in a strip.
    Roots {
        system: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        re_min: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        re_max: Option<f64>,
        #[arg(long)]
        im_max: Option<f64>,
    },
}

fn fmt(x: f64) -> String {
    format!("{x:.10}")
}

fn run(args: Cli) -> CliResult<i32> {
    let norm = args.norm.map(MatrixNorm::from);
    let out = &args.out_dir;
    match args.command {
        Command::Analyze { system, bins, restarts, im_max, eps, trials } => {
            let m = cli::load_system(&system, norm)?;
            let opts = AnalyzeOptions {
                seed: args.seed,
                bins,
                restarts,
                im_max,
                sample_eps: eps,
                sample_trials: trials,
            };
            let (report, spec) = cli::analyze(&m, &opts)?;
            let json = cli::to_json(&report);
            cli::write_output(out, "verdict.json", &json)?;
            cli::write_output(out, "roots.csv", &spectrum::roots_csv(&m, &spec.roots))?;
            let v = &report.verdict;
            if args.json {
                print!("{json}");
            } else {
                println!("classification     {}", v.classification.as_str());
                println!("total variation    {} ({})", fmt(v.var_tv), v.norm.as_str());
                println!("rho_HS bounds      [{}, {}]", fmt(v.rho_hs_lower), fmt(v.rho_hs_upper));
                println!(
                    "spectral abscissa  {} in [{}, {}], |Im s| <= {}",
                    fmt(v.abscissa),
                    fmt(v.abscissa_bracket.0),
                    fmt(v.abscissa_bracket.1),
                    v.im_max
                );
                println!("growth bound       {}", fmt(v.certified_bound));
                if let Some(s) = v.sampled_max_abscissa {
                    println!("sampled max        {}", fmt(s));
                }
            }
            Ok(v.classification.exit_code())
        }
        Command::Perturb { system, phi, random, eps, trials, im_max } => {
            let m = cli::load_system(&system, norm)?;
            if random {
                let r = cli::perturb_random(&m, eps, trials, args.seed, im_max)?;
                let json = cli::to_json(&r);
                cli::write_output(out, "perturb.json", &json)?;
                cli::write_output(out, "trials.csv", &cli::trials_csv(&r.trials))?;
                if args.json {
                    print!("{json}");
                } else {
                    println!("trials             {}", r.trials.len());
                    println!("max abscissa       {}", fmt(r.max_abscissa));
                    println!("margin             {}", fmt(r.margin));
                }
                Ok(0)
            } else {
                let phi = match phi {
                    Some(p) => cli::load_perturbation(&p)?,
                    None => {
                        return Err(CliError::Input("perturb needs --phi FILE or --random".into()))
                    }
                };
                let (r, spec) = cli::perturb_single(&m, &phi, im_max)?;
                let json = cli::to_json(&r);
                cli::write_output(out, "perturb.json", &json)?;
                cli::write_output(out, "roots.csv", &spectrum::roots_csv(&m.pushforward(&phi), &spec.roots))?;
                if args.json {
                    print!("{json}");
                } else {
                    println!("|phi - id|         {}", fmt(r.sup_distance));
                    println!("abscissa           {}", fmt(r.abscissa));
                }
                Ok(0)
            }
        }
        Command::Destabilize { system, eps, delta } => {
            let m = cli::load_system(&system, norm)?;
            let (r, phi) = cli::destabilize(&m, eps, delta, args.seed)?;
            let json = cli::to_json(&r);
            cli::write_output(out, "destabilizer.json", &io::perturbation_to_json(&phi))?;
            cli::write_output(out, "destabilize_report.json", &json)?;
            if args.json {
                print!("{json}");
            } else {
                println!("|phi - id|         {}", fmt(r.sup_distance));
                println!("target             {}", fmt(r.target));
                println!("achieved abscissa  {}", fmt(r.achieved_abscissa));
            }
            Ok(if r.reached_target { 0 } else { 2 })
        }
        Command::Simulate { system, ic, horizon, n, burn_in, im_max } => {
            let m = cli::load_system(&system, norm)?;
            let ic = cli::parse_ic(&ic, &m, n, im_max)?;
            let (r, traj) = cli::simulate(&m, &ic, horizon, n, burn_in, im_max)?;
            cli::write_output(out, "trajectory.csv", &simulator::trajectory_csv(&traj))?;
            cli::write_output(out, "windows.csv", &simulator::window_csv(&traj))?;
            let json = cli::to_json(&r);
            cli::write_output(out, "simulate.json", &json)?;
            if args.json {
                print!("{json}");
            } else {
                if r.interpolated_delays {
                    eprintln!("warning: some delays are off the grid and were interpolated");
                }
                println!("fitted rate        {}", fmt(r.fitted_rate));
                if let Some((lo, hi)) = r.abscissa_bracket {
                    println!("abscissa bracket   [{}, {}]", fmt(lo), fmt(hi));
                }
            }
            Ok(0)
        }
        Command::Roots { system, re_min, re_max, im_max } => {
            let m = cli::load_system(&system, norm)?;
            let mut q = spectrum::StripQuery::default_for(&m);
            if let Some(v) = re_min {
                q.re_min = v;
            }
            if let Some(v) = re_max {
                q.re_max = v;
            }
            if let Some(v) = im_max {
                q.im_max = v;
            }
            let reduced = m.reduce_zero_atom()?;
            let bound = spectrum::certified_growth_bound(&reduced)?;
            let right = q.re_max.min(bound + 1e-3 * (1.0 + bound.abs()));
            let roots = if right > q.re_min {
                spectrum::find_roots(&reduced, spectrum::Rect::new(q.re_min, right, -q.im_max, q.im_max))?
            } else {
                Vec::new()
            };
            let csv = spectrum::roots_csv(&m, &roots);
            cli::write_output(out, "roots.csv", &csv)?;
            if args.json {
                println!("{}", serde_json::to_string_pretty(&roots).expect("roots serialize"));
            } else {
                print!("{csv}");
            }
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let args = Cli::parse();
    match run(args) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
