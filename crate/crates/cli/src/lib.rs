//! Orchestration behind the `ddstab` binary: verdicts, reports and the
//! files each subcommand writes.

use std::fs;
use std::path::{Path, PathBuf};

use ddstab::charfun;
use ddstab::hs_radius::{self, DelayChoice, HsEstimate, SamplingReport};
use ddstab::io;
use ddstab::linalg::{self, CMat};
use ddstab::simulator::{self, InitialCondition};
use ddstab::spectrum::{self, SpectrumResult, StripQuery, WindowTag};
use ddstab::{MatrixNbv, MatrixNorm, Perturbation};
use num_complex::Complex64;
use serde::Serialize;
use sha2::{Digest, Sha256};

/// Exit code for malformed input.
pub const EXIT_INPUT: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Analysis(ddstab::Error),
    #[error("{0}")]
    Refused(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) | CliError::Io { .. } => EXIT_INPUT,
            CliError::Refused(_) => 1,
            CliError::Analysis(_) => 2,
        }
    }
}

impl From<ddstab::Error> for CliError {
    fn from(e: ddstab::Error) -> Self {
        match e {
            ddstab::Error::InvalidSystem(_)
            | ddstab::Error::InvalidPerturbation(_)
            | ddstab::Error::DimensionMismatch { .. }
            | ddstab::Error::InvalidArgument(_) => CliError::Input(e.to_string()),
            ddstab::Error::HypothesisNotMet { .. } => CliError::Refused(e.to_string()),
            other => CliError::Analysis(other),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Classification {
    CertifiedStronglyStable,
    LikelyStronglyStable,
    Fragile,
    Unstable,
    Indeterminate,
}

impl Classification {
    pub fn as_str(self) -> &'static str {
        match self {
            Classification::CertifiedStronglyStable => "certified-strongly-stable",
            Classification::LikelyStronglyStable => "likely-strongly-stable",
            Classification::Fragile => "fragile",
            Classification::Unstable => "unstable",
            Classification::Indeterminate => "indeterminate",
        }
    }

    pub fn exit_code(self) -> i32 {
        match self {
            Classification::CertifiedStronglyStable => 0,
            Classification::Fragile | Classification::Unstable => 1,
            Classification::LikelyStronglyStable | Classification::Indeterminate => 2,
        }
    }
}

/// Decision table, first match wins:
///
/// | condition                                         | class         |
/// |---------------------------------------------------|---------------|
/// | `lo > 0`                                          | unstable      |
/// | `rho_upper < 1`                                   | certified     |
/// | `hi < 0`, `rho_lower >= 1`                        | fragile       |
/// | `hi < 0`, `rho_lower < 1`, sampled max `< 0`      | likely        |
/// | otherwise                                         | indeterminate |
pub fn classify(
    bracket: (f64, f64),
    rho_lower: f64,
    rho_upper: f64,
    sampled_max: Option<f64>,
) -> Classification {
    let (lo, hi) = bracket;
    if lo > 0.0 {
        Classification::Unstable
    } else if rho_upper < 1.0 {
        Classification::CertifiedStronglyStable
    } else if hi < 0.0 && rho_lower >= 1.0 {
        Classification::Fragile
    } else if hi < 0.0 && sampled_max.is_some_and(|m| m < 0.0) {
        Classification::LikelyStronglyStable
    } else {
        Classification::Indeterminate
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Verdict {
    pub norm: MatrixNorm,
    pub var_tv: f64,
    pub det_i_minus_am: f64,
    pub rho_hs_lower: f64,
    pub rho_hs_upper: f64,
    pub abscissa: f64,
    pub abscissa_bracket: (f64, f64),
    pub window_tag: WindowTag,
    pub im_max: f64,
    pub certified_bound: f64,
    pub sampled_max_abscissa: Option<f64>,
    pub classification: Classification,
}

/// Knobs shared by the analysis subcommands.
#[derive(Debug, Clone)]
pub struct AnalyzeOptions {
    pub seed: u64,
    pub bins: Option<usize>,
    pub restarts: usize,
    pub im_max: Option<f64>,
    /// Perturbation size and count for the sampling run that separates
    /// likely-stable from indeterminate.
    pub sample_eps: f64,
    pub sample_trials: usize,
}

impl Default for AnalyzeOptions {
    fn default() -> Self {
        AnalyzeOptions {
            seed: 0,
            bins: None,
            restarts: hs_radius::DEFAULT_RESTARTS,
            im_max: None,
            sample_eps: 0.05,
            sample_trials: 16,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AnalyzeReport {
    pub verdict: Verdict,
    pub rho_lower: f64,
    pub rho_upper: f64,
    pub bins: usize,
    pub witness_phases: Vec<f64>,
    pub roots: Vec<Complex64>,
    pub trials: Vec<TrialRow>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrialRow {
    pub phi_digest: String,
    pub sup_distance: f64,
    pub abscissa: Option<f64>,
    pub error: Option<String>,
}

/// First 16 hex digits of the SHA-256 of the perturbation's JSON.
pub fn digest(p: &Perturbation) -> String {
    let h = Sha256::digest(io::perturbation_to_json(p).as_bytes());
    hex::encode(h)[..16].to_string()
}

fn trial_rows(r: &SamplingReport) -> Vec<TrialRow> {
    r.trials
        .iter()
        .map(|t| TrialRow {
            phi_digest: digest(&t.perturbation),
            sup_distance: t.sup_distance,
            abscissa: t.abscissa,
            error: t.error.clone(),
        })
        .collect()
}

pub fn load_system(path: &Path, norm: Option<MatrixNorm>) -> CliResult<MatrixNbv> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let m = io::parse_system(&text)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    Ok(match norm {
        Some(n) => m.with_norm(n),
        None => m,
    })
}

pub fn load_perturbation(path: &Path) -> CliResult<Perturbation> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    io::parse_perturbation(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn strip_for(m: &MatrixNbv, im_max: Option<f64>) -> StripQuery {
    let q = StripQuery::default_for(m);
    match im_max {
        Some(im) => q.with_im_max(im),
        None => q,
    }
}

fn estimate(m: &MatrixNbv, opts: &AnalyzeOptions) -> CliResult<HsEstimate> {
    let bins = opts.bins.unwrap_or(m.atoms().len() + hs_radius::DEFAULT_DENSITY_BINS);
    Ok(hs_radius::estimate_rho_hs(m, bins, opts.restarts, opts.seed)?)
}

/// Full analysis of one system.
pub fn analyze(m: &MatrixNbv, opts: &AnalyzeOptions) -> CliResult<(AnalyzeReport, SpectrumResult)> {
    let wp = m.check_wellposed();
    if !wp.is_ok() {
        return Err(CliError::Input(ddstab::Error::NotWellPosed { det: wp.det() }.to_string()));
    }
    let q = strip_for(m, opts.im_max);
    let spec = spectrum::spectral_abscissa(m, &q)?;
    let est = estimate(m, opts)?;
    let bracket = spec.abscissa_bracket;
    let needs_sampling =
        bracket.0 <= 0.0 && bracket.1 < 0.0 && est.upper >= 1.0 && est.lower < 1.0;
    let sampling = if needs_sampling && opts.sample_trials > 0 {
        Some(hs_radius::sample_strong_stability(
            m,
            opts.sample_eps,
            opts.sample_trials,
            opts.seed,
            opts.im_max,
        )?)
    } else {
        None
    };
    let sampled_max = sampling.as_ref().map(|s| s.max_abscissa);
    let verdict = Verdict {
        norm: m.norm(),
        var_tv: m.total_variation(),
        det_i_minus_am: wp.det(),
        rho_hs_lower: est.lower,
        rho_hs_upper: est.upper,
        abscissa: spec.abscissa(),
        abscissa_bracket: bracket,
        window_tag: spec.tag,
        im_max: q.im_max,
        certified_bound: spec.certified_bound,
        sampled_max_abscissa: sampled_max,
        classification: classify(bracket, est.lower, est.upper, sampled_max),
    };
    let report = AnalyzeReport {
        verdict,
        rho_lower: est.lower,
        rho_upper: est.upper,
        bins: est.bin_count,
        witness_phases: est.witness.phases.clone(),
        roots: spec.roots.clone(),
        trials: sampling.as_ref().map(trial_rows).unwrap_or_default(),
    };
    Ok((report, spec))
}

#[derive(Debug, Clone, Serialize)]
pub struct PerturbReport {
    pub phi_digest: String,
    pub sup_distance: f64,
    pub abscissa: f64,
    pub abscissa_bracket: (f64, f64),
    pub window_tag: WindowTag,
    pub certified_bound: f64,
    pub wellposed: bool,
}

/// Abscissa of `φ_*μ` for a single perturbation.
pub fn perturb_single(
    m: &MatrixNbv,
    phi: &Perturbation,
    im_max: Option<f64>,
) -> CliResult<(PerturbReport, SpectrumResult)> {
    let pushed = m.pushforward(phi);
    let wp = pushed.check_wellposed();
    if !wp.is_ok() {
        return Err(CliError::Analysis(ddstab::Error::NotWellPosed { det: wp.det() }));
    }
    let spec = spectrum::spectral_abscissa(&pushed, &strip_for(&pushed, im_max))?;
    let report = PerturbReport {
        phi_digest: digest(phi),
        sup_distance: phi.sup_distance_to_identity(),
        abscissa: spec.abscissa(),
        abscissa_bracket: spec.abscissa_bracket,
        window_tag: spec.tag,
        certified_bound: spec.certified_bound,
        wellposed: true,
    };
    Ok((report, spec))
}

#[derive(Debug, Clone, Serialize)]
pub struct RandomPerturbReport {
    pub eps: f64,
    pub rho_lower: f64,
    pub max_abscissa: f64,
    pub margin: f64,
    pub all_negative: Option<bool>,
    pub trials: Vec<TrialRow>,
}

pub fn perturb_random(
    m: &MatrixNbv,
    eps: f64,
    trials: usize,
    seed: u64,
    im_max: Option<f64>,
) -> CliResult<RandomPerturbReport> {
    let r = hs_radius::sample_strong_stability(m, eps, trials, seed, im_max)?;
    Ok(RandomPerturbReport {
        eps,
        rho_lower: r.rho_lower,
        max_abscissa: r.max_abscissa,
        margin: r.margin,
        all_negative: r.all_negative,
        trials: trial_rows(&r),
    })
}

pub fn trials_csv(rows: &[TrialRow]) -> String {
    let mut s = String::from("index,phi_digest,sup_distance,abscissa\n");
    for (i, r) in rows.iter().enumerate() {
        let a = r.abscissa.map_or("nan".to_string(), |a| format!("{a:.16e}"));
        s.push_str(&format!("{i},{},{:.16e},{a}\n", r.phi_digest, r.sup_distance));
    }
    s
}

#[derive(Debug, Clone, Serialize)]
pub struct DestabilizeReport {
    pub eps: f64,
    pub delta: f64,
    pub rho_hs_lower: f64,
    pub target: f64,
    pub achieved_abscissa: f64,
    pub achieved_root: Option<Complex64>,
    pub reached_target: bool,
    pub sup_distance: f64,
    pub phi_digest: String,
    pub diagnostics: hs_radius::DestabilizerDiagnostics,
}

/// Builds the destabilizing binning and checks the pushforward's abscissa
/// against `ln ρ_0 - delta`.
pub fn destabilize(
    m: &MatrixNbv,
    eps: f64,
    delta: f64,
    seed: u64,
) -> CliResult<(DestabilizeReport, Perturbation)> {
    let d = hs_radius::build_destabilizer(m, eps, delta, seed, DelayChoice::PhaseAligned)?;
    let phi = Perturbation::Binning(d.perturbation.clone());
    let pushed = m.pushforward(&phi);
    let q = StripQuery::default_for(&pushed).with_im_max(d.diagnostics.suggested_im_max);
    let spec = spectrum::spectral_abscissa(&pushed, &q)?;
    let target = d.diagnostics.rho_lower.ln() - delta;
    let achieved = spec.abscissa();
    let report = DestabilizeReport {
        eps,
        delta,
        rho_hs_lower: d.diagnostics.rho_lower,
        target,
        achieved_abscissa: achieved,
        achieved_root: spec.rightmost(),
        reached_target: achieved >= target,
        sup_distance: d.diagnostics.sup_distance,
        phi_digest: digest(&phi),
        diagnostics: d.diagnostics,
    };
    Ok((report, phi))
}

/// Parses `const[:v]`, `exp[:re,im]` or `file:path`.
pub fn parse_ic(spec: &str, m: &MatrixNbv, n: usize, im_max: Option<f64>) -> CliResult<InitialCondition> {
    let d = m.dim();
    let (kind, arg) = spec.split_once(':').unwrap_or((spec, ""));
    let bad = |msg: String| CliError::Input(format!("--ic {spec}: {msg}"));
    match kind {
        "const" => {
            let v = if arg.is_empty() {
                1.0
            } else {
                arg.parse::<f64>().map_err(|e| bad(e.to_string()))?
            };
            Ok(InitialCondition::Constant(vec![v; d]))
        }
        "exp" => {
            let s = if arg.is_empty() {
                let spec = spectrum::spectral_abscissa(m, &strip_for(m, im_max))?;
                spec.rightmost().ok_or_else(|| bad("system has no root in the window".into()))?
            } else {
                let (re, im) = arg.split_once(',').unwrap_or((arg, "0"));
                let re = re.trim().parse::<f64>().map_err(|e| bad(e.to_string()))?;
                let im = im.trim().parse::<f64>().map_err(|e| bad(e.to_string()))?;
                Complex64::new(re, im)
            };
            let l = charfun::eval_l(m, s);
            let v = linalg::null_vector(&(CMat::identity(d, d) - l));
            Ok(InitialCondition::Exponential { s, v: v.iter().copied().collect() })
        }
        "file" => {
            let text = fs::read_to_string(arg).map_err(|e| bad(e.to_string()))?;
            let rows = text
                .lines()
                .filter(|l| !l.trim().is_empty())
                .map(|l| {
                    l.split(',')
                        .map(|x| x.trim().parse::<f64>().map_err(|e| bad(format!("{l:?}: {e}"))))
                        .collect::<CliResult<Vec<f64>>>()
                })
                .collect::<CliResult<Vec<_>>>()?;
            if rows.len() != n + 1 {
                return Err(bad(format!("{} rows, grid needs {}", rows.len(), n + 1)));
            }
            Ok(InitialCondition::Samples(rows))
        }
        _ => Err(bad("expected const[:v], exp[:re,im] or file:path".into())),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulateReport {
    pub horizon: f64,
    pub n: usize,
    pub burn_in: f64,
    pub fitted_rate: f64,
    pub interpolated_delays: bool,
    pub abscissa_bracket: Option<(f64, f64)>,
}

pub fn simulate(
    m: &MatrixNbv,
    ic: &InitialCondition,
    horizon: f64,
    n: usize,
    burn_in: f64,
    im_max: Option<f64>,
) -> CliResult<(SimulateReport, simulator::Trajectory)> {
    if n < 64 {
        return Err(CliError::Input(format!("--n must be at least 64, got {n}")));
    }
    let phi0 = ic.sample(m.dim(), n)?;
    let phi0 = simulator::project_initial(m, &phi0)?;
    let traj = simulator::integrate(m, &phi0, horizon, n)?;
    let fitted = simulator::fit_decay_rate(&traj, burn_in)?;
    let bracket = spectrum::spectral_abscissa(m, &strip_for(m, im_max))
        .ok()
        .map(|s| s.abscissa_bracket);
    let report = SimulateReport {
        horizon: traj.horizon,
        n,
        burn_in,
        fitted_rate: fitted,
        interpolated_delays: traj.interpolated,
        abscissa_bracket: bracket,
    };
    Ok((report, traj))
}

/// Writes `contents` to `dir/name`, creating `dir` when needed.
pub fn write_output(dir: &Path, name: &str, contents: &str) -> CliResult<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| CliError::Io { path: dir.to_path_buf(), source: e })?;
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| CliError::Io { path: path.clone(), source: e })?;
    Ok(path)
}

pub fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("reports serialize");
    s.push('\n');
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decision_table() {
        use Classification::*;
        assert_eq!(classify((0.1, 0.2), 2.0, 2.0, None), Unstable);
        assert_eq!(classify((-0.7, -0.6), 0.5, 0.5, None), CertifiedStronglyStable);
        assert_eq!(classify((-0.6, -0.5), 1.2, 1.2, None), Fragile);
        assert_eq!(classify((-0.6, -0.5), 0.9, 1.2, Some(-0.3)), LikelyStronglyStable);
        assert_eq!(classify((-0.6, -0.5), 0.9, 1.2, Some(0.1)), Indeterminate);
        assert_eq!(classify((-0.6, -0.5), 0.9, 1.2, None), Indeterminate);
        assert_eq!(classify((-0.1, 0.1), 1.2, 1.2, None), Indeterminate);
    }

    #[test]
    fn exit_codes() {
        assert_eq!(Classification::CertifiedStronglyStable.exit_code(), 0);
        assert_eq!(Classification::Fragile.exit_code(), 1);
        assert_eq!(Classification::Unstable.exit_code(), 1);
        assert_eq!(Classification::LikelyStronglyStable.exit_code(), 2);
        assert_eq!(Classification::Indeterminate.exit_code(), 2);
    }

    #[test]
    fn digest_is_stable() {
        let p = Perturbation::identity();
        assert_eq!(digest(&p), digest(&p.clone()));
        assert_eq!(digest(&p).len(), 16);
    }

    #[test]
    fn ic_parsing() {
        let m = MatrixNbv::scalar_atoms(&[(1.0, 0.5)]).unwrap();
        assert_eq!(parse_ic("const", &m, 64, None).unwrap(), InitialCondition::Constant(vec![1.0]));
        assert_eq!(parse_ic("const:2.5", &m, 64, None).unwrap(), InitialCondition::Constant(vec![2.5]));
        assert!(matches!(parse_ic("exp", &m, 64, None).unwrap(), InitialCondition::Exponential { .. }));
        assert!(parse_ic("sine", &m, 64, None).is_err());
        assert!(parse_ic("const:x", &m, 64, None).is_err());
    }
}
