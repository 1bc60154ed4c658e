//! Command drivers. Each returns the files it wrote and whether its checks passed.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use liescale::conditioning::trace_at_scale_witness;
use liescale::entropy::entropy_at_scale;
use liescale::measure::separation_rates;
use liescale::scales::{entropy_gap_to_trace_sum, select_scales, trace_profile, GapOptions};
use liescale::verify::{run_all, VerifyOptions};
use liescale::walks::{default_rate, ldp_check, theorem_harness, HarnessOptions};
use liescale::RngStream;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{kernel_at, Config};
use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Verify,
    Entropy,
    Trace,
    Select,
    Separation,
    Walk,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Verify => "verify",
            Command::Entropy => "entropy",
            Command::Trace => "trace",
            Command::Select => "select",
            Command::Separation => "separation",
            Command::Walk => "walk",
        }
    }

    /// Stream id under the config seed, so commands never share draws.
    fn stream(self) -> u64 {
        self as u64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub passed: bool,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    config_sha256: String,
    seed: u64,
    version: &'a str,
    wall_clock_seconds: f64,
    files: Vec<String>,
    passed: bool,
}

/// Doubles with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

struct Csv {
    text: String,
}

impl Csv {
    fn new(header: &[&str]) -> Self {
        Self { text: header.join(",") + "\n" }
    }

    fn row(&mut self, fields: &[String]) {
        self.text.push_str(&fields.join(","));
        self.text.push('\n');
    }
}

struct Writer<'a> {
    dir: &'a Path,
    files: Vec<PathBuf>,
}

impl Writer<'_> {
    fn put(&mut self, name: &str, contents: &str) -> Result<(), CliError> {
        let path = self.dir.join(name);
        fs::write(&path, contents).map_err(|source| CliError::Write { path: path.display().to_string(), source })?;
        self.files.push(path);
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).expect("reports serialize");
        text.push('\n');
        self.put(name, &text)
    }
}

pub fn config_hash(config: &Config) -> String {
    let digest = Sha256::digest(config.to_toml().as_bytes());
    digest.iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Runs `command` and writes its outputs plus `manifest.json` into `out`.
pub fn run(command: Command, config: &Config, out: &Path) -> Result<Outcome, CliError> {
    config.validate()?;
    fs::create_dir_all(out).map_err(|source| CliError::Write { path: out.display().to_string(), source })?;
    let start = Instant::now();
    let mut w = Writer { dir: out, files: Vec::new() };
    let rng = RngStream::new(config.seed, command.stream());
    let passed = match command {
        Command::Verify => verify(config, &mut w)?,
        Command::Entropy => entropy(config, &rng, &mut w)?,
        Command::Trace => trace(config, &rng, &mut w)?,
        Command::Select => select(config, &rng, &mut w)?,
        Command::Separation => separation(config, &mut w)?,
        Command::Walk => walk(config, &rng, &mut w)?,
    };
    let names: Vec<String> = w.files.iter().filter_map(|p| p.file_name()).map(|n| n.to_string_lossy().into_owned()).collect();
    let manifest = Manifest {
        command: command.name(),
        config_sha256: config_hash(config),
        seed: config.seed,
        version: env!("CARGO_PKG_VERSION"),
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        files: names,
        passed,
    };
    w.json("manifest.json", &manifest)?;
    Ok(Outcome { files: w.files, passed })
}

fn verify(config: &Config, w: &mut Writer) -> Result<bool, CliError> {
    let model = config.model()?;
    let opts = VerifyOptions {
        seed: config.seed,
        n_samples: config.mc.n_samples,
        sigma: config.verify.sigma,
        cubic_constant: config.verify.cubic_constant,
        max_entropy_constant: config.verify.max_entropy_constant,
        kernel: Some((model, config.kernel.a, config.kernel.scales[0])),
    };
    let report = run_all(&opts).map_err(CliError::module("verify"))?;
    w.json("verify.json", &report)?;
    Ok(report.all_passed)
}

/// `entropy.csv`: `r, h_a, std_error, bias_budget, n_samples` per kernel scale.
fn entropy(config: &Config, rng: &RngStream, w: &mut Writer) -> Result<bool, CliError> {
    let mu = config.measure()?;
    let mut csv = Csv::new(&["r", "h_a", "std_error", "bias_budget", "n_samples"]);
    for (i, k) in config.kernels()?.iter().enumerate() {
        let est = entropy_at_scale(&mu, k, config.mc.n_samples, &rng.derive(i as u64)).map_err(CliError::module("entropy"))?;
        csv.row(&[fmt_f64(k.r()), fmt_f64(est.value), fmt_f64(est.std_error), fmt_f64(est.bias_budget), est.n_samples.to_string()]);
    }
    w.put("entropy.csv", &csv.text)?;
    Ok(true)
}

/// `trace.csv`: `r, radius, t, std_error`; the witness certifies `tr(g; radius) ≥ t`.
fn trace(config: &Config, rng: &RngStream, w: &mut Writer) -> Result<bool, CliError> {
    let mu = config.measure()?;
    let model = config.model()?;
    let a = config.kernel.a;
    let scales = config.trace.as_ref().map_or(&config.kernel.scales, |t| &t.r);
    let mut csv = Csv::new(&["r", "radius", "t", "std_error"]);
    for (i, &r) in scales.iter().enumerate() {
        kernel_at(model, a, 2.0 * r, &format!("trace.r[{i}] (the witness uses 2r)"))?;
        let t = trace_at_scale_witness(&mu, a, r, config.mc.n_samples, &rng.derive(i as u64)).map_err(CliError::module("trace"))?;
        csv.row(&[fmt_f64(r), fmt_f64(t.radius), fmt_f64(t.t), fmt_f64(t.std_error)]);
    }
    w.put("trace.csv", &csv.text)?;
    Ok(true)
}

/// `profile.csv` (`u, value, std_error`) and `selection.json`; with `r1, r2`
/// set, `gap.json` from the entropy-gap probe instead.
fn select(config: &Config, rng: &RngStream, w: &mut Writer) -> Result<bool, CliError> {
    let s = config.select.as_ref().ok_or_else(|| CliError::config("select", "the select command needs a [select] block"))?;
    let mu = config.measure()?;
    let a = config.kernel.a;
    let n = config.mc.n_samples;
    let (profile, selection) = match (s.r1, s.r2) {
        (Some(r1), Some(r2)) => {
            let opts = GapOptions { grid_size: s.grid_size, ..GapOptions::default() };
            let report = entropy_gap_to_trace_sum(&mu, a, r1, r2, s.a_factor, n, rng, &opts).map_err(CliError::module("select"))?;
            w.json("gap.json", &report)?;
            (report.profile, report.selection)
        }
        (None, None) => {
            let profile = trace_profile(&mu, a, s.r_lo, s.r_hi, s.grid_size, n, rng).map_err(CliError::module("select"))?;
            let selection = select_scales(&profile, s.a_factor).map_err(CliError::module("select"))?;
            (profile, selection)
        }
        _ => return Err(CliError::config("select", "r1 and r2 must be given together")),
    };
    let mut csv = Csv::new(&["u", "value", "std_error"]);
    for j in 0..profile.len() {
        csv.row(&[fmt_f64(profile.grid[j]), fmt_f64(profile.values[j]), fmt_f64(profile.std_errors[j])]);
    }
    w.put("profile.csv", &csv.text)?;
    w.json("selection.json", &selection)?;
    Ok(selection.spacing_holds())
}

/// `separation.csv`: `n, m_n, s_n, s_n_is_bound, union_size, pair_count`.
fn separation(config: &Config, w: &mut Writer) -> Result<bool, CliError> {
    let n_max = config.separation.as_ref().map_or(6, |s| s.n_max);
    let reps = separation_rates(&config.measure()?, n_max).map_err(CliError::module("separation"))?;
    let mut csv = Csv::new(&["n", "m_n", "s_n", "s_n_is_bound", "union_size", "pair_count"]);
    for r in &reps {
        csv.row(&[
            r.n.to_string(),
            fmt_f64(r.m_n.lower_bound()),
            fmt_f64(r.s_n),
            r.s_n_is_bound.to_string(),
            r.union_size.to_string(),
            r.pair_count.to_string(),
        ]);
    }
    w.put("separation.csv", &csv.text)?;
    Ok(true)
}

#[derive(Serialize)]
struct WalkSummary {
    s: f64,
    max_separation_exponent: f64,
    h_mu: f64,
    warnings: Vec<String>,
    ldp: liescale::walks::LdpReport,
}

/// `harness.csv` with the deficit rows and `walk.json` with the LDP check.
fn walk(config: &Config, rng: &RngStream, w: &mut Writer) -> Result<bool, CliError> {
    let wc = config.walk.as_ref().ok_or_else(|| CliError::config("walk", "the walk command needs a [walk] block"))?;
    let mu = config.measure()?;
    let spec = config.stopping_spec(wc)?;
    let indices: Vec<usize> = (0..spec.schedule_len()).collect();
    let s = match wc.s {
        Some(s) => s,
        None => default_rate(&mu, &spec, &indices, wc.epsilon).map_err(CliError::module("walk"))?,
    };
    let opts = HarnessOptions { epsilon: wc.epsilon, c_g: wc.c_g, h_mu_depth: wc.h_mu_depth };
    let report = theorem_harness(&mu, &spec, wc.a, s, &indices, config.mc.n_samples, rng, &opts).map_err(CliError::module("walk"))?;
    let ldp = ldp_check(&mu, &spec, wc.ldp_epsilon, &indices).map_err(CliError::module("walk"))?;
    let mut csv = Csv::new(&[
        "n", "L_n", "r_n", "M_bound", "H_est", "std_error", "h_mu_Ln", "deficit", "bias_budget", "r_theorem", "exact_split",
    ]);
    for r in &report.rows {
        csv.row(&[
            r.n.to_string(),
            fmt_f64(r.l_n),
            fmt_f64(r.r_n),
            fmt_f64(r.m_bound),
            fmt_f64(r.h_est),
            fmt_f64(r.std_error),
            fmt_f64(r.h_mu_ln),
            fmt_f64(r.deficit),
            fmt_f64(r.bias_budget),
            fmt_f64(r.r_theorem),
            r.exact_split.to_string(),
        ]);
    }
    w.put("harness.csv", &csv.text)?;
    let passed = report.rows.iter().all(|r| r.within_tolerance()) && (ldp.passes || ldp.degenerate);
    w.json(
        "walk.json",
        &WalkSummary { s: report.s, max_separation_exponent: report.max_separation_exponent, h_mu: report.h_mu, warnings: report.warnings, ldp },
    )?;
    Ok(passed)
}
