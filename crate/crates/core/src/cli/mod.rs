//! Command-line front end.

mod config;
mod json;

pub use config::{apply_override, CeSettings, EstimatorSettings, RunConfig};
pub use json::to_canonical_json;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::estimators::{ce_optimize, draw_samples, summarize, write_samples_csv, CeParams, GridProposal, Method};
use crate::fit::{
    fit_params, generate_situations, qq_points, synthesize, BandModel, FitResult, Metric, ObservationSet,
};
use crate::policy::{BehaviorCategory, CutInAction, RationalityVector, SubjectState};
use crate::rng;
use crate::sa;
use crate::scenario::{min_moving_gap, rollout, InputSpace};

#[derive(Debug, Parser)]
#[command(name = "cutin-rare", version, about = "Rare-event estimation and situation generation for cut-in scenarios")]
pub struct Cli {
    /// JSON config overlaid on the preset.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Base configuration when no file sets the scene.
    #[arg(long, global = true, default_value = "toy")]
    pub preset: String,
    /// Dotted-path override, e.g. `--set scene.rare_event.gap_threshold=2`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EstimateMethod {
    Cmc,
    IsCe,
    IsBr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OptimizerKind {
    Sa,
    Ce,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the resolved configuration.
    Config,
    /// Synthesize an observation dataset with known ground truth.
    Synth {
        /// Total rows, split evenly across the configured bands.
        #[arg(long)]
        n: Option<usize>,
    },
    /// Estimate the rare-event probability.
    Estimate {
        #[arg(long, value_enum)]
        method: EstimateMethod,
        /// Artifact written by `optimize`.
        #[arg(long)]
        proposal: Option<PathBuf>,
        /// Rationality vector `gap,ttc,progress` for is-br.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        lambda: Option<Vec<f64>>,
        #[arg(long)]
        n: Option<usize>,
        /// Also write the per-sample CSV.
        #[arg(long)]
        samples: bool,
    },
    /// Optimize a proposal distribution.
    Optimize {
        #[arg(long, value_enum)]
        kind: OptimizerKind,
    },
    /// Fit the mixed-behavior model per speed band.
    Fit {
        #[arg(long)]
        data: PathBuf,
    },
    /// QQ comparison of observations against a fit.
    Qq {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        fit: PathBuf,
        #[arg(long, default_value_t = 100)]
        points: usize,
    },
    /// Generate situations from a fit.
    Generate {
        #[arg(long)]
        fit: PathBuf,
        /// Rows per band.
        #[arg(long)]
        n: usize,
        /// Keep only these behavior categories, e.g. `B1,B2`.
        #[arg(long, value_delimiter = ',')]
        filter: Option<Vec<BehaviorCategory>>,
    },
    /// Roll out one situation and dump the trajectory.
    TrajectoryDump {
        #[arg(long)]
        v_s: f64,
        #[arg(long)]
        v_lc: f64,
        #[arg(long)]
        gap: f64,
    },
}

/// Parse arguments, run, report errors on stderr and return the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Files produced by a command, written only after it succeeds.
struct Outputs {
    dir: PathBuf,
    files: Vec<(String, Vec<u8>)>,
}

impl Outputs {
    fn new(dir: &Path) -> Self {
        Self { dir: dir.to_path_buf(), files: Vec::new() }
    }

    fn json<T: Serialize>(&mut self, name: &str, v: &T) -> Result<()> {
        self.files.push((name.to_string(), to_canonical_json(v)?.into_bytes()));
        Ok(())
    }

    fn csv(&mut self, name: &str, write: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Result<()> {
        let mut buf = Vec::new();
        write(&mut buf).map_err(|e| Error::io(self.dir.join(name), e))?;
        self.files.push((name.to_string(), buf));
        Ok(())
    }

    fn commit(self) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(&self.dir).map_err(|e| Error::io(&self.dir, e))?;
        let mut written = Vec::new();
        for (name, bytes) in self.files {
            let p = self.dir.join(name);
            std::fs::write(&p, bytes).map_err(|e| Error::io(&p, e))?;
            written.push(p);
        }
        Ok(written)
    }
}

/// Resolve the configuration and execute the command.
pub fn run(cli: &Cli) -> Result<Vec<PathBuf>> {
    let mut overrides = cli.overrides.clone();
    if let Some(s) = cli.seed {
        overrides.push(format!("seed={s}"));
    }
    if let Some(o) = &cli.out {
        overrides.push(format!("output_dir={}", serde_json::to_string(o).map_err(|e| Error::Config(e.to_string()))?));
    }
    let cfg = RunConfig::resolve(RunConfig::preset(&cli.preset)?, cli.config.as_deref(), &overrides)?;
    let mut out = Outputs::new(&cfg.output_dir);
    let envelope = |command: &str, result: serde_json::Value| {
        json!({ "command": command, "config": cfg, "seed": cfg.seed, "result": result })
    };

    match &cli.command {
        Command::Config => out.json("config.json", &cfg)?,
        Command::Synth { n } => {
            let mut spec = cfg.synth.clone();
            if let Some(n) = n {
                let k = spec.bands.len().max(1);
                for (i, b) in spec.bands.iter_mut().enumerate() {
                    b.n = n / k + usize::from(i < n % k);
                }
            }
            let obs = synthesize(&spec, &cfg.fit, cfg.seed)?;
            out.csv("observations.csv", |w| obs.write_csv(w))?;
            out.json("synth.json", &envelope("synth", json!({ "rows": obs.len(), "ground_truth": spec })))?;
        }
        Command::Estimate { method, proposal, lambda, n, samples } => {
            let n = n.unwrap_or(cfg.estimator.n);
            let space = InputSpace::new(&cfg.scene)?;
            let nominal = GridProposal::nominal(&space, &cfg.nominal)?;
            let (q, m) = match method {
                EstimateMethod::Cmc => (nominal.clone(), Method::Cmc),
                EstimateMethod::IsBr => {
                    let lam = match (lambda, proposal) {
                        (Some(l), _) => match l[..] {
                            [g, t, p] => RationalityVector::new(g, t, p)?,
                            _ => return Err(Error::Config(format!("--lambda needs 3 values, got {}", l.len()))),
                        },
                        (None, Some(p)) => read_artifact(p)?.sa_lambda(p)?,
                        (None, None) => {
                            return Err(Error::Config(
                                "is-br needs --proposal <optimize --kind sa artifact> or --lambda g,t,p".into(),
                            ))
                        }
                    };
                    (GridProposal::bounded_rational(&space, &lam)?, Method::IsBr)
                }
                EstimateMethod::IsCe => {
                    let params = match proposal {
                        Some(p) => read_artifact(p)?.ce_params(p)?,
                        None => {
                            let init = cfg.ce.params(&nominal)?;
                            ce_optimize(&nominal, &cfg.scene, &space, &init, rng::derive_seed(cfg.seed, "cli-ce", 0))?.params
                        }
                    };
                    (GridProposal::cross_entropy(&space, params.v_lc, params.gap)?, Method::IsCe)
                }
            };
            let recs = draw_samples(&nominal, &q, &cfg.scene, n, cfg.seed)?;
            let result = summarize(&recs, cfg.seed, m);
            if *samples {
                out.csv("samples.csv", |w| write_samples_csv(&recs, w))?;
            }
            out.json(
                "estimate.json",
                &envelope("estimate", json!({ "estimate": result, "proposal": q.descriptor })),
            )?;
        }
        Command::Optimize { kind: OptimizerKind::Sa } => {
            let space = InputSpace::new(&cfg.scene)?;
            let o = sa::optimize(&cfg.sa, &cfg.scene, &space)?;
            out.csv("sa_trace.csv", |w| o.state.write_trace_csv(w))?;
            out.json(
                "optimize_sa.json",
                &envelope(
                    "optimize",
                    json!({ "kind": "sa", "best_bid": o.best_bid, "best_lambda": o.best_lambda, "state": o.state }),
                ),
            )?;
        }
        Command::Optimize { kind: OptimizerKind::Ce } => {
            let space = InputSpace::new(&cfg.scene)?;
            let nominal = GridProposal::nominal(&space, &cfg.nominal)?;
            let init = cfg.ce.params(&nominal)?;
            let o = ce_optimize(&nominal, &cfg.scene, &space, &init, rng::derive_seed(cfg.seed, "cli-ce", 0))?;
            out.json(
                "optimize_ce.json",
                &envelope(
                    "optimize",
                    json!({ "kind": "ce", "initial": init, "params": o.params, "trace": o.trace, "converged": o.converged }),
                ),
            )?;
        }
        Command::Fit { data } => {
            let obs = ObservationSet::read_path(data)?;
            let fit = fit_params(&obs, &cfg.fit, cfg.seed)?;
            out.json("fit.json", &envelope("fit", json!({ "data": data, "fit": fit })))?;
        }
        Command::Qq { data, fit, points } => {
            let obs = ObservationSet::read_path(data)?;
            let fit = read_fit(fit)?;
            let mut summary = Vec::new();
            for b in &fit.bands {
                let rows = obs.band(b.band);
                let model = BandModel::new(&cfg.fit, b.speed_marginal.clone())?;
                let m = model.marginals(&b.params)?;
                for metric in Metric::ALL {
                    let values: Vec<f64> = rows.iter().map(|o| if metric == Metric::Gap { o.gap } else { o.ttc }).collect();
                    let qq = qq_points(&values, &m, metric, (*points).min(values.len()), cfg.fit.ttc_cap)?;
                    let name = format!("qq_{}_{metric}.csv", b.band.to_string().to_lowercase());
                    summary.push(json!({ "band": b.band, "metric": metric, "pearson_r": qq.pearson_r, "file": name }));
                    out.csv(&name, |w| qq.write_csv(w))?;
                }
            }
            out.json("qq.json", &envelope("qq", json!({ "data": data, "bands": summary })))?;
        }
        Command::Generate { fit, n, filter } => {
            let fit = read_fit(fit)?;
            let mut records = Vec::new();
            for b in &fit.bands {
                let seed = rng::derive_seed(cfg.seed, "generate-band", b.band as u64);
                let set = generate_situations(&b.params, *n, &b.speed_marginal, &cfg.fit, seed, filter.as_deref())?;
                records.extend(set.records);
            }
            let set = ObservationSet::new(records);
            out.csv("situations.csv", |w| set.write_csv(w))?;
            out.json("generate.json", &envelope("generate", json!({ "rows": set.len(), "filter": filter })))?;
        }
        Command::TrajectoryDump { v_s, v_lc, gap } => {
            let state = SubjectState::new(*v_s)?;
            let action = CutInAction::new(*v_lc, *gap)?;
            let traj = rollout(&state, &action, &cfg.scene.scenario, rng::derive_seed(cfg.seed, "trajectory", 0))?;
            let severity = min_moving_gap(&traj, &cfg.scene.rare_event);
            out.csv("trajectory.csv", |w| traj.write_csv(w))?;
            out.json(
                "trajectory.json",
                &envelope(
                    "trajectory-dump",
                    json!({
                        "v_s": v_s, "v_lc": v_lc, "gap": gap,
                        "steps": traj.len(),
                        "crossing_index": traj.crossing_index,
                        "severity": if severity.is_finite() { json!(severity) } else { json!(null) },
                        "event": cfg.scene.is_event_severity(severity),
                    }),
                ),
            )?;
        }
    }
    out.commit()
}

#[derive(Deserialize)]
struct Envelope<T> {
    result: T,
}

#[derive(Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum Artifact {
    Sa { best_lambda: RationalityVector },
    Ce { params: CeParams },
}

impl Artifact {
    fn sa_lambda(self, path: &Path) -> Result<RationalityVector> {
        match self {
            Artifact::Sa { best_lambda } => Ok(best_lambda),
            Artifact::Ce { .. } => Err(Error::Config(format!("{} is a ce artifact; is-br needs an sa artifact", path.display()))),
        }
    }

    fn ce_params(self, path: &Path) -> Result<CeParams> {
        match self {
            Artifact::Ce { params } => Ok(params),
            Artifact::Sa { .. } => Err(Error::Config(format!("{} is an sa artifact; is-ce needs a ce artifact", path.display()))),
        }
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path, what: &str) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let env: Envelope<T> =
        serde_json::from_str(&text).map_err(|e| Error::Data(format!("{}: not a valid {what}: {e}", path.display())))?;
    Ok(env.result)
}

fn read_artifact(path: &Path) -> Result<Artifact> {
    read_json(path, "optimize artifact")
}

fn read_fit(path: &Path) -> Result<FitResult> {
    #[derive(Deserialize)]
    struct FitArtifact {
        fit: FitResult,
    }
    Ok(read_json::<FitArtifact>(path, "fit artifact")?.fit)
}
