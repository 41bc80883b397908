//! Pipeline stages with hash-keyed caching.
//!
//! Every stage has a key: the digest of the configuration values it reads
//! plus the keys of the stages it consumes. A stage directory is complete
//! once its `stamp.json` records that key; complete stages are skipped.
//! Run directories live under `<out>/<config hash>`; reference ensembles
//! live under `<out>/shared` so runs that differ only in training reuse
//! them.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use tgnn_core::darcy::simulate;
use tgnn_core::mlp::init_parameters;
use tgnn_core::train::{
    build_training_set, composite_boundary, BatchSizes, sample_collocation, train_with, transfer_finetune, LabeledSet, LossWeights,
    Physics, Sampler, TrainingConfig,
};
use tgnn_core::uq::{
    draw_inputs, mc_ensemble, metric_table, pdf_estimate, EnsembleStats, Layout, McInput, MetricRow, MetricTable, Probe,
    SolverEvaluator, SurrogateEvaluator,
};
use tgnn_core::KleModel;

use crate::config::{digest, stage_seed, ExperimentConfig};
use crate::io::{self, Checkpoint};
use crate::plot::{self, Plot, Series, Style};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Kle,
    Data,
    Train,
    Benchmark,
    Uq,
    TransferBenchmark,
    Transfer,
    Report,
}

impl Stage {
    /// In dependency order.
    pub const ALL: [Stage; 8] = [
        Stage::Kle,
        Stage::Data,
        Stage::Train,
        Stage::Benchmark,
        Stage::Uq,
        Stage::TransferBenchmark,
        Stage::Transfer,
        Stage::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Kle => "kle",
            Stage::Data => "data",
            Stage::Train => "train",
            Stage::Benchmark => "benchmark",
            Stage::Uq => "uq",
            Stage::TransferBenchmark => "transfer-benchmark",
            Stage::Transfer => "transfer",
            Stage::Report => "report",
        }
    }

    /// Subcommand that builds the stage.
    fn command(self) -> &'static str {
        match self {
            Stage::Kle => "kle-inspect",
            Stage::Data => "gen-data",
            Stage::Train => "train",
            Stage::Benchmark => "simulate",
            Stage::Uq => "uq",
            Stage::TransferBenchmark | Stage::Transfer => "transfer",
            Stage::Report => "report",
        }
    }

    fn shared(self) -> bool {
        matches!(self, Stage::Benchmark | Stage::TransferBenchmark)
    }
}

#[derive(Debug, Clone, Default)]
pub struct Options {
    pub out: PathBuf,
    /// Build missing upstream stages instead of failing.
    pub build_deps: bool,
    pub dry_run: bool,
    /// Recorded in the manifest. Reductions always run in a fixed order,
    /// so results do not depend on the worker count either way.
    pub deterministic: bool,
    /// Progress lines on stderr.
    pub verbose: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ran,
    Cached,
    Copied,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    pub key: String,
    pub status: Status,
    pub seconds: f64,
    /// Stage directory relative to the output root.
    pub dir: String,
    /// Files relative to the stage directory.
    pub artifacts: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub name: String,
    pub version: String,
    pub deterministic: bool,
    pub stages: Vec<StageRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Stamp {
    stage: String,
    key: String,
}

const STAMP: &str = "stamp.json";

/// Optimizer wall time of the train and transfer stages.
pub const TIMING: &str = "timing.json";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub seconds: f64,
}

impl Timing {
    fn since(start: Instant) -> Self {
        Timing {
            seconds: start.elapsed().as_secs_f64(),
        }
    }
}

pub struct Pipeline {
    pub cfg: ExperimentConfig,
    pub hash: String,
    pub opts: Options,
    /// Run directory.
    pub dir: PathBuf,
    manifest: Manifest,
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Six significant digits for console output.
pub fn sig(v: f64) -> String {
    format!("{v:.5e}")
}

fn short(hash: &str) -> &str {
    &hash[..16.min(hash.len())]
}

fn list_files(dir: &Path) -> Result<Vec<String>> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<String>) -> Result<()> {
        for e in fs::read_dir(dir)? {
            let p = e?.path();
            if p.is_dir() {
                walk(root, &p, out)?;
            } else if p.file_name().is_some_and(|n| n != STAMP) {
                out.push(p.strip_prefix(root)?.to_string_lossy().replace('\\', "/"));
            }
        }
        Ok(())
    }
    let mut out = Vec::new();
    walk(dir, dir, &mut out)?;
    out.sort();
    Ok(out)
}

fn copy_dir(from: &Path, to: &Path) -> Result<()> {
    fs::create_dir_all(to)?;
    for e in fs::read_dir(from)? {
        let p = e?.path();
        let target = to.join(p.file_name().expect("entry has a name"));
        if p.is_dir() {
            copy_dir(&p, &target)?;
        } else {
            fs::copy(&p, &target)?;
        }
    }
    Ok(())
}

impl Pipeline {
    pub fn new(cfg: ExperimentConfig, opts: Options) -> Result<Self> {
        cfg.validate()?;
        let hash = cfg.hash();
        let dir = opts.out.join(short(&hash));
        let fresh = Manifest {
            config_hash: hash.clone(),
            name: cfg.name.clone(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            deterministic: opts.deterministic,
            stages: Vec::new(),
        };
        let manifest = match io::read_json::<Manifest>(&dir.join("manifest.json")) {
            Ok(m) if m.config_hash == hash => Manifest {
                deterministic: opts.deterministic,
                ..m
            },
            _ => fresh,
        };
        Ok(Pipeline {
            cfg,
            hash,
            opts,
            dir,
            manifest,
        })
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    fn with_transfer_variance(&self) -> Option<ExperimentConfig> {
        let t = self.cfg.transfer.as_ref()?;
        let mut c = self.cfg.clone();
        c.uq.variance = Some(t.variance);
        Some(c)
    }

    fn deps(&self, stage: Stage) -> Vec<Stage> {
        match stage {
            Stage::Kle => vec![],
            Stage::Data => vec![Stage::Kle],
            Stage::Train => vec![Stage::Kle, Stage::Data],
            Stage::Benchmark | Stage::TransferBenchmark => vec![Stage::Kle],
            Stage::Uq => vec![Stage::Train, Stage::Benchmark],
            Stage::Transfer => vec![Stage::Kle, Stage::Train, Stage::TransferBenchmark],
            Stage::Report if self.cfg.transfer.is_some() => vec![Stage::Train, Stage::Uq, Stage::Transfer],
            Stage::Report => vec![Stage::Train, Stage::Uq],
        }
    }

    pub fn key(&self, stage: Stage) -> Result<String> {
        let c = &self.cfg;
        let seed = c.training.seed;
        Ok(match stage {
            Stage::Kle => digest(&(
                "kle",
                c.field.covariance(),
                c.field.truncation()?,
                c.field.benchmark_truncation()?,
            )),
            Stage::Data => digest(&(
                "data",
                self.key(Stage::Kle)?,
                c.grid()?,
                c.time,
                c.boundary,
                c.composite(),
                c.data,
                stage_seed(seed, "data"),
            )),
            Stage::Train => digest(&(
                "train",
                self.key(Stage::Data)?,
                &c.network,
                &c.training,
                c.weights,
                c.collocation,
            )),
            Stage::Benchmark => benchmark_key(c)?,
            Stage::Uq => digest(&("uq", self.key(Stage::Train)?, self.key(Stage::Benchmark)?, &c.uq)),
            Stage::TransferBenchmark => match self.with_transfer_variance() {
                Some(tc) => benchmark_key(&tc)?,
                None => bail!("no [transfer] section in the configuration"),
            },
            Stage::Transfer => digest(&(
                "transfer",
                self.key(Stage::Train)?,
                self.key(Stage::TransferBenchmark)?,
                &c.transfer,
                stage_seed(seed, "transfer"),
            )),
            Stage::Report => {
                let transfer = match c.transfer {
                    Some(_) => Some(self.key(Stage::Transfer)?),
                    None => None,
                };
                digest(&("report", self.key(Stage::Uq)?, transfer))
            }
        })
    }

    pub fn stage_dir(&self, stage: Stage) -> Result<PathBuf> {
        Ok(if stage.shared() {
            self.opts.out.join("shared").join(format!("benchmark-{}", short(&self.key(stage)?)))
        } else {
            self.dir.join(stage.name())
        })
    }

    fn complete(&self, stage: Stage) -> Result<bool> {
        let stamp = self.stage_dir(stage)?.join(STAMP);
        Ok(io::read_json::<Stamp>(&stamp).is_ok_and(|s| s.key == self.key(stage).unwrap_or_default()))
    }

    /// A finished copy of the stage in another run directory.
    fn sibling(&self, stage: Stage) -> Result<Option<PathBuf>> {
        if stage.shared() || !self.opts.out.exists() {
            return Ok(None);
        }
        let key = self.key(stage)?;
        let mut dirs: Vec<PathBuf> = fs::read_dir(&self.opts.out)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_dir() && *p != self.dir)
            .collect();
        dirs.sort();
        for d in dirs {
            let cand = d.join(stage.name());
            if io::read_json::<Stamp>(&cand.join(STAMP)).is_ok_and(|s| s.key == key) {
                return Ok(Some(cand));
            }
        }
        Ok(None)
    }

    /// Targets plus everything upstream, in dependency order.
    pub fn plan(&self, targets: &[Stage]) -> Vec<Stage> {
        let mut need = BTreeSet::new();
        let mut stack: Vec<Stage> = targets.to_vec();
        while let Some(s) = stack.pop() {
            if need.insert(s) {
                stack.extend(self.deps(s));
            }
        }
        Stage::ALL.iter().copied().filter(|s| need.contains(s)).collect()
    }

    /// Brings the target stages up to date. Upstream stages run only with
    /// `build_deps`; otherwise a missing one is an error naming the
    /// subcommand that builds it.
    pub fn run(&mut self, targets: &[Stage]) -> Result<()> {
        let plan = self.plan(targets);
        if !self.opts.dry_run {
            fs::create_dir_all(&self.dir)?;
            fs::write(self.dir.join("config.toml"), self.cfg.to_toml()?)?;
        }
        let mut missing = None;
        for stage in plan {
            let key = self.key(stage)?;
            let dir = self.stage_dir(stage)?;
            let rel = dir.strip_prefix(&self.opts.out).unwrap_or(&dir).to_string_lossy().into_owned();
            let (status, action) = if self.complete(stage)? {
                (Status::Cached, None)
            } else if let Some(src) = self.sibling(stage)? {
                (Status::Copied, Some(src))
            } else if targets.contains(&stage) || self.opts.build_deps {
                (Status::Ran, None)
            } else {
                let msg = format!(
                    "stage `{}` has no artifact for config {}; run `tgnn {}` first or pass --build-deps",
                    stage.name(),
                    short(&self.hash),
                    stage.command()
                );
                if !self.opts.dry_run {
                    bail!(msg);
                }
                println!("{:<20} {:<8} {}  {}", stage.name(), "missing", short(&key), rel);
                missing.get_or_insert(msg);
                continue;
            };
            if self.opts.dry_run {
                let word = match status {
                    Status::Ran => "run",
                    Status::Copied => "copy",
                    _ => "cached",
                };
                println!("{:<20} {:<8} {}  {}", stage.name(), word, short(&key), rel);
                continue;
            }
            let start = Instant::now();
            let result = match (status, action) {
                (Status::Cached, _) => Ok(()),
                (Status::Copied, Some(src)) => {
                    let _ = fs::remove_dir_all(&dir);
                    copy_dir(&src, &dir)
                }
                _ => {
                    let _ = fs::remove_dir_all(&dir);
                    fs::create_dir_all(&dir)?;
                    if self.opts.verbose {
                        eprintln!("[{}] running ({})", stage.name(), short(&key));
                    }
                    self.exec(stage, &dir)
                }
            };
            let seconds = start.elapsed().as_secs_f64();
            if let Err(e) = result {
                self.record(StageRecord {
                    stage: stage.name().into(),
                    key,
                    status: Status::Failed,
                    seconds,
                    dir: rel,
                    artifacts: Vec::new(),
                    error: Some(format!("{e:#}")),
                })?;
                return Err(e.context(format!("stage `{}` failed", stage.name())));
            }
            if status != Status::Cached {
                io::write_json(
                    &dir.join(STAMP),
                    &Stamp {
                        stage: stage.name().into(),
                        key: key.clone(),
                    },
                )?;
            }
            let previous = self.manifest.stages.iter().find(|r| r.stage == stage.name() && r.key == key);
            let record = match (status, previous) {
                // a rerun leaves the original record in place
                (Status::Cached, Some(r)) => r.clone(),
                _ => StageRecord {
                    stage: stage.name().into(),
                    key,
                    status,
                    seconds,
                    dir: rel,
                    artifacts: list_files(&dir)?,
                    error: None,
                },
            };
            self.record(record)?;
            if self.opts.verbose && status != Status::Ran {
                eprintln!("[{}] {}", stage.name(), format!("{status:?}").to_lowercase());
            }
        }
        match missing {
            Some(msg) => bail!(msg),
            None => Ok(()),
        }
    }

    fn record(&mut self, r: StageRecord) -> Result<()> {
        let stages = &mut self.manifest.stages;
        match stages.iter_mut().find(|s| s.stage == r.stage) {
            Some(s) => *s = r,
            None => stages.push(r),
        }
        stages.sort_by_key(|s| Stage::ALL.iter().position(|t| t.name() == s.stage));
        io::write_json(&self.dir.join("manifest.json"), &self.manifest)
    }

    fn exec(&self, stage: Stage, dir: &Path) -> Result<()> {
        match stage {
            Stage::Kle => self.exec_kle(dir),
            Stage::Data => self.exec_data(dir),
            Stage::Train => self.exec_train(dir),
            Stage::Benchmark => self.exec_benchmark(&self.cfg, dir),
            Stage::TransferBenchmark => {
                let c = self.with_transfer_variance().ok_or_else(|| anyhow!("no [transfer] section"))?;
                self.exec_benchmark(&c, dir)
            }
            Stage::Uq => self.exec_uq(dir),
            Stage::Transfer => self.exec_transfer(dir),
            Stage::Report => self.exec_report(dir),
        }
    }

    fn exec_kle(&self, dir: &Path) -> Result<()> {
        let f = &self.cfg.field;
        let model = KleModel::build(f.covariance(), f.truncation()?)?;
        io::write_kle(dir, "kle", &model)?;
        let mut series = vec![energy_series("surrogate", &model)];
        if f.has_separate_benchmark() {
            let bench = KleModel::build(f.covariance(), f.benchmark_truncation()?)?;
            io::write_kle(dir, "benchmark_kle", &bench)?;
            series.insert(0, energy_series("benchmark", &bench));
        }
        plot::save(
            &dir.join("energy.svg"),
            &Plot {
                title: "Retained KLE energy".into(),
                x_label: "modes".into(),
                y_label: "energy fraction".into(),
                series,
                ..Plot::default()
            },
        )
    }

    /// Surrogate and reference models.
    pub fn kle_models(&self) -> Result<(KleModel, KleModel)> {
        let dir = self.stage_dir(Stage::Kle)?;
        let model = io::read_kle(&dir, "kle")?;
        let bench = if self.cfg.field.has_separate_benchmark() {
            io::read_kle(&dir, "benchmark_kle")?
        } else {
            model.clone()
        };
        Ok((model, bench))
    }

    fn exec_data(&self, dir: &Path) -> Result<()> {
        let c = &self.cfg;
        let (model, _) = self.kle_models()?;
        let set = build_training_set(
            &model,
            &c.grid()?,
            &c.time,
            &c.boundary,
            c.composite(),
            c.data.realizations,
            c.data.per_realization,
            &mut rng(stage_seed(c.training.seed, "data")),
        )?;
        io::write_labels(dir, &set)
    }

    fn labels(&self, width: usize) -> Result<LabeledSet> {
        let set = io::read_labels(&self.stage_dir(Stage::Data)?)?;
        Ok(if set.realizations.is_empty() {
            LabeledSet::empty(width)
        } else {
            set
        })
    }

    fn sampler<'a>(&self, model: &'a KleModel, composite: Option<tgnn_core::train::CompositeInputSpec>) -> Sampler<'a> {
        Sampler {
            model,
            t_end: self.cfg.time.t_end(),
            boundary: self.cfg.boundary,
            composite,
        }
    }

    fn exec_train(&self, dir: &Path) -> Result<()> {
        let c = &self.cfg;
        let seed = c.training.seed;
        let (model, _) = self.kle_models()?;
        let spec = c.network_spec(model.len());
        let labeled = self.labels(spec.input_width)?;
        let config = TrainingConfig {
            seed: stage_seed(seed, "train"),
            ..c.training.clone()
        };
        let physics = Physics::new(&c.boundary, &c.grid()?, &c.time, &config);
        let colloc = sample_collocation(
            &self.sampler(&model, c.composite().copied()),
            &c.collocation,
            &c.weights,
            &mut rng(stage_seed(seed, "collocation")),
        )?;
        let init = init_parameters(&spec, &mut rng(stage_seed(seed, "init")));
        let start = Instant::now();
        let out = train_with(&spec, &init, &labeled, &colloc, &c.weights, &config, &physics, self.progress(config.epochs))?;
        io::write_json(&dir.join(TIMING), &Timing::since(start))?;
        io::write_history(&dir.join("history.csv"), &out.history)?;
        io::write_checkpoint(
            &dir.join("model.ckpt"),
            &Checkpoint {
                config_hash: self.hash.clone(),
                spec,
                head: physics.head,
                params: out.params,
            },
        )
    }

    fn progress(&self, epochs: usize) -> impl FnMut(&tgnn_core::train::LossRecord) {
        let verbose = self.opts.verbose;
        let every = (epochs / 20).max(1);
        let start = Instant::now();
        move |r| {
            if verbose && (r.epoch % every == 0 || r.epoch == 1) {
                eprintln!(
                    "  epoch {:>5}  loss {}  [{:.0}s]",
                    r.epoch,
                    sig(r.total),
                    start.elapsed().as_secs_f64()
                );
            }
        }
    }

    fn layout(&self) -> Result<Layout> {
        Ok(Layout {
            grid: self.cfg.grid()?,
            time: self.cfg.time,
            steps: self.cfg.eval_steps(),
        })
    }

    fn probes(&self, cfg: &ExperimentConfig) -> Result<Vec<Probe>> {
        let steps = cfg.eval_steps();
        cfg.uq
            .probes
            .iter()
            .map(|p| {
                let step = cfg.probe_step(p);
                Ok(Probe {
                    step_index: steps.iter().position(|&s| s == step).context("probe step is not evaluated")?,
                    cell: cfg.probe_cell(p)?,
                })
            })
            .collect()
    }

    /// The shared Monte Carlo input stream.
    fn mc_inputs(&self, cfg: &ExperimentConfig) -> Result<Vec<McInput>> {
        let (_, bench) = self.kle_models()?;
        Ok(draw_inputs(
            cfg.uq.samples,
            bench.len(),
            cfg.uq_composite().as_ref(),
            &mut rng(cfg.uq.seed),
        ))
    }

    fn exec_benchmark(&self, cfg: &ExperimentConfig, dir: &Path) -> Result<()> {
        let (_, bench) = self.kle_models()?;
        let inputs = self.mc_inputs(cfg)?;
        let eval = SolverEvaluator {
            model: &bench,
            boundary: cfg.boundary,
            layout: self.layout()?,
        };
        let stats = mc_ensemble(&eval, &inputs, &self.probes(cfg)?)?;
        io::write_inputs(&dir.join("inputs.csv"), &inputs)?;
        io::write_stats(dir, &stats)?;
        // first realization in full, for inspection
        let first = &inputs[0];
        let grid = cfg.grid()?;
        let (boundary, variance) = match first.extras.as_slice() {
            [b1, b2, v] => (composite_boundary(&cfg.boundary, &[*b1, *b2, *v]), Some(*v)),
            _ => (cfg.boundary, None),
        };
        let k = bench.field_on_grid_with_variance(&first.xi, &grid, variance)?;
        io::write_heads(&dir.join("realization_0.heads"), &simulate(&k, &grid, &cfg.time, &boundary)?)
    }

    fn surrogate_stats(&self, cfg: &ExperimentConfig, ck: &Checkpoint) -> Result<EnsembleStats> {
        let eval = SurrogateEvaluator {
            spec: &ck.spec,
            params: &ck.params,
            head: ck.head,
            layout: self.layout()?,
        };
        Ok(mc_ensemble(&eval, &self.mc_inputs(cfg)?, &self.probes(cfg)?)?)
    }

    fn exec_uq(&self, dir: &Path) -> Result<()> {
        let ck = io::read_checkpoint(&self.stage_dir(Stage::Train)?.join("model.ckpt"))?;
        let bench = io::read_stats(&self.stage_dir(Stage::Benchmark)?)?;
        let sur = self.surrogate_stats(&self.cfg, &ck)?;
        io::write_metrics(&dir.join("metrics.csv"), &metric_table(&sur, &bench)?)?;
        io::write_stats(&dir.join("surrogate"), &sur)?;
        for (i, p) in self.cfg.uq.probes.iter().enumerate() {
            if self.cfg.uq.samples < 30 {
                break;
            }
            let point = [p.t, p.x, p.y];
            io::write_pdf(&dir.join("pdf"), &format!("probe{i}_surrogate"), &pdf_estimate(point, &sur.probe_samples[i])?)?;
            io::write_pdf(&dir.join("pdf"), &format!("probe{i}_benchmark"), &pdf_estimate(point, &bench.probe_samples[i])?)?;
        }
        Ok(())
    }

    fn exec_transfer(&self, dir: &Path) -> Result<()> {
        let c = &self.cfg;
        let t = c.transfer.as_ref().ok_or_else(|| anyhow!("no [transfer] section"))?;
        let target_cfg = self.with_transfer_variance().expect("transfer section present");
        let ck = io::read_checkpoint(&self.stage_dir(Stage::Train)?.join("model.ckpt"))?;
        let bench = io::read_stats(&self.stage_dir(Stage::TransferBenchmark)?)?;
        let before = metric_table(&self.surrogate_stats(&target_cfg, &ck)?, &bench)?;
        io::write_metrics(&dir.join("metrics_before.csv"), &before)?;

        let (model, _) = self.kle_models()?;
        let target = target_cfg.uq_composite();
        let weights = LossWeights { data: 0.0, ..c.weights };
        let seed = c.training.seed;
        let colloc = sample_collocation(
            &self.sampler(&model, target),
            &t.collocation,
            &weights,
            &mut rng(stage_seed(seed, "transfer-collocation")),
        )?;
        let config = TrainingConfig {
            epochs: t.epochs,
            learning_rate: t.learning_rate.unwrap_or(c.training.learning_rate),
            seed: stage_seed(seed, "transfer"),
            batch: BatchSizes {
                collocation: t.batch.unwrap_or(c.training.batch.collocation),
                ..c.training.batch
            },
            ..c.training.clone()
        };
        let physics = Physics::new(&c.boundary, &c.grid()?, &c.time, &config);
        let start = Instant::now();
        let out = transfer_finetune(&ck.spec, &ck.params, &colloc, &weights, &config, &physics)?;
        io::write_json(&dir.join(TIMING), &Timing::since(start))?;
        let tuned = Checkpoint {
            params: out.params,
            config_hash: self.hash.clone(),
            ..ck
        };
        let after = metric_table(&self.surrogate_stats(&target_cfg, &tuned)?, &bench)?;
        io::write_metrics(&dir.join("metrics_after.csv"), &after)?;
        io::write_history(&dir.join("history.csv"), &out.history)?;
        io::write_checkpoint(&dir.join("model.ckpt"), &tuned)
    }

    fn exec_report(&self, dir: &Path) -> Result<()> {
        let c = &self.cfg;
        let uq = self.stage_dir(Stage::Uq)?;
        let table = io::read_metrics(&uq.join("metrics.csv"))?;
        metric_plots(dir, "", &table)?;
        let history = io::read_history(&self.stage_dir(Stage::Train)?.join("history.csv"))?;
        let names = ["total", "data", "pde", "dirichlet", "neumann", "initial"];
        let series = names
            .iter()
            .enumerate()
            .filter(|(k, _)| history.iter().any(|(_, v)| v[*k] > 0.0))
            .map(|(k, n)| Series::line(*n, history.iter().map(|(e, v)| (*e as f64, v[k])).collect()))
            .collect();
        plot::save(
            &dir.join("loss.svg"),
            &Plot {
                title: "Training loss".into(),
                x_label: "epoch".into(),
                y_label: "loss".into(),
                log_y: true,
                series,
            },
        )?;
        for i in 0..c.uq.probes.len() {
            let pdf = uq.join("pdf");
            if !pdf.join(format!("probe{i}_surrogate_hist.csv")).exists() {
                continue;
            }
            let mut series = Vec::new();
            for who in ["benchmark", "surrogate"] {
                let density = io::read_columns(&pdf.join(format!("probe{i}_{who}_density.csv")), "h", "density")?;
                series.push(Series::line(format!("{who} KDE"), density));
            }
            let hist = io::read_columns(&pdf.join(format!("probe{i}_benchmark_hist.csv")), "lo", "count")?;
            let hi = io::read_columns(&pdf.join(format!("probe{i}_benchmark_hist.csv")), "hi", "count")?;
            let total: f64 = hist.iter().map(|p| p.1).sum();
            let mut steps: Vec<(f64, f64)> = hist
                .iter()
                .zip(&hi)
                .map(|(&(lo, n), &(hi, _))| (lo, n / (total * (hi - lo))))
                .collect();
            if let (Some(&(_, y)), Some(&(h, _))) = (steps.last(), hi.last()) {
                steps.push((h, y));
            }
            series.push(Series {
                label: "benchmark histogram".into(),
                points: steps,
                style: Style::Steps,
            });
            let p = c.uq.probes[i];
            plot::save(
                &dir.join(format!("pdf_probe{i}.svg")),
                &Plot {
                    title: format!("Head PDF at t={}, x={}, y={}", p.t, p.x, p.y),
                    x_label: "head".into(),
                    y_label: "density".into(),
                    series,
                    ..Plot::default()
                },
            )?;
        }
        let mut summary = Summary {
            name: c.name.clone(),
            config_hash: self.hash.clone(),
            report_step: c.uq.report_step,
            metrics: table.at_step(c.uq.report_step).copied().map(MetricSummary::from),
            transfer: None,
        };
        if let Some(t) = &c.transfer {
            let tdir = self.stage_dir(Stage::Transfer)?;
            let before = io::read_metrics(&tdir.join("metrics_before.csv"))?;
            let after = io::read_metrics(&tdir.join("metrics_after.csv"))?;
            metric_plots(dir, "transfer_before_", &before)?;
            metric_plots(dir, "transfer_after_", &after)?;
            summary.transfer = Some(TransferSummary {
                variance: t.variance,
                before: before.at_step(c.uq.report_step).copied().map(MetricSummary::from),
                after: after.at_step(c.uq.report_step).copied().map(MetricSummary::from),
            });
        }
        io::write_json(&dir.join("summary.json"), &summary)
    }

    /// Headline metrics of a finished run.
    pub fn summary(&self) -> Result<Summary> {
        io::read_json(&self.stage_dir(Stage::Report)?.join("summary.json"))
    }

    /// Metric table of the `uq` stage.
    pub fn metrics(&self) -> Result<MetricTable> {
        io::read_metrics(&self.stage_dir(Stage::Uq)?.join("metrics.csv"))
    }

    /// Metric tables before and after fine-tuning.
    pub fn transfer_metrics(&self) -> Result<(MetricTable, MetricTable)> {
        let d = self.stage_dir(Stage::Transfer)?;
        Ok((
            io::read_metrics(&d.join("metrics_before.csv"))?,
            io::read_metrics(&d.join("metrics_after.csv"))?,
        ))
    }

    /// Every artifact listed in the manifest exists and its stage stamp
    /// carries the recorded key.
    pub fn verify(&self) -> Result<()> {
        for r in &self.manifest.stages {
            if r.status == Status::Failed {
                continue;
            }
            let dir = self.opts.out.join(&r.dir);
            let stamp: Stamp = io::read_json(&dir.join(STAMP))?;
            if stamp.key != r.key {
                bail!("stage `{}` stamp does not match the manifest", r.stage);
            }
            for a in &r.artifacts {
                if !dir.join(a).is_file() {
                    bail!("stage `{}` is missing {a}", r.stage);
                }
            }
        }
        Ok(())
    }
}

fn benchmark_key(c: &ExperimentConfig) -> Result<String> {
    let probes: Vec<(usize, usize)> = c
        .uq
        .probes
        .iter()
        .map(|p| Ok((c.probe_step(p), c.probe_cell(p)?)))
        .collect::<Result<_>>()?;
    Ok(digest(&(
        "benchmark",
        c.field.covariance(),
        c.field.benchmark_truncation()?,
        c.grid()?,
        c.time,
        c.boundary,
        c.uq_composite(),
        c.uq.samples,
        c.uq.seed,
        c.eval_steps(),
        probes,
    )))
}

fn energy_series(label: &str, m: &KleModel) -> Series {
    let mut points = vec![(0.0, 0.0)];
    points.extend(m.energy_curve().iter().enumerate().map(|(i, e)| ((i + 1) as f64, *e)));
    Series::line(label, points)
}

fn metric_plots(dir: &Path, prefix: &str, table: &MetricTable) -> Result<()> {
    let col = |f: fn(&MetricRow) -> f64| table.rows.iter().map(|r| (r.time, f(r))).collect::<Vec<_>>();
    plot::save(
        &dir.join(format!("{prefix}r2.svg")),
        &Plot {
            title: "R2 score of estimated moments".into(),
            x_label: "t".into(),
            y_label: "R2".into(),
            log_y: false,
            series: vec![Series::line("mean", col(|r| r.mean_r2)), Series::line("variance", col(|r| r.var_r2))],
        },
    )?;
    plot::save(
        &dir.join(format!("{prefix}rel_l2.svg")),
        &Plot {
            title: "Relative L2 error of estimated moments".into(),
            x_label: "t".into(),
            y_label: "relative L2".into(),
            log_y: true,
            series: vec![
                Series::line("mean", col(|r| r.mean_rel_l2)),
                Series::line("variance", col(|r| r.var_rel_l2)),
            ],
        },
    )
}

/// Metrics at one step; undefined values are `None` in JSON.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub step: usize,
    pub mean_rel_l2: Option<f64>,
    pub mean_r2: Option<f64>,
    pub var_rel_l2: Option<f64>,
    pub var_r2: Option<f64>,
}

impl From<MetricRow> for MetricSummary {
    fn from(r: MetricRow) -> Self {
        let f = |v: f64| v.is_finite().then_some(v);
        MetricSummary {
            step: r.step,
            mean_rel_l2: f(r.mean_rel_l2),
            mean_r2: f(r.mean_r2),
            var_rel_l2: f(r.var_rel_l2),
            var_r2: f(r.var_r2),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferSummary {
    pub variance: f64,
    pub before: Option<MetricSummary>,
    pub after: Option<MetricSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub name: String,
    pub config_hash: String,
    pub report_step: usize,
    pub metrics: Option<MetricSummary>,
    pub transfer: Option<TransferSummary>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    /// Interior collocation count.
    Nc,
    /// Number of labeled realizations.
    R,
    /// Field variance; for composite runs, the pinned evaluation variance.
    Variance,
}

impl std::str::FromStr for Axis {
    type Err = anyhow::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nc" => Ok(Axis::Nc),
            "r" => Ok(Axis::R),
            "variance" => Ok(Axis::Variance),
            _ => bail!("unknown sweep axis `{s}` (expected nc, r or variance)"),
        }
    }
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::Nc => "nc",
            Axis::R => "r",
            Axis::Variance => "variance",
        }
    }

    pub fn apply(self, cfg: &mut ExperimentConfig, value: f64) -> Result<()> {
        let count = || {
            if value >= 0.0 && value.fract() == 0.0 {
                Ok(value as usize)
            } else {
                Err(anyhow!("sweep value {value} is not a count"))
            }
        };
        match self {
            Axis::Nc => cfg.collocation.interior = count()?,
            Axis::R => cfg.data.realizations = count()?,
            Axis::Variance if cfg.composite.enabled => cfg.uq.variance = Some(value),
            Axis::Variance => cfg.field.variance = value,
        }
        cfg.name = format!("{}[{}={value}]", cfg.name, self.name());
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub value: f64,
    pub config_hash: String,
    pub error: Option<String>,
    pub metrics: Option<MetricRow>,
}

/// One full pipeline per value; failures are recorded and the sweep
/// continues. Writes a comparison table under `<out>/sweeps`.
pub fn sweep(base: &ExperimentConfig, axis: Axis, values: &[f64], opts: &Options) -> Result<Vec<SweepPoint>> {
    let mut points = Vec::new();
    for &value in values {
        let mut cfg = base.clone();
        let outcome = axis.apply(&mut cfg, value).and_then(|_| {
            let mut p = Pipeline::new(cfg.clone(), Options { build_deps: true, ..opts.clone() })?;
            p.run(&[Stage::Report])?;
            let metrics = match opts.dry_run {
                true => None,
                false => p.metrics()?.at_step(cfg.uq.report_step).copied(),
            };
            Ok((p.hash.clone(), metrics))
        });
        points.push(match outcome {
            Ok((hash, metrics)) => SweepPoint {
                value,
                config_hash: hash,
                error: None,
                metrics,
            },
            Err(e) => {
                if opts.verbose {
                    eprintln!("[sweep] {}={value} failed: {e:#}", axis.name());
                }
                SweepPoint {
                    value,
                    config_hash: if cfg.validate().is_ok() { cfg.hash() } else { String::new() },
                    error: Some(format!("{e:#}")),
                    metrics: None,
                }
            }
        });
    }
    if opts.dry_run {
        return Ok(points);
    }
    let dir = opts.out.join("sweeps");
    let stem = format!("{}-{}-seed{}", axis.name(), short(&base.hash()), base.training.seed);
    let mut w = csv::Writer::from_path(dir_file(&dir, &format!("{stem}.csv"))?)?;
    w.write_record([axis.name(), "config_hash", "status", "step", "mean_rel_l2", "mean_r2", "var_rel_l2", "var_r2"])?;
    for p in &points {
        let status = p.error.as_deref().map_or("ok".to_string(), |e| format!("error: {e}"));
        let mut rec = vec![p.value.to_string(), p.config_hash.clone(), status];
        match p.metrics {
            Some(m) => rec.extend(
                [m.step as f64, m.mean_rel_l2, m.mean_r2, m.var_rel_l2, m.var_r2].iter().map(|v| v.to_string()),
            ),
            None => rec.extend(std::iter::repeat_n(String::new(), 5)),
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    let col = |f: fn(&MetricRow) -> f64| -> Vec<(f64, f64)> {
        points.iter().filter_map(|p| p.metrics.map(|m| (p.value, f(&m)))).collect()
    };
    plot::save(
        &dir.join(format!("{stem}.svg")),
        &Plot {
            title: format!("R2 at step {} across {}", base.uq.report_step, axis.name()),
            x_label: axis.name().into(),
            y_label: "R2".into(),
            log_y: false,
            series: vec![
                Series {
                    label: "mean".into(),
                    points: col(|m| m.mean_r2),
                    style: Style::Points,
                },
                Series {
                    label: "variance".into(),
                    points: col(|m| m.var_r2),
                    style: Style::Points,
                },
            ],
        },
    )?;
    Ok(points)
}

fn dir_file(dir: &Path, name: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    Ok(dir.join(name))
}
