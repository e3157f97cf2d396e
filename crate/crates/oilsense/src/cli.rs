//! The `oilsense` command line.

use std::ffi::OsString;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use oilsense_core::enhance::{enhance_image, EnhanceError, EnhanceReport, ObjectiveWeights, ScoreParams};
use oilsense_core::logic::{ground_scene, init_rule_params, train_rule_params, LogicError, Rule, RuleParams, RuleTrainConfig};
use oilsense_core::pipeline::{
    classify_pairs, relation_ablation, relation_table, run_eval_on_grid, run_inference, Models, PipelineError,
};
use oilsense_core::relnet::{self, PairSample, RelNetError, RelNetParams};
use oilsense_core::scenegen::{gen_pair_dataset, gen_scene, oracle_pairs, GenConfig, GenError};
use oilsense_core::Scene;

use crate::config::{load_config, Loaded, PipelineConfig, RelTrainFile};
use crate::error::{read_bytes, write_bytes, Error, Result};
use crate::pnm::{read_pnm, write_pnm};
use crate::report::{
    ablation_table, decision_table, loss_csv, rule_loss_csv, to_json, EnhanceFileReport, EvalFileReport,
    InferFileReport, BASELINE_NAME,
};
use crate::rules::{check_params, load_params, load_rules, save_params};
use crate::scene_json::{load_scene, load_scene_dir, save_scene};
use crate::weights::{load_weights, save_weights};

#[derive(Debug, Parser)]
#[command(name = "oilsense", version, about = "Oil-leak scene reasoning: enhancement, relations, fuzzy rules")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GenKind {
    Scenes,
    Pairs,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Split-histogram contrast enhancement of a PGM/PPM image
    Enhance {
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Brightness, contrast and detail weights
        #[arg(long, default_value = "1,1,1")]
        weights: String,
        /// Also write a JSON report next to the output image
        #[arg(long)]
        report: bool,
    },
    /// Generate synthetic scenes or labeled relation pairs
    Gen {
        kind: GenKind,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Number of scenes or pairs
        #[arg(long)]
        count: Option<usize>,
    },
    /// Train the relation classifier on a pair dataset
    TrainRel {
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// CSV loss log; defaults to <out>.loss.csv
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Learn rule weights from labeled scenes
    TrainRules {
        #[arg(long)]
        rules: PathBuf,
        #[arg(long)]
        scenes: PathBuf,
        #[arg(long)]
        relnet: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// CSV loss log; defaults to <out>.loss.csv
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Leak probability for one scene
    Infer {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        scene: PathBuf,
        /// Write the JSON report here instead of stdout
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Pipeline versus baseline on a labeled corpus
    Eval {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        scenes: PathBuf,
        /// Also retrain and score the relation classifier per input variant
        #[arg(long)]
        ablations: bool,
        /// Write the JSON report here
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

pub const DEFAULT_SCENE_COUNT: usize = 100;
pub const DEFAULT_PAIR_COUNT: usize = 2000;
pub const PAIRS_FILE: &str = "pairs.jsonl";

/// Parses `args` (program name first), runs the command and returns the
/// process exit code. Errors go to stderr.
pub fn main_with_args<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Enhance { input, out, weights, report } => enhance(&input, &out, &weights, report),
        Command::Gen { kind, config, out, count } => gen(kind, &config, &out, count),
        Command::TrainRel { pairs, config, out, log } => train_rel(&pairs, &config, &out, log),
        Command::TrainRules { rules, scenes, relnet, out, config, log } => {
            train_rules(&rules, &scenes, &relnet, &out, config.as_deref(), log)
        }
        Command::Infer { config, scene, out } => infer(&config, &scene, out.as_deref()),
        Command::Eval { config, scenes, ablations, out } => eval(&config, &scenes, ablations, out.as_deref()),
    }
}

fn stdout(text: &str) -> Result<()> {
    std::io::stdout().write_all(text.as_bytes()).map_err(|e| Error::io("<stdout>", e))
}

fn default_log(out: &Path) -> PathBuf {
    out.with_extension("loss.csv")
}

pub fn parse_weights(s: &str) -> Result<ObjectiveWeights> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let bad = || Error::Usage(format!("--weights expects three comma-separated numbers, got `{s}`"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let mut w = [0.0; 3];
    for (slot, p) in w.iter_mut().zip(&parts) {
        *slot = p.parse().map_err(|_| bad())?;
    }
    ObjectiveWeights::new(w[0], w[1], w[2]).map_err(|e| Error::Usage(format!("--weights: {e}")))
}

fn enhance_file(path: &Path, weights: &ObjectiveWeights) -> Result<(oilsense_core::enhance::Image, EnhanceReport)> {
    let img = read_pnm(&read_bytes(path)?).map_err(|e| Error::data(path, e))?;
    enhance_image(&img, weights, &ScoreParams::default()).map_err(|e| match e {
        EnhanceError::InvalidWeights => Error::Usage(e.to_string()),
        other => Error::data(path, other),
    })
}

fn enhance(input: &Path, out: &Path, weights: &str, report: bool) -> Result<()> {
    let weights = parse_weights(weights)?;
    let (img, r) = enhance_file(input, &weights)?;
    write_bytes(out, &write_pnm(&img))?;
    if report {
        let rep = EnhanceFileReport { input: input.display().to_string(), output: out.display().to_string(), report: r };
        write_bytes(&out.with_extension("json"), to_json(&rep).as_bytes())?;
    }
    Ok(())
}

fn gen_error(path: &Path, e: GenError) -> Error {
    match e {
        GenError::Scene(s) => Error::data(path, s),
        other => Error::config(path, other),
    }
}

fn gen(kind: GenKind, config: &Path, out: &Path, count: Option<usize>) -> Result<()> {
    let cfg: Loaded<GenConfig> = load_config(config)?;
    cfg.value.validate().map_err(|e| Error::config(config, e))?;
    match kind {
        GenKind::Scenes => {
            for i in 0..count.unwrap_or(DEFAULT_SCENE_COUNT) {
                let scene = gen_scene(&cfg.value, i as u64).map_err(|e| gen_error(config, e))?;
                save_scene(&out.join(format!("scene_{i:05}.json")), &scene)?;
            }
        }
        GenKind::Pairs => {
            let pairs = gen_pair_dataset(&cfg.value, count.unwrap_or(DEFAULT_PAIR_COUNT)).map_err(|e| gen_error(config, e))?;
            crate::pairs::save_pairs(&out.join(PAIRS_FILE), &pairs)?;
        }
    }
    Ok(())
}

fn relnet_error(path: &Path, e: RelNetError) -> Error {
    match e {
        RelNetError::NonFiniteLoss { .. } => Error::Numeric(e.to_string()),
        RelNetError::InvalidConfig(_) | RelNetError::InvalidTrainConfig(_) => Error::config(path, e),
        other => Error::data(path, other),
    }
}

fn train_rel(pairs: &Path, config: &Path, out: &Path, log: Option<PathBuf>) -> Result<()> {
    let cfg: Loaded<RelTrainFile> = load_config(config)?;
    let RelTrainFile { network, train, init_seed } = cfg.value;
    network.validate().map_err(|e| Error::config(config, e))?;
    train.validate().map_err(|e| Error::config(config, e))?;
    let samples: Vec<PairSample> = crate::pairs::load_pairs(pairs)?.into_iter().map(|p| p.sample).collect();
    let init = RelNetParams::init(network, init_seed).map_err(|e| relnet_error(config, e))?;
    let (trained, history) = relnet::train(&init, &samples, &train).map_err(|e| relnet_error(pairs, e))?;
    save_weights(out, &trained)?;
    write_bytes(&log.unwrap_or_else(|| default_log(out)), loss_csv(&history).as_bytes())?;
    if let Some(last) = history.last() {
        eprintln!("trained {} epochs: loss {:.4}, train accuracy {:.3}", history.len(), last.loss, last.train_acc);
    }
    Ok(())
}

fn logic_error(path: &Path, e: LogicError) -> Error {
    match e {
        LogicError::NonFinite(_) => Error::Numeric(e.to_string()),
        LogicError::InvalidConfig(_) => Error::config(path, e),
        other => Error::data(path, other),
    }
}

fn pipeline_error(path: &Path, e: PipelineError) -> Error {
    match e {
        PipelineError::RelNet(r) => relnet_error(path, r),
        PipelineError::Logic(l) => logic_error(path, l),
        PipelineError::InvalidThreshold(_) | PipelineError::InvalidIouGrid => Error::config(path, e),
        other => Error::data(path, other),
    }
}

/// Fails with a config error when a file named by a config is missing.
fn require_file(config: &Path, path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::config(config, format!("referenced file {} not found", path.display())))
    }
}

fn split_rules(parsed: Vec<(Rule, Option<RuleParams>)>) -> (Vec<Rule>, Option<Vec<RuleParams>>) {
    let (rules, params): (Vec<Rule>, Vec<Option<RuleParams>>) = parsed.into_iter().unzip();
    (rules, params.into_iter().collect())
}

fn train_rules(
    rules_path: &Path,
    scenes: &Path,
    relnet_path: &Path,
    out: &Path,
    config: Option<&Path>,
    log: Option<PathBuf>,
) -> Result<()> {
    let cfg: RuleTrainConfig = match config {
        Some(p) => load_config::<RuleTrainConfig>(p)?.value,
        None => RuleTrainConfig::default(),
    };
    let (rules, inline) = split_rules(load_rules(rules_path)?);
    let relnet = load_weights(relnet_path)?;
    let corpus = load_scene_dir(scenes)?;
    let mut data = Vec::with_capacity(corpus.len());
    for (path, scene) in &corpus {
        let label = scene.leak_label().ok_or_else(|| Error::data(path, "scene has no leak_label"))?;
        let table = relation_table(&classify_pairs(&relnet, scene).map_err(|e| pipeline_error(path, e))?);
        data.push(ground_scene(&rules, scene, &table, label).map_err(|e| logic_error(path, e))?);
    }
    let init = inline.unwrap_or_else(|| init_rule_params(&rules, cfg.seed));
    check_params(&rules, &init).map_err(|m| Error::data(rules_path, m))?;
    let cfg_path = config.unwrap_or(rules_path);
    let (params, history) = train_rule_params(&rules, &init, &data, &cfg).map_err(|e| logic_error(cfg_path, e))?;
    save_params(out, &params)?;
    write_bytes(&log.unwrap_or_else(|| default_log(out)), rule_loss_csv(&history).as_bytes())?;
    eprintln!(
        "trained {} steps on {} scenes: loss {:.4} -> {:.4}",
        history.len() - 1,
        data.len(),
        history[0],
        history[history.len() - 1]
    );
    Ok(())
}

struct Pipeline {
    cfg: Loaded<PipelineConfig>,
    path: PathBuf,
    models: Models,
}

fn load_pipeline(path: &Path) -> Result<Pipeline> {
    let cfg: Loaded<PipelineConfig> = load_config(path)?;
    cfg.value.validate().map_err(|m| Error::config(path, m))?;
    let rules_path = cfg.resolve(&cfg.value.rules);
    let relnet_path = cfg.resolve(&cfg.value.relnet);
    require_file(path, &rules_path)?;
    require_file(path, &relnet_path)?;
    let (rules, inline) = split_rules(load_rules(&rules_path)?);
    let params = match &cfg.value.params {
        Some(p) => {
            let p = cfg.resolve(p);
            require_file(path, &p)?;
            let params = load_params(&p)?;
            check_params(&rules, &params).map_err(|m| Error::data(&p, m))?;
            params
        }
        None => inline.ok_or_else(|| Error::config(path, "no `params` file and the rules carry no inline parameters"))?,
    };
    let relnet = load_weights(&relnet_path)?;
    Ok(Pipeline { cfg, path: path.to_path_buf(), models: Models { relnet, rules, params } })
}

fn enhance_scene_image(p: &Pipeline, scene_path: &Path, scene: &Scene) -> Result<Option<EnhanceReport>> {
    let (true, Some(image)) = (p.cfg.value.enhance.enabled, scene.image_path()) else { return Ok(None) };
    let dir = scene_path.parent().unwrap_or(Path::new(""));
    let (_, report) = enhance_file(&dir.join(image), &p.cfg.value.enhance.weights)?;
    Ok(Some(report))
}

fn infer(config: &Path, scene_path: &Path, out: Option<&Path>) -> Result<()> {
    let p = load_pipeline(config)?;
    let scene = load_scene(scene_path)?;
    let enhancement = enhance_scene_image(&p, scene_path, &scene)?;
    let inference = run_inference(&p.models, &scene, p.cfg.value.threshold).map_err(|e| pipeline_error(scene_path, e))?;
    let report = InferFileReport {
        config_hash: p.cfg.hash.clone(),
        seed: p.cfg.value.seed,
        scene: scene_path.display().to_string(),
        enhancement,
        inference,
    };
    match out {
        Some(o) => write_bytes(o, to_json(&report).as_bytes()),
        None => stdout(&to_json(&report)),
    }
}

fn eval(config: &Path, scenes_dir: &Path, ablations: bool, out: Option<&Path>) -> Result<()> {
    let p = load_pipeline(config)?;
    let corpus = load_scene_dir(scenes_dir)?;
    let scenes: Vec<Scene> = corpus.iter().map(|(_, s)| s.clone()).collect();
    let v = &p.cfg.value;
    let eval = run_eval_on_grid(&p.models, &scenes, v.threshold, &v.iou_grid).map_err(|e| match e {
        PipelineError::Unlabeled(i) => Error::data(&corpus[i].0, "scene has no leak_label"),
        other => pipeline_error(scenes_dir, other),
    })?;
    let mut text = format!("{} scenes, threshold {}\n\n", eval.scenes, eval.threshold);
    text.push_str(&decision_table(&eval));

    let relation_ablation = if ablations {
        let ab = v.ablation.as_ref().ok_or_else(|| Error::config(&p.path, "--ablations needs an `ablation` section"))?;
        let train_path = p.cfg.resolve(&ab.train_pairs);
        require_file(&p.path, &train_path)?;
        let train: Vec<PairSample> = crate::pairs::load_pairs(&train_path)?.into_iter().map(|x| x.sample).collect();
        let test: Vec<PairSample> = match &ab.test_pairs {
            Some(t) => {
                let t = p.cfg.resolve(t);
                require_file(&p.path, &t)?;
                crate::pairs::load_pairs(&t)?.into_iter().map(|x| x.sample).collect()
            }
            None => {
                let mut all = Vec::new();
                for (path, s) in &corpus {
                    all.extend(oracle_pairs(s, ab.network.grid).map_err(|e| Error::data(path, e))?);
                }
                all
            }
        };
        ab.network.validate().map_err(|e| Error::config(&p.path, e))?;
        ab.train.validate().map_err(|e| Error::config(&p.path, e))?;
        let rows = relation_ablation(&train, &test, ab.network, &ab.train, v.seed)
            .map_err(|e| pipeline_error(&train_path, e))?;
        text.push('\n');
        text.push_str(&ablation_table(&rows));
        Some(rows)
    } else {
        None
    };
    stdout(&text)?;
    if let Some(o) = out {
        let report = EvalFileReport {
            config_hash: p.cfg.hash.clone(),
            seed: v.seed,
            baseline: BASELINE_NAME,
            eval,
            relation_ablation,
        };
        write_bytes(o, to_json(&report).as_bytes())?;
    }
    Ok(())
}
