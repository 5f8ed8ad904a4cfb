//! Command-line front end. Each subcommand reads and writes the formats in
//! [`crate::data_io`] and records itself in the output directory's manifest.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use crate::data_io::manifest::{hash_file, sha256_hex, unix_now, StageRecord};
use crate::data_io::{self, svg, write_atomic, RunManifest};
use crate::lesion_model::{self, LesionMap, RoiAtlas};
use crate::lsm_stats::{self, StrengthMetric};
use crate::perturb::{self, AssessmentItem, LesionScope, ToyConfig, ToyTransformer};
use crate::projection::{self, EntropyBasis};
use crate::synth::{self, PlantedMap, SynthSpec};
use crate::taxonomy::{self, ErrorProfile, LexicalResources};
use crate::validation::{self, CohortMember, Comparator};
use crate::{stats, Error, Result};

/// Environment variable holding the default master seed.
pub const SEED_ENV: &str = "BLUM_SEED";

#[derive(Parser, Debug)]
#[command(name = "blum", version, about = "Symptom-to-lesion mapping of lesioned language models")]
pub struct Cli {
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// JSON object of flag values; its entries take precedence over the command line.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true, env = SEED_ENV, default_value_t = 0)]
    pub seed: u64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Score responses into error profiles.
    Classify(ClassifyArgs),
    /// Fit the symptom-to-lesion model.
    Fit(CohortArgs),
    /// Leave-one-out evaluation of the symptom-to-lesion model.
    EvalLoo(CohortArgs),
    /// Lesion the toy transformer over a grid and record its responses.
    PerturbSweep(SweepArgs),
    /// Filter degenerate condition profiles and predict their lesion maps.
    Project(ProjectArgs),
    /// Compare predicted maps with matched cohort lesions.
    Validate(ValidateArgs),
    /// Mass-univariate and stepwise lesion-symptom mapping.
    Lsm(LsmArgs),
    /// Ventral versus dorsal stream index of extreme conditions.
    DualStream(DualStreamArgs),
    /// Generate a synthetic cohort.
    Synth(SynthArgs),
    /// Summarize validation and dual-stream outputs with plots.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
pub struct LexiconArgs {
    /// Directory with wordlist.txt, pronunciations.tsv, norms.tsv and optional
    /// synonyms.tsv and refusals.txt; the bundled lexicon by default.
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
}

impl LexiconArgs {
    fn load(&self) -> Result<LexicalResources> {
        match &self.lexicon {
            Some(dir) => LexicalResources::from_dir(dir),
            None => Ok(LexicalResources::bundled()),
        }
    }
}

#[derive(Args, Debug)]
pub struct ClassifyArgs {
    /// responses.csv (`subject_id,task,item_id,target,response`).
    #[arg(long, conflicts_with = "conditions")]
    pub responses: Option<PathBuf>,
    /// Condition responses from `perturb-sweep`; needs `--items`.
    #[arg(long)]
    pub conditions: Option<PathBuf>,
    #[arg(long)]
    pub items: Option<PathBuf>,
    #[command(flatten)]
    pub lexicon: LexiconArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct CohortArgs {
    #[arg(long)]
    pub profiles: PathBuf,
    #[arg(long)]
    pub lesions: PathBuf,
    #[arg(long)]
    pub atlas: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ScopeArg {
    Attention,
    AttentionMlp,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    /// Sweep layers 1..=N; also the depth of the built-in toy model.
    #[arg(long, default_value_t = 8)]
    pub layers: u32,
    /// `start:stop:step` or a comma list.
    #[arg(long, default_value = "10:90:10")]
    pub pcts: String,
    #[arg(long, default_value = "0:1.9:0.1")]
    pub sigmas: String,
    /// Toy weights JSON; the fixture model for the items by default.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub items: Option<PathBuf>,
    #[command(flatten)]
    pub lexicon: LexiconArgs,
    #[arg(long, value_enum, default_value = "attention")]
    pub scope: ScopeArg,
    /// Report the grid without running it.
    #[arg(long)]
    pub dry_run: bool,
    /// Also write the unlesioned weights as `toy_model.json`.
    #[arg(long)]
    pub save_model: bool,
    #[arg(long, required_unless_present = "dry_run")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum EntropyArg {
    Errors,
    Full,
}

#[derive(Args, Debug)]
pub struct ProjectArgs {
    /// Condition profiles.
    #[arg(long)]
    pub profiles: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, value_enum, default_value = "errors")]
    pub entropy_basis: EntropyArg,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ComparatorArg {
    Median,
    Mean,
}

#[derive(Args, Debug)]
pub struct ValidateArgs {
    #[arg(long)]
    pub predicted: PathBuf,
    /// Condition profiles; rows without a prediction are ignored.
    #[arg(long)]
    pub profiles: PathBuf,
    #[arg(long)]
    pub cohort_profiles: PathBuf,
    #[arg(long)]
    pub lesions: PathBuf,
    #[arg(long)]
    pub atlas: Option<PathBuf>,
    #[arg(long, default_value_t = validation::DEFAULT_K)]
    pub k: usize,
    #[arg(long, default_value_t = validation::DEFAULT_N_PERM)]
    pub n_perm: usize,
    #[arg(long, value_enum, default_value = "median")]
    pub comparator: ComparatorArg,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MetricArg {
    SlopeLogp,
    AbsT,
}

#[derive(Args, Debug)]
pub struct LsmArgs {
    #[arg(long)]
    pub profiles: PathBuf,
    #[arg(long)]
    pub lesions: PathBuf,
    #[arg(long)]
    pub atlas: Option<PathBuf>,
    #[arg(long, default_value_t = lsm_stats::DEFAULT_N_PERM)]
    pub n_perm: usize,
    #[arg(long, default_value_t = lsm_stats::DEFAULT_P_ENTER)]
    pub p_enter: f64,
    #[arg(long, default_value_t = lsm_stats::DEFAULT_P_REMOVE)]
    pub p_remove: f64,
    /// Another task's lsm.csv for cross-task rank correspondence.
    #[arg(long)]
    pub compare: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "slope-logp")]
    pub metric: MetricArg,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct DualStreamArgs {
    #[arg(long)]
    pub predicted: PathBuf,
    #[arg(long)]
    pub profiles: PathBuf,
    #[arg(long)]
    pub atlas: Option<PathBuf>,
    #[arg(long, default_value_t = validation::DEFAULT_TOP_N)]
    pub top_n: usize,
    #[arg(long, default_value_t = validation::DEFAULT_DUAL_PERM)]
    pub n_perm: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PresetArg {
    DualStream,
    Null,
    Dense,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 410)]
    pub subjects: usize,
    #[arg(long, value_enum, default_value = "dual-stream")]
    pub preset: PresetArg,
    #[arg(long, default_value_t = 0.05)]
    pub noise_sd: f64,
    #[arg(long)]
    pub items: Option<PathBuf>,
    #[arg(long)]
    pub atlas: Option<PathBuf>,
    #[command(flatten)]
    pub lexicon: LexiconArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// Directory written by `validate`.
    #[arg(long)]
    pub validation: PathBuf,
    /// Directory written by `dual-stream`.
    #[arg(long)]
    pub dual_stream: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

// ---- argument helpers -----------------------------------------------------

/// Parse `start:stop:step` (stop included within 1e-9) or a comma list.
pub fn parse_range(text: &str) -> Result<Vec<f64>> {
    let bad = |m: String| Error::Config(format!("range {text:?}: {m}"));
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad(format!("{s:?} is not a number")));
    let parts: Vec<&str> = text.split(':').collect();
    match parts.len() {
        1 => text.split(',').map(num).collect(),
        3 => {
            let (start, stop, step) = (num(parts[0])?, num(parts[1])?, num(parts[2])?);
            if !(step > 0.0) || stop < start {
                return Err(bad("need step > 0 and stop >= start".into()));
            }
            let n = ((stop - start) / step + 1e-9).floor() as usize;
            // integer multiples keep grid values exact
            Ok((0..=n).map(|i| start + i as f64 * step).map(|v| (v * 1e9).round() / 1e9).collect())
        }
        _ => Err(bad("expected start:stop:step or a comma list".into())),
    }
}

fn parse_int_range(text: &str) -> Result<Vec<u32>> {
    parse_range(text)?
        .into_iter()
        .map(|v| {
            if v >= 0.0 && v.fract() == 0.0 {
                Ok(v as u32)
            } else {
                Err(Error::Config(format!("{v} in {text:?} is not a non-negative integer")))
            }
        })
        .collect()
}

fn load_atlas(path: &Option<PathBuf>) -> Result<RoiAtlas> {
    match path {
        Some(p) => data_io::read_atlas(p),
        None => Ok(RoiAtlas::default_language()),
    }
}

fn load_items(path: &Option<PathBuf>) -> Result<Vec<AssessmentItem>> {
    match path {
        Some(p) => data_io::read_items(p),
        None => Ok(perturb::bundled_items()),
    }
}

fn base_name(p: &Path) -> String {
    p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| p.display().to_string())
}

fn join_cohort(profiles: &Path, lesions: &Path, atlas: &RoiAtlas) -> Result<Vec<CohortMember>> {
    let profiles = data_io::read_profiles(profiles)?;
    let maps: BTreeMap<String, LesionMap> = data_io::read_lesions(lesions, atlas)?.into_iter().collect();
    if profiles.len() != maps.len() {
        return Err(Error::Schema(format!(
            "{} profiles but {} lesion maps",
            profiles.len(),
            maps.len()
        )));
    }
    profiles
        .into_iter()
        .map(|(id, profile)| {
            let map = maps
                .get(&id)
                .cloned()
                .ok_or_else(|| Error::Schema(format!("subject {id} has a profile but no lesion map")))?;
            Ok(CohortMember { id, profile, map })
        })
        .collect()
}

/// Tracks one stage's inputs and outputs for the manifest.
struct Stage {
    name: &'static str,
    out: PathBuf,
    seed: Option<u64>,
    params: Value,
    inputs: BTreeMap<String, String>,
    outputs: BTreeMap<String, String>,
    started: u64,
}

impl Stage {
    fn new(name: &'static str, out: &Path, seed: Option<u64>, params: Value) -> Result<Self> {
        std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
        Ok(Stage {
            name,
            out: out.to_path_buf(),
            seed,
            params,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            started: unix_now(),
        })
    }

    fn input(&mut self, path: &Path) -> Result<()> {
        self.inputs.insert(base_name(path), hash_file(path)?);
        Ok(())
    }

    fn input_opt(&mut self, path: &Option<PathBuf>) -> Result<()> {
        match path {
            Some(p) => self.input(p),
            None => Ok(()),
        }
    }

    fn write(&mut self, name: &str, text: &str) -> Result<()> {
        write_atomic(&self.out.join(name), text.as_bytes())?;
        self.outputs.insert(name.to_string(), sha256_hex(text.as_bytes()));
        Ok(())
    }

    fn finish(self, summary: Value) -> Result<Value> {
        let mut manifest = RunManifest::load_or_new(&self.out)?;
        manifest.record(
            self.name,
            StageRecord {
                seed: self.seed,
                params: self.params,
                inputs: self.inputs,
                outputs: self.outputs,
                started_unix: self.started,
                finished_unix: unix_now(),
            },
        );
        manifest.save(&self.out)?;
        Ok(summary)
    }
}

fn pretty(v: &impl serde::Serialize) -> Result<String> {
    Ok(serde_json::to_string_pretty(v)? + "\n")
}

// ---- stages ----------------------------------------------------------------

fn classify_cmd(a: &ClassifyArgs) -> Result<Value> {
    let res = a.lexicon.load()?;
    let mut stage = Stage::new("classify", &a.out, None, json!({}))?;
    if let Some(path) = &a.responses {
        stage.input(path)?;
        let rows = data_io::read_responses(path)?;
        let mut by_subject: BTreeMap<&str, (taxonomy::Task, Vec<taxonomy::ResponseCategory>)> = BTreeMap::new();
        let mut order = Vec::new();
        let mut scored = data_io::CsvOut::new(&["subject_id", "item_id", "category"]);
        for r in &rows {
            let c = taxonomy::classify(&r.target, r.response.as_deref(), &res)?;
            scored.row(&[r.subject_id.as_str(), &r.item_id, c.label()]);
            let entry = by_subject.entry(&r.subject_id).or_insert_with(|| {
                order.push(r.subject_id.as_str());
                (r.task, Vec::new())
            });
            if entry.0 != r.task {
                return Err(Error::Schema(format!("subject {} mixes tasks", r.subject_id)));
            }
            entry.1.push(c);
        }
        let profiles: Vec<(String, ErrorProfile)> = order
            .iter()
            .map(|id| {
                let (task, cats) = &by_subject[id];
                Ok((id.to_string(), taxonomy::build_profile(cats, *task)?))
            })
            .collect::<Result<_>>()?;
        stage.write("profiles.csv", &data_io::profiles_csv(profiles.iter().map(|(i, p)| (i.as_str(), p))))?;
        stage.write("scored.csv", &scored.finish())?;
        let n = profiles.len();
        return stage.finish(json!({ "stage": "classify", "profiles": n }));
    }
    let Some(path) = &a.conditions else {
        return Err(Error::Config("classify needs --responses or --conditions".into()));
    };
    stage.input(path)?;
    stage.input_opt(&a.items)?;
    let items = load_items(&a.items)?;
    let by_id: BTreeMap<&str, &AssessmentItem> = items.iter().map(|i| (i.item_id.as_str(), i)).collect();
    let rows = data_io::read_conditions(path, 0)?;
    let mut grouped: Vec<(String, Vec<perturb::ItemResponse>, Vec<AssessmentItem>)> = Vec::new();
    for r in rows {
        let item = by_id
            .get(r.item_id.as_str())
            .ok_or_else(|| Error::Schema(format!("condition {} uses unknown item {}", r.condition_id, r.item_id)))?;
        if grouped.last().is_none_or(|g| g.0 != r.condition_id) {
            grouped.push((r.condition_id.clone(), Vec::new(), Vec::new()));
        }
        let g = grouped.last_mut().expect("just pushed");
        g.1.push(perturb::ItemResponse { item_id: r.item_id, response: r.response, non_finite: false });
        g.2.push((*item).clone());
    }
    let profiles: Vec<(String, ErrorProfile)> = grouped
        .iter()
        .map(|(id, resp, its)| Ok((id.clone(), perturb::score_responses(its, resp, &res)?)))
        .collect::<Result<_>>()?;
    stage.write("condition_profiles.csv", &data_io::profiles_csv(profiles.iter().map(|(i, p)| (i.as_str(), p))))?;
    let n = profiles.len();
    stage.finish(json!({ "stage": "classify", "conditions": n }))
}

fn cohort_pairs(members: &[CohortMember]) -> Vec<(ErrorProfile, LesionMap)> {
    members.iter().map(|m| (m.profile.clone(), m.map.clone())).collect()
}

fn fit_cmd(a: &CohortArgs) -> Result<Value> {
    let atlas = load_atlas(&a.atlas)?;
    let mut stage = Stage::new("fit", &a.out, None, json!({}))?;
    stage.input(&a.profiles)?;
    stage.input(&a.lesions)?;
    stage.input_opt(&a.atlas)?;
    let cohort = join_cohort(&a.profiles, &a.lesions, &atlas)?;
    let model = lesion_model::fit(&cohort_pairs(&cohort), &atlas)?;
    stage.write("model.json", &data_io::model_json(&model)?)?;
    let d = &model.diagnostics;
    let summary = json!({ "stage": "fit", "subjects": d.n_subjects, "rank": d.rank, "rank_deficient": d.rank_deficient });
    stage.finish(summary)
}

fn loo_cmd(a: &CohortArgs) -> Result<Value> {
    let atlas = load_atlas(&a.atlas)?;
    let mut stage = Stage::new("eval-loo", &a.out, None, json!({}))?;
    stage.input(&a.profiles)?;
    stage.input(&a.lesions)?;
    stage.input_opt(&a.atlas)?;
    let cohort = join_cohort(&a.profiles, &a.lesions, &atlas)?;
    let report = lesion_model::evaluate_loo(&cohort_pairs(&cohort), &atlas)?;
    stage.write("loo.csv", &data_io::loo_csv(&report))?;
    let summary = json!({ "stage": "eval-loo", "subjects": report.n_subjects, "mean_r2": report.mean_r2() });
    stage.write("loo.json", &pretty(&summary)?)?;
    stage.finish(summary)
}

fn sweep_cmd(a: &SweepArgs, seed: u64) -> Result<Value> {
    let pcts = parse_int_range(&a.pcts)?;
    let sigmas = parse_range(&a.sigmas)?;
    let specs = perturb::enumerate_sweep(a.layers, &pcts, &sigmas, seed)?;
    let grid = json!({
        "layers": a.layers,
        "pcts": pcts,
        "sigmas": sigmas,
        "scope": format!("{:?}", a.scope),
    });
    if a.dry_run {
        return Ok(json!({ "stage": "perturb-sweep", "dry_run": true, "conditions": specs.len(), "grid": grid }));
    }
    let out = a.out.as_ref().expect("clap requires --out without --dry-run");
    let res = a.lexicon.load()?;
    let items = load_items(&a.items)?;
    let mut stage = Stage::new("perturb-sweep", out, Some(seed), grid)?;
    stage.input_opt(&a.items)?;
    stage.input_opt(&a.model)?;
    let model = match &a.model {
        Some(p) => ToyTransformer::from_json(&data_io::read_text(p)?)?,
        None => {
            let cfg = ToyConfig { layers: a.layers as usize, ..ToyConfig::default() };
            perturb::fixture_for_items(&cfg, &items, &res)?
        }
    };
    if a.save_model {
        stage.write("toy_model.json", &model.to_json()?)?;
    }
    let scope = match a.scope {
        ScopeArg::Attention => LesionScope::Attention,
        ScopeArg::AttentionMlp => LesionScope::AttentionAndMlp,
    };
    let results = perturb::run_sweep(&model, &specs, &items, &res, scope)?;
    let non_finite = results.iter().flat_map(|r| &r.responses).filter(|r| r.non_finite).count();
    stage.write("conditions.csv", &data_io::conditions_csv(&results))?;
    let ids: Vec<String> = results.iter().map(|r| r.spec.condition_id()).collect();
    stage.write(
        "condition_profiles.csv",
        &data_io::profiles_csv(ids.iter().map(String::as_str).zip(results.iter().map(|r| &r.profile))),
    )?;
    stage.finish(json!({ "stage": "perturb-sweep", "conditions": results.len(), "non_finite_responses": non_finite }))
}

fn project_cmd(a: &ProjectArgs) -> Result<Value> {
    let basis = match a.entropy_basis {
        EntropyArg::Errors => EntropyBasis::Errors,
        EntropyArg::Full => EntropyBasis::Full,
    };
    let mut stage = Stage::new("project", &a.out, None, json!({ "entropy_basis": format!("{basis:?}") }))?;
    stage.input(&a.profiles)?;
    stage.input(&a.model)?;
    let profiles = data_io::read_profiles(&a.profiles)?;
    let model = data_io::read_model(&a.model)?;
    let verdicts: Vec<_> = profiles.iter().map(|(_, p)| projection::degeneracy_filter_with(p, basis)).collect();
    stage.write(
        "filter_report.csv",
        &data_io::filter_report_csv(profiles.iter().map(|(i, _)| i.as_str()).zip(&verdicts)),
    )?;
    let kept: Vec<(String, ErrorProfile)> =
        profiles.into_iter().zip(&verdicts).filter(|(_, v)| v.keep).map(|(p, _)| p).collect();
    let predicted = projection::project(&kept, &model)?;
    let clamped: usize = predicted.iter().map(|(_, p)| p.clamped).sum();
    stage.write(
        "predicted.csv",
        &data_io::maps_csv("condition_id", &model.atlas, predicted.iter().map(|(i, p)| (i.as_str(), &p.map))),
    )?;
    stage.write("atlas.json", &data_io::atlas_json(&model.atlas)?)?;
    stage.finish(json!({
        "stage": "project",
        "conditions": verdicts.len(),
        "surviving": predicted.len(),
        "clamped_rois": clamped,
    }))
}

fn condition_triples(predicted: &Path, profiles: &Path, atlas: &RoiAtlas) -> Result<Vec<(String, ErrorProfile, LesionMap)>> {
    let profiles: BTreeMap<String, ErrorProfile> = data_io::read_profiles(profiles)?.into_iter().collect();
    data_io::read_predicted(predicted, atlas)?
        .into_iter()
        .map(|(id, map)| {
            let p = profiles
                .get(&id)
                .cloned()
                .ok_or_else(|| Error::Schema(format!("predicted condition {id} has no profile")))?;
            Ok((id, p, map))
        })
        .collect()
}

fn validate_cmd(a: &ValidateArgs, seed: u64) -> Result<Value> {
    let comparator = match a.comparator {
        ComparatorArg::Median => Comparator::NullMedian,
        ComparatorArg::Mean => Comparator::NullMean,
    };
    let atlas = load_atlas(&a.atlas)?;
    let params = json!({ "k": a.k, "n_perm": a.n_perm, "comparator": format!("{comparator:?}") });
    let mut stage = Stage::new("validate", &a.out, Some(seed), params)?;
    for p in [&a.predicted, &a.profiles, &a.cohort_profiles, &a.lesions] {
        stage.input(p)?;
    }
    stage.input_opt(&a.atlas)?;
    let cohort = join_cohort(&a.cohort_profiles, &a.lesions, &atlas)?;
    let conditions = condition_triples(&a.predicted, &a.profiles, &atlas)?;
    let results = validation::validate_conditions(&conditions, &cohort, a.k, a.n_perm, seed)?;
    let records: Vec<_> = results.iter().map(|r| r.0.clone()).collect();
    stage.write("validation.csv", &data_io::validation_csv(&records))?;
    stage.write("matches.csv", &data_io::matches_csv(&results))?;
    let summary = validation::population_tests(&records, comparator)?;
    stage.write("validation_summary.json", &pretty(&summary)?)?;
    stage.finish(json!({
        "stage": "validate",
        "conditions": summary.n_conditions,
        "defined": summary.n_defined,
        "proportion_exceed": summary.proportion_exceed,
        "binomial_p": summary.binomial_p,
    }))
}

fn lsm_cmd(a: &LsmArgs, seed: u64) -> Result<Value> {
    let atlas = load_atlas(&a.atlas)?;
    let metric = match a.metric {
        MetricArg::SlopeLogp => StrengthMetric::SignedSlopeLogP,
        MetricArg::AbsT => StrengthMetric::AbsT,
    };
    let params = json!({ "n_perm": a.n_perm, "p_enter": a.p_enter, "p_remove": a.p_remove, "metric": format!("{metric:?}") });
    let mut stage = Stage::new("lsm", &a.out, Some(seed), params)?;
    stage.input(&a.profiles)?;
    stage.input(&a.lesions)?;
    stage.input_opt(&a.atlas)?;
    stage.input_opt(&a.compare)?;
    let cohort = join_cohort(&a.profiles, &a.lesions, &atlas)?;
    let profiles: Vec<ErrorProfile> = cohort.iter().map(|m| m.profile.clone()).collect();
    let maps: Vec<LesionMap> = cohort.iter().map(|m| m.map.clone()).collect();
    let behaviors = lsm_stats::zscored_counts(&profiles);
    let mut result = lsm_stats::mass_univariate(&behaviors, &maps, &atlas, a.n_perm, seed)?;
    result.task = profiles.first().map(|p| p.task);
    stage.write("lsm.csv", &data_io::lsm_csv(&result))?;
    let stepwise = lsm_stats::stepwise_all(&behaviors, &maps, &atlas, a.p_enter, a.p_remove)?;
    let skipped: Vec<&str> = behaviors.skipped.iter().map(|c| c.label()).collect();
    stage.write("stepwise.json", &pretty(&json!({ "models": stepwise, "skipped_categories": skipped }))?)?;
    let discoveries = result.cells.iter().filter(|c| c.q_fdr.is_some_and(|q| q < 0.05)).count();
    if let Some(other) = &a.compare {
        let other = data_io::read_lsm_str(&data_io::read_text(other)?, &other.display().to_string(), a.n_perm)?;
        let report = lsm_stats::cross_task_rank_correspondence(&result, &other, metric);
        stage.write("cross_task.json", &pretty(&report)?)?;
    }
    stage.finish(json!({ "stage": "lsm", "cells": result.cells.len(), "fdr_discoveries": discoveries }))
}

fn dual_cmd(a: &DualStreamArgs, seed: u64) -> Result<Value> {
    let atlas = load_atlas(&a.atlas)?;
    let mut stage = Stage::new("dual-stream", &a.out, Some(seed), json!({ "top_n": a.top_n, "n_perm": a.n_perm }))?;
    stage.input(&a.predicted)?;
    stage.input(&a.profiles)?;
    stage.input_opt(&a.atlas)?;
    let conditions = condition_triples(&a.predicted, &a.profiles, &atlas)?;
    let report = validation::dual_stream_analysis(&conditions, &atlas, a.top_n, a.n_perm, seed)?;
    stage.write("stream_index.csv", &data_io::stream_index_csv(&report))?;
    let mut json_report = serde_json::to_value(&report)?;
    if let Some(obj) = json_report.as_object_mut() {
        obj.remove("records");
    }
    stage.write("dual_stream.json", &pretty(&json_report)?)?;
    stage.finish(json!({ "stage": "dual-stream", "delta": report.delta, "p_perm": report.p_perm, "cohens_d": report.cohens_d }))
}

fn synth_cmd(a: &SynthArgs, seed: u64) -> Result<Value> {
    let atlas = load_atlas(&a.atlas)?;
    let items = load_items(&a.items)?;
    let res = a.lexicon.load()?;
    let planted = match a.preset {
        PresetArg::DualStream => PlantedMap::dual_stream(&atlas),
        PresetArg::Null => PlantedMap::null(&atlas),
        PresetArg::Dense => PlantedMap::dense(&atlas),
    };
    let mut spec = SynthSpec::new(a.subjects, &atlas, planted, a.noise_sd, seed);
    if let Some(first) = items.first() {
        spec.task = first.task;
    }
    let params = json!({ "subjects": a.subjects, "preset": format!("{:?}", a.preset), "noise_sd": a.noise_sd });
    let mut stage = Stage::new("synth", &a.out, Some(seed), params)?;
    stage.input_opt(&a.items)?;
    stage.input_opt(&a.atlas)?;
    let cohort = synth::generate(&spec, &atlas, &items, &res)?;
    stage.write("responses.csv", &data_io::responses_csv(&cohort.responses))?;
    stage.write(
        "profiles.csv",
        &data_io::profiles_csv(cohort.members.iter().map(|m| (m.id.as_str(), &m.profile))),
    )?;
    stage.write(
        "lesions.csv",
        &data_io::maps_csv("subject_id", &atlas, cohort.members.iter().map(|m| (m.id.as_str(), &m.map))),
    )?;
    stage.write("atlas.json", &data_io::atlas_json(&atlas)?)?;
    stage.write("items.csv", &data_io::items_csv(&items))?;
    stage.write("ground_truth.json", &pretty(&cohort.truth)?)?;
    stage.finish(json!({ "stage": "synth", "subjects": cohort.members.len(), "clamp_events": cohort.truth.clamp_events }))
}

fn report_cmd(a: &ReportArgs) -> Result<Value> {
    let mut stage = Stage::new("report", &a.out, None, json!({}))?;
    let vpath = a.validation.join("validation.csv");
    let spath = a.validation.join("validation_summary.json");
    stage.input(&vpath)?;
    stage.input(&spath)?;
    let rows = data_io::read_validation_str(&data_io::read_text(&vpath)?, &vpath.display().to_string())?;
    let summary: Value = serde_json::from_str(&data_io::read_text(&spath)?)?;
    let matched: Vec<f64> = rows.iter().filter_map(|r| r.1).collect();
    let random: Vec<f64> = rows.iter().filter_map(|r| r.2).collect();
    let p: Vec<f64> = rows.iter().filter_map(|r| r.3).collect();
    stage.write(
        "matched_vs_random.svg",
        &svg::violins(
            "Predicted vs. matched and random lesions",
            "Pearson r",
            &[("matched", &matched), ("random (null mean)", &random)],
        ),
    )?;
    let mut out = json!({
        "validation": summary,
        "matched_r_median": (!matched.is_empty()).then(|| stats::median(&matched)),
        "random_r_median": (!random.is_empty()).then(|| stats::median(&random)),
        "p_perm_ks_uniform": (!p.is_empty()).then(|| stats::ks_uniform(&p)),
    });
    if let Some(dir) = &a.dual_stream {
        let dpath = dir.join("dual_stream.json");
        let ipath = dir.join("stream_index.csv");
        stage.input(&dpath)?;
        stage.input(&ipath)?;
        let dual: Value = serde_json::from_str(&data_io::read_text(&dpath)?)?;
        let table = data_io::Table::read(&ipath)?;
        let (gi, si) = (table.col("group")?, table.col("stream_index")?);
        let mut sem = Vec::new();
        let mut pho = Vec::new();
        for row in table.rows() {
            match row.get(gi) {
                "semantic" => sem.push(row.f64(si)?),
                "phonemic" => pho.push(row.f64(si)?),
                _ => {}
            }
        }
        stage.write(
            "stream_index.svg",
            &svg::violins(
                "Stream index of extreme conditions",
                "ventral - dorsal load",
                &[("semantic-dominant", &sem), ("phonemic-dominant", &pho)],
            ),
        )?;
        out["dual_stream"] = dual;
    }
    stage.write("summary.json", &pretty(&out)?)?;
    stage.finish(json!({ "stage": "report", "conditions": rows.len() }))
}

// ---- entry point -----------------------------------------------------------

/// Apply `--config` entries to the argument list, replacing any command
/// line values for the same flags.
fn apply_config(mut args: Vec<String>) -> Result<Vec<String>> {
    let mut path = None;
    let mut i = 0;
    while i < args.len() {
        if args[i] == "--config" && i + 1 < args.len() {
            path = Some(args[i + 1].clone());
            args.drain(i..i + 2);
            continue;
        }
        if let Some(p) = args[i].strip_prefix("--config=") {
            path = Some(p.to_string());
            args.remove(i);
            continue;
        }
        i += 1;
    }
    let Some(path) = path else { return Ok(args) };
    let text = data_io::read_text(Path::new(&path))?;
    let Value::Object(map) = serde_json::from_str::<Value>(&text)? else {
        return Err(Error::Config(format!("{path}: config must be a JSON object")));
    };
    for (key, value) in map {
        let flag = format!("--{}", key.replace('_', "-"));
        let mut j = 0;
        while j < args.len() {
            if args[j] == flag {
                let takes_value = j + 1 < args.len() && !args[j + 1].starts_with("--");
                args.drain(j..j + 1 + takes_value as usize);
            } else if args[j].starts_with(&format!("{flag}=")) {
                args.remove(j);
            } else {
                j += 1;
            }
        }
        match value {
            Value::Bool(true) => args.push(flag),
            Value::Bool(false) | Value::Null => {}
            Value::String(s) => args.extend([flag, s]),
            Value::Number(n) => args.extend([flag, n.to_string()]),
            Value::Array(items) => {
                let joined: Vec<String> = items
                    .iter()
                    .map(|v| v.as_str().map(String::from).unwrap_or_else(|| v.to_string()))
                    .collect();
                args.extend([flag, joined.join(",")]);
            }
            Value::Object(_) => return Err(Error::Config(format!("{path}: {key} cannot be an object"))),
        }
    }
    Ok(args)
}

fn dispatch(cli: &Cli) -> Result<Value> {
    match &cli.command {
        Command::Classify(a) => classify_cmd(a),
        Command::Fit(a) => fit_cmd(a),
        Command::EvalLoo(a) => loo_cmd(a),
        Command::PerturbSweep(a) => sweep_cmd(a, cli.seed),
        Command::Project(a) => project_cmd(a),
        Command::Validate(a) => validate_cmd(a, cli.seed),
        Command::Lsm(a) => lsm_cmd(a, cli.seed),
        Command::DualStream(a) => dual_cmd(a, cli.seed),
        Command::Synth(a) => synth_cmd(a, cli.seed),
        Command::Report(a) => report_cmd(a),
    }
}

fn error_line(kind: &str, message: &str) -> String {
    json!({ "error": { "kind": kind, "message": message } }).to_string()
}

/// Run with full argv (program name first). Prints one JSON line to stdout
/// on success, or one JSON error line to stderr; returns the exit code.
pub fn run(argv: Vec<String>) -> i32 {
    let args = match apply_config(argv) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("{}", error_line(e.kind(), &e.to_string()));
            return 2;
        }
    };
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            eprintln!("{}", error_line("usage", e.to_string().trim()));
            return 2;
        }
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.jobs {
        if n == 0 {
            eprintln!("{}", error_line("config", "--jobs must be at least 1"));
            return 2;
        }
        builder = builder.num_threads(n);
    }
    let pool = match builder.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("{}", error_line("config", &e.to_string()));
            return 2;
        }
    };
    match pool.install(|| dispatch(&cli)) {
        Ok(summary) => {
            println!("{summary}");
            0
        }
        Err(e) => {
            eprintln!("{}", error_line(e.kind(), &e.to_string()));
            1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges_include_stop() {
        let s = parse_range("0:1.9:0.1").unwrap();
        assert_eq!(s.len(), 20);
        assert_eq!(s[19], 1.9);
        assert_eq!(s[3], 0.3);
        assert_eq!(parse_int_range("10:90:10").unwrap(), vec![10, 20, 30, 40, 50, 60, 70, 80, 90]);
        assert_eq!(parse_range("0.5,1.5").unwrap(), vec![0.5, 1.5]);
        assert!(parse_range("1:0:0.1").is_err());
        assert!(parse_range("a:b").is_err());
        assert!(parse_int_range("0.5").is_err());
    }

    #[test]
    fn config_replaces_flags() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("c.json");
        std::fs::write(&cfg, r#"{"layers": 3, "dry_run": true, "pcts": [10, 20]}"#).unwrap();
        let argv: Vec<String> = ["blum", "perturb-sweep", "--layers", "8", "--config", cfg.to_str().unwrap()]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let args = apply_config(argv).unwrap();
        let cli = Cli::try_parse_from(&args).unwrap();
        let Command::PerturbSweep(a) = cli.command else { panic!() };
        assert_eq!(a.layers, 3);
        assert!(a.dry_run);
        assert_eq!(a.pcts, "10,20");
    }

    #[test]
    fn dry_run_reports_full_grid() {
        let cli = Cli::try_parse_from(["blum", "perturb-sweep", "--layers", "40", "--dry-run"]).unwrap();
        let v = dispatch(&cli).unwrap();
        assert_eq!(v["conditions"], 7200);
    }
}
