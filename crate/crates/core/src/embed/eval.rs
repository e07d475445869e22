use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::embed::map::{jaccard_index, normalize_map, threshold_tau, EmbeddingMap, MapLabel};
use crate::embed::montage::write_montage;
use crate::embed::pca::{feature_matrix_to_dmatrix, pca_reduce};
use crate::embed::tsne::{tsne_embed, TsneConfig};
use crate::error::{Error, Result};
use crate::evo::evolve::checkpoint_path;
use crate::fid::{extract_features, FeatureMatrix};
use crate::gan::generate;
use crate::io::{atomic_write, load_checkpoint, Dataset, JaccardVariant, RunConfig};
use crate::nn::{Network, Role, Tensor};
use crate::seeds::{derive_seed, stream, tag};

/// Where the global matching threshold comes from.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TauSource {
    /// Median over the latest generator generation's maps, pooled across discriminators.
    Latest,
    /// Same, pooled over every generator source.
    AllGenerators,
    Fixed(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalSettings {
    pub pca_dims: usize,
    pub perplexity: f64,
    pub iterations: usize,
    pub jaccard: JaccardVariant,
    pub tau: TauSource,
    pub seed: u64,
}

impl EvalSettings {
    pub fn from_config(cfg: &RunConfig) -> Self {
        Self {
            pca_dims: cfg.pca_dims,
            perplexity: cfg.tsne_perplexity,
            iterations: cfg.tsne_iterations,
            jaccard: cfg.jaccard,
            tau: TauSource::Latest,
            seed: cfg.seed,
        }
    }
}

pub struct DiscriminatorSnapshot {
    pub generation: usize,
    pub network: Network,
}

pub struct GeneratorSamples {
    pub generation: usize,
    pub samples: Tensor,
}

/// One line of `report.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub disc_gen: usize,
    pub gen_gen: usize,
    pub j: Option<f64>,
    pub n_matched_g: Option<usize>,
    pub n_matched_d: Option<usize>,
    pub tau: Option<f64>,
    pub status: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinDistanceSummary {
    pub disc_gen: usize,
    pub gen_gen: usize,
    pub count: usize,
    pub min: f64,
    pub median: f64,
    pub mean: f64,
    pub max: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KlSummary {
    pub disc_gen: usize,
    pub after_exaggeration: Option<f64>,
    pub last: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub tau: Option<f64>,
    pub tau_degenerate: bool,
    pub tau_source: String,
    pub jaccard: String,
    pub disc_generations: Vec<usize>,
    pub gen_generations: Vec<usize>,
    pub rows: Vec<ReportRow>,
    pub min_distances: Vec<MinDistanceSummary>,
    pub kl: Vec<KlSummary>,
    pub maps: Vec<EmbeddingMap>,
    /// Per-sample shape `[C, H, W]` of the stored sample files.
    pub sample_shape: Vec<usize>,
    pub config: String,
}

impl EvalReport {
    pub fn j(&self, disc_gen: usize, gen_gen: usize) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.disc_gen == disc_gen && r.gen_gen == gen_gen)
            .and_then(|r| r.j)
    }

    /// J indexed `[disc][gen]` in the order of the generation lists.
    pub fn matrix(&self) -> Vec<Vec<Option<f64>>> {
        self.disc_generations
            .iter()
            .map(|&d| self.gen_generations.iter().map(|&g| self.j(d, g)).collect())
            .collect()
    }
}

/// A finished evaluation with its per-iteration KL traces.
pub struct Evaluation {
    pub report: EvalReport,
    pub kl_traces: Vec<(usize, Vec<f64>)>,
}

fn provenance(disc_gen: usize) -> String {
    format!("discriminator@{disc_gen}")
}

fn embed_one(
    d: &DiscriminatorSnapshot,
    dataset: &Tensor,
    gens: &[GeneratorSamples],
    settings: &EvalSettings,
) -> Result<(EmbeddingMap, Vec<f64>, Option<f64>)> {
    let mut feats = vec![extract_features(&d.network, dataset)?];
    let mut labels = vec![MapLabel::Dataset; dataset.batch()];
    for g in gens {
        feats.push(extract_features(&d.network, &g.samples)?);
        labels.extend(std::iter::repeat_n(MapLabel::Generator(g.generation), g.samples.batch()));
    }
    let parts: Vec<&FeatureMatrix> = feats.iter().collect();
    let joint = FeatureMatrix::vstack(&parts, provenance(d.generation))?;
    let x = feature_matrix_to_dmatrix(&joint);
    let k = settings.pca_dims.min(x.nrows()).min(x.ncols());
    let reduced = pca_reduce(&x, k)?;
    if reduced.zero_variance > 0 {
        warn!(
            "discriminator@{}: {} of {k} PCA components have zero variance",
            d.generation, reduced.zero_variance
        );
    }
    let cfg = TsneConfig::new(
        settings.perplexity,
        settings.iterations,
        derive_seed(settings.seed, &[tag::TSNE, d.generation as u64]),
    );
    let emb = tsne_embed(&reduced.scores, &cfg)?;
    let after = emb.kl_after_exaggeration(&cfg);
    let map = normalize_map(&emb.points, labels, provenance(d.generation))?;
    Ok((map, emb.kl, after))
}

/// Embeds the dataset samples jointly with every generator source under each
/// discriminator's features and scores each generator against the dataset.
pub fn evaluate_sources(
    discs: &[DiscriminatorSnapshot],
    dataset: &Tensor,
    gens: &[GeneratorSamples],
    settings: &EvalSettings,
) -> Result<Evaluation> {
    if discs.is_empty() || gens.is_empty() {
        return Err(Error::invalid("evaluation needs at least one discriminator and one generator"));
    }
    let mut maps = Vec::new();
    let mut kl_traces = Vec::new();
    let mut kl = Vec::new();
    for d in discs {
        info!("embedding under discriminator@{}", d.generation);
        let (map, trace, after) = embed_one(d, dataset, gens, settings)?;
        kl.push(KlSummary {
            disc_gen: d.generation,
            after_exaggeration: after,
            last: trace.last().copied(),
        });
        kl_traces.push((d.generation, trace));
        maps.push(map);
    }
    let latest = gens.iter().map(|g| g.generation).max().unwrap_or(0);
    let (tau, tau_degenerate, tau_source) = match settings.tau {
        TauSource::Fixed(t) => (t, !(t > 0.0), format!("fixed {t}")),
        TauSource::Latest | TauSource::AllGenerators => {
            let pool: Vec<(Vec<[f64; 2]>, Vec<[f64; 2]>)> = maps
                .iter()
                .flat_map(|m| {
                    gens.iter()
                        .filter(|g| settings.tau == TauSource::AllGenerators || g.generation == latest)
                        .map(|g| (m.subset(MapLabel::Generator(g.generation)), m.subset(MapLabel::Dataset)))
                })
                .collect();
            let t = threshold_tau(&pool)?;
            let source = match settings.tau {
                TauSource::Latest => format!("median over generator@{latest}"),
                _ => "median over all generators".to_string(),
            };
            (t.tau, t.degenerate, source)
        }
    };
    if tau_degenerate {
        warn!("degenerate threshold {tau}; Jaccard indices left empty");
    }

    let mut rows = Vec::new();
    let mut min_distances = Vec::new();
    for (d, m) in discs.iter().zip(&maps) {
        let disc_gen = d.generation;
        let md = m.subset(MapLabel::Dataset);
        for g in gens {
            let mg = m.subset(MapLabel::Generator(g.generation));
            let t = threshold_tau(&[(mg.clone(), md.clone())])?;
            let count = t.minima.len();
            min_distances.push(MinDistanceSummary {
                disc_gen,
                gen_gen: g.generation,
                count,
                min: t.minima.iter().copied().fold(f64::INFINITY, f64::min),
                median: t.tau,
                mean: t.minima.iter().sum::<f64>() / count as f64,
                max: t.minima.iter().copied().fold(0.0, f64::max),
            });
            let row = if tau_degenerate {
                ReportRow {
                    disc_gen,
                    gen_gen: g.generation,
                    j: None,
                    n_matched_g: None,
                    n_matched_d: None,
                    tau: Some(tau),
                    status: "degenerate-tau".into(),
                }
            } else {
                let r = jaccard_index(&mg, &md, tau, settings.jaccard)?;
                ReportRow {
                    disc_gen,
                    gen_gen: g.generation,
                    j: Some(r.j),
                    n_matched_g: Some(r.matched_g),
                    n_matched_d: Some(r.matched_d),
                    tau: Some(tau),
                    status: "ok".into(),
                }
            };
            rows.push(row);
        }
    }
    let report = EvalReport {
        tau: (!tau_degenerate).then_some(tau),
        tau_degenerate,
        tau_source,
        jaccard: settings.jaccard.to_string(),
        disc_generations: discs.iter().map(|d| d.generation).collect(),
        gen_generations: gens.iter().map(|g| g.generation).collect(),
        rows,
        min_distances,
        kl,
        maps,
        sample_shape: dataset.shape()[1..].to_vec(),
        config: String::new(),
    };
    Ok(Evaluation { report, kl_traces })
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunEvalOptions {
    pub generations: Vec<usize>,
    /// Defaults to `generations`.
    pub disc_generations: Option<Vec<usize>>,
    pub tau: TauSource,
    pub out_dir: Option<PathBuf>,
}

fn missing_row(disc_gen: usize, gen_gen: usize, status: &str) -> ReportRow {
    ReportRow {
        disc_gen,
        gen_gen,
        j: None,
        n_matched_g: None,
        n_matched_d: None,
        tau: None,
        status: status.into(),
    }
}

/// Evaluates the best-individual snapshots of a finished run directory and
/// writes the report under `<run>/eval` (or `opts.out_dir`).
pub fn evaluate_run(run: &Path, opts: &RunEvalOptions) -> Result<EvalReport> {
    let cfg_path = run.join("config.txt");
    if !cfg_path.exists() {
        return Err(Error::MissingFile(cfg_path));
    }
    let cfg = RunConfig::load(&cfg_path, RunConfig::default())?;
    let data = Dataset::load(&cfg.dataset, cfg.seed)?;
    let mut settings = EvalSettings::from_config(&cfg);
    settings.tau = opts.tau;

    let want_gens: Vec<usize> = opts.generations.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    let want_discs: Vec<usize> = opts
        .disc_generations
        .as_ref()
        .unwrap_or(&opts.generations)
        .iter()
        .copied()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();

    let n = cfg.samples_per_model.min(data.len());
    let pick = sample(&mut stream(cfg.seed, &[tag::EVALUATE, 0]), data.len(), n).into_vec();
    let real = data.samples.select(&pick)?;

    let mut gens = Vec::new();
    for &g in &want_gens {
        let path = checkpoint_path(run, g, Role::Generator);
        if !path.exists() {
            warn!("generator snapshot for generation {g} missing");
            continue;
        }
        let net = load_checkpoint(&path)?.network()?;
        let samples = generate(&net, n, cfg.z_dim, &mut stream(cfg.seed, &[tag::EVALUATE, 1, g as u64]))?;
        gens.push(GeneratorSamples { generation: g, samples });
    }
    let mut discs = Vec::new();
    for &d in &want_discs {
        let path = checkpoint_path(run, d, Role::Discriminator);
        if !path.exists() {
            warn!("discriminator snapshot for generation {d} missing");
            continue;
        }
        discs.push(DiscriminatorSnapshot {
            generation: d,
            network: load_checkpoint(&path)?.network()?,
        });
    }
    if gens.is_empty() || discs.is_empty() {
        return Err(Error::MissingFile(checkpoint_path(
            run,
            *want_gens.first().unwrap_or(&0),
            if gens.is_empty() { Role::Generator } else { Role::Discriminator },
        )));
    }

    let mut eval = evaluate_sources(&discs, &real, &gens, &settings)?;
    let have_g: BTreeSet<usize> = gens.iter().map(|g| g.generation).collect();
    let have_d: BTreeSet<usize> = discs.iter().map(|d| d.generation).collect();
    let mut rows = Vec::new();
    for &d in &want_discs {
        for &g in &want_gens {
            if !have_d.contains(&d) {
                rows.push(missing_row(d, g, "missing-discriminator"));
            } else if !have_g.contains(&g) {
                rows.push(missing_row(d, g, "missing-generator"));
            } else if let Some(r) = eval.report.rows.iter().find(|r| r.disc_gen == d && r.gen_gen == g) {
                rows.push(r.clone());
            }
        }
    }
    eval.report.rows = rows;
    eval.report.disc_generations = want_discs;
    eval.report.gen_generations = want_gens;
    eval.report.config = cfg.echo();

    let out = opts.out_dir.clone().unwrap_or_else(|| run.join("eval"));
    let mut sources = vec![(MapLabel::Dataset, real)];
    sources.extend(gens.into_iter().map(|g| (MapLabel::Generator(g.generation), g.samples)));
    write_evaluation(&out, &eval, &sources)?;
    Ok(eval.report)
}

pub fn sample_file(dir: &Path, label: MapLabel) -> PathBuf {
    match label {
        MapLabel::Dataset => dir.join("samples-dataset.fm"),
        MapLabel::Generator(g) => dir.join(format!("samples-g{g}.fm")),
    }
}

fn montage_file(dir: &Path, map: &EmbeddingMap, label: MapLabel) -> PathBuf {
    let tail = match label {
        MapLabel::Dataset => "dataset".to_string(),
        MapLabel::Generator(g) => format!("g{g}"),
    };
    dir.join(format!("montage-{}-{tail}.png", map.provenance.replace('@', "")))
}

pub fn write_report_csv(path: &Path, rows: &[ReportRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    atomic_write(path, &bytes)
}

pub fn read_report_csv(path: &Path) -> Result<Vec<ReportRow>> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

fn write_montages(dir: &Path, report: &EvalReport, sources: &[(MapLabel, Tensor)]) -> Result<()> {
    for map in &report.maps {
        for (label, images) in sources {
            let idx = map.indices(*label);
            if idx.is_empty() || idx.len() != images.batch() {
                continue;
            }
            let pts: Vec<[f64; 2]> = idx.iter().map(|&i| map.points[i]).collect();
            write_montage(&montage_file(dir, map, *label), images, &pts)?;
        }
    }
    Ok(())
}

/// Writes `report.csv`, `report.json`, `tsne_kl.jsonl`, the per-source sample
/// files and one montage per (discriminator, source) map.
pub fn write_evaluation(dir: &Path, eval: &Evaluation, sources: &[(MapLabel, Tensor)]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_report_csv(&dir.join("report.csv"), &eval.report.rows)?;
    atomic_write(&dir.join("report.json"), &serde_json::to_vec_pretty(&eval.report)?)?;
    let mut kl = String::new();
    for (disc_gen, trace) in &eval.kl_traces {
        for (i, v) in trace.iter().enumerate() {
            kl.push_str(&serde_json::json!({"disc_gen": disc_gen, "iteration": i + 1, "kl": v}).to_string());
            kl.push('\n');
        }
    }
    atomic_write(&dir.join("tsne_kl.jsonl"), kl.as_bytes())?;
    for (label, images) in sources {
        let fm = FeatureMatrix::from_tensor(images, label.to_string())?;
        fm.save(&sample_file(dir, *label))?;
    }
    write_montages(dir, &eval.report, sources)
}

pub fn load_report(dir: &Path) -> Result<EvalReport> {
    let path = dir.join("report.json");
    let bytes = std::fs::read(&path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile(path.clone()),
        _ => Error::Io(e),
    })?;
    Ok(serde_json::from_slice(&bytes)?)
}

/// Re-renders `report.csv` and the montages of a saved evaluation directory.
pub fn rerender_report(dir: &Path) -> Result<EvalReport> {
    let report = load_report(dir)?;
    write_report_csv(&dir.join("report.csv"), &report.rows)?;
    let mut labels: BTreeSet<MapLabel> = BTreeSet::new();
    for m in &report.maps {
        labels.extend(m.labels.iter().copied());
    }
    let mut sources = Vec::new();
    for label in labels {
        let path = sample_file(dir, label);
        if !path.exists() {
            warn!("{} missing; montage skipped", path.display());
            continue;
        }
        let fm = FeatureMatrix::load(&path)?;
        let mut shape = vec![fm.n()];
        shape.extend(&report.sample_shape);
        let images = Tensor::new(shape, fm.values().to_vec())?;
        sources.push((label, images));
    }
    write_montages(dir, &report, &sources)?;
    Ok(report)
}
