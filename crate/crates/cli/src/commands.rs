use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use gdnet::data::{generate_dataset, labels, load_dataset, write_dataset, write_manifest, Sample};
use gdnet::gradcheck::{network_check, primitive_suite, CheckResult};
use gdnet::probe::{accuracy_by_size, correlation_report, record_alphas, roc_points};
use gdnet::report;
use gdnet::train::{
    cross_validate, evaluate_metrics, score_samples, train_with, TrainingSet, DECISION_THRESHOLD,
};
use gdnet::weights::{load_weights, write_weights};
use gdnet::{init_network, seed, Exec};

use crate::config::RunConfig;
use crate::Failure;

/// Output directory that announces every file it writes on stdout.
pub struct Outputs {
    dir: PathBuf,
}

impl Outputs {
    pub fn create(dir: &Path) -> std::io::Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
        })
    }

    pub fn write(&mut self, name: &str, contents: impl AsRef<[u8]>) -> std::io::Result<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, contents)?;
        println!("wrote {}", path.display());
        Ok(())
    }
}

fn dataset(config: &RunConfig) -> Result<Vec<Sample>, Failure> {
    let path = config
        .data
        .as_ref()
        .ok_or_else(|| Failure::Config(format!("{} needs --data", config.command)))?;
    Ok(load_dataset(path)?)
}

pub fn gen_data(config: &RunConfig, out: &mut Outputs) -> Result<(), Failure> {
    let samples = generate_dataset(&config.spec)?;
    let mut bin = Vec::new();
    write_dataset(&samples, &mut bin)?;
    out.write("dataset.bin", bin)?;
    let mut manifest = Vec::new();
    write_manifest(&samples, &mut manifest)?;
    out.write("manifest.csv", manifest)?;
    Ok(())
}

pub fn train(config: &RunConfig, out: &mut Outputs) -> Result<(), Failure> {
    let samples = dataset(config)?;
    let data = TrainingSet::prepare(&samples)?;
    let params = init_network::<f32>(&config.net, config.seed)?;
    let outcome = train_with(Exec::default(), params, &data, &config.train)?;
    let mut weights = Vec::new();
    write_weights(&outcome.params, &mut weights)?;
    out.write("weights.bin", weights)?;
    out.write("norm.csv", report::norm_csv(&data.zscore))?;
    out.write("loss.csv", report::loss_csv(&outcome.losses))?;
    Ok(())
}

pub fn eval(config: &RunConfig, out: &mut Outputs) -> Result<(), Failure> {
    let samples = dataset(config)?;
    let params = load_weights(config.weights_path(), &config.net)?;
    let zscore = report::load_norm(&config.norm_path())?;
    let scores = score_samples(&params, &samples, &zscore, Exec::default())?;
    let ls = labels(&samples);
    let metrics = evaluate_metrics(&scores, &ls, DECISION_THRESHOLD)?;
    out.write("metrics.csv", report::metrics_csv(&metrics))?;
    out.write("scores.csv", report::scores_csv(&scores, &ls))?;
    if metrics.auc.is_some() {
        out.write("roc.csv", report::roc_csv(&roc_points(&scores, &ls)?))?;
    } else {
        eprintln!("only one class present; ROC skipped");
    }
    Ok(())
}

pub fn cv(config: &RunConfig, out: &mut Outputs) -> Result<(), Failure> {
    let samples = dataset(config)?;
    let rep = cross_validate(Exec::default(), &samples, &config.net, &config.train, config.k)?;
    out.write("cv_metrics.csv", report::cv_metrics_csv(&rep))?;
    out.write("cv_scores.csv", report::scores_csv(&rep.scores, &labels(&samples)))?;
    let mut folds = String::from("index,fold\n");
    for (f, idx) in rep.split.folds.iter().enumerate() {
        for i in idx {
            let _ = writeln!(folds, "{i},{}", f + 1);
        }
    }
    out.write("cv_folds.csv", folds)?;
    for f in &rep.folds {
        out.write(&format!("fold{}_loss.csv", f.fold + 1), report::loss_csv(&f.losses))?;
    }
    Ok(())
}

pub fn probe(config: &RunConfig, out: &mut Outputs) -> Result<(), Failure> {
    let samples = dataset(config)?;
    let params = load_weights(config.weights_path(), &config.net)?;
    let zscore = report::load_norm(&config.norm_path())?;
    let norm = config.probe_normalize.then_some(&zscore);
    let records = record_alphas(&params, &samples, norm, Exec::default())?;
    out.write("alphas.csv", report::alphas_csv(&records))?;
    out.write("correlation.csv", report::correlation_csv(&correlation_report(&records)?))?;
    let scores = score_samples(&params, &samples, &zscore, Exec::default())?;
    out.write("buckets.csv", report::buckets_csv(&accuracy_by_size(&scores, &samples)?))?;
    Ok(())
}

pub fn gradcheck(config: &RunConfig, out: &mut Outputs) -> Result<(), Failure> {
    let s = config.seed;
    let mut results: Vec<CheckResult> = primitive_suite::<f32>(config.instances, seed::derive(s, &[1]))?;
    results.extend(primitive_suite::<f64>(config.instances, seed::derive(s, &[2]))?);
    if config.network_instances > 0 {
        let n = config.network_instances;
        results.push(network_check::<f32>(&config.net, n, 1, seed::derive(s, &[3]))?);
        results.push(network_check::<f64>(&config.net, n, 1, seed::derive(s, &[4]))?);
    }
    let mut csv = String::from("op,precision,instances,coordinates,straddled,max_rel_error,threshold,passed\n");
    for r in &results {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{}",
            r.name,
            r.precision,
            r.instances,
            r.coordinates,
            r.straddled,
            r.max_rel_error,
            r.threshold,
            r.passed()
        );
    }
    out.write("gradcheck.csv", csv)?;
    for p in ["f32", "f64"] {
        let worst = results
            .iter()
            .filter(|r| r.precision == p)
            .max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error));
        if let Some(r) = worst {
            println!(
                "{p}: max relative error {:.3e} ({}), threshold {:e}",
                r.max_rel_error, r.name, r.threshold
            );
        }
    }
    let failed: Vec<String> = results
        .iter()
        .filter(|r| !r.passed())
        .map(|r| format!("{} [{}] {:.3e}", r.name, r.precision, r.max_rel_error))
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Gradcheck(failed.join(", ")))
    }
}
