use std::fmt::Write as _;
use std::fs::File;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use netload::config::RunConfig;
use netload::data::{generate_synthetic_year, parse_tmy_csv_with, write_tmy_csv, ParseOptions};
use netload::forecast::{
    compare_approaches, component_predictions_csv, loss_curve_csv, predictions_csv, run_direct_with,
    run_indirect_with, Approach, ForecastReport, TrainedPipeline,
};
use netload::metrics::histogram_csv;
use netload::netload::derive_series;
use netload::nn::TrainRecord;
use netload::{snapshot, Real, YearDataset};
use serde_json::json;

use crate::output::OutputPlan;
use crate::{Cli, Command, CompareArgs, GlobalArgs};

const DEFAULT_OUT: &str = "netload-out";

pub fn run(cli: &Cli) -> Result<()> {
    let g = &cli.global;
    let mut cfg = match &g.config {
        Some(path) => RunConfig::load(path).with_context(|| format!("invalid config {}", path.display()))?,
        None => RunConfig::default(),
    };
    if let Some(seed) = g.seed {
        cfg.pipeline.seed = seed;
    }
    let input = match &cli.command {
        Command::Derive(a) | Command::Compare(CompareArgs { input: a, .. }) => a.input.clone(),
        Command::Train(a) => a.input.input.clone(),
        Command::Predict(a) => a.input.input.clone(),
        Command::Synth => None,
    };
    if input.is_some() {
        cfg.input = input;
    }
    match &cli.command {
        Command::Synth => synth(g, &cfg),
        Command::Derive(_) => derive(g, &cfg),
        Command::Train(a) => {
            if let Some(approach) = a.approach {
                cfg.pipeline.approach = approach;
            }
            if let Some(epochs) = a.epochs {
                cfg.pipeline.epochs = epochs;
            }
            train(g, &cfg)
        }
        Command::Predict(a) => predict(g, &cfg, &a.model),
        Command::Compare(a) => {
            if let Some(epochs) = a.epochs {
                cfg.pipeline.epochs = epochs;
            }
            compare(g, &cfg)
        }
    }
}

fn out_dir(g: &GlobalArgs, cfg: &RunConfig) -> PathBuf {
    g.out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

fn plan(g: &GlobalArgs, cfg: &RunConfig, names: &[String]) -> Result<OutputPlan> {
    OutputPlan::new(&out_dir(g, cfg), g.force, names)
}

fn names(list: &[&str]) -> Vec<String> {
    list.iter().map(|s| s.to_string()).collect()
}

/// The weather year a command works on: `--input` or the config's input, else
/// the synthetic year of the root seed.
fn load_dataset(cfg: &RunConfig) -> Result<YearDataset> {
    match &cfg.input {
        Some(path) => read_dataset(path),
        None => Ok(generate_synthetic_year(cfg.pipeline.seed, &cfg.synth)),
    }
}

fn read_dataset(path: &Path) -> Result<YearDataset> {
    let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    let opts = ParseOptions {
        allow_leap: true,
        require_full_year: false,
    };
    parse_tmy_csv_with(file, opts).with_context(|| format!("cannot parse {}", path.display()))
}

fn synth(g: &GlobalArgs, cfg: &RunConfig) -> Result<()> {
    let plan = plan(g, cfg, &names(&["synthetic_year.csv"]))?;
    let year: YearDataset = generate_synthetic_year(cfg.pipeline.seed, &cfg.synth);
    let path = plan.write("synthetic_year.csv", &write_tmy_csv(year.records()))?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn derive(g: &GlobalArgs, cfg: &RunConfig) -> Result<()> {
    let plan = plan(g, cfg, &names(&["wind_power.csv", "solar_power.csv", "netload.csv"]))?;
    let dataset = load_dataset(cfg)?;
    let plant = cfg.plant()?;
    let d = derive_series(&dataset, &plant.turbine, &plant.pv, &plant.air, &plant.counts)?;

    let mut wind = String::from("day,hour,wind_mps,wind_W\n");
    let mut solar = String::from("day,hour,irradiance_Wm2,temp_K,solar_W\n");
    let mut net = String::from("day,hour,demand_unit_kW,wind_W,solar_W,net_load_kW\n");
    for (i, r) in dataset.records().iter().enumerate() {
        let (day, hour) = (r.day, r.hour);
        let _ = writeln!(wind, "{day},{hour},{},{}", r.wind_speed, d.wind_w[i]);
        let _ = writeln!(solar, "{day},{hour},{},{},{}", r.irradiance_collector, r.temp_ambient, d.solar_w[i]);
        let _ = writeln!(
            net,
            "{day},{hour},{},{},{},{}",
            d.demand_unit_kw[i], d.wind_w[i], d.solar_w[i], d.net_load_kw[i]
        );
    }
    for (name, text) in [("wind_power.csv", wind), ("solar_power.csv", solar), ("netload.csv", net)] {
        let path = plan.write(name, &text)?;
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

/// Config as echoed in reports: paths are dropped so that the same experiment
/// run into different directories yields identical reports.
fn config_echo(cfg: &RunConfig) -> serde_json::Value {
    let mut echo = cfg.clone();
    echo.output_dir = None;
    let mut v = serde_json::to_value(&echo).expect("config serializes");
    let input = cfg
        .input
        .as_ref()
        .and_then(|p| p.file_name())
        .map(|n| n.to_string_lossy().into_owned());
    v["input"] = json!(input);
    v
}

fn progress(quiet: bool, label: &str) -> impl Fn(&str, &TrainRecord) + Sync + '_ {
    move |name, r| {
        if !quiet {
            eprintln!(
                "[{label}/{name}] epoch {}: train {:.6} val {:.6}",
                r.epoch, r.train_loss, r.val_loss
            );
        }
    }
}

/// Side files of one trained pipeline, keyed by file name. `prefix` separates
/// the two pipelines in `compare`.
fn report_files(report: &ForecastReport<Real>, prefix: &str) -> Vec<(String, String)> {
    let mut files = vec![(format!("test_predictions{prefix}.csv"), predictions_csv(report))];
    for c in &report.components {
        files.push((format!("loss{prefix}_{}.csv", c.name), loss_curve_csv(&c.loss_curve)));
        if report.approach == Approach::Indirect {
            files.push((
                format!("test_predictions{prefix}_{}.csv", c.name),
                component_predictions_csv(report, c),
            ));
        }
    }
    files
}

fn component_names(approach: Approach) -> &'static [&'static str] {
    match approach {
        Approach::Direct => &["net_load"],
        Approach::Indirect => &["demand", "wind", "solar"],
    }
}

fn report_file_names(approach: Approach, prefix: &str) -> Vec<String> {
    let mut out = vec![format!("test_predictions{prefix}.csv")];
    for c in component_names(approach) {
        out.push(format!("loss{prefix}_{c}.csv"));
        if approach == Approach::Indirect {
            out.push(format!("test_predictions{prefix}_{c}.csv"));
        }
    }
    out
}

fn train_pipeline(
    g: &GlobalArgs,
    cfg: &RunConfig,
    dataset: &YearDataset,
    approach: Approach,
) -> Result<(TrainedPipeline<Real>, ForecastReport<Real>)> {
    let plant = cfg.plant()?;
    let label = approach.to_string();
    let progress = progress(g.quiet, &label);
    let mut pcfg = cfg.pipeline.clone();
    pcfg.approach = approach;
    Ok(match approach {
        Approach::Direct => {
            let (m, r) = run_direct_with(dataset, &plant, &pcfg, &cfg.metrics, &progress)?;
            (TrainedPipeline::Direct(m), r)
        }
        Approach::Indirect => {
            let (m, r) = run_indirect_with(dataset, &plant, &pcfg, &cfg.metrics, &progress)?;
            (TrainedPipeline::Indirect(m), r)
        }
    })
}

fn pretty(v: &serde_json::Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json serializes");
    s.push('\n');
    s
}

fn train(g: &GlobalArgs, cfg: &RunConfig) -> Result<()> {
    let approach = cfg.pipeline.approach;
    let mut files = names(&["model.json", "report.json"]);
    files.extend(report_file_names(approach, ""));
    let plan = plan(g, cfg, &files)?;
    let dataset = load_dataset(cfg)?;
    let (pipeline, report) = train_pipeline(g, cfg, &dataset, approach)?;

    plan.write("model.json", &snapshot::to_json(&pipeline))?;
    for (name, text) in report_files(&report, "") {
        plan.write(&name, &text)?;
    }
    let doc = json!({
        "seed": cfg.pipeline.seed,
        "config": config_echo(cfg),
        "report": report,
    });
    let path = plan.write("report.json", &pretty(&doc))?;
    let m = &report.metrics;
    eprintln!(
        "{approach}: test MAE {:.5} RMSE {:.5} nRMSE {} within {}%: {:.3}",
        m.mae,
        m.rmse,
        m.nrmse.map(|v| format!("{v:.5}")).unwrap_or_else(|| "n/a".into()),
        m.tolerance_pct,
        m.tolerance_fraction
    );
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn predict(g: &GlobalArgs, cfg: &RunConfig, model: &Path) -> Result<()> {
    let text = std::fs::read_to_string(model).with_context(|| format!("cannot read model {}", model.display()))?;
    let pipeline: TrainedPipeline<Real> =
        snapshot::from_json(&text).with_context(|| format!("cannot load model {}", model.display()))?;
    let plan = plan(g, cfg, &names(&["predictions.csv"]))?;
    let dataset = load_dataset(cfg)?;
    let p = pipeline.predict(&dataset)?;

    let mut out = String::from("row,day,hour,net_load_kW");
    if p.components.is_some() {
        out.push_str(",demand_unit_kW,wind_W,solar_W");
    }
    out.push('\n');
    for (k, (&row, &(day, hour))) in p.rows.iter().zip(&p.timestamps).enumerate() {
        let _ = write!(out, "{row},{day},{hour},{}", p.net_load_kw[k]);
        if let Some((d, w, s)) = &p.components {
            let _ = write!(out, ",{},{},{}", d[k], w[k], s[k]);
        }
        out.push('\n');
    }
    let path = plan.write("predictions.csv", &out)?;
    eprintln!("wrote {} ({} forecasts)", path.display(), p.rows.len());
    Ok(())
}

fn compare(g: &GlobalArgs, cfg: &RunConfig) -> Result<()> {
    let subset = cfg.metrics.histogram_subset.is_some();
    let mut files = names(&[
        "report.json",
        "comparison.csv",
        "comparison.txt",
        "histogram_direct.csv",
        "histogram_indirect.csv",
        "model_direct.json",
        "model_indirect.json",
    ]);
    if subset {
        files.extend(names(&["histogram_subset_direct.csv", "histogram_subset_indirect.csv"]));
    }
    files.extend(report_file_names(Approach::Direct, "_direct"));
    files.extend(report_file_names(Approach::Indirect, "_indirect"));
    let plan = plan(g, cfg, &files)?;

    let dataset = load_dataset(cfg)?;
    let (direct_model, direct) = train_pipeline(g, cfg, &dataset, Approach::Direct)?;
    let (indirect_model, indirect) = train_pipeline(g, cfg, &dataset, Approach::Indirect)?;
    let table = compare_approaches(&direct, &indirect)?;

    plan.write("model_direct.json", &snapshot::to_json(&direct_model))?;
    plan.write("model_indirect.json", &snapshot::to_json(&indirect_model))?;
    for (name, text) in report_files(&direct, "_direct")
        .into_iter()
        .chain(report_files(&indirect, "_indirect"))
    {
        plan.write(&name, &text)?;
    }
    plan.write("histogram_direct.csv", &histogram_csv(&direct.metrics.histogram))?;
    plan.write("histogram_indirect.csv", &histogram_csv(&indirect.metrics.histogram))?;
    if let (Some(d), Some(i)) = (&direct.metrics.histogram_subset, &indirect.metrics.histogram_subset) {
        plan.write("histogram_subset_direct.csv", &histogram_csv(d))?;
        plan.write("histogram_subset_indirect.csv", &histogram_csv(i))?;
    }
    plan.write("comparison.csv", &table.to_csv())?;
    let text = table.to_text();
    plan.write("comparison.txt", &text)?;
    let doc = json!({
        "seed": cfg.pipeline.seed,
        "config": config_echo(cfg),
        "comparison": table,
        "direct": direct,
        "indirect": indirect,
    });
    let path = plan.write("report.json", &pretty(&doc))?;
    print!("{text}");
    eprintln!("wrote {}", path.display());
    Ok(())
}
