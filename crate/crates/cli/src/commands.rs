//! Subcommand implementations.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ridgenet_core::fused::{
    default_target_fused, diff_network, network_stats_fused, opt_penalty_fused, ridge_p_fused, sparsify_fused,
    union_support, ClassSet, FusedOptions, PenaltyEntry, PenaltySpec,
};
use ridgenet_core::netstats::{communities, network_stats, path_decomposition, Network};
use ridgenet_core::sparsify::{sparsify, MixtureFit, SparsifiedNetwork, Threshold};
use ridgenet_core::tuning::{cn_curve, opt_penalty_kcv_auto};
use ridgenet_core::{cov_ml, default_target, prec_to_pcor, ridge_alt, SymMatrix, TargetKind, TargetName};
use serde::Deserialize;
use serde_json::{json, Map, Value};

use crate::cli::{
    Cli, CnplotArgs, Command, DataArgs, DiffArgs, EstimateArgs, FusedEstimateArgs, FusedTuneArgs, PathsArgs,
    PrecisionArgs, SparsifyArgs, Target, ThresholdArgs, TuneArgs, UnionArgs,
};
use crate::error::{input, CliResult};
use crate::export::{GraphDoc, GraphFormat};
use crate::io::{self, load_class_map, load_matrix, load_sym_matrix, sym_matrix_to_csv, write_atomic, Table};
use crate::plot::{cn_plot, degree_densities};

/// Output directory and bookkeeping of one run.
pub struct Run {
    pub out: PathBuf,
    pub command: &'static str,
    written: Vec<String>,
}

impl Run {
    pub fn new(out: PathBuf, command: &'static str) -> Self {
        Self {
            out,
            command,
            written: Vec::new(),
        }
    }

    fn write(&mut self, name: &str, contents: &str) -> CliResult<()> {
        write_atomic(&self.out.join(name), contents)?;
        if !self.written.iter().any(|w| w == name) {
            self.written.push(name.to_string());
        }
        Ok(())
    }

    fn graph(&mut self, stem: &str, doc: &GraphDoc) -> CliResult<()> {
        for format in [GraphFormat::Graphml, GraphFormat::Dot, GraphFormat::Json] {
            self.write(&format!("{stem}.{}", format.extension()), &doc.render(format))?;
        }
        Ok(())
    }

    fn default_input(&self, given: &Option<PathBuf>, name: &str) -> PathBuf {
        given.clone().unwrap_or_else(|| self.out.join(name))
    }

    /// Writes `<command>.summary.json` and returns its text. The summary
    /// holds no timings and no output directory, so repeated runs match
    /// byte for byte.
    fn finish(mut self, mut summary: Map<String, Value>) -> CliResult<String> {
        summary.insert("command".into(), json!(self.command));
        let mut outputs = self.written.clone();
        outputs.push(format!("{}.summary.json", self.command));
        outputs.sort();
        summary.insert("outputs".into(), json!(outputs));
        let mut text = serde_json::to_string_pretty(&Value::Object(summary)).expect("summaries serialize");
        text.push('\n');
        let name = format!("{}.summary.json", self.command);
        self.write(&name, &text)?;
        Ok(text)
    }
}

/// Result of a subcommand: text for stdout.
pub struct Outcome {
    pub stdout: String,
}

pub fn run(cli: &Cli) -> CliResult<Outcome> {
    let run = Run::new(cli.out_dir(), cli.command.name());
    match &cli.command {
        Command::Estimate(a) => estimate(run, a),
        Command::Tune(a) => tune(run, a),
        Command::Cnplot(a) => cnplot(run, a),
        Command::Sparsify(a) => sparsify_cmd(run, a),
        Command::Stats(a) => stats(run, a),
        Command::Paths(a) => paths(run, a),
        Command::Communities(a) => communities_cmd(run, a),
        Command::FusedEstimate(a) => fused_estimate(run, a),
        Command::FusedTune(a) => fused_tune(run, a),
        Command::Diff(a) => diff(run, a),
        Command::Union(a) => union(run, a),
    }
}

fn file_name(path: &Path) -> String {
    path.file_name().map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned())
}

/// Class names made safe for file names.
fn file_stem(class: &str) -> String {
    class
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

fn load_data(args: &DataArgs) -> CliResult<Table> {
    let table = load_matrix(&args.input, &args.load_options())?;
    match &args.class_map {
        Some(path) => io::attach_classes(table, &load_class_map(path)?),
        None => Ok(table),
    }
}

fn data_summary(args: &DataArgs, table: &Table) -> Value {
    json!({
        "input": file_name(&args.input),
        "samples": table.data.nrows(),
        "features": table.data.ncols(),
    })
}

fn target_matrix(s: &SymMatrix, target: Target) -> CliResult<SymMatrix> {
    Ok(default_target(s, &TargetKind::from(TargetName::from(target)))?)
}

fn estimate(mut run: Run, a: &EstimateArgs) -> CliResult<Outcome> {
    let table = load_data(&a.data)?;
    let s = cov_ml(&table.data, true, false)?;
    let t = target_matrix(&s, a.target)?;
    let omega = ridge_alt(&s, &t, a.lambda)?;
    run.write("precision.csv", &sym_matrix_to_csv(&omega))?;
    run.write("pcor.csv", &sym_matrix_to_csv(&prec_to_pcor(&omega)?))?;
    let mut m = Map::new();
    m.insert("data".into(), data_summary(&a.data, &table));
    m.insert("target".into(), json!(a.target.as_str()));
    m.insert("lambda".into(), json!(a.lambda));
    m.insert("conditionNumber".into(), json!(omega.condition_number()?));
    Ok(Outcome { stdout: run.finish(m)? })
}

fn tune(mut run: Run, a: &TuneArgs) -> CliResult<Outcome> {
    let table = load_data(&a.data)?;
    let s = cov_ml(&table.data, true, false)?;
    let t = target_matrix(&s, a.target)?;
    let best = opt_penalty_kcv_auto(&table.data, a.lmin, a.lmax, a.k, &t, a.seed)?;
    run.write("precision.csv", &sym_matrix_to_csv(&best.precision))?;
    run.write("pcor.csv", &sym_matrix_to_csv(&prec_to_pcor(&best.precision)?))?;
    let mut m = Map::new();
    m.insert("data".into(), data_summary(&a.data, &table));
    m.insert("target".into(), json!(a.target.as_str()));
    m.insert("k".into(), json!(a.k));
    m.insert("seed".into(), json!(a.seed));
    m.insert("lmin".into(), json!(a.lmin));
    m.insert("lmax".into(), json!(a.lmax));
    m.insert("optLambda".into(), json!(best.lambda));
    m.insert("cvScore".into(), json!(best.score));
    m.insert("evaluations".into(), json!(best.evaluations));
    Ok(Outcome { stdout: run.finish(m)? })
}

fn cnplot(mut run: Run, a: &CnplotArgs) -> CliResult<Outcome> {
    let table = load_data(&a.data)?;
    let s = cov_ml(&table.data, true, false)?;
    let t = target_matrix(&s, a.target)?;
    let curve = cn_curve(&s, &t, a.lmin, a.lmax, a.steps)?;
    run.write("cnplot.svg", &cn_plot(&curve, a.marker)?)?;
    run.write("cnplot.csv", &curve.to_csv())?;
    let mut m = Map::new();
    m.insert("data".into(), data_summary(&a.data, &table));
    m.insert("target".into(), json!(a.target.as_str()));
    m.insert("lmin".into(), json!(a.lmin));
    m.insert("lmax".into(), json!(a.lmax));
    m.insert("steps".into(), json!(curve.len()));
    m.insert("marker".into(), json!(a.marker));
    Ok(Outcome { stdout: run.finish(m)? })
}

fn threshold_json(t: &Threshold) -> Value {
    serde_json::to_value(t).expect("thresholds serialize")
}

fn mixture_json(fit: &Option<MixtureFit>) -> Value {
    match fit {
        Some(f) => json!({"eta0": f.eta0, "kappa": f.kappa, "bandwidth": f.bandwidth}),
        None => Value::Null,
    }
}

fn retention_json(net: &SparsifiedNetwork) -> Value {
    let r = net.report();
    json!({"retained": r.retained, "totalPairs": r.total_pairs, "percentage": r.percentage()})
}

fn require_threshold(args: &ThresholdArgs) -> CliResult<Threshold> {
    args.threshold().ok_or_else(|| input("--method is required"))
}

fn sparsify_cmd(mut run: Run, a: &SparsifyArgs) -> CliResult<Outcome> {
    let path = run.default_input(&a.precision, "precision.csv");
    let omega = load_sym_matrix(&path)?;
    let threshold = require_threshold(&a.threshold)?;
    let (net, fit) = sparsify(&omega, threshold)?;
    run.write("sparse_precision.csv", &sym_matrix_to_csv(&net.sparse_precision))?;
    run.write("sparse_pcor.csv", &sym_matrix_to_csv(&net.sparse_parcor))?;
    run.graph("network", &GraphDoc::from_network(&Network::from_sparsified(&net, false)))?;
    let mut m = Map::new();
    m.insert("precision".into(), json!(file_name(&path)));
    m.insert("threshold".into(), threshold_json(&threshold));
    m.insert("retention".into(), retention_json(&net));
    m.insert("mixture".into(), mixture_json(&fit));
    run.finish(m)?;
    Ok(Outcome {
        stdout: format!("{}\n", net.report()),
    })
}

fn load_network(run: &Run, given: &Option<PathBuf>) -> CliResult<(PathBuf, Network)> {
    let path = run.default_input(given, "sparse_precision.csv");
    let omega = load_sym_matrix(&path)?;
    let net = Network::from_precision(&omega, false)?;
    Ok((path, net))
}

fn stats(mut run: Run, a: &PrecisionArgs) -> CliResult<Outcome> {
    let (path, net) = load_network(&run, &a.precision)?;
    let stats = network_stats(&net)?;
    run.write("stats.csv", &stats.to_table("").to_csv())?;
    let degrees: Vec<f64> = stats.nodes.iter().map(|s| s.degree as f64).collect();
    let dens = degree_densities(&[("degree".into(), degrees.clone())], 256)?;
    run.write("degree.svg", &dens.to_svg()?)?;
    run.write("degree.csv", &dens.to_csv())?;
    run.graph("stats", &GraphDoc::from_network(&net).with_stats(&stats))?;
    let mut m = Map::new();
    m.insert("precision".into(), json!(file_name(&path)));
    m.insert("nodes".into(), json!(net.node_count()));
    m.insert("edges".into(), json!(net.edges().len()));
    m.insert("meanDegree".into(), json!(degrees.iter().sum::<f64>() / degrees.len() as f64));
    Ok(Outcome { stdout: run.finish(m)? })
}

fn resolve_node(names: &[String], key: &str) -> CliResult<usize> {
    if let Some(i) = names.iter().position(|n| n == key) {
        return Ok(i);
    }
    match key.parse::<usize>() {
        Ok(k) if (1..=names.len()).contains(&k) => Ok(k - 1),
        _ => Err(input(format!("no feature `{key}`"))),
    }
}

fn paths(mut run: Run, a: &PathsArgs) -> CliResult<Outcome> {
    let path = run.default_input(&a.precision, "sparse_precision.csv");
    let omega = load_sym_matrix(&path)?;
    let from = resolve_node(omega.names(), &a.from)?;
    let to = resolve_node(omega.names(), &a.to)?;
    let report = path_decomposition(&omega, from, to, a.nr_paths, a.max_len)?;
    let mut text = serde_json::to_string_pretty(&report).expect("path reports serialize");
    text.push('\n');
    run.write("paths.json", &text)?;
    let mut m = Map::new();
    m.insert("precision".into(), json!(file_name(&path)));
    m.insert("from".into(), json!(omega.names()[from]));
    m.insert("to".into(), json!(omega.names()[to]));
    m.insert("paths".into(), json!(report.paths.len()));
    m.insert("marginalCovariance".into(), json!(report.marginal_covariance));
    m.insert("totalContribution".into(), json!(report.total_contribution()));
    Ok(Outcome { stdout: run.finish(m)? })
}

fn communities_cmd(mut run: Run, a: &PrecisionArgs) -> CliResult<Outcome> {
    let (path, net) = load_network(&run, &a.precision)?;
    let c = communities(&net)?;
    let mut csv = String::from("node,community\n");
    for (label, m) in net.labels().iter().zip(&c.membership) {
        csv.push_str(&format!("{label},{m}\n"));
    }
    run.write("communities.csv", &csv)?;
    run.graph("communities", &GraphDoc::from_network(&net).with_communities(&c))?;
    let mut m = Map::new();
    m.insert("precision".into(), json!(file_name(&path)));
    m.insert("communities".into(), json!(c.community_count()));
    m.insert("modularity".into(), json!(c.modularity));
    m.insert("membership".into(), json!(c.membership));
    Ok(Outcome { stdout: run.finish(m)? })
}

fn load_classes(args: &DataArgs) -> CliResult<(Table, ClassSet)> {
    if args.class_map.is_none() && args.class_column.is_none() {
        return Err(input("fused commands need --class-map or --class-column"));
    }
    let table = load_data(args)?;
    let classes = ClassSet::from_data(table.data.split_by_class()?)?;
    Ok((table, classes))
}

/// Per-class estimates, and with a threshold their sparsified networks,
/// joined statistics and degree densities.
fn fused_outputs(
    run: &mut Run,
    classes: &ClassSet,
    estimates: &[SymMatrix],
    threshold: Option<Threshold>,
    m: &mut Map<String, Value>,
) -> CliResult<String> {
    for (name, omega) in classes.names().iter().zip(estimates) {
        let stem = file_stem(name);
        run.write(&format!("precision.{stem}.csv"), &sym_matrix_to_csv(omega))?;
        run.write(&format!("pcor.{stem}.csv"), &sym_matrix_to_csv(&prec_to_pcor(omega)?))?;
    }
    m.insert("classes".into(), json!(classes.names()));
    m.insert("classSizes".into(), json!(classes.sizes()));
    let Some(threshold) = threshold else {
        return Ok(String::new());
    };
    let nets = sparsify_fused(estimates, &threshold)?;
    let mut stdout = String::new();
    let mut retention = Map::new();
    let mut named = Vec::new();
    let mut degrees = Vec::new();
    for (name, (net, fit)) in classes.names().iter().zip(&nets) {
        let stem = file_stem(name);
        run.write(&format!("sparse_precision.{stem}.csv"), &sym_matrix_to_csv(&net.sparse_precision))?;
        let network = Network::from_sparsified(net, false);
        run.graph(&format!("network.{stem}"), &GraphDoc::from_network(&network))?;
        let mut r = retention_json(net);
        r["mixture"] = mixture_json(fit);
        retention.insert(name.clone(), r);
        stdout.push_str(&format!("{name}:\n{}\n", net.report()));
        let s = network_stats(&network)?;
        degrees.push((name.clone(), s.nodes.iter().map(|n| n.degree as f64).collect::<Vec<f64>>()));
        named.push((name.clone(), net.clone()));
    }
    run.write("stats.csv", &network_stats_fused(&named)?.to_csv())?;
    let dens = degree_densities(&degrees, 256)?;
    run.write("degree.svg", &dens.to_svg()?)?;
    run.write("degree.csv", &dens.to_csv())?;
    m.insert("threshold".into(), threshold_json(&threshold));
    m.insert("retention".into(), Value::Object(retention));
    Ok(stdout)
}

fn fit_parts(fit: ridgenet_core::fused::FusedFit) -> (Vec<SymMatrix>, Value) {
    let info = json!({"sweeps": fit.sweeps, "residual": fit.residual});
    (fit.estimates, info)
}

#[derive(Deserialize)]
struct TemplateFile {
    template: Vec<Vec<PenaltyEntry>>,
    #[serde(default)]
    values: BTreeMap<String, f64>,
}

fn read_penalty(path: &Path) -> CliResult<PenaltySpec> {
    let text = io::read_text(path)?;
    let file: TemplateFile =
        serde_json::from_str(&text).map_err(|e| input(format!("{}: invalid penalty JSON: {e}", path.display())))?;
    // "0" and other numeric strings are fixed values
    let template = file
        .template
        .into_iter()
        .map(|row| {
            row.into_iter()
                .map(|e| match e {
                    PenaltyEntry::Name(s) => PenaltyEntry::parse(&s),
                    fixed => fixed,
                })
                .collect()
        })
        .collect();
    Ok(PenaltySpec::new(template, file.values)?)
}

fn fused_estimate(mut run: Run, a: &FusedEstimateArgs) -> CliResult<Outcome> {
    let (table, classes) = load_classes(&a.data)?;
    let penalty = match &a.penalty {
        Some(path) => read_penalty(path)?,
        None => PenaltySpec::uniform(classes.len(), a.ridge.expect("required by clap"), a.fusion),
    };
    let targets = default_target_fused(&classes, &TargetKind::from(TargetName::from(a.target)))?;
    let (estimates, fit) = fit_parts(ridge_p_fused(&classes, &targets, &penalty, FusedOptions::default())?);
    let mut m = Map::new();
    m.insert("data".into(), data_summary(&a.data, &table));
    m.insert("target".into(), json!(a.target.as_str()));
    m.insert("penalty".into(), serde_json::to_value(&penalty).expect("penalties serialize"));
    m.insert("fit".into(), fit);
    let reports = fused_outputs(&mut run, &classes, &estimates, a.threshold.threshold(), &mut m)?;
    let summary = run.finish(m)?;
    Ok(Outcome {
        stdout: if reports.is_empty() { summary } else { reports },
    })
}

fn fused_tune(mut run: Run, a: &FusedTuneArgs) -> CliResult<Outcome> {
    let (table, classes) = load_classes(&a.data)?;
    let template = match &a.template {
        Some(path) => read_penalty(path)?,
        None => PenaltySpec::uniform(classes.len(), 1.0, 1.0),
    };
    let targets = default_target_fused(&classes, &TargetKind::from(TargetName::from(a.target)))?;
    let best = opt_penalty_fused(&classes, &targets, &template, a.k, a.seed)?;
    let mut m = Map::new();
    m.insert("data".into(), data_summary(&a.data, &table));
    m.insert("target".into(), json!(a.target.as_str()));
    m.insert("k".into(), json!(a.k));
    m.insert("seed".into(), json!(a.seed));
    m.insert("optPenalties".into(), json!(best.values));
    m.insert("penalty".into(), serde_json::to_value(&best.penalty).expect("penalties serialize"));
    m.insert("cvScore".into(), json!(best.score));
    m.insert("evaluations".into(), json!(best.evaluations));
    let reports = fused_outputs(&mut run, &classes, &best.estimates, a.threshold.threshold(), &mut m)?;
    let summary = run.finish(m)?;
    Ok(Outcome {
        stdout: if reports.is_empty() { summary } else { reports },
    })
}

fn diff(mut run: Run, a: &DiffArgs) -> CliResult<Outcome> {
    let ga = GraphDoc::from_json(&io::read_text(&a.a)?)?;
    let gb = GraphDoc::from_json(&io::read_text(&a.b)?)?;
    let mut labels = ga.labels();
    for l in gb.labels() {
        if !labels.contains(&l) {
            labels.push(l);
        }
    }
    let d = diff_network(&ga.weights_over(&labels)?, &gb.weights_over(&labels)?)?;
    run.graph("diff", &GraphDoc::from_diff(&d))?;
    let count = |tag: ridgenet_core::fused::DiffTag| d.edges.iter().filter(|e| e.tag == tag).count();
    let mut m = Map::new();
    m.insert("a".into(), json!(file_name(&a.a)));
    m.insert("b".into(), json!(file_name(&a.b)));
    m.insert("onlyA".into(), json!(count(ridgenet_core::fused::DiffTag::OnlyA)));
    m.insert("onlyB".into(), json!(count(ridgenet_core::fused::DiffTag::OnlyB)));
    Ok(Outcome { stdout: run.finish(m)? })
}

fn union(mut run: Run, a: &UnionArgs) -> CliResult<Outcome> {
    let ma = load_sym_matrix(&a.a)?;
    let mb = load_sym_matrix(&a.b)?;
    let (ua, ub, kept) = union_support(&ma, &mb)?;
    run.write("union.a.csv", &sym_matrix_to_csv(&ua))?;
    run.write("union.b.csv", &sym_matrix_to_csv(&ub))?;
    let mut m = Map::new();
    m.insert("a".into(), json!(file_name(&a.a)));
    m.insert("b".into(), json!(file_name(&a.b)));
    m.insert("kept".into(), json!(kept.iter().map(|&i| &ma.names()[i]).collect::<Vec<_>>()));
    Ok(Outcome { stdout: run.finish(m)? })
}
