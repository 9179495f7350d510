use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use mixgraph::empirical::StatsSource;
use mixgraph::eval::{align_components, assumption_margins, diagnostics, DiagnosticsConfig, DiagnosticsReport};
use mixgraph::model::{build_mixture, sample, GeneratorConfig, MixtureModel, Oracle, SampleSet};
use mixgraph::pipeline::{estimate_component_graphs, find_components};
use mixgraph::ranktest::{choose_threshold, rank_test, RankTestConfig, ThresholdPolicy};
use mixgraph::spectral::random_rotation;
use mixgraph::Error;
use serde::Serialize;

use crate::config::{GenerateConfig, LearnConfig, RunReport, Status, Timings, XiPolicy};
use crate::{DiagnoseArgs, EvalArgs, GenerateArgs, LearnArgs};

pub const EXIT_OK: u8 = 0;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_ASSUMPTION: u8 = 3;
pub const EXIT_SPECTRAL: u8 = 4;
pub const EXIT_IO: u8 = 5;

pub fn library_exit_code(e: &Error) -> u8 {
    match e {
        Error::Assumption(_) | Error::NoIsolatedNode | Error::AllPairsMissing => EXIT_ASSUMPTION,
        Error::Spectral(_) | Error::NullEvent(_) => EXIT_SPECTRAL,
        Error::Io(_) => EXIT_IO,
        _ => EXIT_CONFIG,
    }
}

pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Error>() {
            return library_exit_code(e);
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return EXIT_IO;
        }
    }
    EXIT_CONFIG
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

fn write_json<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match out {
        Some(path) => std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))?,
        None => println!("{text}"),
    }
    Ok(())
}

fn load_model(path: &Path) -> Result<MixtureModel> {
    MixtureModel::load(path).with_context(|| format!("loading model {}", path.display()))
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| "n/a".into(), |v| format!("{v:.4e}"))
}

fn print_diagnostics(d: &DiagnosticsReport) {
    let f = &d.flags;
    eprintln!("diagnostics: p={} d={} r={} eta={}", d.p, d.d, d.r, d.eta);
    eprintln!("  rho_min      {}", opt(d.rho_min));
    eprintln!("  vartheta     {}", opt(d.vartheta));
    eprintln!("  alpha        {}", opt(d.alpha));
    eprintln!("  kappa        {}", opt(d.kappa));
    eprintln!("  rho1_min     {}", opt(d.rho1_min));
    eprintln!("  n_rank       {}", opt(d.n_rank));
    eprintln!("  n_spect      {}", opt(d.n_spect));
    eprintln!("  n_tree       {}", opt(d.n_tree));
    eprintln!("  flags        A1={} A3={} A6={} A7={} A10={}", f.a1, f.a3, f.a6, f.a7, f.a10);
}

pub fn generate(args: GenerateArgs) -> Result<u8> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str::<GenerateConfig>(&text).map_err(|e| anyhow!(Error::Parse(e.to_string())))?
        }
        None => {
            let (Some(p), Some(d), Some(r)) = (args.p, args.d, args.r) else {
                bail!(Error::InvalidConfig("generate needs --p, --d and --r (or --config)".into()));
            };
            let family = args.family.as_deref().unwrap_or("tree").parse()?;
            let seed = args.seed.unwrap_or(0);
            GenerateConfig {
                generator: GeneratorConfig::new(p, d, r, family, seed),
                n: 0,
                sample_seed: seed,
                model_out: PathBuf::from("model.json"),
                samples_out: PathBuf::from("samples.txt"),
                labels_out: None,
                diagnostics_out: None,
            }
        }
    };
    let g = &mut cfg.generator;
    if args.config.is_some() {
        g.p = args.p.unwrap_or(g.p);
        g.d = args.d.unwrap_or(g.d);
        g.r = args.r.unwrap_or(g.r);
        if let Some(f) = &args.family {
            g.family = f.parse()?;
        }
        g.seed = args.seed.unwrap_or(g.seed);
    }
    g.max_degree = args.max_degree.unwrap_or(g.max_degree);
    if let Some(s) = &args.strength {
        g.potential_strength = (s[0], s[1]);
    }
    if args.eta.is_some() {
        g.eta = args.eta;
    }
    cfg.n = args.n.unwrap_or(cfg.n);
    cfg.sample_seed = args.sample_seed.or(args.seed).unwrap_or(cfg.sample_seed);
    cfg.model_out = args.model_out.unwrap_or(cfg.model_out);
    cfg.samples_out = args.samples_out.unwrap_or(cfg.samples_out);
    cfg.labels_out = args.labels_out.or(cfg.labels_out);
    cfg.diagnostics_out = args.diagnostics_out.or(cfg.diagnostics_out);

    // round-trip through the file format so later runs on the saved model reproduce these numbers
    let model = MixtureModel::from_json(&build_mixture(&cfg.generator)?.to_json()?)?;
    let samples = sample(&model, cfg.n, cfg.sample_seed, cfg.generator.enumeration_cap)?;
    model.save(&cfg.model_out).with_context(|| format!("writing {}", cfg.model_out.display()))?;
    samples.save(&cfg.samples_out).with_context(|| format!("writing {}", cfg.samples_out.display()))?;
    if let Some(path) = &cfg.labels_out {
        samples.save_labels(path).with_context(|| format!("writing {}", path.display()))?;
    }
    let diag = diagnostics(
        &model,
        &DiagnosticsConfig {
            eta: cfg.generator.eta,
            enumeration_cap: cfg.generator.enumeration_cap,
            ..Default::default()
        },
    )?;
    eprintln!(
        "wrote {} and {} ({} samples, union graph with {} edges)",
        cfg.model_out.display(),
        cfg.samples_out.display(),
        samples.len(),
        model.union_graph().num_edges()
    );
    print_diagnostics(&diag);
    if let Some(path) = &cfg.diagnostics_out {
        write_json(&diag, Some(path))?;
    }
    Ok(EXIT_OK)
}

fn resolve_learn(args: &LearnArgs) -> Result<LearnConfig> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::Parse(e.to_string()))?;
            let value = match value.get("config") {
                Some(inner) if value.get("status").is_some() => inner.clone(),
                _ => value,
            };
            serde_json::from_value::<LearnConfig>(value).map_err(|e| Error::Parse(e.to_string()))?
        }
        None => {
            let (Some(r), Some(eta)) = (args.r, args.eta) else {
                bail!(Error::InvalidConfig("learn needs --r and --eta (or --config)".into()));
            };
            LearnConfig::new(r, eta)
        }
    };
    if let Some(r) = args.r {
        cfg.r = r;
    }
    if let Some(eta) = args.eta {
        cfg.eta = eta;
        cfg.find.separator_cap = 2 * eta;
    }
    if args.gamma.is_some() {
        cfg.gamma = args.gamma;
        cfg.find.gamma = args.gamma;
    }
    if args.samples.is_some() {
        cfg.samples = args.samples.clone();
    }
    if args.model.is_some() {
        cfg.model = args.model.clone();
    }
    cfg.exact |= args.exact;
    cfg.find.tree_fast_path |= args.tree_fast_path;
    if let Some(xi) = args.xi {
        cfg.xi = Some(xi);
        cfg.xi_policy = XiPolicy::Fixed;
    }
    if let Some(policy) = args.xi_policy {
        cfg.xi_policy = policy;
    }
    cfg.zeta = args.zeta.unwrap_or(cfg.zeta);
    cfg.delta = args.delta.unwrap_or(cfg.delta);
    cfg.epsilon = args.epsilon.unwrap_or(cfg.epsilon);
    cfg.rotation_seed = args.rotation_seed.unwrap_or(cfg.rotation_seed);
    cfg.enumeration_cap = args.enumeration_cap.unwrap_or(cfg.enumeration_cap);
    if args.component_graphs.is_some() {
        cfg.component_graph_threshold = args.component_graphs;
    }

    if cfg.r < 1 {
        bail!(Error::InvalidConfig("--r must be at least 1".into()));
    }
    if cfg.exact && cfg.model.is_none() {
        bail!(Error::InvalidConfig("--exact needs --model".into()));
    }
    if !cfg.exact && cfg.samples.is_none() {
        bail!(Error::InvalidConfig("learn needs --samples, or --model with --exact".into()));
    }
    if cfg.xi_policy == XiPolicy::Fixed && cfg.xi.is_none() {
        bail!(Error::InvalidConfig("--xi-policy fixed needs --xi".into()));
    }
    if cfg.xi_policy == XiPolicy::Oracle && cfg.model.is_none() {
        bail!(Error::InvalidConfig("--xi-policy oracle needs --model".into()));
    }
    if !(cfg.delta > 0.0 && cfg.delta < 1.0) || !(cfg.epsilon > 0.0) || !(cfg.zeta >= 0.0) {
        bail!(Error::InvalidConfig("need delta in (0, 1), epsilon > 0 and zeta >= 0".into()));
    }
    Ok(cfg)
}

pub fn learn(args: LearnArgs) -> Result<u8> {
    let start = Instant::now();
    let cfg = resolve_learn(&args)?;

    let truth = cfg.model.as_deref().map(load_model).transpose()?;
    let src = if cfg.exact {
        StatsSource::exact(truth.as_ref().expect("checked"), cfg.enumeration_cap)?
    } else {
        let path = cfg.samples.as_deref().expect("checked");
        let samples = SampleSet::load(path).with_context(|| format!("loading samples {}", path.display()))?;
        StatsSource::empirical(samples)?
    };
    if let Some(m) = &truth {
        if m.num_nodes() != src.num_nodes() || m.alphabet_size() != src.alphabet_size() {
            bail!(Error::InvalidConfig("model and samples disagree on p or d".into()));
        }
    }

    let mut report = RunReport {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: cfg.clone(),
        status: Status {
            ok: true,
            exit_code: 0,
            error: None,
        },
        warnings: Vec::new(),
        timings: Timings {
            load_ms: ms(start),
            ..Default::default()
        },
        graph_estimate: None,
        component_estimate: None,
        component_graphs: None,
        diagnostics: None,
        evaluation: None,
    };

    if let Err(e) = run_stages(&cfg, &src, truth.as_ref(), &mut report) {
        let code = library_exit_code(&e);
        report.status = Status {
            ok: false,
            exit_code: code as i32,
            error: Some(e.to_string()),
        };
    }
    report.timings.total_ms = ms(start);
    for w in &report.warnings {
        log::warn!("{w}");
    }
    write_json(&report, args.out.as_deref())?;
    if let Some(g) = &report.graph_estimate {
        eprintln!("graph estimate: {} edges, xi = {:.4e}", g.graph.num_edges(), g.xi);
    }
    if let Some(est) = &report.component_estimate {
        eprintln!("weights: {:?}", est.weights);
        for (h, t) in est.trees.iter().enumerate() {
            eprintln!("tree {h}: {:?}", t.edges);
        }
    }
    if let Some(e) = &report.status.error {
        eprintln!("error: {e}");
    }
    Ok(report.status.exit_code as u8)
}

fn run_stages(
    cfg: &LearnConfig,
    src: &StatsSource,
    truth: Option<&MixtureModel>,
    report: &mut RunReport,
) -> mixgraph::Result<()> {
    let t = Instant::now();
    let policy = match cfg.xi_policy {
        XiPolicy::Fixed => ThresholdPolicy::Fixed { xi: cfg.xi.expect("checked") },
        XiPolicy::Gap => ThresholdPolicy::Gap,
        XiPolicy::Oracle => {
            let m = truth.expect("checked");
            let oracle = Oracle::new(m, cfg.enumeration_cap)?;
            let rho_min = assumption_margins(m, &oracle, cfg.eta)
                .rho_min
                .ok_or_else(|| Error::InfeasibleThreshold("the model has no edges, rho_min is undefined".into()))?;
            ThresholdPolicy::Oracle { rho_min, zeta: cfg.zeta }
        }
    };
    let xi = choose_threshold(&policy, Some(src), cfg.eta, cfg.r)?;
    let mut rank_cfg = RankTestConfig::new(cfg.eta, cfg.r, xi);
    rank_cfg.gamma = cfg.gamma;
    rank_cfg.zeta = cfg.zeta;
    let graph = rank_test(src, &rank_cfg)?;
    report.timings.rank_test_ms = ms(t);
    let p = graph.graph.num_nodes();
    let density = graph.graph.num_edges() as f64 / (p * (p - 1) / 2).max(1) as f64;
    if graph.graph.isolated_nodes().is_empty() {
        report.warnings.push(format!(
            "graph estimate has no isolated node ({} of {} pairs are edges); it is likely over-connected: \
             increase --eta or the threshold",
            graph.graph.num_edges(),
            p * (p - 1) / 2
        ));
    } else if density > 0.5 {
        report.warnings.push(format!(
            "dense graph estimate ({:.0}% of pairs are edges); it is likely over-connected: \
             increase --eta or the threshold",
            100.0 * density
        ));
    }
    if !graph.insufficient_data.is_empty() {
        report
            .warnings
            .push(format!("{} pairs kept as edges for lack of data", graph.insufficient_data.len()));
    }
    let ghat = graph.graph.clone();
    report.graph_estimate = Some(graph);

    if let Some(m) = truth {
        let t = Instant::now();
        let diag = diagnostics(
            m,
            &DiagnosticsConfig {
                eta: Some(cfg.eta),
                gamma: cfg.gamma,
                zeta: cfg.zeta,
                delta: cfg.delta,
                epsilon: cfg.epsilon,
                enumeration_cap: cfg.enumeration_cap,
            },
        )?;
        report.diagnostics = Some(diag);
        report.timings.evaluation_ms += ms(t);
    }

    let t = Instant::now();
    let z = random_rotation(cfg.r, cfg.rotation_seed);
    let est = find_components(src, &ghat, cfg.r, &z, &cfg.find)?;
    if !est.alignment.consistent {
        report.warnings.push(format!(
            "label alignment across separators failed: discrepancy {:.3e} > {:.1e}",
            est.alignment.max_discrepancy, est.alignment.tolerance
        ));
    }
    if !est.missing_pairs.is_empty() {
        report.warnings.push(format!("{} pairs have no witness and were skipped", est.missing_pairs.len()));
    }
    if let Some(threshold) = cfg.component_graph_threshold {
        report.component_graphs = Some(estimate_component_graphs(
            &est,
            src,
            &ghat,
            threshold,
            &cfg.find,
            cfg.enumeration_cap,
        )?);
    }
    report.timings.components_ms = ms(t);

    if let Some(m) = truth {
        let t = Instant::now();
        report.evaluation = Some(align_components(&est, m, Some(&ghat), cfg.enumeration_cap)?);
        report.timings.evaluation_ms += ms(t);
    }
    report.component_estimate = Some(est);
    Ok(())
}

pub fn eval(args: EvalArgs) -> Result<u8> {
    let text = std::fs::read_to_string(&args.report).with_context(|| format!("reading {}", args.report.display()))?;
    let report: RunReport = serde_json::from_str(&text).map_err(|e| Error::Parse(format!("not a learn report: {e}")))?;
    let est = report
        .component_estimate
        .as_ref()
        .ok_or_else(|| Error::InvalidConfig("the report holds no component estimate".into()))?;
    let model = load_model(&args.model)?;
    let p = report.graph_estimate.as_ref().map_or(model.num_nodes(), |g| g.graph.num_nodes());
    if model.num_nodes() != p || model.num_components() != est.num_components() {
        bail!(Error::InvalidConfig("report and model disagree on p or r".into()));
    }
    let graph = report.graph_estimate.as_ref().map(|g| &g.graph);
    let ev = align_components(est, &model, graph, report.config.enumeration_cap)?;
    eprintln!("component permutation   {:?}", ev.permutation);
    if let Some(g) = &ev.graph {
        eprintln!(
            "union graph             precision {:.3}  recall {:.3}  exact {}",
            g.precision, g.recall, g.exact_match
        );
    }
    eprintln!("tree exact match        {:?}", ev.tree_exact_match);
    eprintln!("tree F1                 {:?}", ev.tree_f1);
    eprintln!("max marginal error      {:.3e}", ev.max_marginal_error);
    eprintln!("mean marginal error     {:.3e}", ev.mean_marginal_error);
    eprintln!("weight l1 error         {:.3e}", ev.weight_l1_error);
    write_json(&ev, args.out.as_deref())?;
    Ok(EXIT_OK)
}

pub fn diagnose(args: DiagnoseArgs) -> Result<u8> {
    let model = load_model(&args.model)?;
    let defaults = DiagnosticsConfig::default();
    let cfg = DiagnosticsConfig {
        eta: args.eta,
        gamma: args.gamma,
        zeta: args.zeta.unwrap_or(defaults.zeta),
        delta: args.delta.unwrap_or(defaults.delta),
        epsilon: args.epsilon.unwrap_or(defaults.epsilon),
        enumeration_cap: defaults.enumeration_cap,
    };
    if !(cfg.delta > 0.0 && cfg.delta < 1.0) || !(cfg.epsilon > 0.0) || !(cfg.zeta >= 0.0) {
        bail!(Error::InvalidConfig("need delta in (0, 1), epsilon > 0 and zeta >= 0".into()));
    }
    let report = diagnostics(&model, &cfg)?;
    print_diagnostics(&report);
    write_json(&report, args.out.as_deref())?;
    Ok(EXIT_OK)
}
