//! Subcommand implementations.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use nalgebra::DMatrix;
use sha2::{Digest, Sha256};

use nethac_core::estim::{fit_pseudo_ml, peer_design, sandwich_variance};
use nethac_core::hac::{
    generalized_spatial_hac, iid_cov, network_hac, spatial_hac, Center, HacConfig, HacEstimate,
};
use nethac_core::kernel::Kernel;
use nethac_core::mc::{
    run_probit_study_checkpointed, run_weighted_outcome_study_checkpointed, summarize, McConfig,
    McReport, ReportFormat, StudyKind,
};
use nethac_core::netgen::{form_rgg, sample_positions};
use nethac_core::rng::RngSpec;
use nethac_core::simsocial::{
    simulate_dynamic, simulate_static_best_response, InitCondition, Link, MomentKind,
    MomentSpec, OutcomeModel, PeerStat,
};
use nethac_core::simsocial::{draw_exp1_covariates, ErrorDesign};
use nethac_core::types::Panel;
use nethac_core::CoreError;

use crate::bundle::{read_bundle, write_edges_csv, write_nodes_csv, DataBundle};
use crate::config::FileConfig;
use crate::{EstimateArgs, HacArgs, McArgs, SimulateArgs};

/// Resolved simulate parameters: CLI flag, then config file, then default.
struct SimModel {
    beta1: f64,
    beta2: f64,
    beta3: f64,
    error_design: ErrorDesign,
}

fn resolve_sim_model(args: &SimulateArgs, file: &FileConfig) -> anyhow::Result<SimModel> {
    let design = match &args.error_design {
        Some(d) => *d,
        None => match file.model.error_design.as_deref() {
            None => ErrorDesign::NeighborAvgWeighted,
            Some("iid") => ErrorDesign::Iid,
            Some("neighbor_avg_weighted") => ErrorDesign::NeighborAvgWeighted,
            Some(other) => bail!("unknown error design '{other}' in config"),
        },
    };
    Ok(SimModel {
        beta1: args.beta1.or(file.model.beta1).unwrap_or(0.5),
        beta2: args.beta2.or(file.model.beta2).unwrap_or(-0.3),
        beta3: args.beta3.or(file.model.beta3).unwrap_or(1.0),
        error_design: design,
    })
}

fn config_hash(value: &serde_json::Value) -> String {
    let mut hasher = Sha256::new();
    hasher.update(value.to_string().as_bytes());
    hex::encode(hasher.finalize())
}

mod hex {
    pub fn encode(bytes: impl AsRef<[u8]>) -> String {
        bytes.as_ref().iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn write_json(path: &Path, value: &serde_json::Value) -> anyhow::Result<()> {
    std::fs::write(path, format!("{}\n", serde_json::to_string_pretty(value)?))
        .with_context(|| format!("cannot write {}", path.display()))
}

fn model_from(resolved: &SimModel, is_static: bool, link: Link) -> OutcomeModel {
    OutcomeModel {
        intercept: resolved.beta1,
        covariate_coefs: vec![resolved.beta2],
        peer_coef: resolved.beta3,
        link,
        error_design: resolved.error_design,
        peer_stat: if is_static {
            PeerStat::ContemporaneousNeighborMean
        } else {
            PeerStat::LaggedNeighborMean
        },
    }
}

pub fn cmd_simulate(args: &SimulateArgs, file: &FileConfig, seed: u64) -> anyhow::Result<()> {
    let resolved = resolve_sim_model(args, file)?;
    let out = &args.out;
    std::fs::create_dir_all(out)?;
    let spec = RngSpec::new(seed, 0);
    let mut rng = spec.rng();
    let (positions, omega) = sample_positions(args.n, args.d, args.kappa, &mut rng)?;
    let graph = form_rgg(positions, omega, args.rgg_threshold)?;

    let panel = if args.r#static {
        if resolved.beta3 < 0.0 {
            return Err(CoreError::NotSupermodular(resolved.beta3).into());
        }
        let model = model_from(&resolved, true, Link::Probit);
        let covariates = draw_exp1_covariates(args.n, &mut rng);
        let y = simulate_static_best_response(
            &graph,
            &model,
            &covariates,
            &mut rng,
            InitCondition::AllOnes,
        )?;
        let mut cov_flat = Vec::with_capacity(args.n);
        for i in 0..args.n {
            cov_flat.push(covariates[(i, 0)]);
        }
        Panel::new(args.n, 1, 1, y, cov_flat)?
    } else {
        let model = model_from(&resolved, false, Link::Probit);
        simulate_dynamic(&graph, &model, args.t, &mut rng)?
    };

    let nodes = out.join("nodes.csv");
    let edges = out.join("edges.csv");
    write_nodes_csv(&nodes, &graph, Some(&panel))?;
    write_edges_csv(&edges, &graph)?;

    let cfg_json = serde_json::json!({
        "command": "simulate",
        "n": args.n,
        "d": args.d,
        "kappa": args.kappa,
        "rgg_threshold": args.rgg_threshold,
        "t": args.t,
        "beta": [resolved.beta1, resolved.beta2, resolved.beta3],
        "error_design": resolved.error_design,
        "static": args.r#static,
        "seed": seed,
    });
    let manifest = serde_json::json!({
        "command": "simulate",
        "seed": seed,
        "config_hash": config_hash(&cfg_json),
        "config": cfg_json,
        "scale": graph.scale(),
        "edge_count": graph.edge_count(),
        "files": {
            "nodes": nodes.file_name().unwrap().to_str(),
            "edges": edges.file_name().unwrap().to_str(),
        },
    });
    write_json(&out.join("manifest.json"), &manifest)?;
    println!(
        "wrote {} nodes, {} edges to {}",
        graph.n(),
        graph.edge_count(),
        out.display()
    );
    Ok(())
}

pub fn parse_center(s: &str, m: usize) -> anyhow::Result<Center> {
    match s {
        "sample_mean" => Ok(Center::SampleMean),
        "zero" => Ok(Center::KnownConstant(vec![0.0; m])),
        other => {
            let vals: Result<Vec<f64>, _> = other.split(',').map(str::parse).collect();
            let vals = vals.map_err(|_| {
                anyhow!("center must be 'sample_mean', 'zero', or a comma-separated vector")
            })?;
            if vals.len() != m {
                bail!("center vector has {} entries, need {m}", vals.len());
            }
            Ok(Center::KnownConstant(vals))
        }
    }
}

fn bandwidth_grid(args_bandwidth: Option<f64>, grid: &Option<String>) -> anyhow::Result<Option<Vec<f64>>> {
    if let Some(g) = grid {
        let vals: Result<Vec<f64>, _> = g.split(',').map(str::parse).collect();
        return Ok(Some(vals.context("bad --bandwidth-grid")?));
    }
    Ok(args_bandwidth.map(|b| vec![b]))
}

struct HacKnobs {
    kernel: Kernel,
    theta_bandwidth: Option<f64>,
    theta_kernel: Kernel,
    center: Center,
    psd_floor: Option<f64>,
}

/// Variance of the score moments for one method/bandwidth on a fitted model.
fn score_sigma(
    method: &str,
    h: f64,
    knobs: &HacKnobs,
    scores: &DMatrix<f64>,
    bundle: &DataBundle,
) -> anyhow::Result<HacEstimate> {
    let mut cfg = HacConfig::new(knobs.kernel, h).with_center(knobs.center.clone());
    cfg.psd_floor = knobs.psd_floor;
    let est = match method {
        "iid" | "naive" => iid_cov(scores, &knobs.center)?,
        _ if h == 0.0 => iid_cov(scores, &knobs.center)?,
        "spatial" => spatial_hac(scores, bundle.graph.positions(), &cfg)?,
        "network" => {
            if !bundle.has_edges {
                bail!("network HAC needs an --edges file");
            }
            network_hac(scores, &bundle.graph, &cfg)?
        }
        "generalized_spatial" | "gs" => {
            let (_, db) =
                HacConfig::generalized_default_bandwidths(bundle.graph.n(), bundle.graph.d());
            cfg = cfg.with_theta(knobs.theta_bandwidth.unwrap_or(db), knobs.theta_kernel);
            generalized_spatial_hac(scores, bundle.graph.positions(), &cfg)?
        }
        other => bail!("unknown HAC method '{other}'"),
    };
    Ok(est)
}

pub fn cmd_estimate(args: &EstimateArgs, file: &FileConfig) -> anyhow::Result<()> {
    let bundle = read_bundle(&args.nodes, args.edges.as_deref(), 1.0)?;
    let panel = bundle
        .panel
        .as_ref()
        .ok_or_else(|| anyhow!("nodes file has no outcome columns"))?;
    let (y, x) = peer_design(panel, &bundle.graph, args.t)?;
    let link_name = args
        .link
        .clone()
        .or_else(|| file.model.link.clone())
        .unwrap_or_else(|| "probit".into());
    let link: Link = link_name.parse()?;
    let fit = fit_pseudo_ml(&y, &x, link)?;
    let m = x.ncols();
    let center_name = args
        .center
        .clone()
        .or_else(|| file.hac.center.clone())
        .unwrap_or_else(|| "zero".into());
    let center = parse_center(&center_name, m)?;
    let kernel: Kernel = args
        .kernel
        .clone()
        .or_else(|| file.hac.kernel.clone())
        .unwrap_or_else(|| "bartlett".into())
        .parse()?;
    let theta_kernel: Kernel = args
        .theta_kernel
        .clone()
        .or_else(|| file.hac.theta_kernel.clone())
        .unwrap_or_else(|| "uniform".into())
        .parse()?;
    let theta_bandwidth = args.theta_bandwidth.or(file.hac.theta_bandwidth);
    let psd_floor = args.psd_floor.or(file.hac.psd_floor);
    let bandwidth = args.bandwidth.or(file.hac.bandwidth);
    let methods: Vec<String> = if !args.method.is_empty() {
        args.method.clone()
    } else if let Some(m) = &file.hac.method {
        vec![m.clone()]
    } else {
        vec!["spatial".into()]
    };
    let knobs = HacKnobs {
        kernel,
        theta_bandwidth,
        theta_kernel,
        center: center.clone(),
        psd_floor,
    };
    let n = bundle.graph.n();

    let mut se_blocks = Vec::new();
    for method in &methods {
        let grid = bandwidth_grid(bandwidth, &args.bandwidth_grid)?.unwrap_or_else(|| {
            vec![match method.as_str() {
                "network" => HacConfig::network_default_bandwidth(n),
                "generalized_spatial" | "gs" => HacConfig::generalized_default_bandwidths(n, bundle.graph.d()).0,
                _ => HacConfig::spatial_default_bandwidth(n, bundle.graph.d()),
            }]
        });
        for &h in &grid {
            let est = score_sigma(method, h, &knobs, &fit.scores, &bundle)?;
            let (_, se) = sandwich_variance(&fit, &est.sigma)?;
            se_blocks.push(serde_json::json!({
                "method": method,
                "bandwidth": h,
                "se": se,
            }));
        }
    }

    let mut design_columns = vec!["intercept".to_string()];
    for c in 0..panel.k() {
        design_columns.push(format!("x{c}"));
    }
    design_columns.push("peer_mean".to_string());
    let result = serde_json::json!({
        "command": "estimate",
        "link": link_name,
        "n": n,
        "t": args.t,
        "design_columns": design_columns,
        "coefficients": fit.beta_hat.as_slice(),
        "log_likelihood": fit.log_likelihood,
        "iterations": fit.iterations,
        "converged": fit.converged,
        "kernel": kernel,
        "center": center_name,
        "se": se_blocks,
    });
    match &args.out {
        Some(path) => write_json(path, &result)?,
        None => println!("{}", serde_json::to_string_pretty(&result)?),
    }
    Ok(())
}

fn parse_moment(args: &HacArgs) -> anyhow::Result<MomentSpec> {
    let kind = match args.moment.as_str() {
        "choice_prob" => MomentKind::ChoiceProb { t: args.t },
        "weighted_outcome" => MomentKind::WeightedOutcome { t: args.t },
        "dyad_11" => MomentKind::Dyad11 { t: args.t },
        "intransitive_triad_000" => MomentKind::IntransitiveTriad000 { t: args.t },
        "asf_bounds" => {
            let x = args
                .asf_x
                .as_ref()
                .ok_or_else(|| anyhow!("asf_bounds needs --asf-x v1,v2,..."))?;
            let vals: Result<Vec<f64>, _> = x.split(',').map(str::parse).collect();
            MomentKind::AsfBounds {
                x: vals.context("bad --asf-x")?,
            }
        }
        other => bail!("unknown moment '{other}'"),
    };
    Ok(MomentSpec::new(kind))
}

pub fn cmd_hac(args: &HacArgs, file: &FileConfig) -> anyhow::Result<()> {
    let bundle = read_bundle(&args.nodes, args.edges.as_deref(), 1.0)?;
    let panel = bundle
        .panel
        .as_ref()
        .ok_or_else(|| anyhow!("nodes file has no outcome columns"))?;
    let spec = parse_moment(args)?;
    let psi = nethac_core::simsocial::eval_moments(panel, &bundle.graph, &spec)?;
    let m = psi.values.ncols();
    let center_name = args
        .center
        .clone()
        .or_else(|| file.hac.center.clone())
        .unwrap_or_else(|| "sample_mean".into());
    let center = parse_center(&center_name, m)?;
    let kernel: Kernel = args
        .kernel
        .clone()
        .or_else(|| file.hac.kernel.clone())
        .unwrap_or_else(|| "bartlett".into())
        .parse()?;
    let theta_kernel: Kernel = args
        .theta_kernel
        .clone()
        .or_else(|| file.hac.theta_kernel.clone())
        .unwrap_or_else(|| "uniform".into())
        .parse()?;
    let method = args
        .method
        .clone()
        .or_else(|| file.hac.method.clone())
        .unwrap_or_else(|| "spatial".into());
    let bandwidth = args.bandwidth.or(file.hac.bandwidth);
    let theta_bandwidth = args.theta_bandwidth.or(file.hac.theta_bandwidth);
    let psd_floor = args.psd_floor.or(file.hac.psd_floor);
    let n = bundle.graph.n();
    let d = bundle.graph.d();

    let mut cfg = HacConfig::new(
        kernel,
        bandwidth.unwrap_or(match method.as_str() {
            "network" => HacConfig::network_default_bandwidth(n),
            "generalized_spatial" | "gs" => HacConfig::generalized_default_bandwidths(n, d).0,
            _ => HacConfig::spatial_default_bandwidth(n, d),
        }),
    )
    .with_center(center.clone());
    cfg.psd_floor = psd_floor;

    let est = match method.as_str() {
        "iid" | "naive" => iid_cov(&psi.values, &center)?,
        "spatial" => spatial_hac(&psi.values, bundle.graph.positions(), &cfg)?,
        "network" => {
            if !bundle.has_edges {
                bail!("network HAC needs an --edges file");
            }
            network_hac(&psi.values, &bundle.graph, &cfg)?
        }
        "generalized_spatial" | "gs" => {
            let (_, db) = HacConfig::generalized_default_bandwidths(n, d);
            cfg = cfg.with_theta(theta_bandwidth.unwrap_or(db), theta_kernel);
            generalized_spatial_hac(&psi.values, bundle.graph.positions(), &cfg)?
        }
        other => bail!("unknown HAC method '{other}'"),
    };
    let mut json = est.to_json();
    json["moment"] = serde_json::json!(args.moment);
    json["locality_k"] = serde_json::json!(psi.locality_k);
    match &args.out {
        Some(path) => write_json(path, &json)?,
        None => println!("{}", serde_json::to_string_pretty(&json)?),
    }
    Ok(())
}

pub fn build_mc_config(args: &McArgs, file: &crate::config::FileConfig, seed: u64) -> anyhow::Result<McConfig> {
    let mut cfg = crate::config::mc_from_file(McConfig::default(), &file.mc)?;
    cfg.master_seed = seed;
    if args.full_scale {
        cfg = cfg.full_scale();
    }
    if !args.n.is_empty() {
        cfg.n_list = args.n.clone();
    }
    if let Some(r) = args.reps {
        cfg.reps = r;
    }
    if let Some(r) = args.oracle_reps {
        cfg.oracle_reps = r;
    }
    if let Some(k) = args.kappa {
        cfg.kappa = k;
    }
    if let Some(l) = args.level {
        cfg.level = l;
    }
    if let Some(kernel) = &args.kernel {
        cfg.kernel = kernel.parse()?;
    }
    if args.fixed_network {
        cfg.fixed_network = true;
    }
    if let Some(methods) = &args.methods {
        cfg.methods = methods
            .split(',')
            .map(|m| m.trim().parse())
            .collect::<Result<_, _>>()?;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn cmd_mc(args: &McArgs, study: StudyKind, cfg: &McConfig) -> anyhow::Result<()> {
    let out = &args.out;
    std::fs::create_dir_all(out)?;
    let ckpt: Option<PathBuf> = args.checkpoint.clone();
    let report: McReport = match study {
        StudyKind::Probit => run_probit_study_checkpointed(cfg, ckpt.as_deref())?,
        StudyKind::WeightedOutcome => {
            run_weighted_outcome_study_checkpointed(cfg, ckpt.as_deref())?
        }
    };
    let text = summarize(&report, ReportFormat::Text)?;
    let csv = summarize(&report, ReportFormat::Csv)?;
    let json = summarize(&report, ReportFormat::Json)?;
    std::fs::write(out.join("report.txt"), &text)?;
    std::fs::write(out.join("report.csv"), &csv)?;
    std::fs::write(out.join("report.json"), format!("{json}\n"))?;

    let cfg_json = serde_json::to_value(cfg)?;
    let manifest = serde_json::json!({
        "command": match study {
            StudyKind::Probit => "mc-probit",
            StudyKind::WeightedOutcome => "mc-moment",
        },
        "seed": cfg.master_seed,
        "config_hash": config_hash(&cfg_json),
        "config": cfg_json,
        "checkpoint": ckpt.as_ref().map(|p| p.display().to_string()),
        "files": {"text": "report.txt", "csv": "report.csv", "json": "report.json"},
    });
    write_json(&out.join("manifest.json"), &manifest)?;
    print!("{text}");
    Ok(())
}
