//! Monte Carlo harness: the probit study (standard errors and rejection
//! rates) and the weighted-outcome moment study, with oracle standard errors
//! simulated from independent replications.
//!
//! Replications are embarrassingly parallel: each owns a counter-derived RNG
//! stream, results are folded in replication order, and aggregates are
//! identical across worker counts. A line-oriented JSON checkpoint makes
//! interrupted runs resumable with identical final aggregates.

use std::collections::{BTreeMap, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::estim::{critical_value, fit_pseudo_ml, peer_design, sandwich_variance, score_matrix};
use crate::hac::{
    generalized_spatial_hac, iid_cov, network_hac, spatial_hac, Center, HacConfig,
};
use crate::kernel::Kernel;
use crate::netgen::{form_rgg, sample_positions};
use crate::par::par_map_collect;
use crate::rng::RngSpec;
use crate::simsocial::{
    eval_moments, simulate_dynamic, ErrorDesign, Link, MomentKind, MomentSpec, OutcomeModel,
    PeerStat,
};
use crate::types::{Panel, SpatialGraph};

/// Density constant giving limiting expected degree five at threshold one.
pub const DEFAULT_KAPPA: f64 = 5.0 / std::f64::consts::PI;

/// Standard-error methods reported by the studies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Hash, PartialOrd, Ord)]
#[serde(rename_all = "snake_case")]
pub enum SeMethod {
    Naive,
    Spatial,
    Network,
    GeneralizedSpatial,
    Oracle,
}

impl SeMethod {
    pub const ALL: [SeMethod; 5] = [
        SeMethod::Naive,
        SeMethod::Spatial,
        SeMethod::Network,
        SeMethod::GeneralizedSpatial,
        SeMethod::Oracle,
    ];
}

impl std::fmt::Display for SeMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            SeMethod::Naive => "naive",
            SeMethod::Spatial => "spatial",
            SeMethod::Network => "network",
            SeMethod::GeneralizedSpatial => "generalized_spatial",
            SeMethod::Oracle => "oracle",
        };
        write!(f, "{s}")
    }
}

impl std::str::FromStr for SeMethod {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "naive" | "iid" => Ok(SeMethod::Naive),
            "spatial" => Ok(SeMethod::Spatial),
            "network" => Ok(SeMethod::Network),
            "generalized_spatial" | "gs" => Ok(SeMethod::GeneralizedSpatial),
            "oracle" => Ok(SeMethod::Oracle),
            other => Err(CoreError::InvalidArgument(format!(
                "unknown SE method '{other}'"
            ))),
        }
    }
}

/// Study configuration. Defaults are desk scale (2000 replications);
/// [`McConfig::full_scale`] restores the full replication counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub n_list: Vec<usize>,
    pub reps: usize,
    pub oracle_reps: usize,
    pub beta_true: [f64; 3],
    pub kappa: f64,
    pub rgg_threshold: f64,
    pub methods: Vec<SeMethod>,
    pub level: f64,
    pub master_seed: u64,
    /// Draw one network per `n` and hold it fixed across replications.
    pub fixed_network: bool,
    pub kernel: Kernel,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            n_list: vec![500],
            reps: 2000,
            oracle_reps: 2000,
            beta_true: [0.5, -0.3, 1.0],
            kappa: DEFAULT_KAPPA,
            rgg_threshold: 1.0,
            methods: SeMethod::ALL.to_vec(),
            level: 0.05,
            master_seed: 0,
            fixed_network: false,
            kernel: Kernel::Bartlett,
        }
    }
}

impl McConfig {
    /// Restore the full-scale replication counts (15000 / 7500).
    pub fn full_scale(mut self) -> Self {
        self.reps = 15_000;
        self.oracle_reps = 7_500;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_list.is_empty() {
            return Err(CoreError::InvalidArgument("n_list is empty".into()));
        }
        if self.n_list.len() > 255 {
            return Err(CoreError::InvalidArgument("too many n values".into()));
        }
        if self.methods.is_empty() {
            return Err(CoreError::InvalidArgument("method list is empty".into()));
        }
        if self.reps == 0 || self.oracle_reps == 0 {
            return Err(CoreError::InvalidArgument(
                "reps and oracle_reps must be at least 1".into(),
            ));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(CoreError::InvalidArgument(format!(
                "level must be in (0,1), got {}",
                self.level
            )));
        }
        if !(self.kappa > 0.0) || !(self.rgg_threshold > 0.0) {
            return Err(CoreError::InvalidArgument(
                "kappa and rgg_threshold must be positive".into(),
            ));
        }
        if self.beta_true.iter().any(|b| !b.is_finite()) {
            return Err(CoreError::InvalidArgument("nonfinite beta_true".into()));
        }
        Ok(())
    }

    fn model(&self) -> OutcomeModel {
        OutcomeModel {
            intercept: self.beta_true[0],
            covariate_coefs: vec![self.beta_true[1]],
            peer_coef: self.beta_true[2],
            link: Link::Probit,
            error_design: ErrorDesign::NeighborAvgWeighted,
            peer_stat: PeerStat::LaggedNeighborMean,
        }
    }
}

/// Which study a report came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StudyKind {
    Probit,
    WeightedOutcome,
}

/// One aggregate cell: mean standard error and rejection percentage for a
/// `(n, method, coordinate)` triple.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McCell {
    pub n: usize,
    pub method: SeMethod,
    pub coord: usize,
    pub mean_se: f64,
    pub reject_pct: f64,
}

/// Oracle standard error for a `(n, coordinate)` pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleSe {
    pub n: usize,
    pub coord: usize,
    pub se: f64,
}

/// Aggregated study output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub study: StudyKind,
    pub master_seed: u64,
    pub level: f64,
    pub reps: usize,
    pub oracle_reps: usize,
    pub kappa: f64,
    pub beta_true: Option<[f64; 3]>,
    /// Simulated true value of the weighted-outcome moment, per `n`.
    pub truth: Vec<(usize, f64)>,
    pub cells: Vec<McCell>,
    pub oracle_se: Vec<OracleSe>,
    /// Mean point estimate per `(n, coordinate)` over the main replications
    /// (probit study only).
    pub mean_beta: Vec<(usize, [f64; 3])>,
    /// Extra simulation attempts caused by separation redraws, per `n`.
    pub redraws: Vec<(usize, u64)>,
    /// Count of nonpositive variance estimates clamped to zero, per `n`.
    pub clamped: Vec<(usize, u64)>,
}

impl McReport {
    pub fn cell(&self, n: usize, method: SeMethod, coord: usize) -> Option<&McCell> {
        self.cells
            .iter()
            .find(|c| c.n == n && c.method == method && c.coord == coord)
    }

    pub fn oracle_se(&self, n: usize, coord: usize) -> Option<f64> {
        self.oracle_se
            .iter()
            .find(|o| o.n == n && o.coord == coord)
            .map(|o| o.se)
    }
}

#[derive(Clone, Copy)]
#[repr(u8)]
enum Pass {
    Main = 1,
    Oracle = 2,
    Truth = 3,
    FixedNet = 4,
    ConsOracle = 5,
    ConsHac = 6,
}

fn stream_id(pass: Pass, n_idx: usize, rep: u64, attempt: u32) -> u64 {
    debug_assert!(rep < (1 << 36));
    debug_assert!(n_idx < 256);
    debug_assert!(attempt < (1 << 16));
    ((pass as u64) << 60) | ((n_idx as u64) << 52) | ((attempt as u64) << 36) | rep
}

const MAX_REDRAWS: u32 = 64;
const CKPT_BLOCK: usize = 64;

fn draw_graph(cfg: &McConfig, n: usize, rng: &mut rand_chacha::ChaCha8Rng) -> Result<SpatialGraph> {
    let (positions, omega) = sample_positions(n, 2, cfg.kappa, rng)?;
    form_rgg(positions, omega, cfg.rgg_threshold)
}

fn draw_rep(
    cfg: &McConfig,
    n: usize,
    spec: RngSpec,
    fixed: Option<&SpatialGraph>,
) -> Result<(SpatialGraph, Panel)> {
    let mut rng = spec.rng();
    let graph = match fixed {
        Some(g) => g.clone(),
        None => draw_graph(cfg, n, &mut rng)?,
    };
    let panel = simulate_dynamic(&graph, &cfg.model(), 1, &mut rng)?;
    Ok((graph, panel))
}

/// HAC configuration used for score moments at sample size `n`.
fn score_hac_config(cfg: &McConfig, method: SeMethod, n: usize) -> HacConfig {
    let zero = Center::KnownConstant(vec![0.0; 3]);
    match method {
        SeMethod::Spatial => HacConfig::new(cfg.kernel, HacConfig::spatial_default_bandwidth(n, 2))
            .with_center(zero),
        SeMethod::Network => HacConfig::new(cfg.kernel, HacConfig::network_default_bandwidth(n))
            .with_center(zero),
        SeMethod::GeneralizedSpatial => {
            let (h, b) = HacConfig::generalized_default_bandwidths(n, 2);
            HacConfig::new(cfg.kernel, h).with_theta(b, Kernel::Uniform)
        }
        _ => HacConfig::new(cfg.kernel, 0.0).with_center(zero),
    }
}

fn probit_se_for_method(
    cfg: &McConfig,
    method: SeMethod,
    fit: &crate::estim::FitResult,
    graph: &SpatialGraph,
    n: usize,
) -> Result<[f64; 3]> {
    let hac_cfg = score_hac_config(cfg, method, n);
    let est = match method {
        SeMethod::Naive => iid_cov(&fit.scores, &hac_cfg.center)?,
        SeMethod::Spatial => spatial_hac(&fit.scores, graph.positions(), &hac_cfg)?,
        SeMethod::Network => network_hac(&fit.scores, graph, &hac_cfg)?,
        SeMethod::GeneralizedSpatial => {
            generalized_spatial_hac(&fit.scores, graph.positions(), &hac_cfg)?
        }
        SeMethod::Oracle => unreachable!("oracle SEs come from the oracle pass"),
    };
    let (_, se) = sandwich_variance(fit, &est.sigma)?;
    Ok([se[0], se[1], se[2]])
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "pass", rename_all = "snake_case")]
enum CkptLine {
    Main {
        n: usize,
        rep: u64,
        attempts: u32,
        beta: [f64; 3],
        se: BTreeMap<String, [f64; 3]>,
    },
    OracleBeta {
        n: usize,
        rep: u64,
        attempts: u32,
        beta: [f64; 3],
    },
    WeightedMain {
        n: usize,
        rep: u64,
        psibar: f64,
        clamped: u64,
        se: BTreeMap<String, f64>,
    },
    WeightedDraw {
        n: usize,
        rep: u64,
        truth_pass: bool,
        psibar: f64,
    },
}

impl CkptLine {
    fn key(&self) -> (u8, usize, u64) {
        match self {
            CkptLine::Main { n, rep, .. } => (0, *n, *rep),
            CkptLine::OracleBeta { n, rep, .. } => (1, *n, *rep),
            CkptLine::WeightedMain { n, rep, .. } => (2, *n, *rep),
            CkptLine::WeightedDraw {
                n, rep, truth_pass, ..
            } => (if *truth_pass { 3 } else { 4 }, *n, *rep),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct CkptHeader {
    study: StudyKind,
    config: McConfig,
}

struct CkptStore {
    map: HashMap<(u8, usize, u64), CkptLine>,
    writer: Option<File>,
}

impl CkptStore {
    fn open(cfg: &McConfig, study: StudyKind, path: Option<&Path>) -> Result<Self> {
        let mut map = HashMap::new();
        let writer = match path {
            None => None,
            Some(p) => {
                if p.exists() {
                    let reader = BufReader::new(File::open(p)?);
                    let mut lines = reader.lines();
                    match lines.next() {
                        Some(first) => {
                            let header: CkptHeader =
                                serde_json::from_str(&first?).map_err(|e| {
                                    CoreError::CheckpointMismatch(format!("bad header: {e}"))
                                })?;
                            if header.study != study || header.config != *cfg {
                                return Err(CoreError::CheckpointMismatch(
                                    "study or configuration differs".into(),
                                ));
                            }
                            for line in lines {
                                // a line truncated by an interruption fails to
                                // parse; skip it, keep the rest
                                if let Ok(rec) = serde_json::from_str::<CkptLine>(&line?) {
                                    map.insert(rec.key(), rec);
                                }
                            }
                        }
                        None => {
                            let header = CkptHeader {
                                study,
                                config: cfg.clone(),
                            };
                            let mut f = OpenOptions::new().append(true).open(p)?;
                            writeln!(f, "{}", serde_json::to_string(&header)?)?;
                        }
                    }
                    let mut f = OpenOptions::new().append(true).open(p)?;
                    // if an interruption left a partial trailing line, close it
                    // so appended records start on a fresh line
                    let raw = std::fs::read(p)?;
                    if raw.last().is_some_and(|&b| b != b'\n') {
                        writeln!(f)?;
                    }
                    Some(f)
                } else {
                    let mut f = OpenOptions::new().create(true).append(true).open(p)?;
                    let header = CkptHeader {
                        study,
                        config: cfg.clone(),
                    };
                    writeln!(f, "{}", serde_json::to_string(&header)?)?;
                    Some(f)
                }
            }
        };
        Ok(Self { map, writer })
    }

    fn take(&mut self, tag: u8, n: usize, rep: u64) -> Option<CkptLine> {
        self.map.remove(&(tag, n, rep))
    }

    fn append(&mut self, line: &CkptLine) -> Result<()> {
        if let Some(f) = self.writer.as_mut() {
            writeln!(f, "{}", serde_json::to_string(line)?)?;
            f.flush()?;
        }
        Ok(())
    }
}

/// Fill `slot[rep]` for every missing rep by running `compute` in parallel
/// blocks, appending each block to the checkpoint as it completes.
fn fill_pass<F>(
    store: &mut CkptStore,
    tag: u8,
    n: usize,
    reps: u64,
    compute: F,
) -> Result<Vec<CkptLine>>
where
    F: Fn(u64) -> Result<CkptLine> + Send + Sync,
{
    let mut slots: Vec<Option<CkptLine>> = (0..reps).map(|r| store.take(tag, n, r)).collect();
    let missing: Vec<u64> = (0..reps).filter(|&r| slots[r as usize].is_none()).collect();
    for block in missing.chunks(CKPT_BLOCK) {
        let computed = par_map_collect(block.len(), |k| compute(block[k]));
        for (k, res) in computed.into_iter().enumerate() {
            let line = res?;
            store.append(&line)?;
            slots[block[k] as usize] = Some(line);
        }
    }
    Ok(slots.into_iter().map(|s| s.expect("pass fully computed")).collect())
}

fn sample_sd(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ss = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
    (ss / (n - 1.0)).sqrt()
}

/// The probit study: per replication, fresh positions and network, a
/// two-period dynamic panel, a probit fit of `Y^1` on
/// `(1, X^1, neighbor mean Y^0)`, sandwich standard errors per method, and
/// t-tests against the true coefficients. Oracle standard errors are the
/// across-replication standard deviations of the estimates from an
/// independent pass. Replications hitting separation are redrawn on the next
/// attempt stream and counted.
pub fn run_probit_study(cfg: &McConfig) -> Result<McReport> {
    run_probit_study_checkpointed(cfg, None)
}

pub fn run_probit_study_checkpointed(cfg: &McConfig, ckpt: Option<&Path>) -> Result<McReport> {
    cfg.validate()?;
    let mut store = CkptStore::open(cfg, StudyKind::Probit, ckpt)?;
    let z = critical_value(cfg.level);
    let hac_methods: Vec<SeMethod> = cfg
        .methods
        .iter()
        .copied()
        .filter(|m| *m != SeMethod::Oracle)
        .collect();
    let want_oracle = cfg.methods.contains(&SeMethod::Oracle);

    let mut cells = Vec::new();
    let mut oracle_rows = Vec::new();
    let mut redraws = Vec::new();
    let mut mean_betas = Vec::new();

    for (n_idx, &n) in cfg.n_list.iter().enumerate() {
        let fixed = if cfg.fixed_network {
            let spec = RngSpec::new(cfg.master_seed, stream_id(Pass::FixedNet, n_idx, 0, 0));
            Some(draw_graph(cfg, n, &mut spec.rng())?)
        } else {
            None
        };
        let fixed_ref = fixed.as_ref();

        // oracle pass: independent estimates only
        let mut oracle_se: Vec<f64> = Vec::new();
        if want_oracle {
            let lines = fill_pass(&mut store, 1, n, cfg.oracle_reps as u64, |rep| {
                let mut attempts = 0u32;
                loop {
                    let spec = RngSpec::new(
                        cfg.master_seed,
                        stream_id(Pass::Oracle, n_idx, rep, attempts),
                    );
                    let (graph, panel) = draw_rep(cfg, n, spec, fixed_ref)?;
                    let (y, x) = peer_design(&panel, &graph, 1)?;
                    match fit_pseudo_ml(&y, &x, Link::Probit) {
                        Ok(fit) => {
                            return Ok(CkptLine::OracleBeta {
                                n,
                                rep,
                                attempts,
                                beta: [fit.beta_hat[0], fit.beta_hat[1], fit.beta_hat[2]],
                            })
                        }
                        // degenerate draws (separation, or a constant peer
                        // column when one period's outcomes all agree) are
                        // redrawn on the next attempt stream and counted
                        Err(CoreError::Separation(_) | CoreError::RankDeficient)
                            if attempts < MAX_REDRAWS =>
                        {
                            attempts += 1
                        }
                        Err(e) => return Err(e),
                    }
                }
            })?;
            let betas: Vec<[f64; 3]> = lines
                .iter()
                .map(|l| match l {
                    CkptLine::OracleBeta { beta, .. } => *beta,
                    _ => unreachable!(),
                })
                .collect();
            for coord in 0..3 {
                let vals: Vec<f64> = betas.iter().map(|b| b[coord]).collect();
                let se = sample_sd(&vals);
                oracle_se.push(se);
                oracle_rows.push(OracleSe { n, coord, se });
            }
        }

        // main pass
        let methods = hac_methods.clone();
        let lines = fill_pass(&mut store, 0, n, cfg.reps as u64, |rep| {
            let mut attempts = 0u32;
            loop {
                let spec =
                    RngSpec::new(cfg.master_seed, stream_id(Pass::Main, n_idx, rep, attempts));
                let (graph, panel) = draw_rep(cfg, n, spec, fixed_ref)?;
                let (y, x) = peer_design(&panel, &graph, 1)?;
                match fit_pseudo_ml(&y, &x, Link::Probit) {
                    Ok(fit) => {
                        let mut se = BTreeMap::new();
                        for &method in &methods {
                            se.insert(
                                method.to_string(),
                                probit_se_for_method(cfg, method, &fit, &graph, n)?,
                            );
                        }
                        return Ok(CkptLine::Main {
                            n,
                            rep,
                            attempts,
                            beta: [fit.beta_hat[0], fit.beta_hat[1], fit.beta_hat[2]],
                            se,
                        });
                    }
                    Err(CoreError::Separation(_) | CoreError::RankDeficient)
                        if attempts < MAX_REDRAWS =>
                    {
                        attempts += 1
                    }
                    Err(e) => return Err(e),
                }
            }
        })?;

        let mut total_redraws = 0u64;
        let mut beta_mean = [0.0f64; 3];
        for line in &lines {
            let CkptLine::Main { beta, attempts, .. } = line else { unreachable!() };
            total_redraws += *attempts as u64;
            for k in 0..3 {
                beta_mean[k] += beta[k] / cfg.reps as f64;
            }
        }
        for method in &cfg.methods {
            if *method == SeMethod::Oracle && !want_oracle {
                continue;
            }
            for coord in 0..3 {
                let mut se_sum = 0.0;
                let mut rejects = 0usize;
                for line in &lines {
                    let CkptLine::Main { beta, se, .. } = line else {
                        unreachable!()
                    };
                    let se_k = match method {
                        SeMethod::Oracle => oracle_se[coord],
                        m => se[&m.to_string()][coord],
                    };
                    se_sum += se_k;
                    if ((beta[coord] - cfg.beta_true[coord]) / se_k).abs() > z {
                        rejects += 1;
                    }
                }
                cells.push(McCell {
                    n,
                    method: *method,
                    coord,
                    mean_se: se_sum / cfg.reps as f64,
                    reject_pct: 100.0 * rejects as f64 / cfg.reps as f64,
                });
            }
        }
        redraws.push((n, total_redraws));
        mean_betas.push((n, beta_mean));
    }

    Ok(McReport {
        study: StudyKind::Probit,
        master_seed: cfg.master_seed,
        level: cfg.level,
        reps: cfg.reps,
        oracle_reps: cfg.oracle_reps,
        kappa: cfg.kappa,
        beta_true: Some(cfg.beta_true),
        truth: Vec::new(),
        cells,
        oracle_se: oracle_rows,
        mean_beta: mean_betas,
        redraws,
        clamped: Vec::new(),
    })
}

/// HAC variance of the scalar weighted-outcome moment for one method.
///
/// The spatial and network estimators run uncentered (the moment is not
/// centered at a known constant, and the uncentered form is the one whose
/// conservative behavior the study documents); the naive estimator uses the
/// sample variance; the generalized estimator handles centering internally
/// through its conditional-mean regression.
fn weighted_sigma(
    cfg: &McConfig,
    method: SeMethod,
    psi: &DMatrix<f64>,
    graph: &SpatialGraph,
    n: usize,
) -> Result<f64> {
    let zero = Center::KnownConstant(vec![0.0]);
    let est = match method {
        SeMethod::Naive => iid_cov(psi, &Center::SampleMean)?,
        SeMethod::Spatial => {
            let hc = HacConfig::new(cfg.kernel, HacConfig::spatial_default_bandwidth(n, 2))
                .with_center(zero);
            spatial_hac(psi, graph.positions(), &hc)?
        }
        SeMethod::Network => {
            let hc = HacConfig::new(cfg.kernel, HacConfig::network_default_bandwidth(n))
                .with_center(zero);
            network_hac(psi, graph, &hc)?
        }
        SeMethod::GeneralizedSpatial => {
            let (h, b) = HacConfig::generalized_default_bandwidths(n, 2);
            let hc = HacConfig::new(cfg.kernel, h).with_theta(b, Kernel::Uniform);
            generalized_spatial_hac(psi, graph.positions(), &hc)?
        }
        SeMethod::Oracle => unreachable!(),
    };
    Ok(est.sigma[(0, 0)])
}

/// The weighted-outcome study: the moment is `psi_i = Y_i^1 X_i^1`. The true
/// value of `E[psi_bar]` and the oracle standard error each come from
/// independent passes of `oracle_reps` draws; per main replication the study
/// records `psi_bar`, each HAC standard error `sqrt(sigma_hat / n)`, and the
/// t-test of `H0: E[psi_bar] = truth`.
pub fn run_weighted_outcome_study(cfg: &McConfig) -> Result<McReport> {
    run_weighted_outcome_study_checkpointed(cfg, None)
}

pub fn run_weighted_outcome_study_checkpointed(
    cfg: &McConfig,
    ckpt: Option<&Path>,
) -> Result<McReport> {
    cfg.validate()?;
    let mut store = CkptStore::open(cfg, StudyKind::WeightedOutcome, ckpt)?;
    let z = critical_value(cfg.level);
    let spec_moment = MomentSpec::new(MomentKind::WeightedOutcome { t: 1 });
    let hac_methods: Vec<SeMethod> = cfg
        .methods
        .iter()
        .copied()
        .filter(|m| *m != SeMethod::Oracle)
        .collect();
    let want_oracle = cfg.methods.contains(&SeMethod::Oracle);

    let mut cells = Vec::new();
    let mut oracle_rows = Vec::new();
    let mut truths = Vec::new();
    let mut clamped_counts = Vec::new();

    for (n_idx, &n) in cfg.n_list.iter().enumerate() {
        let fixed = if cfg.fixed_network {
            let spec = RngSpec::new(cfg.master_seed, stream_id(Pass::FixedNet, n_idx, 0, 0));
            Some(draw_graph(cfg, n, &mut spec.rng())?)
        } else {
            None
        };
        let fixed_ref = fixed.as_ref();

        let draw_psibar = |pass: Pass, rep: u64| -> Result<f64> {
            let spec = RngSpec::new(cfg.master_seed, stream_id(pass, n_idx, rep, 0));
            let (graph, panel) = draw_rep(cfg, n, spec, fixed_ref)?;
            let psi = eval_moments(&panel, &graph, &spec_moment)?;
            Ok(psi.values.column(0).sum() / n as f64)
        };

        // truth pass
        let truth_lines = fill_pass(&mut store, 3, n, cfg.oracle_reps as u64, |rep| {
            Ok(CkptLine::WeightedDraw {
                n,
                rep,
                truth_pass: true,
                psibar: draw_psibar(Pass::Truth, rep)?,
            })
        })?;
        let truth_vals: Vec<f64> = truth_lines
            .iter()
            .map(|l| match l {
                CkptLine::WeightedDraw { psibar, .. } => *psibar,
                _ => unreachable!(),
            })
            .collect();
        let truth = truth_vals.iter().sum::<f64>() / truth_vals.len() as f64;
        truths.push((n, truth));

        // oracle pass
        let mut oracle_se_val = f64::NAN;
        if want_oracle {
            let lines = fill_pass(&mut store, 4, n, cfg.oracle_reps as u64, |rep| {
                Ok(CkptLine::WeightedDraw {
                    n,
                    rep,
                    truth_pass: false,
                    psibar: draw_psibar(Pass::Oracle, rep)?,
                })
            })?;
            let vals: Vec<f64> = lines
                .iter()
                .map(|l| match l {
                    CkptLine::WeightedDraw { psibar, .. } => *psibar,
                    _ => unreachable!(),
                })
                .collect();
            oracle_se_val = sample_sd(&vals);
            oracle_rows.push(OracleSe {
                n,
                coord: 0,
                se: oracle_se_val,
            });
        }

        // main pass
        let methods = hac_methods.clone();
        let lines = fill_pass(&mut store, 2, n, cfg.reps as u64, |rep| {
            let spec = RngSpec::new(cfg.master_seed, stream_id(Pass::Main, n_idx, rep, 0));
            let (graph, panel) = draw_rep(cfg, n, spec, fixed_ref)?;
            let psi = eval_moments(&panel, &graph, &spec_moment)?;
            let psibar = psi.values.column(0).sum() / n as f64;
            let mut se = BTreeMap::new();
            let mut clamped = 0u64;
            for &method in &methods {
                let sigma = weighted_sigma(cfg, method, &psi.values, &graph, n)?;
                if sigma < 0.0 {
                    clamped += 1;
                }
                se.insert(method.to_string(), (sigma.max(0.0) / n as f64).sqrt());
            }
            Ok(CkptLine::WeightedMain {
                n,
                rep,
                psibar,
                clamped,
                se,
            })
        })?;

        let mut clamped_total = 0u64;
        for line in &lines {
            let CkptLine::WeightedMain { clamped, .. } = line else { unreachable!() };
            clamped_total += clamped;
        }
        for method in &cfg.methods {
            if *method == SeMethod::Oracle && !want_oracle {
                continue;
            }
            let mut se_sum = 0.0;
            let mut rejects = 0usize;
            for line in &lines {
                let CkptLine::WeightedMain { psibar, se, .. } = line else {
                    unreachable!()
                };
                let se_k = match method {
                    SeMethod::Oracle => oracle_se_val,
                    m => se[&m.to_string()],
                };
                se_sum += se_k;
                let t = if se_k > 0.0 {
                    ((psibar - truth) / se_k).abs()
                } else {
                    f64::INFINITY
                };
                if t > z {
                    rejects += 1;
                }
            }
            cells.push(McCell {
                n,
                method: *method,
                coord: 0,
                mean_se: se_sum / cfg.reps as f64,
                reject_pct: 100.0 * rejects as f64 / cfg.reps as f64,
            });
        }
        clamped_counts.push((n, clamped_total));
    }

    Ok(McReport {
        study: StudyKind::WeightedOutcome,
        master_seed: cfg.master_seed,
        level: cfg.level,
        reps: cfg.reps,
        oracle_reps: cfg.oracle_reps,
        kappa: cfg.kappa,
        beta_true: Some(cfg.beta_true),
        truth: truths,
        cells,
        oracle_se: oracle_rows,
        mean_beta: Vec::new(),
        redraws: Vec::new(),
        clamped: clamped_counts,
    })
}

/// Output of the score-variance consistency check.
#[derive(Debug, Clone)]
pub struct ConsistencyCheck {
    pub oracle: DMatrix<f64>,
    pub spatial_mean: DMatrix<f64>,
    pub network_mean: DMatrix<f64>,
    pub spatial_rel_err: f64,
    pub network_rel_err: f64,
}

/// Compare mean spatial/network HAC estimates of the score variance (scores
/// evaluated at the true coefficients, known-zero centering) against the
/// simulated `Var(n^(-1/2) sum_i s_i)` from `oracle_reps` independent draws.
pub fn score_variance_consistency(
    cfg: &McConfig,
    n: usize,
    hac_reps: usize,
    oracle_reps: usize,
) -> Result<ConsistencyCheck> {
    cfg.validate()?;
    let model_beta = DVector::from_column_slice(&cfg.beta_true);

    let scaled_sums: Vec<Result<[f64; 3]>> = {
        let model_beta = model_beta.clone();
        par_map_collect(oracle_reps, move |rep| {
            let spec = RngSpec::new(cfg.master_seed, stream_id(Pass::ConsOracle, 0, rep as u64, 0));
            let (graph, panel) = draw_rep(cfg, n, spec, None)?;
            let (y, x) = peer_design(&panel, &graph, 1)?;
            let scores = score_matrix(&y, &x, Link::Probit, &model_beta);
            let root_n = (n as f64).sqrt();
            Ok([
                scores.column(0).sum() / root_n,
                scores.column(1).sum() / root_n,
                scores.column(2).sum() / root_n,
            ])
        })
    };
    let mut sums = Vec::with_capacity(oracle_reps);
    for s in scaled_sums {
        sums.push(s?);
    }
    let mut mean = [0.0f64; 3];
    for s in &sums {
        for k in 0..3 {
            mean[k] += s[k];
        }
    }
    for m in mean.iter_mut() {
        *m /= oracle_reps as f64;
    }
    let mut oracle = DMatrix::zeros(3, 3);
    for s in &sums {
        for a in 0..3 {
            for b in 0..3 {
                oracle[(a, b)] += (s[a] - mean[a]) * (s[b] - mean[b]);
            }
        }
    }
    oracle /= (oracle_reps - 1) as f64;

    let ests: Vec<Result<(DMatrix<f64>, DMatrix<f64>)>> = par_map_collect(hac_reps, |rep| {
        let spec = RngSpec::new(cfg.master_seed, stream_id(Pass::ConsHac, 0, rep as u64, 0));
        let (graph, panel) = draw_rep(cfg, n, spec, None)?;
        let (y, x) = peer_design(&panel, &graph, 1)?;
        let scores = score_matrix(&y, &x, Link::Probit, &model_beta);
        let zero = Center::KnownConstant(vec![0.0; 3]);
        let sp_cfg = HacConfig::new(cfg.kernel, HacConfig::spatial_default_bandwidth(n, 2))
            .with_center(zero.clone());
        let net_cfg =
            HacConfig::new(cfg.kernel, HacConfig::network_default_bandwidth(n)).with_center(zero);
        let sp = spatial_hac(&scores, graph.positions(), &sp_cfg)?;
        let net = network_hac(&scores, &graph, &net_cfg)?;
        Ok((sp.sigma, net.sigma))
    });
    let mut spatial_mean = DMatrix::zeros(3, 3);
    let mut network_mean = DMatrix::zeros(3, 3);
    for e in ests {
        let (sp, net) = e?;
        spatial_mean += sp;
        network_mean += net;
    }
    spatial_mean /= hac_reps as f64;
    network_mean /= hac_reps as f64;

    let spatial_rel_err = (&spatial_mean - &oracle).norm() / oracle.norm();
    let network_rel_err = (&network_mean - &oracle).norm() / oracle.norm();
    Ok(ConsistencyCheck {
        oracle,
        spatial_mean,
        network_mean,
        spatial_rel_err,
        network_rel_err,
    })
}

/// Rendering format for [`summarize`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Text,
    Csv,
    Json,
}

impl std::str::FromStr for ReportFormat {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "text" => Ok(ReportFormat::Text),
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(CoreError::UnknownFormat(other.into())),
        }
    }
}

/// Render a report as a fixed-layout table, long-format CSV, or JSON.
/// Deterministic and column-stable for a given report.
pub fn summarize(report: &McReport, format: ReportFormat) -> Result<String> {
    if report.cells.is_empty() {
        return Err(CoreError::InvalidArgument("report has no cells".into()));
    }
    match format {
        ReportFormat::Json => Ok(serde_json::to_string_pretty(report)?),
        ReportFormat::Csv => {
            let mut out = String::from("study,n,method,coord,mean_se,reject_pct\n");
            let study = match report.study {
                StudyKind::Probit => "probit",
                StudyKind::WeightedOutcome => "weighted_outcome",
            };
            for c in &report.cells {
                out.push_str(&format!(
                    "{study},{},{},{},{},{}\n",
                    c.n, c.method, c.coord, c.mean_se, c.reject_pct
                ));
            }
            Ok(out)
        }
        ReportFormat::Text => {
            // preserve first-appearance order of methods and n values
            let mut methods: Vec<SeMethod> = Vec::new();
            let mut ns: Vec<usize> = Vec::new();
            for c in &report.cells {
                if !methods.contains(&c.method) {
                    methods.push(c.method);
                }
                if !ns.contains(&c.n) {
                    ns.push(c.n);
                }
            }
            let coords = match report.study {
                StudyKind::Probit => 3,
                StudyKind::WeightedOutcome => 1,
            };
            let label = |coord: usize| match report.study {
                StudyKind::Probit => format!("beta_{}", coord + 1),
                StudyKind::WeightedOutcome => "psi_bar".to_string(),
            };
            let short = |m: SeMethod| match m {
                SeMethod::Naive => "naive",
                SeMethod::Spatial => "spatial",
                SeMethod::Network => "network",
                SeMethod::GeneralizedSpatial => "gs",
                SeMethod::Oracle => "oracle",
            };
            let mut out = String::new();
            let study = match report.study {
                StudyKind::Probit => "Probit",
                StudyKind::WeightedOutcome => "Weighted Outcome",
            };
            out.push_str(&format!(
                "{study} study: reps={} oracle_reps={} seed={}\n",
                report.reps, report.oracle_reps, report.master_seed
            ));
            for (n, t) in &report.truth {
                out.push_str(&format!("true moment value at n={n}: {t:.6}\n"));
            }
            for (title, pick) in [
                ("Standard Errors", 0usize),
                ("Rejection % (two-sided t-test)", 1usize),
            ] {
                out.push_str(&format!("\n{title}\n"));
                out.push_str(&format!("{:<10}", ""));
                for m in &methods {
                    for n in &ns {
                        out.push_str(&format!("{:>14}", format!("{}:{n}", short(*m))));
                    }
                }
                out.push('\n');
                for coord in 0..coords {
                    out.push_str(&format!("{:<10}", label(coord)));
                    for m in &methods {
                        for n in &ns {
                            let cell = report.cell(*n, *m, coord);
                            let v = match (pick, cell) {
                                (0, Some(c)) => format!("{:.4}", c.mean_se),
                                (1, Some(c)) => format!("{:.2}", c.reject_pct),
                                _ => "-".into(),
                            };
                            out.push_str(&format!("{v:>14}"));
                        }
                    }
                    out.push('\n');
                }
            }
            Ok(out)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_cfg() -> McConfig {
        McConfig {
            n_list: vec![60],
            reps: 8,
            oracle_reps: 8,
            methods: vec![SeMethod::Naive, SeMethod::Spatial, SeMethod::Oracle],
            master_seed: 42,
            ..McConfig::default()
        }
    }

    #[test]
    fn probit_study_is_deterministic() {
        let cfg = tiny_cfg();
        let a = run_probit_study(&cfg).unwrap();
        let b = run_probit_study(&cfg).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
        assert_eq!(a.cells.len(), 3 * 3);
        for c in &a.cells {
            assert!(c.mean_se > 0.0);
            assert!((0.0..=100.0).contains(&c.reject_pct));
        }
    }

    #[test]
    fn worker_counts_do_not_change_aggregates() {
        let cfg = tiny_cfg();
        let one = crate::par::with_workers(Some(1), || run_probit_study(&cfg)).unwrap();
        let many = crate::par::with_workers(Some(4), || run_probit_study(&cfg)).unwrap();
        assert_eq!(
            serde_json::to_string(&one).unwrap(),
            serde_json::to_string(&many).unwrap()
        );
    }

    #[test]
    fn weighted_study_runs_and_reports_truth() {
        let mut cfg = tiny_cfg();
        cfg.methods = vec![SeMethod::Spatial, SeMethod::GeneralizedSpatial, SeMethod::Oracle];
        let rep = run_weighted_outcome_study(&cfg).unwrap();
        assert!(rep.truth[0].1 > 0.0);
        assert_eq!(rep.cells.len(), 3);
        assert!(rep.oracle_se(60, 0).unwrap() > 0.0);
    }

    #[test]
    fn checkpoint_prefix_resumes_to_identical_report() {
        let dir = tempfile::tempdir().unwrap();
        let full_path = dir.path().join("full.ckpt");
        let prefix_path = dir.path().join("prefix.ckpt");
        let cfg = tiny_cfg();

        let full = run_probit_study_checkpointed(&cfg, Some(&full_path)).unwrap();
        // keep the header and the first 7 record lines only
        let text = std::fs::read_to_string(&full_path).unwrap();
        let prefix: Vec<&str> = text.lines().take(8).collect();
        std::fs::write(&prefix_path, prefix.join("\n") + "\n").unwrap();
        let resumed = run_probit_study_checkpointed(&cfg, Some(&prefix_path)).unwrap();
        assert_eq!(
            serde_json::to_string(&full).unwrap(),
            serde_json::to_string(&resumed).unwrap()
        );

        // a tail truncated mid-line is skipped and closed off; later resumes
        // still reach the same aggregates
        let ragged_path = dir.path().join("ragged.ckpt");
        let mut ragged: String = text.lines().take(6).collect::<Vec<_>>().join("\n");
        ragged.push('\n');
        ragged.push_str(&text.lines().nth(6).unwrap()[..20]);
        std::fs::write(&ragged_path, ragged).unwrap();
        let from_ragged = run_probit_study_checkpointed(&cfg, Some(&ragged_path)).unwrap();
        assert_eq!(
            serde_json::to_string(&full).unwrap(),
            serde_json::to_string(&from_ragged).unwrap()
        );
        let again = run_probit_study_checkpointed(&cfg, Some(&ragged_path)).unwrap();
        assert_eq!(
            serde_json::to_string(&full).unwrap(),
            serde_json::to_string(&again).unwrap()
        );

        // mismatched config is rejected
        let mut other = cfg.clone();
        other.master_seed = 7;
        match run_probit_study_checkpointed(&other, Some(&full_path)) {
            Err(CoreError::CheckpointMismatch(_)) => {}
            other => panic!("expected checkpoint mismatch, got {other:?}"),
        }
    }

    #[test]
    fn summarize_formats() {
        let cfg = tiny_cfg();
        let rep = run_probit_study(&cfg).unwrap();
        let text = summarize(&rep, ReportFormat::Text).unwrap();
        assert!(text.contains("beta_1"));
        let csv = summarize(&rep, ReportFormat::Csv).unwrap();
        assert!(csv.starts_with("study,n,method,coord"));
        let json = summarize(&rep, ReportFormat::Json).unwrap();
        assert!(json.contains("\"study\""));
        assert!("bogus".parse::<ReportFormat>().is_err());

        let empty = McReport {
            cells: Vec::new(),
            ..rep
        };
        assert!(summarize(&empty, ReportFormat::Text).is_err());
    }

    #[test]
    fn separation_redraws_are_counted_not_dropped() {
        // a strongly one-sided design at tiny n makes all-equal outcomes
        // likely; those replications redraw on the next attempt stream
        let cfg = McConfig {
            n_list: vec![30],
            reps: 40,
            oracle_reps: 1,
            beta_true: [2.0, 0.0, 0.0],
            methods: vec![SeMethod::Naive],
            master_seed: 9,
            ..McConfig::default()
        };
        let report = run_probit_study(&cfg).unwrap();
        let (_, redraws) = report.redraws[0];
        assert!(redraws > 0, "expected at least one separation redraw");
        // all replications completed despite the redraws
        assert_eq!(report.cells[0].n, 30);
        assert!(report.cells[0].mean_se.is_finite());
    }

    #[test]
    fn fixed_network_flag_is_deterministic_and_changes_the_draw() {
        let mut cfg = tiny_cfg();
        cfg.fixed_network = true;
        let a = run_probit_study(&cfg).unwrap();
        let b = run_probit_study(&cfg).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
        let fresh = run_probit_study(&tiny_cfg()).unwrap();
        assert_ne!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&fresh).unwrap()
        );
    }

    #[test]
    fn summarize_single_cell_csv_has_one_data_row() {
        let cfg = tiny_cfg();
        let rep = run_probit_study(&cfg).unwrap();
        let single = McReport {
            cells: vec![rep.cells[0].clone()],
            ..rep
        };
        let csv = summarize(&single, ReportFormat::Csv).unwrap();
        assert_eq!(csv.lines().count(), 2); // header + one row
    }

    #[test]
    fn config_validation() {
        let mut cfg = McConfig::default();
        cfg.methods.clear();
        assert!(cfg.validate().is_err());
        let mut cfg = McConfig::default();
        cfg.n_list.clear();
        assert!(cfg.validate().is_err());
        assert_eq!(McConfig::default().full_scale().reps, 15_000);
    }
}
