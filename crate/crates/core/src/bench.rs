//! Seeded Monte Carlo harness for the risk, segmentation, Λ-fitting and image
//! experiments. Replicate `r` always uses seed `seed + r`, so tables do not
//! depend on the number of worker threads.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::grid::Signal;
use crate::lambda::{
    fit_loglog_regression, qq_pairs, sample_lambda_1d, sample_lambda_with, study_size, LambdaFitFile, LambdaMethod,
    SizeStudy,
};
use crate::risk::{default_grid, default_quantization, geometric_grid_between, minimize_criterion, sure, Criterion};
use crate::segmentation::evaluate_outcome;
use crate::selection::{
    adaptive_tv, count_jumps, exact_seg_threshold, h_star, pi0_es, universal_threshold_1d, JumpCount,
};
use crate::signals::{
    add_noise, blocks_with_min_jump, gen_piecewise, gen_test_function, NoiseSpec, PiecewiseConstantSpec, PiecewiseKind,
    TestFunction,
};
use crate::stats::{mean, std_error};
use crate::tvsolve::{denoise, SolverConfig};

/// Caps the global worker pool at `TVDN_THREADS` when that variable is set.
/// Returns the cap that was applied.
pub fn init_thread_pool() -> Result<Option<usize>> {
    let Ok(raw) = std::env::var("TVDN_THREADS") else {
        return Ok(None);
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| invalid(format!("TVDN_THREADS must be a positive integer, got '{raw}'")))?;
    // A pool that is already initialised keeps its size.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(Some(n))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub function: String,
    pub size: usize,
    pub method: String,
    pub metric: String,
    pub estimate: f64,
    pub std_error: f64,
    pub reps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub experiment: String,
    pub seed: u64,
    pub rows: Vec<ResultRow>,
}

impl ResultTable {
    fn new(experiment: &str, seed: u64) -> Self {
        Self {
            experiment: experiment.to_string(),
            seed,
            rows: Vec::new(),
        }
    }

    fn push(&mut self, function: &str, size: usize, method: &str, metric: &str, draws: &[f64]) {
        self.rows.push(ResultRow {
            function: function.to_string(),
            size,
            method: method.to_string(),
            metric: metric.to_string(),
            estimate: mean(draws),
            std_error: if draws.len() > 1 { std_error(draws) } else { 0.0 },
            reps: draws.len(),
        });
    }

    fn push_value(&mut self, function: &str, size: usize, method: &str, metric: &str, value: f64) {
        self.rows.push(ResultRow {
            function: function.to_string(),
            size,
            method: method.to_string(),
            metric: metric.to_string(),
            estimate: value,
            std_error: 0.0,
            reps: 0,
        });
    }

    pub fn get(&self, function: &str, size: usize, method: &str, metric: &str) -> Option<&ResultRow> {
        self.rows
            .iter()
            .find(|r| r.function == function && r.size == size && r.method == method && r.metric == metric)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("function,size,method,metric,estimate,std_error,reps\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.function, r.size, r.method, r.metric, r.estimate, r.std_error, r.reps
            ));
        }
        out
    }
}

/// Replicates per size for the risk study: 500, 50 and 5 at `N = 10², 10³, 10⁴`.
pub fn default_reps(n: usize) -> usize {
    (50_000 / n.max(1)).clamp(5, 500)
}

fn check_reps(reps: usize) -> Result<()> {
    if reps == 0 {
        return Err(invalid("reps must be at least 1"));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MseConfig {
    pub functions: Vec<TestFunction>,
    pub sizes: Vec<usize>,
    /// Overrides [`default_reps`] for every size.
    pub reps: Option<usize>,
    pub snr: f64,
    pub seed: u64,
}

impl Default for MseConfig {
    fn default() -> Self {
        Self {
            functions: TestFunction::ALL.to_vec(),
            sizes: vec![100, 1000],
            reps: None,
            snr: 7.0,
            seed: 1,
        }
    }
}

/// Squared-error losses of the oracle, SURE and adaptive thresholds on one
/// noisy draw at unit noise level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MseReplicate {
    pub oracle: f64,
    pub sure: f64,
    pub adaptive: f64,
}

pub fn mse_replicate(truth: &Signal, seed: u64, cfg: &SolverConfig) -> Result<MseReplicate> {
    let y = add_noise(truth, NoiseSpec::new(1.0, seed))?;
    let grid = default_grid(&y)?;
    let (_, oracle) = minimize_criterion(&y, &grid, &Criterion::Oracle(truth.clone()), cfg)?;
    let (l_sure, _) = minimize_criterion(&y, &grid, &Criterion::Sure(1.0), cfg)?;
    let sure = truth.mse(&denoise(&y, l_sure, cfg)?.estimate)?;
    let adaptive = truth.mse(&adaptive_tv(&y, Some(1.0), cfg, None)?.step2.estimate)?;
    Ok(MseReplicate { oracle, sure, adaptive })
}

/// Risk ×100 of each selection rule, with the true noise level supplied.
pub fn bench_mse(cfg: &MseConfig) -> Result<ResultTable> {
    let solver = SolverConfig::default();
    let mut table = ResultTable::new("mse_1d", cfg.seed);
    for &func in &cfg.functions {
        for &n in &cfg.sizes {
            let reps = cfg.reps.unwrap_or_else(|| default_reps(n));
            check_reps(reps)?;
            let truth = gen_test_function(func, n, cfg.snr)?;
            let draws = (0..reps)
                .into_par_iter()
                .map(|r| mse_replicate(&truth, cfg.seed.wrapping_add(r as u64), &solver))
                .collect::<Result<Vec<_>>>()?;
            let scaled = |pick: fn(&MseReplicate) -> f64| draws.iter().map(|d| 100.0 * pick(d)).collect::<Vec<_>>();
            table.push(func.name(), n, "oracle", "risk_x100", &scaled(|d| d.oracle));
            table.push(func.name(), n, "sure", "risk_x100", &scaled(|d| d.sure));
            table.push(func.name(), n, "adaptive", "risk_x100", &scaled(|d| d.adaptive));
        }
    }
    Ok(table)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SegCase {
    /// Jump height `factor · h*`.
    Battlements { levels: usize, factor: f64 },
    Staircase { levels: usize, factor: f64 },
    /// Blocks scaled so the smallest jump is `factor · h*`.
    Blocks { factor: f64 },
}

impl SegCase {
    pub fn label(&self) -> String {
        match self {
            SegCase::Battlements { levels, factor } => format!("battlements(L={levels};{factor}h*)"),
            SegCase::Staircase { levels, factor } => format!("staircase(L={levels};{factor}h*)"),
            SegCase::Blocks { factor } => format!("blocks({factor}h*)"),
        }
    }

    pub fn spec(&self, n: usize, h_star: f64) -> Result<PiecewiseConstantSpec> {
        match *self {
            SegCase::Battlements { levels, factor } => gen_piecewise(PiecewiseKind::Battlements, n, levels, factor * h_star),
            SegCase::Staircase { levels, factor } => gen_piecewise(PiecewiseKind::Staircase, n, levels, factor * h_star),
            SegCase::Blocks { factor } => blocks_with_min_jump(n, factor * h_star),
        }
    }

    pub fn table_cases() -> Vec<SegCase> {
        vec![
            SegCase::Battlements { levels: 5, factor: 2.0 },
            SegCase::Battlements { levels: 5, factor: 1.0 },
            SegCase::Battlements { levels: 5, factor: 0.1 },
            SegCase::Staircase { levels: 5, factor: 2.0 },
            SegCase::Blocks { factor: 2.0 },
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegConfig {
    pub cases: Vec<SegCase>,
    pub sizes: Vec<usize>,
    pub reps: usize,
    pub alpha: f64,
    pub sigma: f64,
    pub seed: u64,
}

impl Default for SegConfig {
    fn default() -> Self {
        Self {
            cases: SegCase::table_cases(),
            sizes: vec![100, 1000],
            reps: 200,
            alpha: 0.05,
            sigma: 1.0,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SegDraw {
    pub exact: bool,
    pub screening: bool,
    pub levels: usize,
}

fn seg_draw(y: &Signal, truth: &PiecewiseConstantSpec, lambda: f64, sigma: f64) -> Result<SegDraw> {
    let fit = denoise(y, lambda, &SolverConfig::default())?;
    let o = evaluate_outcome(&fit.estimate, truth, sigma)?;
    Ok(SegDraw {
        exact: o.exact,
        screening: o.screening,
        levels: count_jumps(&fit.estimate, sigma, JumpCount::Calibrated)? + 1,
    })
}

/// Exact-segmentation and screening frequencies and the mean level count at
/// `λ^ES` and at the universal threshold.
pub fn bench_seg(cfg: &SegConfig) -> Result<ResultTable> {
    check_reps(cfg.reps)?;
    let hs = h_star(cfg.sigma, cfg.alpha)?;
    let mut table = ResultTable::new("seg_1d", cfg.seed);
    for case in &cfg.cases {
        for &n in &cfg.sizes {
            let truth = case.spec(n, hs)?;
            let label = case.label();
            let l0 = truth.num_levels();
            let lam_es = exact_seg_threshold(truth.max_length(), cfg.sigma, cfg.alpha)?;
            let lam_n = universal_threshold_1d(n, cfg.sigma)?;
            let clean = truth.realize();
            let draws = (0..cfg.reps)
                .into_par_iter()
                .map(|r| {
                    let y = add_noise(&clean, NoiseSpec::new(cfg.sigma, cfg.seed.wrapping_add(r as u64)))?;
                    Ok((seg_draw(&y, &truth, lam_es, cfg.sigma)?, seg_draw(&y, &truth, lam_n, cfg.sigma)?))
                })
                .collect::<Result<Vec<_>>>()?;
            table.push_value(&label, n, "truth", "levels", l0 as f64);
            if truth.alternates() {
                table.push_value(&label, n, "lambda_es", "pi0_es", pi0_es(l0, cfg.alpha)?);
            }
            for (method, pick) in [
                ("lambda_es", (|d: &(SegDraw, SegDraw)| d.0) as fn(&(SegDraw, SegDraw)) -> SegDraw),
                ("lambda_n", |d: &(SegDraw, SegDraw)| d.1),
            ] {
                let sel: Vec<SegDraw> = draws.iter().map(pick).collect();
                let ind = |f: fn(&SegDraw) -> bool| sel.iter().map(|d| f(d) as u8 as f64).collect::<Vec<_>>();
                table.push(&label, n, method, "pi_es", &ind(|d| d.exact));
                table.push(&label, n, method, "pi_s", &ind(|d| d.screening));
                let levels: Vec<f64> = sel.iter().map(|d| d.levels as f64).collect();
                table.push(&label, n, method, "levels", &levels);
            }
        }
    }
    Ok(table)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaConfig {
    pub dim: usize,
    pub sizes: Vec<usize>,
    pub reps: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaPipeline {
    pub studies: Vec<SizeStudy>,
    pub fit: LambdaFitFile,
}

impl LambdaPipeline {
    /// `side,mu,beta,gev_mu,gev_scale,gev_xi,lr_p_value,qq_correlation` rows.
    pub fn fits_csv(&self) -> String {
        let mut out = String::from("side,mu,beta,gev_mu,gev_scale,gev_xi,lr_p_value,qq_correlation\n");
        for s in &self.studies {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                s.side, s.gumbel.mu, s.gumbel.beta, s.gev.mu, s.gev.scale, s.gev.xi, s.lr_p_value, s.qq_correlation
            ));
        }
        out
    }

    /// `empirical,fitted` quantile pairs for one size.
    pub fn qq_csv(study: &SizeStudy) -> String {
        let mut out = String::from("empirical,fitted\n");
        for (e, f) in qq_pairs(&study.samples, &study.gumbel) {
            out.push_str(&format!("{e},{f}\n"));
        }
        out
    }
}

/// Samples `Λ` at each size, fits Gumbel and GEV models and regresses the
/// Gumbel parameters on `log log N`. In 1D the first draws are re-solved by
/// the cut route and must match the closed form.
pub fn lambda_pipeline(cfg: &LambdaConfig) -> Result<LambdaPipeline> {
    check_reps(cfg.reps)?;
    if !(1..=3).contains(&cfg.dim) {
        return Err(Error::UnsupportedDimension(cfg.dim));
    }
    let mut studies = Vec::with_capacity(cfg.sizes.len());
    for &side in &cfg.sizes {
        let study = study_size(side, cfg.dim, cfg.reps, cfg.seed)?;
        if cfg.dim == 1 {
            let shape = crate::grid::LatticeShape::line(side)?;
            for r in 0..cfg.reps.min(10) {
                let y = crate::signals::white_noise(&shape, cfg.seed.wrapping_add(r as u64));
                let closed = sample_lambda_1d(&y)?;
                let cut = sample_lambda_with(&y, 1e-9, LambdaMethod::Cut, 0)?.lambda;
                if (closed - cut).abs() > 1e-8 * (1.0 + closed) || closed != study.samples[r] {
                    return Err(invalid(format!("1D cross-check failed at N = {side}: {closed} vs {cut}")));
                }
            }
        }
        studies.push(study);
    }
    let pairs: Vec<(usize, _)> = studies.iter().map(|s| (s.side, s.gumbel)).collect();
    let coeffs = fit_loglog_regression(&pairs, cfg.dim)?;
    let fit = LambdaFitFile {
        dim: cfg.dim,
        n_values: cfg.sizes.clone(),
        mu: studies.iter().map(|s| s.gumbel.mu).collect(),
        beta: studies.iter().map(|s| s.gumbel.beta).collect(),
        a_mu: coeffs.a_mu,
        b_mu: coeffs.b_mu,
        a_beta: coeffs.a_beta,
        b_beta: coeffs.b_beta,
        reps: cfg.reps,
        seed: cfg.seed,
    };
    Ok(LambdaPipeline { studies, fit })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageConfig {
    pub sigmas: Vec<f64>,
    pub grid_points: usize,
    pub seed: u64,
    pub solver: SolverConfig,
}

impl Default for ImageConfig {
    fn default() -> Self {
        Self {
            sigmas: vec![10.0, 20.0, 40.0],
            grid_points: 16,
            seed: 1,
            solver: SolverConfig::default().with_gap_tol(1e-6).with_max_iter(3000),
        }
    }
}

/// Losses of the oracle, SURE and adaptive thresholds on a noisy copy of a
/// clean image at each noise level, plus each rule's loss in percent above
/// the oracle. Losses are computed before any re-quantization.
pub fn bench_image(clean: &Signal, cfg: &ImageConfig) -> Result<ResultTable> {
    if clean.shape().dims() != 2 {
        return Err(Error::UnsupportedDimension(clean.shape().dims()));
    }
    let mut table = ResultTable::new("image", cfg.seed);
    for &sigma in &cfg.sigmas {
        let y = add_noise(clean, NoiseSpec::new(sigma, cfg.seed))?;
        let grid = geometric_grid_between(sigma / 20.0, 20.0 * sigma, cfg.grid_points.max(2));
        let points = grid
            .par_iter()
            .map(|&l| {
                let f = denoise(&y, l, &cfg.solver)?.estimate;
                Ok((clean.mse(&f)?, sure(&y, &f, sigma, default_quantization(&f))?))
            })
            .collect::<Result<Vec<_>>>()?;
        let oracle = points.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
        let sure_loss = points
            .iter()
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|p| p.0)
            .unwrap_or(f64::NAN);
        let adaptive = clean.mse(&adaptive_tv(&y, Some(sigma), &cfg.solver, None)?.step2.estimate)?;
        let name = format!("sigma={sigma}");
        let size = clean.len();
        for (method, loss) in [("oracle", oracle), ("sure", sure_loss), ("adaptive", adaptive)] {
            table.push_value(&name, size, method, "mse", loss);
            table.push_value(&name, size, method, "pct_over_oracle", 100.0 * (loss / oracle - 1.0));
        }
    }
    Ok(table)
}

/// Any of the experiments, as read from a configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "experiment", rename_all = "snake_case")]
pub enum ExperimentConfig {
    #[serde(rename = "mse_1d")]
    Mse1d(MseConfig),
    #[serde(rename = "seg_1d")]
    Seg1d(SegConfig),
    LambdaFit(LambdaConfig),
    Image(ImageConfig),
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reps_schedule() {
        assert_eq!(default_reps(100), 500);
        assert_eq!(default_reps(1000), 50);
        assert_eq!(default_reps(10_000), 5);
        assert_eq!(default_reps(1_000_000), 5);
    }

    #[test]
    fn mse_table_is_complete_and_deterministic() {
        let cfg = MseConfig {
            functions: vec![TestFunction::Blocks, TestFunction::Zero],
            sizes: vec![64],
            reps: Some(4),
            snr: 7.0,
            seed: 3,
        };
        let a = bench_mse(&cfg).unwrap();
        let b = bench_mse(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.rows.len(), 6);
        assert!(a.rows.iter().all(|r| r.std_error >= 0.0 && r.reps == 4));
        assert!(a.get("blocks", 64, "oracle", "risk_x100").unwrap().estimate
            <= a.get("blocks", 64, "sure", "risk_x100").unwrap().estimate + 1e-12);
        let zero = bench_mse(&MseConfig { reps: Some(0), ..cfg }).unwrap_err();
        assert!(matches!(zero, Error::InvalidArgument(_)));
    }

    #[test]
    fn seg_table_rows() {
        let cfg = SegConfig {
            cases: vec![SegCase::Battlements { levels: 5, factor: 2.0 }],
            sizes: vec![100],
            reps: 10,
            ..SegConfig::default()
        };
        let t = bench_seg(&cfg).unwrap();
        let label = cfg.cases[0].label();
        assert!((t.get(&label, 100, "lambda_es", "pi0_es").unwrap().estimate - 0.658).abs() < 1e-3);
        assert_eq!(t.get(&label, 100, "lambda_es", "pi_s").unwrap().estimate, 1.0);
        assert_eq!(t.get(&label, 100, "truth", "levels").unwrap().estimate, 5.0);
        let csv = t.to_csv();
        assert!(csv.starts_with("function,size,method,metric,estimate,std_error,reps\n"));
    }

    #[test]
    fn lambda_pipeline_in_one_dimension() {
        let out = lambda_pipeline(&LambdaConfig {
            dim: 1,
            sizes: vec![50, 200],
            reps: 60,
            seed: 9,
        })
        .unwrap();
        assert_eq!(out.studies.len(), 2);
        assert!(out.fits_csv().lines().count() == 3);
        assert!(LambdaPipeline::qq_csv(&out.studies[0]).lines().count() == 61);
    }

    #[test]
    fn experiment_config_json() {
        let c = ExperimentConfig::Seg1d(SegConfig::default());
        let s = serde_json::to_string(&c).unwrap();
        assert!(s.contains("\"experiment\":\"seg_1d\""));
        let back: ExperimentConfig = serde_json::from_str(&s).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn thread_pool_from_environment() {
        std::env::remove_var("TVDN_THREADS");
        assert_eq!(init_thread_pool().unwrap(), None);
    }
}
