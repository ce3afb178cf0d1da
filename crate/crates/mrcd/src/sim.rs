//! Monte Carlo harness: data generators, contamination, and the experiment
//! grid that scores scatter estimates against the generating covariance.

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Gamma, StandardNormal};

use crate::data::DataMatrix;
use crate::error::{Error, Result};
use crate::estimator::{fit, FitOptions, TargetChoice};
use crate::ogk::ogk_fit;

const CONDITION_TOLERANCE: f64 = 0.1;
const BISECTION_STEPS: usize = 200;

/// Which data-generating process a cell uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dgp {
    /// Random correlation matrices with a prescribed condition number.
    Alyz,
    /// Factor loadings times common factors plus independent noise.
    Factor,
}

/// Which estimator a cell evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Estimator {
    Mrcd,
    /// The unregularized search (rho forced to zero).
    McdRhoZero,
    Ogk,
}

impl Estimator {
    pub fn label(&self) -> &'static str {
        match self {
            Estimator::Mrcd => "mrcd",
            Estimator::McdRhoZero => "mcd",
            Estimator::Ogk => "ogk",
        }
    }
}

/// Factor-model parameters. Defaults give unit-order variances: standard
/// normal factors, Uniform(0.5, 1.5) loadings on a single factor each, and
/// Gamma(2, 0.25) error standard deviations floored at 0.1.
#[derive(Debug, Clone)]
pub struct FactorParams {
    pub factors: usize,
    pub factor_mean: f64,
    /// Factors are independent with this common variance.
    pub factor_variance: f64,
    pub loading_low: f64,
    pub loading_high: f64,
    pub error_shape: f64,
    pub error_scale: f64,
    pub error_floor: f64,
}

impl Default for FactorParams {
    fn default() -> Self {
        Self {
            factors: 3,
            factor_mean: 0.0,
            factor_variance: 1.0,
            loading_low: 0.5,
            loading_high: 1.5,
            error_shape: 2.0,
            error_scale: 0.25,
            error_floor: 0.1,
        }
    }
}

/// One Monte Carlo experiment: a grid of estimators and subset fractions
/// evaluated on `replications` independent contaminated samples.
#[derive(Debug, Clone)]
pub struct SimConfig {
    pub n: usize,
    pub p: usize,
    pub dgp: Dgp,
    /// Contamination fraction in [0, 0.5).
    pub epsilon: f64,
    /// Distance of the outliers from the mean of the good data.
    pub k: f64,
    /// Subset sizes as fractions of n; h = ceil(fraction * n).
    pub h_fractions: Vec<f64>,
    pub replications: usize,
    pub seed: u64,
    pub estimators: Vec<Estimator>,
    pub target: TargetChoice,
    pub factor: FactorParams,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n: 100,
            p: 5,
            dgp: Dgp::Alyz,
            epsilon: 0.0,
            k: 50.0,
            h_fractions: vec![0.75],
            replications: 10,
            seed: 0,
            estimators: vec![Estimator::Mrcd],
            target: TargetChoice::Identity,
            factor: FactorParams::default(),
        }
    }
}

/// One cell of the result table.
#[derive(Debug, Clone)]
pub struct SimCell {
    pub estimator: Estimator,
    pub h_fraction: f64,
    pub h: usize,
    pub mse: f64,
    pub average_rho: f64,
    pub completed: usize,
    pub failed: usize,
}

/// One raw record per (replication, estimator, h).
#[derive(Debug, Clone)]
pub struct RepRecord {
    pub replication: usize,
    pub estimator: Estimator,
    pub h: usize,
    pub mse: f64,
    pub rho: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct SimResult {
    pub cells: Vec<SimCell>,
    pub records: Vec<RepRecord>,
    pub warnings: Vec<String>,
}

impl SimResult {
    /// Plain-text table, one row per cell.
    pub fn table(&self) -> String {
        let mut out = String::from("estimator  h_frac     h        mse    avg_rho  ok  fail\n");
        for c in &self.cells {
            out.push_str(&format!(
                "{:<9}  {:>6.2}  {:>4}  {:>9.4}  {:>9.4}  {:>2}  {:>4}\n",
                c.estimator.label(),
                c.h_fraction,
                c.h,
                c.mse,
                c.average_rho,
                c.completed,
                c.failed
            ));
        }
        out
    }
}

/// Draws from the Haar measure on the orthogonal group by QR of a Gaussian
/// matrix with the sign convention fixed on the diagonal of R.
pub fn haar_orthogonal(p: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let g = DMatrix::from_fn(p, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..p {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

fn correlation_from_spread(q: &DMatrix<f64>, spread: f64) -> DMatrix<f64> {
    let p = q.nrows();
    // Linearly spaced eigenvalues over [1, spread].
    let eig = DVector::from_fn(p, |j, _| {
        1.0 + (spread - 1.0) * j as f64 / (p - 1) as f64
    });
    let mut sigma = DMatrix::zeros(p, p);
    for j in 0..p {
        let qj = q.column(j);
        sigma += &qj * qj.transpose() * eig[j];
    }
    // Rescale to unit diagonal; this perturbs the condition number, which is
    // why the spread is tuned instead of set to ln(cond) directly.
    let mut d = DVector::zeros(p);
    for j in 0..p {
        d[j] = sigma[(j, j)].sqrt();
    }
    for i in 0..p {
        for j in 0..p {
            sigma[(i, j)] /= d[i] * d[j];
        }
    }
    (&sigma + sigma.transpose()) * 0.5
}

fn condition_number(m: &DMatrix<f64>) -> f64 {
    let eig = m.symmetric_eigenvalues();
    let max = eig.iter().cloned().fold(f64::MIN, f64::max);
    let min = eig.iter().cloned().fold(f64::MAX, f64::min);
    max / min
}

/// Generates a random p x p correlation matrix whose condition number lies
/// within 10% of `cond`: a Haar-random eigenbasis with linearly spaced
/// eigenvalues whose spread is tuned by bisection after unit-diagonal
/// rescaling.
pub fn alyz_correlation(p: usize, cond: f64, rng: &mut impl Rng) -> Result<DMatrix<f64>> {
    if p < 2 || cond <= 1.0 {
        return Err(Error::GeneratorDiverged(format!(
            "need p >= 2 and cond > 1, got p = {p}, cond = {cond}"
        )));
    }
    let lo_target = (1.0 - CONDITION_TOLERANCE) * cond;
    let hi_target = (1.0 + CONDITION_TOLERANCE) * cond;
    let q = haar_orthogonal(p, rng);
    let mut lo = 1.0f64;
    let mut hi = cond;
    let mut grow = 0;
    while condition_number(&correlation_from_spread(&q, hi)) < hi_target {
        hi *= 2.0;
        grow += 1;
        if grow > 60 {
            return Err(Error::GeneratorDiverged(format!(
                "condition number never exceeded {hi_target} while growing the spread"
            )));
        }
    }
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        let sigma = correlation_from_spread(&q, mid);
        let c = condition_number(&sigma);
        if c >= lo_target && c <= hi_target {
            return Ok(sigma);
        }
        if c < lo_target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::GeneratorDiverged(format!(
        "bisection did not land in [{lo_target}, {hi_target}] after {BISECTION_STEPS} steps"
    )))
}

/// Samples n observations of x = B f + e: loadings B are redrawn uniformly
/// from [loading_low, loading_high] (one factor per variable, cycling),
/// factors are independent N(factor_mean, factor_variance), and error
/// standard deviations are Gamma(shape, scale) draws floored at
/// `error_floor`. Returns the sample and the exact generating covariance
/// B Cov(f) B' + diag(sigma^2).
pub fn factor_model_sample(
    n: usize,
    p: usize,
    params: &FactorParams,
    rng: &mut impl Rng,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let k = params.factors;
    if k == 0 || params.factor_variance < 0.0 || params.loading_high < params.loading_low {
        return Err(Error::GeneratorDiverged(
            "invalid factor-model parameters".into(),
        ));
    }
    let gamma = Gamma::new(params.error_shape, params.error_scale)
        .map_err(|e| Error::GeneratorDiverged(format!("gamma error scales: {e}")))?;
    let mut loadings = DMatrix::zeros(p, k);
    for j in 0..p {
        loadings[(j, j % k)] =
            params.loading_low + rng.gen::<f64>() * (params.loading_high - params.loading_low);
    }
    let sd: Vec<f64> = (0..p)
        .map(|_| rng.sample::<f64, _>(gamma).max(params.error_floor))
        .collect();
    if sd.iter().any(|&s| s <= 0.0) {
        return Err(Error::GeneratorDiverged(
            "non-positive error standard deviation".into(),
        ));
    }
    let mut sigma = &loadings * loadings.transpose() * params.factor_variance;
    for j in 0..p {
        sigma[(j, j)] += sd[j] * sd[j];
    }
    let fv = params.factor_variance.sqrt();
    let mut x = DMatrix::zeros(n, p);
    for i in 0..n {
        let f = DVector::from_fn(k, |_, _| {
            params.factor_mean + fv * rng.sample::<f64, _>(StandardNormal)
        });
        let row = &loadings * f;
        for j in 0..p {
            x[(i, j)] = row[j] + sd[j] * rng.sample::<f64, _>(StandardNormal);
        }
    }
    Ok((x, sigma))
}

/// Samples n rows from N(0, sigma) using the Cholesky factor of sigma.
pub fn gaussian_sample(
    n: usize,
    sigma: &DMatrix<f64>,
    rng: &mut impl Rng,
) -> Result<DMatrix<f64>> {
    let p = sigma.nrows();
    let chol = nalgebra::Cholesky::new(sigma.clone()).ok_or(Error::SingularScatter)?;
    let l = chol.l();
    let z = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    Ok(z * l.transpose())
}

/// Replaces floor(epsilon n) randomly chosen rows with mu_good + k * v_min,
/// where mu_good is the mean of the sample before replacement and v_min the
/// unit eigenvector of the smallest eigenvalue of sigma (the direction in
/// which outliers are hardest to detect). Returns the replaced row indices.
pub fn contaminate(
    x: &mut DMatrix<f64>,
    sigma: &DMatrix<f64>,
    epsilon: f64,
    k: f64,
    rng: &mut impl Rng,
) -> Vec<usize> {
    let n = x.nrows();
    let m = (epsilon * n as f64).floor() as usize;
    if m == 0 {
        return Vec::new();
    }
    let mu_good = x.row_mean();
    let eig = sigma.clone().symmetric_eigen();
    let mut min_j = 0;
    for j in 1..eig.eigenvalues.len() {
        if eig.eigenvalues[j] < eig.eigenvalues[min_j] {
            min_j = j;
        }
    }
    let v = eig.eigenvectors.column(min_j).normalize();
    let outlier = mu_good.transpose() + v * k;
    let rows = rand::seq::index::sample(rng, n, m).into_vec();
    for &i in &rows {
        x.row_mut(i).copy_from(&outlier.transpose());
    }
    rows
}

/// (1/M)(1/p^2) sum of entrywise squared differences over paired lists.
pub fn mse(estimates: &[DMatrix<f64>], truths: &[DMatrix<f64>]) -> Result<f64> {
    if estimates.is_empty() || estimates.len() != truths.len() {
        return Err(Error::LengthMismatch {
            left: estimates.len(),
            right: truths.len(),
        });
    }
    let p = truths[0].nrows();
    let mut total = 0.0;
    for (e, t) in estimates.iter().zip(truths) {
        if e.nrows() != p || e.ncols() != p || t.nrows() != p || t.ncols() != p {
            return Err(Error::DimensionMismatch {
                expected: p,
                actual: e.nrows(),
            });
        }
        total += (e - t).norm_squared();
    }
    Ok(total / (estimates.len() as f64 * (p * p) as f64))
}

struct CellAccumulator {
    estimator: Estimator,
    h_fraction: f64,
    h: usize,
    sum_mse: f64,
    sum_rho: f64,
    completed: usize,
    failed: usize,
}

/// Runs the full experiment grid. Each replication draws from its own RNG
/// stream (base seed, stream = replication index), so results are
/// bit-identical for a given seed regardless of scheduling. Fit failures
/// are recorded per replication and excluded from the cell averages.
pub fn run_experiment(config: &SimConfig) -> Result<SimResult> {
    if config.epsilon < 0.0 || config.epsilon >= 0.5 {
        return Err(Error::ConfigSchema("epsilon must lie in [0, 0.5)".into()));
    }
    if config.h_fractions.is_empty() || config.estimators.is_empty() {
        return Err(Error::ConfigSchema(
            "h_fractions and estimators must be non-empty".into(),
        ));
    }
    let mut warnings = Vec::new();
    let contaminated = (config.epsilon * config.n as f64).floor() as usize;
    let mut cells: Vec<CellAccumulator> = Vec::new();
    for &est in &config.estimators {
        for &frac in &config.h_fractions {
            let h = ((frac * config.n as f64).ceil() as usize).min(config.n);
            if contaminated > config.n - h {
                warnings.push(format!(
                    "h = {h} leaves only {} spare rows for {} outliers",
                    config.n - h,
                    contaminated
                ));
            }
            cells.push(CellAccumulator {
                estimator: est,
                h_fraction: frac,
                h,
                sum_mse: 0.0,
                sum_rho: 0.0,
                completed: 0,
                failed: 0,
            });
        }
    }
    let mut records = Vec::new();
    for rep in 0..config.replications {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(rep as u64);
        let (mut x, sigma) = match config.dgp {
            Dgp::Alyz => {
                let sigma = alyz_correlation(config.p, 100.0, &mut rng)?;
                let x = gaussian_sample(config.n, &sigma, &mut rng)?;
                (x, sigma)
            }
            Dgp::Factor => factor_model_sample(config.n, config.p, &config.factor, &mut rng)?,
        };
        contaminate(&mut x, &sigma, config.epsilon, config.k, &mut rng);
        let data = DataMatrix::from_values(x);
        for cell in cells.iter_mut() {
            let outcome: Result<(DMatrix<f64>, f64)> = match cell.estimator {
                Estimator::Mrcd => fit(&data, cell.h, &config.target, &FitOptions::default())
                    .map(|f| (f.scatter, f.rho)),
                Estimator::McdRhoZero => fit(
                    &data,
                    cell.h,
                    &config.target,
                    &FitOptions {
                        force_rho: Some(0.0),
                        ..FitOptions::default()
                    },
                )
                .map(|f| (f.scatter, f.rho)),
                Estimator::Ogk => ogk_fit(&data).map(|f| (f.scatter, 0.0)),
            };
            match outcome {
                Ok((scatter, rho)) => {
                    let cell_mse = (&scatter - &sigma).norm_squared()
                        / (config.p * config.p) as f64;
                    cell.sum_mse += cell_mse;
                    cell.sum_rho += rho;
                    cell.completed += 1;
                    records.push(RepRecord {
                        replication: rep,
                        estimator: cell.estimator,
                        h: cell.h,
                        mse: cell_mse,
                        rho,
                        error: None,
                    });
                }
                Err(e) => {
                    cell.failed += 1;
                    records.push(RepRecord {
                        replication: rep,
                        estimator: cell.estimator,
                        h: cell.h,
                        mse: f64::NAN,
                        rho: f64::NAN,
                        error: Some(e.to_string()),
                    });
                }
            }
        }
    }
    let cells = cells
        .into_iter()
        .map(|c| SimCell {
            estimator: c.estimator,
            h_fraction: c.h_fraction,
            h: c.h,
            mse: if c.completed > 0 {
                c.sum_mse / c.completed as f64
            } else {
                f64::NAN
            },
            average_rho: if c.completed > 0 {
                c.sum_rho / c.completed as f64
            } else {
                f64::NAN
            },
            completed: c.completed,
            failed: c.failed,
        })
        .collect();
    Ok(SimResult {
        cells,
        records,
        warnings,
    })
}

/// Parses the key=value experiment config format. Unknown keys, malformed
/// values, and missing required keys are all reported together.
///
/// Recognized keys: n, p, dgp (alyz|factor), epsilon, k, h_fractions
/// (comma-separated), replications, seed, estimators (comma-separated from
/// mrcd|mcd|ogk), target (identity|equicorr), factors, factor_mean,
/// factor_variance, loading_low, loading_high, error_shape, error_scale,
/// error_floor. n and p are required; everything else has a default.
pub fn parse_sim_config(text: &str) -> Result<SimConfig> {
    let mut config = SimConfig::default();
    let mut bad: Vec<String> = Vec::new();
    let mut saw_n = false;
    let mut saw_p = false;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            bad.push(format!("line {}: missing '='", lineno + 1));
            continue;
        };
        let key = key.trim();
        let value = value.trim();
        let mut fail = |what: &str| bad.push(format!("{key}: {what}"));
        match key {
            "n" => match value.parse() {
                Ok(v) => {
                    config.n = v;
                    saw_n = true;
                }
                Err(_) => fail("expected a positive integer"),
            },
            "p" => match value.parse() {
                Ok(v) => {
                    config.p = v;
                    saw_p = true;
                }
                Err(_) => fail("expected a positive integer"),
            },
            "dgp" => match value {
                "alyz" => config.dgp = Dgp::Alyz,
                "factor" => config.dgp = Dgp::Factor,
                _ => fail("expected alyz or factor"),
            },
            "epsilon" => match value.parse::<f64>() {
                Ok(v) if (0.0..0.5).contains(&v) => config.epsilon = v,
                _ => fail("expected a fraction in [0, 0.5)"),
            },
            "k" => match value.parse() {
                Ok(v) => config.k = v,
                Err(_) => fail("expected a number"),
            },
            "h_fractions" => {
                let parsed: std::result::Result<Vec<f64>, _> =
                    value.split(',').map(|s| s.trim().parse()).collect();
                match parsed {
                    Ok(v) if !v.is_empty() && v.iter().all(|&f| f > 0.5 - 1e-9 && f <= 1.0) => {
                        config.h_fractions = v
                    }
                    _ => fail("expected comma-separated fractions in (0.5, 1.0]"),
                }
            }
            "replications" => match value.parse() {
                Ok(v) if v > 0 => config.replications = v,
                _ => fail("expected a positive integer"),
            },
            "seed" => match value.parse() {
                Ok(v) => config.seed = v,
                Err(_) => fail("expected an integer"),
            },
            "estimators" => {
                let mut list = Vec::new();
                let mut ok = true;
                for item in value.split(',') {
                    match item.trim() {
                        "mrcd" => list.push(Estimator::Mrcd),
                        "mcd" => list.push(Estimator::McdRhoZero),
                        "ogk" => list.push(Estimator::Ogk),
                        _ => ok = false,
                    }
                }
                if ok && !list.is_empty() {
                    config.estimators = list;
                } else {
                    fail("expected comma-separated subset of mrcd,mcd,ogk");
                }
            }
            "target" => match value {
                "identity" => config.target = TargetChoice::Identity,
                "equicorr" => config.target = TargetChoice::Equicorrelation,
                _ => fail("expected identity or equicorr"),
            },
            "factors" => match value.parse() {
                Ok(v) if v > 0 => config.factor.factors = v,
                _ => fail("expected a positive integer"),
            },
            "factor_mean" => match value.parse() {
                Ok(v) => config.factor.factor_mean = v,
                Err(_) => fail("expected a number"),
            },
            "factor_variance" => match value.parse::<f64>() {
                Ok(v) if v >= 0.0 => config.factor.factor_variance = v,
                _ => fail("expected a non-negative number"),
            },
            "loading_low" => match value.parse() {
                Ok(v) => config.factor.loading_low = v,
                Err(_) => fail("expected a number"),
            },
            "loading_high" => match value.parse() {
                Ok(v) => config.factor.loading_high = v,
                Err(_) => fail("expected a number"),
            },
            "error_shape" => match value.parse::<f64>() {
                Ok(v) if v > 0.0 => config.factor.error_shape = v,
                _ => fail("expected a positive number"),
            },
            "error_scale" => match value.parse::<f64>() {
                Ok(v) if v > 0.0 => config.factor.error_scale = v,
                _ => fail("expected a positive number"),
            },
            "error_floor" => match value.parse::<f64>() {
                Ok(v) if v > 0.0 => config.factor.error_floor = v,
                _ => fail("expected a positive number"),
            },
            other => bad.push(format!("{other}: unknown key")),
        }
    }
    if !saw_n {
        bad.push("n: required key missing".into());
    }
    if !saw_p {
        bad.push("p: required key missing".into());
    }
    if bad.is_empty() {
        Ok(config)
    } else {
        Err(Error::ConfigSchema(bad.join("; ")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn haar_matrices_are_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for p in [2, 5, 12] {
            let q = haar_orthogonal(p, &mut rng);
            let prod = &q * q.transpose();
            assert!((prod - DMatrix::identity(p, p)).amax() < 1e-12);
        }
    }

    #[test]
    fn alyz_condition_number_in_band() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        for p in [5, 20, 50] {
            let sigma = alyz_correlation(p, 100.0, &mut rng).unwrap();
            for j in 0..p {
                assert!((sigma[(j, j)] - 1.0).abs() < 1e-10);
            }
            let cond = condition_number(&sigma);
            assert!((90.0..=110.0).contains(&cond), "p={p} cond={cond}");
            let min_eig = sigma
                .symmetric_eigenvalues()
                .iter()
                .cloned()
                .fold(f64::MAX, f64::min);
            assert!(min_eig > 0.0);
        }
    }

    #[test]
    fn factor_model_truth_matches_large_sample_covariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let params = FactorParams::default();
        let (x, sigma) = factor_model_sample(100_000, 5, &params, &mut rng).unwrap();
        assert!(nalgebra::Cholesky::new(sigma.clone()).is_some());
        let mean = x.row_mean();
        let mut centered = x;
        for mut row in centered.row_iter_mut() {
            row -= &mean;
        }
        let n = centered.nrows() as f64;
        let s = centered.transpose() * &centered / n;
        assert!((s - sigma).amax() < 0.05);
    }

    #[test]
    fn degenerate_factor_model_collapses_to_point_mass() {
        let mut rng = ChaCha8Rng::seed_from_u64(34);
        let params = FactorParams {
            factor_mean: 2.0,
            factor_variance: 0.0,
            error_shape: 1.0,
            error_scale: 1e-12,
            error_floor: 1e-9,
            ..FactorParams::default()
        };
        let (x, _) = factor_model_sample(20, 4, &params, &mut rng).unwrap();
        for i in 1..20 {
            assert!((x.row(i) - x.row(0)).amax() < 1e-6);
        }
    }

    #[test]
    fn gaussian_sample_recovers_covariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(35);
        let sigma = DMatrix::from_row_slice(2, 2, &[2.0, 0.8, 0.8, 1.0]);
        let x = gaussian_sample(50_000, &sigma, &mut rng).unwrap();
        let n = x.nrows() as f64;
        let mean = x.row_mean();
        let mut centered = x;
        for mut row in centered.row_iter_mut() {
            row -= &mean;
        }
        let s = centered.transpose() * &centered / n;
        assert!((s - sigma).amax() < 0.05);
    }

    #[test]
    fn contamination_replaces_expected_rows_at_distance_k() {
        let mut rng = ChaCha8Rng::seed_from_u64(36);
        let sigma = DMatrix::identity(3, 3);
        let mut x = gaussian_sample(400, &sigma, &mut rng).unwrap();
        let mu_good = x.row_mean().transpose();
        let rows = contaminate(&mut x, &sigma, 0.1, 50.0, &mut rng);
        assert_eq!(rows.len(), 40);
        for &i in &rows {
            let dist = (x.row(i).transpose() - &mu_good).norm();
            assert!((dist - 50.0).abs() < 1e-9);
        }
        // Zero contamination leaves the sample untouched.
        let mut y = x.clone();
        assert!(contaminate(&mut y, &sigma, 0.0, 50.0, &mut rng).is_empty());
        assert_eq!(x, y);
    }

    #[test]
    fn mse_hand_oracle() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let b = DMatrix::from_row_slice(2, 2, &[1.5, 2.0, 2.0, 4.5]);
        let c = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 0.0]);
        let d = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        // Pair 1: 0.25 + 0 + 1 + 0.25 = 1.5; pair 2: 4 ones = 4.
        // (1/2)(1/4)(1.5 + 4.0) = 0.6875.
        let v = mse(&[a.clone(), c], &[b, d]).unwrap();
        assert!((v - 0.6875).abs() < 1e-15);
        assert_eq!(mse(&[a.clone()], &[a.clone()]).unwrap(), 0.0);
        let one_a = DMatrix::from_element(1, 1, 2.0);
        let one_b = DMatrix::from_element(1, 1, 3.0);
        assert_eq!(mse(&[one_a], &[one_b]).unwrap(), 1.0);
        assert!(mse(&[a], &[]).is_err());
    }

    #[test]
    fn experiment_is_reproducible() {
        let config = SimConfig {
            n: 60,
            p: 5,
            epsilon: 0.1,
            k: 20.0,
            replications: 3,
            seed: 99,
            estimators: vec![Estimator::Mrcd, Estimator::Ogk],
            h_fractions: vec![0.75, 0.9],
            ..SimConfig::default()
        };
        let a = run_experiment(&config).unwrap();
        let b = run_experiment(&config).unwrap();
        assert_eq!(a.cells.len(), 4);
        for (ca, cb) in a.cells.iter().zip(&b.cells) {
            assert_eq!(ca.mse, cb.mse);
            assert_eq!(ca.average_rho, cb.average_rho);
            assert_eq!(ca.completed, 3);
            assert_eq!(ca.failed, 0);
            assert!(ca.mse >= 0.0);
            assert!((0.0..=1.0).contains(&ca.average_rho));
        }
        assert_eq!(a.records.len(), 12);
    }

    #[test]
    fn smoke_single_ogk_cell() {
        let config = SimConfig {
            n: 40,
            p: 3,
            replications: 1,
            seed: 7,
            estimators: vec![Estimator::Ogk],
            ..SimConfig::default()
        };
        let r = run_experiment(&config).unwrap();
        assert_eq!(r.cells.len(), 1);
        assert!(r.cells[0].mse.is_finite());
    }

    #[test]
    fn config_parser_round_trip_and_errors() {
        let text = "\
# comment
n = 80
p = 10
dgp = factor
epsilon = 0.2
k = 50
h_fractions = 0.75, 0.9
replications = 25
seed = 42
estimators = mrcd, ogk
target = equicorr
factors = 2
";
        let c = parse_sim_config(text).unwrap();
        assert_eq!(c.n, 80);
        assert_eq!(c.p, 10);
        assert_eq!(c.dgp, Dgp::Factor);
        assert_eq!(c.epsilon, 0.2);
        assert_eq!(c.h_fractions, vec![0.75, 0.9]);
        assert_eq!(c.replications, 25);
        assert_eq!(c.seed, 42);
        assert_eq!(c.estimators, vec![Estimator::Mrcd, Estimator::Ogk]);
        assert_eq!(c.factor.factors, 2);

        let err = parse_sim_config("n = 10\nbogus = 1\nepsilon = 0.9").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("bogus"), "{msg}");
        assert!(msg.contains("epsilon"), "{msg}");
        assert!(msg.contains("p"), "{msg}");
    }
}
