//! The full MRCD fitting algorithm and the fitted-model operations.

use nalgebra::{Cholesky, DMatrix, DVector};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::scatter::{c_step, RegularizedScatter};
use super::starts::{initial_estimates, subset_from_start, StartEstimate};
use super::{calibrate_rho, consistency_factor, SubsetIndex, KAPPA_MAX};
use crate::data::DataMatrix;
use crate::error::{Error, Result};
use crate::preprocess::{standardize, subset_mean_cov, target_transform, Standardization};
use crate::target::{equicorrelation_target, identity_target, TargetSpec};

/// How the target matrix is chosen when fitting.
#[derive(Debug, Clone)]
pub enum TargetChoice {
    Identity,
    /// Equicorrelation with the parameter estimated from the standardized data.
    Equicorrelation,
    Fixed(TargetSpec),
}

/// Cutoff rule used to flag outlying robust distances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OutlierCutoff {
    /// sqrt of the chi-square(p) quantile at the given probability.
    ChiSquared { prob: f64 },
    /// Empirical quantile of the fitted robust distances.
    Empirical { prob: f64 },
    Fixed(f64),
}

impl Default for OutlierCutoff {
    fn default() -> Self {
        OutlierCutoff::ChiSquared { prob: 0.975 }
    }
}

/// Options controlling the fitting algorithm.
#[derive(Debug, Clone)]
pub struct FitOptions {
    /// Maximum condition number used when calibrating rho.
    pub kappa_max: f64,
    /// Overrides the data-driven rho (0 reproduces the plain MCD search).
    pub force_rho: Option<f64>,
    /// Safety cap on concentration iterations per start.
    pub max_c_steps: usize,
    pub cutoff: OutlierCutoff,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            kappa_max: KAPPA_MAX,
            force_rho: None,
            max_c_steps: 500,
            cutoff: OutlierCutoff::default(),
        }
    }
}

/// A fitted MRCD model.
#[derive(Debug, Clone)]
pub struct MrcdFit {
    /// Location estimate in data units.
    pub location: DVector<f64>,
    /// Scatter estimate K in data units.
    pub scatter: DMatrix<f64>,
    /// Exact inverse of the scatter estimate.
    pub precision: DMatrix<f64>,
    pub subset: SubsetIndex,
    pub rho: f64,
    pub c_alpha: f64,
    /// det(rho I + (1 - rho) c_alpha S_W(H))^(1/p).
    pub objective: f64,
    /// Robust distances of all observations used for the fit.
    pub distances: DVector<f64>,
    pub h: usize,
    pub target: TargetSpec,
    /// Diagonal-rescaled subset scatter S* (unit diagonal in W-space).
    pub s_star: DMatrix<f64>,
    /// Eigenvalues of K_core = rho I + (1 - rho) c_alpha S_W(H), ascending.
    pub k_core_eigenvalues: Vec<f64>,
    pub standardization: Standardization,
}

impl MrcdFit {
    pub fn p(&self) -> usize {
        self.location.len()
    }

    pub fn n(&self) -> usize {
        self.distances.len()
    }

    /// Distance threshold implied by a cutoff rule.
    pub fn cutoff_value(&self, cutoff: OutlierCutoff) -> f64 {
        match cutoff {
            OutlierCutoff::ChiSquared { prob } => ChiSquared::new(self.p() as f64)
                .expect("p >= 1")
                .inverse_cdf(prob)
                .sqrt(),
            OutlierCutoff::Empirical { prob } => {
                let mut d: Vec<f64> = self.distances.iter().copied().collect();
                d.sort_by(|a, b| a.total_cmp(b));
                let idx = ((d.len() as f64 * prob).ceil() as usize).clamp(1, d.len());
                d[idx - 1]
            }
            OutlierCutoff::Fixed(v) => v,
        }
    }

    /// 1-based indices of observations whose robust distance exceeds the cutoff.
    pub fn flagged(&self, cutoff: OutlierCutoff) -> Vec<usize> {
        let threshold = self.cutoff_value(cutoff);
        self.distances
            .iter()
            .enumerate()
            .filter(|(_, &d)| d > threshold)
            .map(|(i, _)| i + 1)
            .collect()
    }

    /// Condition number of the scatter estimate.
    pub fn scatter_condition_number(&self) -> f64 {
        let eig = self.scatter.symmetric_eigenvalues();
        let max = eig.iter().cloned().fold(f64::MIN, f64::max);
        let min = eig.iter().cloned().fold(f64::MAX, f64::min);
        max / min
    }
}

/// Runs the subset search shared by `fit` and `scan_h`: initial subsets,
/// rho calibration (step "max over starts"), concentration to convergence,
/// then the candidate with the lowest objective (ties: lowest start index).
/// When the total number of h-subsets is tiny the search instead enumerates
/// them all and returns the exact minimizer; on such small problems the
/// deterministic starts frequently share a basin of attraction and
/// concentration alone can miss the global optimum.
pub(super) struct SearchOutcome {
    pub subset: SubsetIndex,
    pub rho: f64,
    pub objective: f64,
}

/// Largest number of candidate subsets for which the search enumerates
/// exhaustively instead of concentrating from the six starts.
const EXHAUSTIVE_MAX: u64 = 2_000;

/// C(n, h) saturating at u64::MAX.
fn subset_count(n: usize, h: usize) -> u64 {
    let k = h.min(n - h) as u64;
    let mut c = 1u64;
    for i in 0..k {
        let num = (n as u64) - i;
        c = match c.checked_mul(num) {
            Some(v) => v / (i + 1),
            None => return u64::MAX,
        };
    }
    c
}

/// The minimum-objective subset over every size-h subset of {0..n-1},
/// visited in lexicographic order so ties keep the lowest-index set.
fn exhaustive_best(
    w: &DMatrix<f64>,
    h: usize,
    rho: f64,
    c_alpha: f64,
) -> Result<SearchOutcome> {
    let n = w.nrows();
    let mut combo: Vec<usize> = (0..h).collect();
    let mut best: Option<SearchOutcome> = None;
    loop {
        let subset = SubsetIndex::new(combo.clone(), n)?;
        let objective = RegularizedScatter::from_subset(&subset, w, rho, c_alpha).objective()?;
        if best.as_ref().is_none_or(|b| objective < b.objective) {
            best = Some(SearchOutcome {
                subset,
                rho,
                objective,
            });
        }
        // Advance to the next combination, rightmost movable element first.
        let mut i = h;
        loop {
            if i == 0 {
                return Ok(best.expect("at least one subset"));
            }
            i -= 1;
            if combo[i] < n - h + i {
                combo[i] += 1;
                for j in (i + 1)..h {
                    combo[j] = combo[j - 1] + 1;
                }
                break;
            }
        }
    }
}

pub(super) fn search_best_subset(
    w: &DMatrix<f64>,
    starts: &[StartEstimate],
    h: usize,
    c_alpha: f64,
    opts: &FitOptions,
) -> Result<SearchOutcome> {
    let initial: Vec<SubsetIndex> = starts
        .iter()
        .map(|s| subset_from_start(w, s, h))
        .collect::<Result<_>>()?;
    let rho = match opts.force_rho {
        Some(r) => r,
        None => {
            let mut rho = 0.0f64;
            for subset in &initial {
                let scatter = RegularizedScatter::from_subset(subset, w, 0.0, c_alpha);
                let eig = scatter.scatter_eigenvalues();
                rho = rho.max(calibrate_rho(&eig, opts.kappa_max));
            }
            rho
        }
    };
    if subset_count(w.nrows(), h) <= EXHAUSTIVE_MAX {
        return exhaustive_best(w, h, rho, c_alpha);
    }
    let mut best: Option<SearchOutcome> = None;
    for subset in initial {
        let mut current = subset;
        for _ in 0..opts.max_c_steps {
            let next = c_step(&current, w, rho, c_alpha)?;
            if next == current {
                break;
            }
            current = next;
        }
        let objective =
            RegularizedScatter::from_subset(&current, w, rho, c_alpha).objective()?;
        let better = match &best {
            None => true,
            Some(b) => objective < b.objective,
        };
        if better {
            best = Some(SearchOutcome {
                subset: current,
                rho,
                objective,
            });
        }
    }
    Ok(best.expect("six starts"))
}

/// W-space building blocks reused by `fit` and `scan_h`.
pub(super) struct Prepared {
    pub std: Standardization,
    pub target: TargetSpec,
    pub w: DMatrix<f64>,
    pub starts: Vec<StartEstimate>,
}

pub(super) fn prepare(x: &DataMatrix, target: &TargetChoice) -> Result<Prepared> {
    let std = standardize(x)?;
    let target = match target {
        TargetChoice::Identity => identity_target(x.p())?,
        TargetChoice::Equicorrelation => equicorrelation_target(&std.u)?,
        TargetChoice::Fixed(t) => {
            if t.dim() != x.p() {
                return Err(Error::DimensionMismatch {
                    expected: x.p(),
                    actual: t.dim(),
                });
            }
            t.clone()
        }
    };
    let whitened = target_transform(&std.u, &target)?;
    let starts = initial_estimates(&whitened.w)?;
    Ok(Prepared {
        std,
        target,
        w: whitened.w,
        starts,
    })
}

/// Diagonal rescaling S* = D_W^{-1} S_W D_W^{-1} plus the scale vector D_W.
fn s_star_of(s_w: &DMatrix<f64>) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let p = s_w.nrows();
    let mut d_w = DVector::zeros(p);
    for j in 0..p {
        let v = s_w[(j, j)];
        if v <= 0.0 {
            return Err(Error::SingularScatter);
        }
        d_w[j] = v.sqrt();
    }
    let mut s_star = s_w.clone();
    for i in 0..p {
        for j in 0..p {
            s_star[(i, j)] /= d_w[i] * d_w[j];
        }
    }
    Ok((s_star, d_w))
}

/// Inverse of M = rho I + (1 - rho) S* by dense Cholesky.
fn m_inverse_direct(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    Cholesky::new(m.clone())
        .map(|c| c.inverse())
        .ok_or(Error::SingularScatter)
}

/// Inverse of M = rho I + (c) Z'Z with c = (1 - rho)/h, through the
/// Sherman-Morrison-Woodbury identity on an h x h system. `z` holds the
/// centered, D_W-scaled subset rows (h x p).
fn m_inverse_smw(z: &DMatrix<f64>, rho: f64) -> Result<DMatrix<f64>> {
    let (h, p) = (z.nrows(), z.ncols());
    if rho <= 0.0 {
        return Err(Error::SingularScatter);
    }
    let c = (1.0 - rho) / h as f64;
    let mut inner = z * z.transpose() * (c / rho);
    for j in 0..h {
        inner[(j, j)] += 1.0;
    }
    let chol = Cholesky::new(inner).ok_or(Error::SingularScatter)?;
    let solved = chol.solve(z); // (I_h + (c/rho) Z Z')^{-1} Z
    let mut m_inv = z.transpose() * solved * (-c / (rho * rho));
    for j in 0..p {
        m_inv[(j, j)] += 1.0 / rho;
    }
    Ok(m_inv)
}

struct Assembled {
    location: DVector<f64>,
    scatter: DMatrix<f64>,
    precision: DMatrix<f64>,
    s_star: DMatrix<f64>,
}

/// Assembles data-unit location, scatter and precision from the selected
/// subset: m = nu + D m_U(H), K = D Q L^{1/2} [rho I + (1-rho) S*] L^{1/2} Q' D.
fn assemble(
    std: &Standardization,
    target: &TargetSpec,
    w: &DMatrix<f64>,
    subset: &SubsetIndex,
    rho: f64,
) -> Result<Assembled> {
    let p = w.ncols();
    let h = subset.h();
    let mut u_sub = DMatrix::zeros(h, p);
    let mut w_sub = DMatrix::zeros(h, p);
    for (r, &i) in subset.indices().iter().enumerate() {
        u_sub.row_mut(r).copy_from(&std.u.row(i));
        w_sub.row_mut(r).copy_from(&w.row(i));
    }
    let (m_u, _) = subset_mean_cov(&u_sub)?;
    let (m_w, s_w) = subset_mean_cov(&w_sub)?;
    let location = &std.nu + std.d.component_mul(&m_u);

    let (s_star, d_w) = s_star_of(&s_w)?;
    let mut m = &s_star * (1.0 - rho);
    for j in 0..p {
        m[(j, j)] += rho;
    }
    // A = D_X Q Lambda^{1/2}; K = A M A'.
    let mut a = target.q.clone();
    for j in 0..p {
        a.column_mut(j).scale_mut(target.lambda[j].sqrt());
    }
    for i in 0..p {
        for j in 0..p {
            a[(i, j)] *= std.d[i];
        }
    }
    let mut scatter = &a * &m * a.transpose();
    // B = D_X^{-1} Q Lambda^{-1/2}; K^{-1} = B M^{-1} B'.
    let m_inv = if h < p && rho > 0.0 {
        let mut z = w_sub;
        for mut row in z.row_iter_mut() {
            row -= m_w.transpose();
        }
        for j in 0..p {
            z.column_mut(j).scale_mut(1.0 / d_w[j]);
        }
        m_inverse_smw(&z, rho)?
    } else {
        m_inverse_direct(&m)?
    };
    let mut b = target.q.clone();
    for j in 0..p {
        b.column_mut(j).scale_mut(1.0 / target.lambda[j].sqrt());
    }
    for i in 0..p {
        for j in 0..p {
            b[(i, j)] /= std.d[i];
        }
    }
    let mut precision = &b * m_inv * b.transpose();
    // Symmetrize away rounding noise.
    scatter = (&scatter + scatter.transpose()) * 0.5;
    precision = (&precision + precision.transpose()) * 0.5;
    Ok(Assembled {
        location,
        scatter,
        precision,
        s_star,
    })
}

fn distances_with(
    values: &DMatrix<f64>,
    location: &DVector<f64>,
    precision: &DMatrix<f64>,
) -> DVector<f64> {
    let n = values.nrows();
    let mut dev = values.clone();
    for mut row in dev.row_iter_mut() {
        row -= location.transpose();
    }
    let prod = precision * dev.transpose();
    DVector::from_fn(n, |i, _| {
        dev.row(i)
            .transpose()
            .dot(&prod.column(i).into_owned())
            .max(0.0)
            .sqrt()
    })
}

/// Fits the MRCD estimator with subset size h.
pub fn fit(
    x: &DataMatrix,
    h: usize,
    target: &TargetChoice,
    opts: &FitOptions,
) -> Result<MrcdFit> {
    let n = x.n();
    let min = n.div_ceil(2);
    if h < min || h > n {
        return Err(Error::BadSubsetSize { h, min, max: n });
    }
    let prepared = prepare(x, target)?;
    let c_alpha = consistency_factor(h, n, x.p())?;
    let outcome = search_best_subset(&prepared.w, &prepared.starts, h, c_alpha, opts)?;
    let assembled = assemble(
        &prepared.std,
        &prepared.target,
        &prepared.w,
        &outcome.subset,
        outcome.rho,
    )?;
    let distances = distances_with(x.values(), &assembled.location, &assembled.precision);
    let k_core_eigenvalues = RegularizedScatter::from_subset(
        &outcome.subset,
        &prepared.w,
        outcome.rho,
        c_alpha,
    )
    .core_eigenvalues();
    Ok(MrcdFit {
        location: assembled.location,
        scatter: assembled.scatter,
        precision: assembled.precision,
        subset: outcome.subset,
        rho: outcome.rho,
        c_alpha,
        objective: outcome.objective,
        distances,
        h,
        target: prepared.target,
        s_star: assembled.s_star,
        k_core_eigenvalues,
        standardization: prepared.std,
    })
}

/// Robust distances of new observations under a fitted model.
pub fn robust_distances(fit: &MrcdFit, x: &DataMatrix) -> Result<DVector<f64>> {
    if x.p() != fit.p() {
        return Err(Error::DimensionMismatch {
            expected: fit.p(),
            actual: x.p(),
        });
    }
    Ok(distances_with(x.values(), &fit.location, &fit.precision))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn gaussian_data(n: usize, p: usize, seed: u64) -> DataMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DataMatrix::from_values(DMatrix::from_fn(n, p, |_, _| {
            rng.sample::<f64, _>(StandardNormal)
        }))
    }

    #[test]
    fn clean_gaussian_fit_has_zero_rho() {
        let x = gaussian_data(200, 5, 1);
        let fit_auto = fit(&x, 150, &TargetChoice::Identity, &FitOptions::default()).unwrap();
        assert_eq!(fit_auto.rho, 0.0);
        let forced = fit(
            &x,
            150,
            &TargetChoice::Identity,
            &FitOptions {
                force_rho: Some(0.0),
                ..FitOptions::default()
            },
        )
        .unwrap();
        assert_eq!(fit_auto.subset, forced.subset);
    }

    #[test]
    fn scatter_times_precision_is_identity() {
        let x = gaussian_data(60, 6, 2);
        let f = fit(&x, 45, &TargetChoice::Identity, &FitOptions::default()).unwrap();
        let prod = &f.scatter * &f.precision;
        assert!((prod - DMatrix::identity(6, 6)).amax() < 1e-8);
    }

    #[test]
    fn identity_target_diagonal_matches_qn_scales() {
        let x = gaussian_data(80, 4, 3);
        let f = fit(&x, 60, &TargetChoice::Identity, &FitOptions::default()).unwrap();
        for j in 0..4 {
            let expect = f.standardization.d[j] * f.standardization.d[j];
            assert!(
                (f.scatter[(j, j)] - expect).abs() < 1e-8 * expect,
                "diag {} vs {}",
                f.scatter[(j, j)],
                expect
            );
        }
    }

    #[test]
    fn fat_data_fit_is_well_conditioned() {
        let x = gaussian_data(20, 40, 4);
        let f = fit(&x, 15, &TargetChoice::Identity, &FitOptions::default()).unwrap();
        assert!(f.rho > 0.0);
        let eig = &f.k_core_eigenvalues;
        assert!(eig[0] >= f.rho - 1e-12);
        assert!(eig[eig.len() - 1] / eig[0] <= KAPPA_MAX * (1.0 + 1e-9));
        let prod = &f.scatter * &f.precision;
        assert!((prod - DMatrix::identity(40, 40)).amax() < 1e-8);
    }

    #[test]
    fn smw_and_direct_inverse_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let h = 12;
        let p = 20;
        let z = DMatrix::from_fn(h, p, |_, _| rng.sample::<f64, _>(StandardNormal));
        let rho = 0.3;
        let mut m = z.transpose() * &z * ((1.0 - rho) / h as f64);
        for j in 0..p {
            m[(j, j)] += rho;
        }
        let direct = m_inverse_direct(&m).unwrap();
        let smw = m_inverse_smw(&z, rho).unwrap();
        assert!((direct - smw).amax() < 1e-10);
    }

    #[test]
    fn rho_one_identity_target_precision_is_diagonal() {
        let x = gaussian_data(30, 3, 6);
        let f = fit(
            &x,
            25,
            &TargetChoice::Identity,
            &FitOptions {
                force_rho: Some(1.0),
                ..FitOptions::default()
            },
        )
        .unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j {
                    1.0 / (f.standardization.d[i] * f.standardization.d[i])
                } else {
                    0.0
                };
                assert!((f.precision[(i, j)] - expect).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn h_equal_n_reduces_to_classical_covariance_rescaled() {
        // With H = all observations and rho = 0, the fitted scatter follows
        // the assembly chain applied to the full-sample covariance of U.
        let x = gaussian_data(50, 3, 7);
        let f = fit(
            &x,
            50,
            &TargetChoice::Identity,
            &FitOptions {
                force_rho: Some(0.0),
                ..FitOptions::default()
            },
        )
        .unwrap();
        assert_eq!(f.subset.h(), 50);
        assert_eq!(f.c_alpha, 1.0);
        let std = standardize(&x).unwrap();
        let (_, s_u) = subset_mean_cov(&std.u).unwrap();
        // Identity target: K = D S* D with S* the rescaled S_U;
        // diag(K) = D^2 and off-diagonals proportional to S_U.
        let (s_star, _) = s_star_of(&s_u).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let expect = std.d[i] * s_star[(i, j)] * std.d[j];
                assert!((f.scatter[(i, j)] - expect).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn distance_of_location_is_zero_and_flags_outliers() {
        let mut x = gaussian_data(60, 3, 8).values().clone();
        // Inject gross outliers.
        for i in 0..6 {
            for j in 0..3 {
                x[(i, j)] = 60.0 + i as f64;
            }
        }
        let data = DataMatrix::from_values(x);
        let f = fit(&data, 45, &TargetChoice::Identity, &FitOptions::default()).unwrap();
        let at_center = DataMatrix::from_values(DMatrix::from_row_slice(
            1,
            3,
            f.location.as_slice(),
        ));
        let d = robust_distances(&f, &at_center).unwrap();
        assert!(d[0].abs() < 1e-10);
        let flagged = f.flagged(OutlierCutoff::default());
        for i in 1..=6 {
            assert!(flagged.contains(&i), "outlier {i} not flagged");
        }
    }

    #[test]
    fn bad_h_is_rejected() {
        let x = gaussian_data(20, 2, 9);
        assert!(matches!(
            fit(&x, 5, &TargetChoice::Identity, &FitOptions::default()),
            Err(Error::BadSubsetSize { .. })
        ));
        assert!(matches!(
            fit(&x, 21, &TargetChoice::Identity, &FitOptions::default()),
            Err(Error::BadSubsetSize { .. })
        ));
    }
}
