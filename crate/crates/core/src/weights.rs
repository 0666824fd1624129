//! Covariate weights that guard the fit against leverage points.
//!
//! Two hard-rejection families are provided. The first works on the
//! projected scores: Stahel–Donoho projection outlyingness yields a robust
//! location/scatter pair, and observations whose squared Mahalanobis
//! distance exceeds a chi-square quantile get weight 0. The second works on
//! the raw curves: observations flagged by the functional boxplot (band
//! depth ordering, modified band depth tie-break) get weight 0.

use crate::error::{Error, Result};
use crate::funcbasis::{CurveSet, LabeledSample};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use std::collections::HashSet;

/// Consistency factor making the MAD unbiased for the normal scale.
const MAD_NORMAL: f64 = 1.4826;

/// Weighting scheme selector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum WeightSpec {
    /// All observations keep weight 1.
    Unit,
    /// Hard rejection by robust Mahalanobis distance of the projected
    /// scores, with Stahel–Donoho location and scatter.
    MahalanobisHR {
        quantile: f64,
        n_directions: usize,
        rng_seed: u64,
    },
    /// Hard rejection of curves flagged by the functional boxplot.
    FunctionalBoxplotHR { factor: f64 },
}

impl WeightSpec {
    /// Mahalanobis hard rejection with the standard 0.975 cutoff.
    pub fn mahalanobis_hr(rng_seed: u64) -> Self {
        WeightSpec::MahalanobisHR {
            quantile: 0.975,
            n_directions: 250,
            rng_seed,
        }
    }

    /// Functional-boxplot hard rejection with the standard 1.5 inflation.
    pub fn fbplot_hr() -> Self {
        WeightSpec::FunctionalBoxplotHR { factor: 1.5 }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            WeightSpec::Unit => Ok(()),
            WeightSpec::MahalanobisHR {
                quantile,
                n_directions,
                ..
            } => {
                if !(0.0 < quantile && quantile < 1.0) {
                    return Err(Error::InvalidInput(format!(
                        "Mahalanobis quantile must be in (0, 1), got {quantile}"
                    )));
                }
                if n_directions < 100 {
                    return Err(Error::InvalidInput(format!(
                        "need at least 100 projection directions, got {n_directions}"
                    )));
                }
                Ok(())
            }
            WeightSpec::FunctionalBoxplotHR { factor } => {
                if factor > 0.0 {
                    Ok(())
                } else {
                    Err(Error::InvalidInput(format!(
                        "boxplot inflation factor must be positive, got {factor}"
                    )))
                }
            }
        }
    }
}

/// Robust center and spread of a score cloud.
#[derive(Debug, Clone)]
pub struct RobustLocationScatter {
    pub location: DVector<f64>,
    pub scatter: DMatrix<f64>,
}

/// Chi-square quantile, used for rejection cutoffs.
pub fn chi_square_quantile(p: f64, df: usize) -> Result<f64> {
    if !(0.0 < p && p < 1.0) || df == 0 {
        return Err(Error::Domain(format!(
            "chi-square quantile needs p in (0,1) and df >= 1, got p={p}, df={df}"
        )));
    }
    let dist = ChiSquared::new(df as f64)
        .map_err(|e| Error::Domain(format!("chi-square({df}): {e}")))?;
    Ok(dist.inverse_cdf(p))
}

fn median_of(mut v: Vec<f64>) -> f64 {
    let n = v.len();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Stahel–Donoho location and scatter from projection outlyingness.
///
/// Directions are the coordinate axes plus up to `n_directions` normalized
/// pair differences sampled without replacement, deterministic under
/// `rng_seed`. Outlyingness along a direction is the absolute deviation from
/// the projection median in MAD units; directions with zero MAD are skipped.
/// Location and scatter are the weighted mean and covariance with Huber-type
/// weights `min(1, chi2_{0.99,k} / o_i^2)`.
pub fn stahel_donoho(
    scores: &DMatrix<f64>,
    n_directions: usize,
    rng_seed: u64,
) -> Result<RobustLocationScatter> {
    let n = scores.nrows();
    let k = scores.ncols();
    if k == 0 || n <= k {
        return Err(Error::InvalidDimension(format!(
            "Stahel-Donoho needs n > k >= 1, got n = {n}, k = {k}"
        )));
    }

    let mut directions: Vec<DVector<f64>> = Vec::new();
    for j in 0..k {
        let mut e = DVector::zeros(k);
        e[j] = 1.0;
        directions.push(e);
    }
    let total_pairs = n * (n - 1) / 2;
    let wanted = n_directions.min(total_pairs);
    let mut rng = ChaCha12Rng::seed_from_u64(rng_seed);
    let mut chosen: HashSet<(usize, usize)> = HashSet::with_capacity(wanted);
    if wanted == total_pairs {
        for i in 0..n {
            for j in i + 1..n {
                chosen.insert((i, j));
            }
        }
    } else {
        while chosen.len() < wanted {
            let i = rng.random_range(0..n);
            let j = rng.random_range(0..n);
            if i != j {
                chosen.insert((i.min(j), i.max(j)));
            }
        }
    }
    let mut pairs: Vec<(usize, usize)> = chosen.into_iter().collect();
    pairs.sort_unstable();
    for (i, j) in pairs {
        let d = scores.row(i) - scores.row(j);
        let norm = d.norm();
        if norm > 0.0 {
            directions.push(d.transpose() / norm);
        }
    }

    let mut outlying = vec![0.0f64; n];
    let mut used = 0usize;
    for dir in &directions {
        let proj = scores * dir;
        let projv: Vec<f64> = proj.iter().copied().collect();
        let med = median_of(projv.clone());
        let mad = MAD_NORMAL * median_of(projv.iter().map(|p| (p - med).abs()).collect());
        if mad <= 0.0 {
            continue; // degenerate direction
        }
        used += 1;
        for i in 0..n {
            let o = (proj[i] - med).abs() / mad;
            if o > outlying[i] {
                outlying[i] = o;
            }
        }
    }
    if used == 0 {
        return Err(Error::DegenerateDirections(
            "every projection direction had zero MAD".into(),
        ));
    }

    let cutoff = chi_square_quantile(0.99, k)?;
    let wts: Vec<f64> = outlying
        .iter()
        .map(|&o| if o * o <= cutoff { 1.0 } else { cutoff / (o * o) })
        .collect();
    let wsum: f64 = wts.iter().sum();
    let mut location = DVector::zeros(k);
    for i in 0..n {
        location += wts[i] * scores.row(i).transpose();
    }
    location /= wsum;
    let mut scatter = DMatrix::zeros(k, k);
    for i in 0..n {
        let z = scores.row(i).transpose() - &location;
        scatter += wts[i] * &z * z.transpose();
    }
    scatter /= wsum;

    Ok(RobustLocationScatter { location, scatter })
}

/// Hard-rejection weights from robust Mahalanobis distances.
///
/// `w_i = 1` iff the squared distance to the Stahel–Donoho center, in the
/// Stahel–Donoho metric, is at most the `quantile` chi-square quantile with
/// `k` degrees of freedom.
pub fn mahalanobis_hr(
    scores: &DMatrix<f64>,
    quantile: f64,
    n_directions: usize,
    rng_seed: u64,
) -> Result<Vec<f64>> {
    let est = stahel_donoho(scores, n_directions, rng_seed)?;
    let k = scores.ncols();
    let chol = nalgebra::Cholesky::new(est.scatter.clone()).ok_or_else(|| {
        Error::DegenerateDirections("Stahel-Donoho scatter is not positive definite".into())
    })?;
    let cutoff = chi_square_quantile(quantile, k)?;
    let mut w = Vec::with_capacity(scores.nrows());
    for i in 0..scores.nrows() {
        let z = scores.row(i).transpose() - &est.location;
        let d2 = z.dot(&chol.solve(&z));
        w.push(if d2 <= cutoff { 1.0 } else { 0.0 });
    }
    Ok(w)
}

fn depth_counts(curves: &CurveSet) -> Result<(Vec<u64>, Vec<u64>)> {
    let n = curves.n_curves();
    let g = curves.grid.len();
    if n < 3 {
        return Err(Error::InsufficientSample { needed: 3, got: n });
    }
    let v = &curves.values;

    // modified band depth: per grid point, pair-containment counts follow
    // from the number of strictly smaller and strictly larger values
    let mut mbd = vec![0u64; n];
    let pairs_not_i = ((n - 1) * (n - 2) / 2) as u64;
    let mut order: Vec<usize> = (0..n).collect();
    for gi in 0..g {
        order.sort_unstable_by(|&a, &b| v[(a, gi)].partial_cmp(&v[(b, gi)]).unwrap());
        let mut pos = 0;
        while pos < n {
            let mut end = pos + 1;
            while end < n && v[(order[end], gi)] == v[(order[pos], gi)] {
                end += 1;
            }
            let below = pos as u64;
            let above = (n - end) as u64;
            let contained = pairs_not_i - below * below.saturating_sub(1) / 2
                - above * above.saturating_sub(1) / 2
                + (n as u64 - 1);
            for &i in &order[pos..end] {
                mbd[i] += contained;
            }
            pos = end;
        }
    }

    // band depth: pairs whose band contains the curve everywhere
    let mut bd = vec![0u64; n];
    for i1 in 0..n {
        for i2 in i1 + 1..n {
            bd[i1] += 1; // a pair always contains its own members
            bd[i2] += 1;
            for i in 0..n {
                if i == i1 || i == i2 {
                    continue;
                }
                let mut inside = true;
                for gi in 0..g {
                    let a = v[(i1, gi)];
                    let b = v[(i2, gi)];
                    let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
                    let x = v[(i, gi)];
                    if x < lo || x > hi {
                        inside = false;
                        break;
                    }
                }
                if inside {
                    bd[i] += 1;
                }
            }
        }
    }

    Ok((bd, mbd))
}

/// Modified band depth of López-Pintado and Romo: for each curve, the
/// average over curve pairs of the fraction of grid points where the curve
/// lies inside the band of the pair (boundaries inclusive, pairs containing
/// the curve itself included).
pub fn modified_band_depth(curves: &CurveSet) -> Result<Vec<f64>> {
    let (_, mbd) = depth_counts(curves)?;
    let n = curves.n_curves();
    let denom = (n * (n - 1) / 2 * curves.grid.len()) as f64;
    Ok(mbd.iter().map(|&c| c as f64 / denom).collect())
}

/// Band depth: the fraction of curve pairs whose band contains the curve at
/// every grid point.
pub fn band_depth(curves: &CurveSet) -> Result<Vec<f64>> {
    let (bd, _) = depth_counts(curves)?;
    let n = curves.n_curves();
    let denom = (n * (n - 1) / 2) as f64;
    Ok(bd.iter().map(|&c| c as f64 / denom).collect())
}

/// Functional-boxplot outlier flags (1 = outlier).
///
/// Curves are ranked by band depth with modified band depth breaking ties;
/// the central region is the pointwise envelope of the deepest half, and a
/// curve is flagged when it exits the envelope inflated by `factor` times
/// its pointwise width at any grid point. A zero-width envelope everywhere
/// flags nothing.
pub fn fbplot_outliers(curves: &CurveSet, factor: f64) -> Result<Vec<u8>> {
    let n = curves.n_curves();
    if n < 4 {
        return Err(Error::InsufficientSample { needed: 4, got: n });
    }
    let g = curves.grid.len();
    let (bd, mbd) = depth_counts(curves)?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| bd[b].cmp(&bd[a]).then(mbd[b].cmp(&mbd[a])).then(a.cmp(&b)));
    let central = &order[..n.div_ceil(2)];

    let v = &curves.values;
    let mut lo = vec![f64::INFINITY; g];
    let mut hi = vec![f64::NEG_INFINITY; g];
    for &i in central {
        for gi in 0..g {
            lo[gi] = lo[gi].min(v[(i, gi)]);
            hi[gi] = hi[gi].max(v[(i, gi)]);
        }
    }
    if (0..g).all(|gi| hi[gi] == lo[gi]) {
        return Ok(vec![0; n]);
    }

    let mut flags = vec![0u8; n];
    for i in 0..n {
        for gi in 0..g {
            let width = hi[gi] - lo[gi];
            let (fence_lo, fence_hi) = if width > 0.0 {
                (lo[gi] - factor * width, hi[gi] + factor * width)
            } else {
                (lo[gi], hi[gi])
            };
            let x = v[(i, gi)];
            if x < fence_lo || x > fence_hi {
                flags[i] = 1;
                break;
            }
        }
    }
    Ok(flags)
}

/// Covariate weights for a sample, per the chosen scheme.
///
/// Mahalanobis rejection acts on the projected scores; functional-boxplot
/// rejection acts on the raw curves, before any projection.
pub fn compute_weights(
    sample: &LabeledSample,
    scores: &DMatrix<f64>,
    spec: &WeightSpec,
) -> Result<Vec<f64>> {
    spec.validate()?;
    let n = sample.len();
    if scores.nrows() != n {
        return Err(Error::InvalidDimension(format!(
            "{} score rows for {} observations",
            scores.nrows(),
            n
        )));
    }
    match *spec {
        WeightSpec::Unit => Ok(vec![1.0; n]),
        WeightSpec::MahalanobisHR {
            quantile,
            n_directions,
            rng_seed,
        } => mahalanobis_hr(scores, quantile, n_directions, rng_seed),
        WeightSpec::FunctionalBoxplotHR { factor } => {
            let flags = fbplot_outliers(&sample.curves, factor)?;
            Ok(flags.iter().map(|&f| 1.0 - f64::from(f)).collect())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::funcbasis::Grid;
    use approx::assert_abs_diff_eq;
    use rand_distr::{Distribution, StandardNormal};

    fn normal_matrix(n: usize, k: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        DMatrix::from_fn(n, k, |_, _| StandardNormal.sample(&mut rng))
    }

    /// Independent chi-square quantile: bisection on the regularized lower
    /// incomplete gamma computed by its power series.
    fn chi2_quantile_oracle(p: f64, df: usize) -> f64 {
        let a = df as f64 / 2.0;
        let ln_gamma_a = statrs::function::gamma::ln_gamma(a);
        let cdf = |x: f64| -> f64 {
            let t = x / 2.0;
            if t <= 0.0 {
                return 0.0;
            }
            let mut denom = a;
            let mut term = 1.0 / a;
            let mut sum = term;
            for _ in 1..500 {
                denom += 1.0;
                term *= t / denom;
                sum += term;
                if term < sum * 1e-16 {
                    break;
                }
            }
            (a * t.ln() - t - ln_gamma_a).exp() * sum
        };
        let (mut lo, mut hi) = (0.0, 200.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if cdf(mid) < p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn chi_square_quantile_values() {
        let q = chi_square_quantile(0.975, 7).unwrap();
        assert_abs_diff_eq!(q, 16.012764274629326, epsilon = 1e-8);
        assert_abs_diff_eq!(q, chi2_quantile_oracle(0.975, 7), epsilon = 1e-6);
        for (p, df) in [(0.99, 7), (0.975, 4), (0.5, 1), (0.99, 14)] {
            assert_abs_diff_eq!(
                chi_square_quantile(p, df).unwrap(),
                chi2_quantile_oracle(p, df),
                epsilon = 1e-6
            );
        }
        assert!(chi_square_quantile(1.0, 3).is_err());
    }

    #[test]
    fn gross_outlier_dominates_outlyingness() {
        let mut scores = normal_matrix(201, 2, 42);
        scores[(200, 0)] = 50.0;
        scores[(200, 1)] = 50.0;
        let est = stahel_donoho(&scores, 250, 7).unwrap();
        assert!(est.location.norm() < 0.5, "location {:?}", est.location);
        assert!(nalgebra::Cholesky::new(est.scatter.clone()).is_some());
        // the planted point must be the one rejected hardest
        let w = mahalanobis_hr(&scores, 0.975, 250, 7).unwrap();
        assert_eq!(w[200], 0.0);
    }

    #[test]
    fn univariate_outlyingness_is_mad_deviation() {
        // with k = 1 every direction is a signed unit scalar, so rejection
        // reduces to the |x - med| / MAD rule around the reweighted center
        let xs = vec![0.1, -0.4, 0.9, 2.0, -1.3, 0.3, 0.0, 50.0];
        let scores = DMatrix::from_column_slice(8, 1, &xs);
        let w = mahalanobis_hr(&scores, 0.975, 100, 3).unwrap();
        for (i, &x) in xs.iter().enumerate() {
            assert_eq!(w[i], if x == 50.0 { 0.0 } else { 1.0 }, "x = {x}");
        }
    }

    #[test]
    fn rejected_set_affine_equivariant_on_exact_pairs() {
        // equivariance holds up to direction sampling, so the check uses an
        // exhaustive pair set (n(n-1)/2 = 276 <= 300) and a cutoff that
        // leaves no observation near the rejection boundary
        let n = 24;
        let mut scores = normal_matrix(n, 2, 11);
        scores[(n - 1, 0)] = 30.0;
        scores[(n - 1, 1)] = 30.0;
        scores[(n - 2, 0)] = -27.5;
        scores[(n - 2, 1)] = 26.0;
        let w1 = mahalanobis_hr(&scores, 0.995, 300, 5).unwrap();
        let a = nalgebra::Matrix2::new(3.0, 1.0, 1.0, 2.0);
        let m = nalgebra::Vector2::new(5.0, -3.0);
        let transformed = DMatrix::from_fn(n, 2, |i, j| {
            a[(j, 0)] * scores[(i, 0)] + a[(j, 1)] * scores[(i, 1)] + m[j]
        });
        let w2 = mahalanobis_hr(&transformed, 0.995, 300, 5).unwrap();
        assert_eq!(w1, w2);
        assert_eq!(w1[n - 1], 0.0);
        assert_eq!(w1[n - 2], 0.0);
    }

    #[test]
    fn clean_rejection_rate_near_nominal() {
        let scores = normal_matrix(1000, 7, 99);
        let w = mahalanobis_hr(&scores, 0.975, 250, 17).unwrap();
        let rejected = w.iter().filter(|&&x| x == 0.0).count() as f64 / 1000.0;
        assert!(
            (0.01..=0.06).contains(&rejected),
            "rejection fraction {rejected}"
        );
        assert!(w.iter().filter(|&&x| x == 1.0).count() >= 940);
    }

    fn curves_from_rows(rows: Vec<Vec<f64>>) -> CurveSet {
        let g = rows[0].len();
        let grid = Grid::equispaced(g).unwrap();
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        CurveSet::new(grid, DMatrix::from_row_slice(rows.len(), g, &flat)).unwrap()
    }

    #[test]
    fn depths_of_three_constant_curves() {
        let curves = curves_from_rows(vec![vec![1.0; 5], vec![2.0; 5], vec![3.0; 5]]);
        let mbd = modified_band_depth(&curves).unwrap();
        let bd = band_depth(&curves).unwrap();
        for d in [&mbd, &bd] {
            assert_abs_diff_eq!(d[0], 2.0 / 3.0, epsilon = 1e-15);
            assert_abs_diff_eq!(d[1], 1.0, epsilon = 1e-15);
            assert_abs_diff_eq!(d[2], 2.0 / 3.0, epsilon = 1e-15);
        }
        let two = curves_from_rows(vec![vec![1.0; 5], vec![2.0; 5]]);
        assert!(modified_band_depth(&two).is_err());
    }

    #[test]
    fn pointwise_median_curve_has_maximal_depth() {
        // odd symmetric family around the middle curve
        let curves = curves_from_rows(vec![
            vec![-2.0, -2.5, -1.5],
            vec![-1.0, -1.2, -0.7],
            vec![0.0, 0.1, -0.1],
            vec![1.0, 1.3, 0.6],
            vec![2.0, 2.4, 1.4],
        ]);
        let mbd = modified_band_depth(&curves).unwrap();
        let best = mbd
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        assert_eq!(best, 2);
    }

    /// Brute-force depth oracle: enumerate every pair and grid point.
    fn brute_depths(curves: &CurveSet) -> (Vec<f64>, Vec<f64>) {
        let n = curves.n_curves();
        let g = curves.grid.len();
        let v = &curves.values;
        let mut bd_counts = vec![0u64; n];
        let mut mbd_counts = vec![0u64; n];
        for i in 0..n {
            for i1 in 0..n {
                for i2 in i1 + 1..n {
                    let mut inside_pts = 0u64;
                    for gi in 0..g {
                        let lo = v[(i1, gi)].min(v[(i2, gi)]);
                        let hi = v[(i1, gi)].max(v[(i2, gi)]);
                        if v[(i, gi)] >= lo && v[(i, gi)] <= hi {
                            inside_pts += 1;
                        }
                    }
                    mbd_counts[i] += inside_pts;
                    if inside_pts == g as u64 {
                        bd_counts[i] += 1;
                    }
                }
            }
        }
        let pair_denom = (n * (n - 1) / 2) as f64;
        (
            bd_counts.iter().map(|&c| c as f64 / pair_denom).collect(),
            mbd_counts
                .iter()
                .map(|&c| c as f64 / (pair_denom * g as f64))
                .collect(),
        )
    }

    #[test]
    fn depths_match_brute_force() {
        for seed in 0..12u64 {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let n = 3 + (seed as usize % 6); // 3..8
            let g = 2 + (seed as usize % 19); // 2..20
            let rows: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..g).map(|_| StandardNormal.sample(&mut rng)).collect())
                .collect();
            let curves = curves_from_rows(rows);
            let (bd_oracle, mbd_oracle) = brute_depths(&curves);
            let bd = band_depth(&curves).unwrap();
            let mbd = modified_band_depth(&curves).unwrap();
            assert_eq!(bd, bd_oracle, "seed {seed}");
            assert_eq!(mbd, mbd_oracle, "seed {seed}");
            for i in 0..n {
                assert!(bd[i] <= mbd[i] + 1e-15);
                assert!((0.0..=1.0).contains(&bd[i]) && (0.0..=1.0).contains(&mbd[i]));
            }
        }
    }

    #[test]
    fn depth_ordering_invariant_under_common_shift_and_scale() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let n = 9;
        let g = 15;
        let base: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..g).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect();
        let common: Vec<f64> = (0..g).map(|gi| (gi as f64 * 0.37).sin() * 3.0).collect();
        let shifted: Vec<Vec<f64>> = base
            .iter()
            .map(|row| row.iter().zip(&common).map(|(a, c)| 2.5 * a + c).collect())
            .collect();
        let rank = |depths: &[f64]| -> Vec<usize> {
            let mut idx: Vec<usize> = (0..depths.len()).collect();
            idx.sort_by(|&a, &b| depths[b].partial_cmp(&depths[a]).unwrap().then(a.cmp(&b)));
            idx
        };
        let d1 = modified_band_depth(&curves_from_rows(base.clone())).unwrap();
        let d2 = modified_band_depth(&curves_from_rows(shifted)).unwrap();
        assert_eq!(rank(&d1), rank(&d2));
    }

    #[test]
    fn fbplot_flags_shifted_curve() {
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let g = 30;
        let mut rows: Vec<Vec<f64>> = (0..40)
            .map(|_| (0..g).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect();
        rows[17] = rows[17].iter().map(|v| v + 25.0).collect();
        let flags = fbplot_outliers(&curves_from_rows(rows.clone()), 1.5).unwrap();
        assert_eq!(flags[17], 1);
        // unbounded fences flag nothing
        let none = fbplot_outliers(&curves_from_rows(rows), f64::INFINITY).unwrap();
        assert!(none.iter().all(|&f| f == 0));
    }

    #[test]
    fn fbplot_identical_curves_flag_nothing() {
        let rows = vec![vec![1.5; 10]; 6];
        let flags = fbplot_outliers(&curves_from_rows(rows), 1.5).unwrap();
        assert!(flags.iter().all(|&f| f == 0));
        let three = vec![vec![0.0; 4]; 3];
        assert!(fbplot_outliers(&curves_from_rows(three), 1.5).is_err());
    }

    #[test]
    fn compute_weights_dispatch() {
        let mut rng = ChaCha12Rng::seed_from_u64(30);
        let g = 20;
        let n = 50;
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..g).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect();
        let curves = curves_from_rows(rows);
        let responses = vec![0u8; n];
        let sample = LabeledSample::new(curves, responses).unwrap();
        let scores = normal_matrix(n, 3, 8);

        let unit = compute_weights(&sample, &scores, &WeightSpec::Unit).unwrap();
        assert!(unit.iter().all(|&w| w == 1.0));

        let hr = compute_weights(&sample, &scores, &WeightSpec::mahalanobis_hr(1)).unwrap();
        assert!(hr.iter().all(|&w| w == 0.0 || w == 1.0));
        assert!(hr.iter().sum::<f64>() >= 0.94 * n as f64);

        let fb = compute_weights(&sample, &scores, &WeightSpec::fbplot_hr()).unwrap();
        assert!(fb.iter().all(|&w| w == 0.0 || w == 1.0));

        assert!(WeightSpec::MahalanobisHR {
            quantile: 1.5,
            n_directions: 250,
            rng_seed: 0
        }
        .validate()
        .is_err());
        assert!(WeightSpec::MahalanobisHR {
            quantile: 0.9,
            n_directions: 10,
            rng_seed: 0
        }
        .validate()
        .is_err());
    }
}
