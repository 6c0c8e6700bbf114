//! Estimation math for the aggregation protocol.
//!
//! Two global estimates are merged with covariance intersection (CI), which
//! stays consistent without knowing how the inputs are correlated. A fresh
//! local reading is folded into the global estimate by a ramp-weighted sum
//! of the two (bounded) Gaussian densities, moment-matched back to a
//! Gaussian.
//!
//! Everything here is a pure function of its inputs.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Largest estimate dimension the fusion routines accept.
pub const MAX_DIM: usize = 4;

const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FusionError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("omega {0} outside [0, 1]")]
    OmegaOutOfRange(f64),
    #[error("invalid estimate: {0}")]
    InvalidEstimate(&'static str),
    #[error("standard deviation must be positive, got {0}")]
    NonPositiveSigma(f64),
    #[error("expected a scalar estimate, got dimension {0}")]
    NotScalar(usize),
    #[error("blended information matrix is singular")]
    Singular,
    #[error("combined density has negligible mass ({0:e}); inputs are pathological")]
    DegenerateQuadrature(f64),
    #[error("invalid fusion parameters: {0}")]
    InvalidParams(&'static str),
}

/// A `(mean, covariance)` pair describing a belief about the aggregate.
///
/// Construction validates symmetry, positive definiteness and finiteness, so
/// every value of this type can be fed straight into the fusion routines.
#[derive(Clone, PartialEq)]
pub struct GaussianEstimate {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

impl GaussianEstimate {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self, FusionError> {
        let d = mean.len();
        if d == 0 || d > MAX_DIM {
            return Err(FusionError::InvalidEstimate("dimension must be in 1..=4"));
        }
        if cov.nrows() != d || cov.ncols() != d {
            return Err(FusionError::DimensionMismatch(d, cov.nrows()));
        }
        if mean.iter().chain(cov.iter()).any(|v| !v.is_finite()) {
            return Err(FusionError::InvalidEstimate("non-finite entry"));
        }
        for i in 0..d {
            for j in (i + 1)..d {
                if (cov[(i, j)] - cov[(j, i)]).abs() > SYMMETRY_TOL {
                    return Err(FusionError::InvalidEstimate("covariance not symmetric"));
                }
            }
        }
        if d == 1 {
            if cov[(0, 0)] <= 0.0 {
                return Err(FusionError::InvalidEstimate("variance must be positive"));
            }
        } else if cov.clone().cholesky().is_none() {
            return Err(FusionError::InvalidEstimate("covariance not positive definite"));
        }
        Ok(Self { mean, cov })
    }

    /// Scalar estimate with the given mean and variance.
    pub fn scalar(mean: f64, variance: f64) -> Result<Self, FusionError> {
        if !mean.is_finite() || !variance.is_finite() {
            return Err(FusionError::InvalidEstimate("non-finite entry"));
        }
        if variance <= 0.0 {
            return Err(FusionError::InvalidEstimate("variance must be positive"));
        }
        Ok(Self {
            mean: DVector::from_element(1, mean),
            cov: DMatrix::from_element(1, 1, variance),
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn is_scalar(&self) -> bool {
        self.dim() == 1
    }

    /// First component of the mean; the whole mean for scalar estimates.
    pub fn mean_scalar(&self) -> f64 {
        self.mean[0]
    }

    /// Top-left covariance entry; the variance for scalar estimates.
    pub fn variance(&self) -> f64 {
        self.cov[(0, 0)]
    }

    pub fn std_dev(&self) -> f64 {
        self.variance().sqrt()
    }

    fn require_scalar(&self) -> Result<(), FusionError> {
        if self.is_scalar() {
            Ok(())
        } else {
            Err(FusionError::NotScalar(self.dim()))
        }
    }
}

impl fmt::Debug for GaussianEstimate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_scalar() {
            write!(f, "N({}, {})", self.mean[0], self.cov[(0, 0)])
        } else {
            f.debug_struct("GaussianEstimate")
                .field("mean", &self.mean.as_slice())
                .field("cov", &rows(&self.cov))
                .finish()
        }
    }
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

#[derive(Serialize, Deserialize)]
struct EstimateRepr {
    mean: Vec<f64>,
    cov: Vec<Vec<f64>>,
}

impl Serialize for GaussianEstimate {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        EstimateRepr {
            mean: self.mean.iter().copied().collect(),
            cov: rows(&self.cov),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for GaussianEstimate {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let repr = EstimateRepr::deserialize(d)?;
        let n = repr.mean.len();
        if repr.cov.len() != n || repr.cov.iter().any(|r| r.len() != n) {
            return Err(serde::de::Error::custom("covariance shape does not match mean"));
        }
        let cov = DMatrix::from_fn(n, n, |i, j| repr.cov[i][j]);
        GaussianEstimate::new(DVector::from_vec(repr.mean), cov).map_err(serde::de::Error::custom)
    }
}

/// Criterion minimized when choosing the CI weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OmegaObjective {
    #[default]
    Determinant,
    Trace,
}

/// Discretization knobs for the numerical parts of fusion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionParams {
    pub omega_grid_points: usize,
    pub quadrature_points: usize,
    /// Half-width of each density's support, in standard deviations.
    pub support_sigmas: f64,
    pub numeric_tolerance: f64,
    pub omega_objective: OmegaObjective,
}

impl Default for FusionParams {
    fn default() -> Self {
        Self {
            omega_grid_points: 101,
            quadrature_points: 2048,
            support_sigmas: 6.0,
            numeric_tolerance: 1e-9,
            omega_objective: OmegaObjective::Determinant,
        }
    }
}

impl FusionParams {
    pub fn validate(&self) -> Result<(), FusionError> {
        if self.omega_grid_points < 3 {
            return Err(FusionError::InvalidParams("omega_grid_points must be >= 3"));
        }
        if self.quadrature_points < 64 {
            return Err(FusionError::InvalidParams("quadrature_points must be >= 64"));
        }
        if !(self.support_sigmas >= 3.0) {
            return Err(FusionError::InvalidParams("support_sigmas must be >= 3"));
        }
        if !(self.numeric_tolerance > 0.0) {
            return Err(FusionError::InvalidParams("numeric_tolerance must be positive"));
        }
        Ok(())
    }
}

fn check_pair(a: &GaussianEstimate, b: &GaussianEstimate) -> Result<(), FusionError> {
    if a.dim() != b.dim() {
        return Err(FusionError::DimensionMismatch(a.dim(), b.dim()));
    }
    Ok(())
}

fn spd_inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>, FusionError> {
    m.clone()
        .cholesky()
        .map(|c| c.inverse())
        .ok_or(FusionError::Singular)
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    let t = m.transpose();
    (m + t) * 0.5
}

/// Covariance intersection of `a` and `b` with weight `omega` on `a`.
///
/// `P_C = (w P_A^-1 + (1-w) P_B^-1)^-1` and
/// `C = P_C (w P_A^-1 A + (1-w) P_B^-1 B)`. The endpoints return the
/// surviving input unchanged.
pub fn ci_fuse(
    a: &GaussianEstimate,
    b: &GaussianEstimate,
    omega: f64,
) -> Result<GaussianEstimate, FusionError> {
    check_pair(a, b)?;
    if !(0.0..=1.0).contains(&omega) {
        return Err(FusionError::OmegaOutOfRange(omega));
    }
    if omega == 1.0 {
        return Ok(a.clone());
    }
    if omega == 0.0 {
        return Ok(b.clone());
    }
    if a.is_scalar() {
        let (ia, ib) = (1.0 / a.variance(), 1.0 / b.variance());
        let info = omega * ia + (1.0 - omega) * ib;
        let p = 1.0 / info;
        let c = p * (omega * ia * a.mean_scalar() + (1.0 - omega) * ib * b.mean_scalar());
        return GaussianEstimate::scalar(c, p);
    }
    let ia = spd_inverse(&a.cov)?;
    let ib = spd_inverse(&b.cov)?;
    let info = &ia * omega + &ib * (1.0 - omega);
    let p = symmetrize(spd_inverse(&info)?);
    let c = &p * (&ia * &a.mean * omega + &ib * &b.mean * (1.0 - omega));
    GaussianEstimate::new(c, p)
}

/// Value of the omega objective for the CI combination of `a` and `b`.
pub fn ci_objective(
    a: &GaussianEstimate,
    b: &GaussianEstimate,
    omega: f64,
    objective: OmegaObjective,
) -> Result<f64, FusionError> {
    let fused = ci_fuse(a, b, omega)?;
    Ok(match objective {
        OmegaObjective::Determinant => fused.cov.determinant(),
        OmegaObjective::Trace => fused.cov.trace(),
    })
}

/// CI weight in `[0, 1]` that minimizes the configured objective.
///
/// Scalars short-circuit to an endpoint: `1` when `a` has the smaller (or
/// equal) variance, `0` otherwise. Matrices are scanned on a uniform grid and
/// the best cell refined by golden-section search; the objective is
/// unimodal in omega so the bracket always holds the minimizer. Ties favour
/// the larger omega.
pub fn optimal_omega(
    a: &GaussianEstimate,
    b: &GaussianEstimate,
    params: &FusionParams,
) -> Result<f64, FusionError> {
    check_pair(a, b)?;
    params.validate()?;
    if a.is_scalar() {
        return Ok(if a.variance() <= b.variance() { 1.0 } else { 0.0 });
    }
    let objective = |w: f64| ci_objective(a, b, w, params.omega_objective);
    let n = params.omega_grid_points;
    let step = 1.0 / (n - 1) as f64;

    let mut best_i = n - 1;
    let mut best_f = objective(1.0)?;
    for i in (0..n - 1).rev() {
        let f = objective(i as f64 * step)?;
        if f < best_f {
            best_f = f;
            best_i = i;
        }
    }

    let lo = best_i.saturating_sub(1) as f64 * step;
    let hi = ((best_i + 1).min(n - 1) as f64 * step).min(1.0);
    let (w, f) = golden_section(lo, hi, 1e-9, &objective)?;
    if f < best_f {
        Ok(w)
    } else {
        Ok(best_i as f64 * step)
    }
}

fn golden_section<F>(mut lo: f64, mut hi: f64, tol: f64, f: &F) -> Result<(f64, f64), FusionError>
where
    F: Fn(f64) -> Result<f64, FusionError>,
{
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = f(x1)?;
    let mut f2 = f(x2)?;
    while hi - lo > tol {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1)?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2)?;
        }
    }
    let w = 0.5 * (lo + hi);
    Ok((w, f(w)?))
}

/// Fuse two global estimates with CI at the optimal weight.
///
/// For scalars this selects the input with the smaller variance, bit for bit.
pub fn fuse_global(
    a: &GaussianEstimate,
    b: &GaussianEstimate,
    params: &FusionParams,
) -> Result<GaussianEstimate, FusionError> {
    let omega = optimal_omega(a, b, params)?;
    ci_fuse(a, b, omega)
}

fn ramp(x: f64, lo: f64, hi: f64) -> f64 {
    if x <= lo {
        0.0
    } else if x > hi {
        1.0
    } else {
        (x - lo) / (hi - lo)
    }
}

/// Weight on the global density when the local reading is the higher one.
///
/// Zero at or below `mu1 - 3 sigma1`, one above `mu1 + 3 sigma1`, linear in
/// between.
pub fn weight_w1(x: f64, mu1: f64, sigma1: f64) -> Result<f64, FusionError> {
    if !(sigma1 > 0.0) {
        return Err(FusionError::NonPositiveSigma(sigma1));
    }
    Ok(ramp(x, mu1 - 3.0 * sigma1, mu1 + 3.0 * sigma1))
}

/// Weight on the global density when the global estimate is the higher one.
///
/// Zero at or below `max(mu1 - 3 sigma1, mu2 - 3 sigma2)`, one above
/// `max(mu1 + 3 sigma1, mu2 + 3 sigma2)`, linear in between.
pub fn weight_w2(x: f64, mu1: f64, sigma1: f64, mu2: f64, sigma2: f64) -> Result<f64, FusionError> {
    let (lo, hi) = w2_bounds(mu1, sigma1, mu2, sigma2)?;
    Ok(ramp(x, lo, hi))
}

fn w2_bounds(mu1: f64, sigma1: f64, mu2: f64, sigma2: f64) -> Result<(f64, f64), FusionError> {
    for s in [sigma1, sigma2] {
        if !(s > 0.0) {
            return Err(FusionError::NonPositiveSigma(s));
        }
    }
    let lo = (mu1 - 3.0 * sigma1).max(mu2 - 3.0 * sigma2);
    let hi = (mu1 + 3.0 * sigma1).max(mu2 + 3.0 * sigma2);
    Ok((lo, hi))
}

/// Which weighting rule `combine_local` applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CombineCase {
    /// Local mean above the global mean.
    LocalHigher,
    /// Local mean below, but the previous local reading tracked the global
    /// estimate, so the drop is believed and local keeps full weight.
    SharpFall,
    /// Global mean above the local mean.
    GlobalHigher,
    /// Means coincide; neither density is favoured.
    EqualMeans,
}

impl CombineCase {
    pub fn classify(
        local: &GaussianEstimate,
        global: &GaussianEstimate,
        prev_local_mean: Option<f64>,
        sharp_fall_threshold: f64,
        tolerance: f64,
    ) -> Self {
        let (ml, mg) = (local.mean_scalar(), global.mean_scalar());
        if (ml - mg).abs() <= tolerance {
            CombineCase::EqualMeans
        } else if ml > mg {
            CombineCase::LocalHigher
        } else if prev_local_mean
            .is_some_and(|p| (p - mg).abs() <= sharp_fall_threshold * global.std_dev())
        {
            CombineCase::SharpFall
        } else {
            CombineCase::GlobalHigher
        }
    }
}

/// Weight applied to the global density, as a function of position.
#[derive(Debug, Clone, Copy)]
enum GlobalWeight {
    Unit,
    Ramp { lo: f64, hi: f64 },
}

impl GlobalWeight {
    fn at(self, x: f64) -> f64 {
        match self {
            GlobalWeight::Unit => 1.0,
            GlobalWeight::Ramp { lo, hi } => ramp(x, lo, hi),
        }
    }
}

/// Fold a local observation into the global estimate (scalar only).
///
/// The combined density is `w(x) g(x) + l(x)` over the union of the two
/// truncated supports, where `w` is the ramp picked by [`CombineCase`]. The
/// result is the Gaussian with the same mean and variance.
pub fn combine_local(
    local: &GaussianEstimate,
    global: &GaussianEstimate,
    prev_local_mean: Option<f64>,
    sharp_fall_threshold: f64,
    params: &FusionParams,
) -> Result<GaussianEstimate, FusionError> {
    local.require_scalar()?;
    global.require_scalar()?;
    params.validate()?;
    if !(sharp_fall_threshold >= 0.0) {
        return Err(FusionError::InvalidParams("sharp_fall_threshold must be >= 0"));
    }
    let case = CombineCase::classify(
        local,
        global,
        prev_local_mean,
        sharp_fall_threshold,
        params.numeric_tolerance,
    );
    let (ml, sl) = (local.mean_scalar(), local.std_dev());
    let (mg, sg) = (global.mean_scalar(), global.std_dev());
    let weight = match case {
        CombineCase::EqualMeans => GlobalWeight::Unit,
        CombineCase::LocalHigher | CombineCase::SharpFall => GlobalWeight::Ramp {
            lo: ml - 3.0 * sl,
            hi: ml + 3.0 * sl,
        },
        CombineCase::GlobalHigher => {
            let (lo, hi) = w2_bounds(ml, sl, mg, sg)?;
            GlobalWeight::Ramp { lo, hi }
        }
    };
    let (mean, var) = mixture_moments(ml, sl, mg, sg, weight, params)?;
    if !(var > 0.0) {
        return Err(FusionError::DegenerateQuadrature(var));
    }
    GaussianEstimate::scalar(mean, var)
}

/// Mean and variance of `w(x) g(x) + l(x)` by piecewise composite Simpson.
///
/// The hull is split at every kink (support ends, ramp ends) so each piece
/// is smooth. Gaussian values along a uniform grid are advanced by a
/// multiplicative recurrence instead of calling `exp` per node.
fn mixture_moments(
    ml: f64,
    sl: f64,
    mg: f64,
    sg: f64,
    weight: GlobalWeight,
    params: &FusionParams,
) -> Result<(f64, f64), FusionError> {
    let k = params.support_sigmas;
    let l_sup = (ml - k * sl, ml + k * sl);
    let g_sup = (mg - k * sg, mg + k * sg);
    let hull = (l_sup.0.min(g_sup.0), l_sup.1.max(g_sup.1));
    let width = hull.1 - hull.0;

    let mut cuts = vec![hull.0, hull.1, l_sup.0, l_sup.1, g_sup.0, g_sup.1];
    if let GlobalWeight::Ramp { lo, hi } = weight {
        cuts.extend([lo, hi]);
    }
    cuts.retain(|c| *c >= hull.0 && *c <= hull.1);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * width.max(1.0));

    let center = 0.5 * (ml + mg);
    let mut m = [0.0f64; 3];
    for seg in cuts.windows(2) {
        let (a, b) = (seg[0], seg[1]);
        let len = b - a;
        if len <= 0.0 {
            continue;
        }
        let mid = 0.5 * (a + b);
        let has_l = mid >= l_sup.0 && mid <= l_sup.1;
        let has_g = mid >= g_sup.0 && mid <= g_sup.1;
        if !has_l && !has_g {
            continue;
        }
        let mut n = ((params.quadrature_points as f64) * len / width).ceil() as usize;
        n = n.max(8);
        n += n % 2;
        let h = len / n as f64;

        let mut lg = GaussGrid::new(a, h, ml, sl);
        let mut gg = GaussGrid::new(a, h, mg, sg);
        // Inside one piece the ramp is affine, so evaluate it directly.
        for i in 0..=n {
            let x = a + i as f64 * h;
            let mut f = 0.0;
            let lv = lg.next();
            let gv = gg.next();
            if has_l {
                f += lv;
            }
            if has_g {
                f += weight.at(x.clamp(a, b)) * gv;
            }
            let coeff = if i == 0 || i == n {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            let y = x - center;
            let wf = coeff * f * h / 3.0;
            m[0] += wf;
            m[1] += wf * y;
            m[2] += wf * y * y;
        }
    }
    if !(m[0] >= params.numeric_tolerance) {
        return Err(FusionError::DegenerateQuadrature(m[0]));
    }
    let mean_y = m[1] / m[0];
    let var = m[2] / m[0] - mean_y * mean_y;
    Ok((center + mean_y, var))
}

/// Normal density sampled at `x0, x0 + h, x0 + 2h, ...`.
struct GaussGrid {
    value: f64,
    ratio: f64,
    ratio_step: f64,
}

impl GaussGrid {
    fn new(x0: f64, h: f64, mu: f64, sigma: f64) -> Self {
        let z = (x0 - mu) / sigma;
        let d = h / sigma;
        let norm = 1.0 / (sigma * (2.0 * std::f64::consts::PI).sqrt());
        Self {
            value: norm * (-0.5 * z * z).exp(),
            ratio: (-z * d - 0.5 * d * d).exp(),
            ratio_step: (-d * d).exp(),
        }
    }

    fn next(&mut self) -> f64 {
        let v = self.value;
        self.value *= self.ratio;
        self.ratio *= self.ratio_step;
        v
    }
}

/// Distance between two scalar means in units of `reference`'s std dev.
pub fn deviation_sigmas(
    other: &GaussianEstimate,
    reference: &GaussianEstimate,
) -> Result<f64, FusionError> {
    other.require_scalar()?;
    reference.require_scalar()?;
    let sd = reference.std_dev();
    if !(sd > 0.0) {
        return Err(FusionError::NonPositiveSigma(sd));
    }
    Ok((other.mean_scalar() - reference.mean_scalar()).abs() / sd)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn s(m: f64, v: f64) -> GaussianEstimate {
        GaussianEstimate::scalar(m, v).unwrap()
    }

    fn diag2(m: [f64; 2], d: [f64; 2]) -> GaussianEstimate {
        GaussianEstimate::new(
            DVector::from_row_slice(&m),
            DMatrix::from_row_slice(2, 2, &[d[0], 0.0, 0.0, d[1]]),
        )
        .unwrap()
    }

    #[test]
    fn rejects_bad_estimates() {
        assert!(GaussianEstimate::scalar(1.0, 0.0).is_err());
        assert!(GaussianEstimate::scalar(f64::NAN, 1.0).is_err());
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]);
        assert!(GaussianEstimate::new(DVector::zeros(2), asym).is_err());
        let indef = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(GaussianEstimate::new(DVector::zeros(2), indef).is_err());
        assert!(GaussianEstimate::new(DVector::zeros(5), DMatrix::identity(5, 5)).is_err());
    }

    #[test]
    fn ci_identical_inputs_fixed_point() {
        let e = s(25.0, 1.0);
        let f = ci_fuse(&e, &e, 0.3).unwrap();
        assert_abs_diff_eq!(f.mean_scalar(), 25.0, epsilon = 1e-12);
        assert_abs_diff_eq!(f.variance(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn ci_omega_zero_selects_b() {
        let f = ci_fuse(&s(20.0, 4.0), &s(30.0, 1.0), 0.0).unwrap();
        assert_eq!(f, s(30.0, 1.0));
    }

    #[test]
    fn ci_diagonal_pair_matches_hand_evaluation() {
        let a = diag2([1.0, 0.0], [2.0, 1.0]);
        let b = diag2([0.0, 1.0], [1.0, 2.0]);
        let f = ci_fuse(&a, &b, 0.5).unwrap();
        assert_abs_diff_eq!(f.cov()[(0, 0)], 4.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(f.cov()[(1, 1)], 4.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(f.cov()[(0, 1)], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(f.mean()[0], 1.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(f.mean()[1], 1.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn ci_errors() {
        let a = s(1.0, 1.0);
        let b = diag2([0.0, 0.0], [1.0, 1.0]);
        assert_eq!(ci_fuse(&a, &b, 0.5), Err(FusionError::DimensionMismatch(1, 2)));
        assert_eq!(ci_fuse(&a, &a, 1.5), Err(FusionError::OmegaOutOfRange(1.5)));
        assert!(ci_fuse(&a, &a, f64::NAN).is_err());
    }

    #[test]
    fn scalar_omega_is_endpoint() {
        let p = FusionParams::default();
        assert_eq!(optimal_omega(&s(20.0, 1.0), &s(30.0, 4.0), &p).unwrap(), 1.0);
        assert_eq!(optimal_omega(&s(20.0, 4.0), &s(30.0, 1.0), &p).unwrap(), 0.0);
        // flat objective: tie goes to 1
        assert_eq!(optimal_omega(&s(5.0, 2.0), &s(7.0, 2.0), &p).unwrap(), 1.0);
    }

    #[test]
    fn fuse_global_scalar_takes_tighter_input() {
        let p = FusionParams::default();
        assert_eq!(fuse_global(&s(20.0, 4.0), &s(30.0, 1.0), &p).unwrap(), s(30.0, 1.0));
        assert_eq!(fuse_global(&s(25.0, 1.0), &s(25.0, 1.0), &p).unwrap(), s(25.0, 1.0));
    }

    #[test]
    fn trace_objective_is_selectable() {
        let p = FusionParams {
            omega_objective: OmegaObjective::Trace,
            ..Default::default()
        };
        let a = diag2([1.0, 0.0], [2.0, 1.0]);
        let b = diag2([0.0, 1.0], [1.0, 2.0]);
        let w = optimal_omega(&a, &b, &p).unwrap();
        assert!((w - 0.5).abs() < 1e-6, "{w}");
    }

    #[test]
    fn w1_endpoints_and_midpoint() {
        assert_eq!(weight_w1(17.0, 20.0, 1.0).unwrap(), 0.0);
        assert_abs_diff_eq!(weight_w1(20.0, 20.0, 1.0).unwrap(), 0.5, epsilon = 1e-15);
        assert_eq!(weight_w1(24.0, 20.0, 1.0).unwrap(), 1.0);
        assert!(weight_w1(20.0, 20.0, 0.0).is_err());
    }

    #[test]
    fn w2_endpoints_and_midpoint() {
        let w = |x| weight_w2(x, 20.0, 1.0, 25.0, 1.0).unwrap();
        assert_eq!(w(21.0), 0.0);
        assert_eq!(w(22.0), 0.0);
        assert_eq!(w(29.0), 1.0);
        assert_abs_diff_eq!(w(25.0), 0.5, epsilon = 1e-15);
        assert!(weight_w2(0.0, 1.0, 1.0, 1.0, -1.0).is_err());
    }

    #[test]
    fn combine_disjoint_local_higher_returns_local() {
        let p = FusionParams::default();
        let r = combine_local(&s(30.0, 1.0), &s(20.0, 1.0), None, 1.0, &p).unwrap();
        assert!((r.mean_scalar() - 30.0).abs() < 0.1, "{r:?}");
    }

    #[test]
    fn combine_equal_inputs_preserves_mean() {
        let p = FusionParams::default();
        let r = combine_local(&s(25.0, 1.0), &s(25.0, 1.0), Some(25.0), 1.0, &p).unwrap();
        assert_abs_diff_eq!(r.mean_scalar(), 25.0, epsilon = 1e-6);
        assert!(r.variance() > 0.0);
    }

    #[test]
    fn combine_sharp_fall_pulls_toward_local() {
        let p = FusionParams::default();
        let local = s(20.0, 1.0);
        let global = s(30.0, 1.0);
        assert_eq!(
            CombineCase::classify(&local, &global, Some(30.1), 1.0, 1e-9),
            CombineCase::SharpFall
        );
        let r = combine_local(&local, &global, Some(30.1), 1.0, &p).unwrap();
        assert!(r.mean_scalar() < 30.0);
        // with unit ramp over g's whole support the mixture is an equal blend
        assert_abs_diff_eq!(r.mean_scalar(), 25.0, epsilon = 1e-6);
    }

    #[test]
    fn combine_rejects_vectors() {
        let p = FusionParams::default();
        let v = diag2([0.0, 0.0], [1.0, 1.0]);
        assert_eq!(
            combine_local(&v, &s(1.0, 1.0), None, 1.0, &p),
            Err(FusionError::NotScalar(2))
        );
    }

    #[test]
    fn deviation_examples() {
        assert_eq!(deviation_sigmas(&s(35.0, 1.0), &s(25.0, 1.0)).unwrap(), 10.0);
        assert_eq!(deviation_sigmas(&s(25.0, 4.0), &s(25.0, 1.0)).unwrap(), 0.0);
        assert_eq!(deviation_sigmas(&s(28.0, 1.0), &s(25.0, 1.0)).unwrap(), 3.0);
    }

    #[test]
    fn params_validation() {
        let mut p = FusionParams::default();
        p.omega_grid_points = 2;
        assert!(p.validate().is_err());
        let p = FusionParams {
            quadrature_points: 10,
            ..Default::default()
        };
        assert!(p.validate().is_err());
    }

    #[test]
    fn estimate_serde_round_trip() {
        let a = diag2([1.0, 2.0], [3.0, 4.0]);
        let js = serde_json::to_string(&a).unwrap();
        assert_eq!(js, r#"{"mean":[1.0,2.0],"cov":[[3.0,0.0],[0.0,4.0]]}"#);
        let back: GaussianEstimate = serde_json::from_str(&js).unwrap();
        assert_eq!(back, a);
        assert!(serde_json::from_str::<GaussianEstimate>(r#"{"mean":[1.0],"cov":[[-1.0]]}"#).is_err());
    }
}
