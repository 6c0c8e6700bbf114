//! Covariance intersection on scalars and on a 2-D estimate.
//!
//! For scalars the optimal weight is always an endpoint, so fusing two
//! global estimates just keeps the tighter one. In two dimensions the
//! weight lands strictly inside (0, 1).

use nalgebra::{DMatrix, DVector};
use wsn_secagg::fusion::ci_objective;
use wsn_secagg::{ci_fuse, fuse_global, optimal_omega, FusionParams, GaussianEstimate};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let params = FusionParams::default();

    let a = GaussianEstimate::scalar(20.0, 4.0)?;
    let b = GaussianEstimate::scalar(30.0, 1.0)?;
    let w = optimal_omega(&a, &b, &params)?;
    let f = fuse_global(&a, &b, &params)?;
    println!("scalar: a={a:?} b={b:?}");
    println!("  omega* = {w}, fused = {f:?}");
    for w in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let c = ci_fuse(&a, &b, w)?;
        println!("  w={w:<4}  mean {:7.3}  var {:.3}", c.mean_scalar(), c.variance());
    }

    let a = GaussianEstimate::new(
        DVector::from_row_slice(&[1.0, 0.0]),
        DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]),
    )?;
    let b = GaussianEstimate::new(
        DVector::from_row_slice(&[0.0, 1.0]),
        DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.0]),
    )?;
    let w = optimal_omega(&a, &b, &params)?;
    let f = fuse_global(&a, &b, &params)?;
    println!("\n2-D: omega* = {w:.6}");
    println!("  fused mean {:?}", f.mean().as_slice());
    println!("  fused cov  {:?}", f.cov().as_slice());
    println!("  det at omega*: {:.6}", ci_objective(&a, &b, w, params.omega_objective)?);
    println!("  det at 0 and 1: {:.6} {:.6}", b.cov().determinant(), a.cov().determinant());
    Ok(())
}
