//! Folding a fresh local reading into the running maximum estimate.
//!
//! Shows the three weighting cases: a reading above the estimate, a lower
//! reading that is discounted, and a sharp fall where the previous reading
//! tracked the estimate so the drop is believed.

use wsn_secagg::fusion::CombineCase;
use wsn_secagg::{combine_local, FusionParams, GaussianEstimate};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let params = FusionParams::default();
    let threshold = 1.0;
    let cases = [
        ("reading above", (30.0, 1.0), (25.0, 1.0), None),
        ("reading below", (22.0, 1.0), (25.0, 1.0), Some(21.0)),
        ("sharp fall", (20.0, 1.0), (30.0, 1.0), Some(30.1)),
        ("same value", (25.0, 1.0), (25.0, 1.0), Some(25.0)),
    ];
    println!("{:<14} {:>14} {:>14} {:>6} {:<13} {:>16}", "", "local", "global", "prev", "case", "result");
    for (label, (ml, vl), (mg, vg), prev) in cases {
        let local = GaussianEstimate::scalar(ml, vl)?;
        let global = GaussianEstimate::scalar(mg, vg)?;
        let case = CombineCase::classify(&local, &global, prev, threshold, params.numeric_tolerance);
        let r = combine_local(&local, &global, prev, threshold, &params)?;
        println!(
            "{label:<14} {:>14} {:>14} {:>6} {:<13} {:>7.3} ± {:.3}",
            format!("{ml} ± {:.1}", vl.sqrt()),
            format!("{mg} ± {:.1}", vg.sqrt()),
            prev.map_or("-".to_string(), |p| p.to_string()),
            format!("{case:?}"),
            r.mean_scalar(),
            r.std_dev()
        );
    }
    Ok(())
}
