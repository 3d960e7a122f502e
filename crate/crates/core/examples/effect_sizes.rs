// SPDX-License-Identifier: MIT OR Apache-2.0

//! Streaming effect sizes: Welford accumulators, merging across shards, and
//! Cohen's d with its sign-consistency companion.
//!
//! ```text
//! cargo run --example effect_sizes
//! ```

use circuitscope::stats::{cohens_d, consistency, WelfordAccumulator};

fn main() -> circuitscope::Result<()> {
    let clean = [1.2, 0.9, 1.1, 1.4, 1.0, 0.8, 1.3, 1.1];
    let ablated = [0.4, 0.2, 0.6, 0.7, 0.3, 0.1, 0.5, 0.6];

    // Two shards merged give the same moments as one pass.
    let mut left: WelfordAccumulator = clean[..3].iter().copied().collect();
    let right: WelfordAccumulator = clean[3..].iter().copied().collect();
    left = left.merge(&right);
    let whole: WelfordAccumulator = clean.iter().copied().collect();
    println!("merged mean {:.6} var {:.6}", left.mean, left.variance().unwrap_or(f64::NAN));
    println!("single mean {:.6} var {:.6}", whole.mean, whole.variance().unwrap_or(f64::NAN));

    let abl: WelfordAccumulator = ablated.iter().copied().collect();
    let d = cohens_d(&whole, &abl)?;
    let deltas: Vec<f64> = clean.iter().zip(&ablated).map(|(c, a)| a - c).collect();
    println!("cohen's d = {d:.3}, consistency = {:.2}", consistency(&deltas)?);

    // Constant groups: zero spread turns any shift into a signed infinity.
    let flat: WelfordAccumulator = [2.0; 4].into_iter().collect();
    let lower: WelfordAccumulator = [1.0; 4].into_iter().collect();
    println!("zero-variance shift: d = {}", cohens_d(&flat, &lower)?);
    Ok(())
}
