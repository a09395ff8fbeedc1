//! Synthetic traces sampled from a complexity model.

use crate::stochastic::{sample_complexity, slice_rng, ComplexityModel};
use crate::workload::GopStructure;

use super::trace::SliceTraceRecord;

/// One record per slice of `num_gops` GOPs. Each slice draws from its own
/// seeded stream, so a longer trace extends a shorter one.
pub fn generate_synthetic_trace(
    gop: &GopStructure,
    model: &ComplexityModel,
    num_gops: u64,
    seed: u64,
) -> Vec<SliceTraceRecord> {
    let mut out = Vec::new();
    for g in 0..num_gops {
        for f in gop.frames() {
            for s in 0..f.num_slices {
                let mut rng = slice_rng(seed, g, f.position, s);
                let w = sample_complexity(model, f.frame_type, &mut rng)
                    .round()
                    .max(1.0) as u64;
                out.push(SliceTraceRecord::new(g, f.position, f.frame_type, s, w));
            }
        }
    }
    out
}
