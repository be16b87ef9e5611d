use std::collections::HashSet;

use rand::Rng;

use super::{alternatives, walk, Route, SimParams};
use crate::coverage::CoverageStore;
use crate::error::Result;
use crate::lineage::Seed;
use crate::program::{BranchId, ProgramModel};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConcolicInput {
    pub trace: Vec<BranchId>,
    pub size: u64,
    /// The uncovered branch the solver steered into.
    pub flipped: BranchId,
}

/// Runs `seed` concolically. Walking its trace, every uncovered alternative
/// costs `1 + cmp_count` of the branch it hangs off; solving fails with
/// probability `1 - (1 - p_ext)^external_calls`. Indirect calls on the
/// trace shrink the budget. Stops at the first unaffordable query.
pub fn concolic_step<R: Rng>(
    seed: &Seed,
    model: &ProgramModel,
    coverage: &CoverageStore,
    budget: u32,
    params: &SimParams,
    rng: &mut R,
) -> Result<Vec<ConcolicInput>> {
    model.check_trace(&seed.trace)?;
    let indirect: u64 = seed
        .trace
        .iter()
        .map(|b| u64::from(model.annotation(*b).indirect_calls))
        .sum();
    let effective = f64::from(budget) / (1.0 + indirect as f64);
    let mut spent = 0.0;
    let mut tried = HashSet::new();
    let mut out = Vec::new();
    for i in 0..seed.trace.len() {
        let a = model.annotation(seed.trace[i]);
        let cost = 1.0 + f64::from(a.cmp_count);
        let solve = (1.0 - params.p_ext).powi(a.external_calls as i32);
        for alt in alternatives(model, &seed.trace, i) {
            if coverage.is_covered(alt) || !tried.insert(alt) {
                continue;
            }
            if spent + cost > effective {
                return Ok(out);
            }
            spent += cost;
            if !rng.gen_bool(solve) {
                continue;
            }
            let mut trace = seed.trace[..=i].to_vec();
            trace.push(alt);
            walk(model, &mut trace, Route::Random, params.max_trace_len, rng);
            let size = seed.size.max(trace.len() as u64);
            out.push(ConcolicInput {
                trace,
                size,
                flipped: alt,
            });
        }
    }
    Ok(out)
}
