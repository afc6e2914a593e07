//! Ready-to-run operators for the criterion benchmarks.

use stencilforge::apps::bench::diffusion_initial;
use stencilforge::apps::{diffusion_operator, DiffusionConfig};
use stencilforge::{BlockingPlan, GridFunction, OperatorHandle};

/// A built diffusion operator on an `n x n` grid with the initial field
/// loaded; compilation happens here, not in the timed loop.
pub fn diffusion(n: usize, nt: usize, plan: BlockingPlan) -> (OperatorHandle, GridFunction) {
    let cfg = DiffusionConfig::new(n, n, nt);
    let (mut u, op) = diffusion_operator(&cfg).expect("valid configuration");
    let init = diffusion_initial(n);
    u.set_slot(0, &init).unwrap();
    u.set_slot(1, &init).unwrap();
    let mut op = op.blocking(plan).threads(1);
    op.build().expect("kernel builds");
    (op, u)
}
