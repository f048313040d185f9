//! The four-unknown worked system and its two-processor setup, used by the
//! tests, the CLI and the bindings.

use crate::engine::DtlpSpec;
use crate::evs::SplitPlan;
use crate::matrix::SymmetricSystem;

/// `[[5,-1,-1,0],[-1,6,-2,-1],[-1,-2,7,-2],[0,-1,-2,8]] x = (1,2,3,4)`.
pub fn four_vertex_system() -> SymmetricSystem {
    SymmetricSystem::new(
        4,
        vec![
            (0, 0, 5.0),
            (0, 1, -1.0),
            (0, 2, -1.0),
            (1, 1, 6.0),
            (1, 2, -2.0),
            (1, 3, -1.0),
            (2, 2, 7.0),
            (2, 3, -2.0),
            (3, 3, 8.0),
        ],
        vec![1.0, 2.0, 3.0, 4.0],
    )
    .expect("valid system")
}

/// Boundary {2, 3}; vertex 2 keeps 2.5 of its weight 6 and 0.8 of its source 2
/// on the first processor, vertex 3 keeps 3.3 of 7 and 1.6 of 3, and the 2–3
/// edge keeps 45%.
pub fn four_vertex_plan() -> SplitPlan {
    SplitPlan::new()
        .assign(1, 0)
        .assign(4, 1)
        .split_with(2, 0, 1, 2.5 / 6.0, 0.4)
        .split_with(3, 0, 1, 3.3 / 7.0, 1.6 / 3.0)
        .edge(2, 3, 0.45)
}

/// Impedances 0.2 (vertex 2) and 0.1 (vertex 3); 6.7 time units from the
/// first processor to the second and 2.9 back.
pub fn two_processor_dtlps() -> Vec<DtlpSpec> {
    vec![
        DtlpSpec::new(0.2, 6.7, 2.9).expect("valid line pair"),
        DtlpSpec::new(0.1, 6.7, 2.9).expect("valid line pair"),
    ]
}
