//! Shared fixtures for the criterion benchmarks.

use mrrad::data::gen_circles;
use mrrad::{Dataset, GraphLaplacian, KernelSpec};

/// Two-circle dataset with `n_per_circle` points per circle and the default
/// kernel and graph widths.
pub fn circles_fixture(n_per_circle: usize) -> (Dataset, KernelSpec, GraphLaplacian) {
    let ds = gen_circles(n_per_circle, (1.0, 2.0), 0.05, 0).expect("valid generator arguments");
    let base = KernelSpec::gaussian_bandwidth(0.5).expect("positive bandwidth");
    let gl = GraphLaplacian::build(ds.points(), mrrad::bandwidth_to_sigma(0.2))
        .expect("positive graph width");
    (ds, base, gl)
}
