//! Network experiment design and Fisherian randomization inference.
//!
//! The pieces compose as a pipeline: a [`Graph`] and a [`Design`] produce a
//! [`TreatmentVector`] from a salt, [`exposure`] summarises peer treatment,
//! [`inference`] re-draws the design to test sharp nulls about spillovers
//! and influence, and [`sim`] generates datasets with known effects to check
//! that those tests hold their size.

pub mod design;
pub mod dsl;
pub mod exposure;
pub mod graph;
pub mod hashing;
pub mod inference;
pub mod io;
pub mod partition;
pub mod sim;

pub use design::{Assignment, Design, DesignError, EdgeTreatment, TreatmentVector};
pub use exposure::{ExposureMeasure, ExposureVector};
pub use graph::{ClusterAssignment, Edge, Graph, GraphError};
pub use hashing::hash_uniform;
pub use inference::{AcceptanceRegion, FocalSet, InferenceError, TestConfig, TestResult, TestStatistic};
pub use partition::{cut_fraction, partition};
pub use sim::{Dataset, SimParams};

#[cfg(test)]
pub(crate) mod test_util {
    pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
        let n = x.len() as f64;
        let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
        let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
        for (a, b) in x.iter().zip(y) {
            sxy += (a - mx) * (b - my);
            sxx += (a - mx) * (a - mx);
            syy += (b - my) * (b - my);
        }
        sxy / (sxx * syy).sqrt()
    }
}
