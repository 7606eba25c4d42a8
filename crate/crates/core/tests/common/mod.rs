use proptest::prelude::*;
use spinlearn_core::IsingModel;

/// Random model on `lo..=hi` variables with a random edge subset.
pub fn model(lo: usize, hi: usize) -> impl Strategy<Value = IsingModel> {
    (lo..=hi).prop_flat_map(|n| {
        let pairs = n * (n - 1) / 2;
        (
            proptest::collection::vec(proptest::option::of(-0.5f64..0.5), pairs),
            proptest::collection::vec(-0.3f64..0.3, n),
        )
            .prop_map(move |(edges, fields)| {
                let mut couplings = Vec::new();
                let mut k = 0;
                for i in 0..n {
                    for j in i + 1..n {
                        if let Some(b) = edges[k] {
                            couplings.push((i, j, b));
                        }
                        k += 1;
                    }
                }
                IsingModel::new(n, couplings, fields).unwrap()
            })
    })
}
