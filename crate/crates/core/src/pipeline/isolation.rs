use std::cell::Cell;

use crate::adapter::{split_matrix, AdapterModel};
use crate::error::Result;
use crate::metrics::{compute_metrics, MetricsReport};
use crate::store::{LatentDataset, Split};

/// The held-out split, reachable only through [`TestSplit::evaluate`],
/// which counts every record it hands to a model.
#[derive(Debug)]
pub struct TestSplit {
    data: LatentDataset,
    reads: Cell<u64>,
}

/// Separate a dataset into a train-only dataset and the guarded test split.
pub fn partition(dataset: &LatentDataset) -> Result<(LatentDataset, TestSplit)> {
    let train = dataset.filter(|r| r.split == Split::Train);
    let test = dataset.filter(|r| r.split == Split::Test);
    Ok((
        train,
        TestSplit {
            data: test,
            reads: Cell::new(0),
        },
    ))
}

impl TestSplit {
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Records handed out so far.
    pub fn reads(&self) -> u64 {
        self.reads.get()
    }

    /// Score `model` on the test records, optionally of one subdomain.
    pub fn evaluate(
        &self,
        model: &AdapterModel<f32>,
        subdomain: Option<usize>,
        train_counts: Option<&[u64]>,
        excluded_class: Option<usize>,
    ) -> Result<MetricsReport> {
        let (x, y) = split_matrix(&self.data, Split::Test, subdomain);
        self.reads.set(self.reads.get() + y.len() as u64);
        let pred = model.predict(&x)?;
        compute_metrics(&pred, &y, model.num_classes(), train_counts, excluded_class)
    }
}
