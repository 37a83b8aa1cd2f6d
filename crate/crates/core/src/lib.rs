//! Discovery of stable bimodules: pairs of feature sets from two
//! sample-matched data matrices whose aggregate cross-correlation is
//! significant under a permutation null.

pub mod corr;
pub mod data;
pub mod dedup;
pub mod error;
pub mod eval;
pub mod fdr;
pub mod jsonio;
pub mod net;
pub mod pvalue;
pub mod search;
pub mod simgen;
pub mod tuning;

pub use corr::{EdgeList, FeatureSet, View};
pub use data::{load_dataset, CovariateBlock, TwoViewDataset};
pub use error::{Error, Result};
pub use search::{Bimodule, SearchConfig, SearchTrace};
