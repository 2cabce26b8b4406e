//! Feature extraction, a linear classifier for feature quality, phrase
//! tables and topic hierarchies.

mod features;
mod phrases;
mod svm;
mod tree;

pub use features::{collect_segments, extract_features, ExtractConfig, FeatureMatrix};
pub use phrases::{kbest_products, kernel_phrases, render_phrase_table, top_phrases, KernelPhrases, Phrase};
pub use svm::{
    cross_validate, cv_report, split_report, train_linear_svm, AccuracyReport, LinearSvm, SvmConfig,
};
pub use tree::{project_to_kernels, top_m, TopicTree, TreeNode};
