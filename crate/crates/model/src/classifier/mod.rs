//! Feature reduction, the patch classifier, baselines and metrics.

pub mod head;
pub mod metrics;
pub mod reduce;
pub mod split;
pub mod wishart;

pub use head::{argmax, softmax, train_head, EpochLog, HeadConfig, HeadTrainConfig, PatchHead, RealGrid, PATCH};
pub use metrics::{evaluate, ConfusionMatrix, Metrics};
pub use reduce::{fuse_features, pixel_rows, select_rows, FeatureReducer, Fusion};
pub use split::{stratified_split, Split};
pub use wishart::WishartMl;
