mod booster;
mod ensemble;
mod kmeans;
mod rfe;
mod tree;

pub use booster::{
    log_loss, predict_proba_gbdt, sigmoid, train_gbdt, GbdtConfig, GbdtModel, TrainingLog, PROBA_CLIP,
};
pub use ensemble::{
    best_probability_threshold, margin_to_proba, stratified_cv_ensemble, stratified_folds, CvEnsemble,
    OneVsRestGbdt,
};
pub use kmeans::{kmeans_cluster, ClusterModel, MAX_LLOYD_ITERATIONS};
pub use rfe::{rfe_select, RfeResult};
pub use tree::TreeNode;
