//! Statistical engines: IRLS GLMs, second-order boosted trees, bagged
//! regression forests and small feed-forward networks.

mod forest;
mod gbt;
mod glm;
mod mlp;
mod tree;

pub use forest::{forest_fit, ForestModel, ForestParams};
pub use gbt::{gbt_fit, gbt_predict, GbtLoss, GbtModel, GbtParams};
pub use glm::{glm_fit, glm_predict, Family, GlmModel, Link};
pub use mlp::{
    logistic, mlp_forward, mlp_train, softplus, BatchLoss, ForwardCache, MlpModel, MseLoss, Optimizer,
    OutputActivation, TrainParams, TrainReport,
};
pub use tree::{Node, Tree};
