//! Stochastic policies, clipped-surrogate optimization, the two training
//! procedures and the autoscaling baselines.

mod baselines;
mod checkpoint;
pub mod nn;
mod policy;
mod ppo;
mod train;

pub use baselines::{hpa_baseline, robust_hpa_baseline};
pub use checkpoint::Checkpoint;
pub use policy::{log_softmax, PolicyParams};
pub use ppo::{
    advantages, ppo_update, surrogate_loss_and_grad, value_loss_and_grad, PolicyOptimizer, Rollout, SurrogateBatch,
    SurrogateStats, TrainConfig, UpdateDiagnostics,
};
pub use train::{
    adversary_input_scale, evaluate_policy, evaluate_schedule, greedy_counts, mean_returns, new_adversary,
    new_protagonist, perturbation, protagonist_input_scale, stage1_input_scale, train_msrarl, train_stage1,
    train_vanilla, CurvePoint, Evaluation, MsrarlResult, Phase, PhaseRecord, Stage1Result,
};
