#pragma once

#include <cstdint>
#include <vector>

#include "gradcredit/attribution/attribution.hpp"
#include "gradcredit/autodiff/optimizer.hpp"
#include "gradcredit/models/judge.hpp"
#include "gradcredit/models/orm.hpp"
#include "gradcredit/models/policy.hpp"
#include "gradcredit/optim/advantages.hpp"
#include "gradcredit/rewards/rewards.hpp"
#include "gradcredit/synthenv/tasks.hpp"

namespace gradcredit::optim {

struct TrainConfig {
  Estimator estimator = Estimator::GrpoSequence;
  double clip_eps = 0.2;
  double eps_std = 1e-8;
  ad::OptimizerConfig optimizer;
  int group_size = 8;
  int queries_per_step = 1;
  /// Temperature must be 1 so that recorded log-probs are the policy's own.
  models::SamplingConfig sampling;
  rewards::RewardConfig reward;
  /// Penalty on the k3 estimate of KL(pi || reference); 0 disables it.
  double kl_coef = 0.0;
  /// Bonus on the mean full-distribution entropy; 0 disables it.
  double entropy_coef = 0.0;

  void validate() const;
};

/// Either a frozen judge (rubric rewards) or an ORM (scalar rewards).
struct RewardSource {
  const models::JudgeModel* judge = nullptr;
  const models::OrmModel* orm = nullptr;
};

struct GroupRollout {
  std::string instance_id;
  models::Tokens query;
  std::vector<models::Trajectory> traj;
  /// Judge-normalized rubric score, or the ORM value.
  std::vector<double> seq_score;
  /// Symbolic grader score of each sampled response.
  std::vector<double> grader_score;
  std::vector<rewards::TokenRewards> dense;
  /// [response][rubric]; empty when attributions were not requested.
  std::vector<std::vector<attribution::AttributionResult>> attributions;
};

/// Samples G responses for one instance and scores them. Attribution runs
/// when `attribute` is set; verdict seeds derive from `verdict_seed`.
GroupRollout rollout_group(const models::PolicyModel& policy, const synthenv::QueryInstance& instance,
                           const RewardSource& source, const TrainConfig& cfg, Engine& sample_rng,
                           std::uint64_t verdict_seed, bool attribute);

/// Advantages of a scored group under the configured estimator.
Ragged group_advantages(const GroupRollout& group, const TrainConfig& cfg);

struct UpdateReport {
  double surrogate = 0.0;
  double clip_frac = 0.0;
  double grad_norm = 0.0;
  double adv_mean = 0.0;
  double adv_std = 0.0;
  double mean_seq_reward = 0.0;
  double mean_grader_score = 0.0;
  std::vector<GroupRollout> groups;
};

/// One update: a snapshot of the policy samples G responses per instance,
/// rewards and advantages are computed, and the surrogate is ascended with
/// a single optimizer step.
UpdateReport train_step(models::PolicyModel& policy, ad::Optimizer& optimizer,
                        const std::vector<const synthenv::QueryInstance*>& batch, const RewardSource& source,
                        const TrainConfig& cfg, Engine& sample_rng, std::uint64_t verdict_seed,
                        const models::PolicyModel* reference = nullptr, bool keep_attributions = false);

}  // namespace gradcredit::optim
