#include "gradcredit/optim/train.hpp"

#include <cmath>

#include <fmt/format.h>

#include "gradcredit/error.hpp"

namespace gradcredit::optim {

void TrainConfig::validate() const {
  if (!(clip_eps > 0.0 && clip_eps < 1.0)) throw ConfigError("clip_eps must be in (0, 1)");
  if (!(eps_std > 0.0)) throw ConfigError("eps_std must be positive");
  if (!(optimizer.lr >= 0.0)) throw ConfigError("lr must be >= 0");
  if (group_size < 2) throw ConfigError("group_size must be at least 2");
  if (queries_per_step < 1) throw ConfigError("queries_per_step must be at least 1");
  if (sampling.temperature != 1.0) throw ConfigError("training sampling temperature must be 1");
  if (sampling.max_T < 1) throw ConfigError("max_T must be at least 1");
  if (kl_coef < 0.0 || entropy_coef < 0.0) throw ConfigError("kl_coef and entropy_coef must be >= 0");
  reward.validate();
}

GroupRollout rollout_group(const models::PolicyModel& policy, const synthenv::QueryInstance& instance,
                           const RewardSource& source, const TrainConfig& cfg, Engine& sample_rng,
                           std::uint64_t verdict_seed, bool attribute) {
  if ((source.judge == nullptr) == (source.orm == nullptr)) {
    throw ContractError("rollout_group: exactly one of judge and ORM must be given");
  }
  if (source.judge && !source.judge->frozen()) throw ContractError("rollout_group: judge must be frozen");
  GroupRollout g;
  g.instance_id = instance.id;
  g.query = instance.query;
  const double norm = rewards::positive_weight_sum(instance.rubrics);
  for (int i = 0; i < cfg.group_size; ++i) {
    models::Trajectory t = models::sample_response(policy, instance.query, cfg.sampling, sample_rng);
    g.grader_score.push_back(rewards::normalized_rubric_score(instance.rubrics, t.response));
    if (source.judge) {
      std::vector<attribution::AttributionResult> results;
      double met_sum = 0.0;
      for (std::size_t k = 0; k < instance.rubrics.size(); ++k) {
        const auto& rubric = instance.rubrics[k];
        models::VerdictMode vm = cfg.reward.verdict;
        vm.seed = substream_seed(verdict_seed, fmt::format("{}/{}/{}", instance.id, i, k));
        attribution::AttributionResult r;
        if (attribute) {
          r = attribution::attribute_rubric(*source.judge, instance.query, t.response, rubric, cfg.reward.attribution,
                                            vm);
        } else {
          r.rubric_id = rubric.id;
          r.verdict = models::judge_verdict(*source.judge, instance.query, t.response, rubric.encoding, vm);
          r.gated = !r.verdict.met();
          r.alpha.assign(t.response.size(), 0.0);
        }
        met_sum += rewards::sequence_reward(r.verdict, rubric.weight);
        results.push_back(std::move(r));
      }
      if (norm <= cfg.reward.eps_w) {
        throw DegenerateRubricError("instance " + instance.id + " has no positive-weight rubric");
      }
      g.seq_score.push_back(met_sum / norm);
      if (attribute) {
        g.dense.push_back(rewards::aggregate_rubric_rewards(results, instance.rubrics, cfg.reward.eps_w));
        g.attributions.push_back(std::move(results));
      }
    } else {
      attribution::OrmAttribution oa =
          attribution::attribute_orm(*source.orm, instance.query, t.response, cfg.reward.attribution);
      g.seq_score.push_back(oa.value);
      g.dense.push_back(rewards::orm_token_rewards(oa.alpha, oa.value));
    }
    g.traj.push_back(std::move(t));
  }
  return g;
}

Ragged group_advantages(const GroupRollout& group, const TrainConfig& cfg) {
  Ragged adv;
  if (cfg.estimator == Estimator::GrpoSequence) {
    const auto a = sequence_advantages(group.seq_score, cfg.eps_std);
    for (std::size_t i = 0; i < group.traj.size(); ++i) adv.emplace_back(group.traj[i].length(), a[i]);
    return adv;
  }
  if (group.dense.size() != group.traj.size()) throw ContractError("group_advantages: dense rewards missing");
  Ragged r;
  for (const auto& d : group.dense) r.push_back(d.values);
  return cfg.estimator == Estimator::GrpoToken ? grpo_advantages(r, cfg.eps_std) : rloo_advantages(r);
}

UpdateReport train_step(models::PolicyModel& policy, ad::Optimizer& optimizer,
                        const std::vector<const synthenv::QueryInstance*>& batch, const RewardSource& source,
                        const TrainConfig& cfg, Engine& sample_rng, std::uint64_t verdict_seed,
                        const models::PolicyModel* reference, bool keep_attributions) {
  cfg.validate();
  if (batch.empty()) throw ContractError("train_step: empty batch");
  if (cfg.kl_coef > 0.0 && reference == nullptr) throw ContractError("train_step: kl_coef needs a reference policy");
  UpdateReport rep;
  const models::PolicySnapshot old(policy);
  const bool attribute = cfg.estimator != Estimator::GrpoSequence || keep_attributions;

  Ragged adv, old_lp, new_lp;
  std::vector<models::LogprobGraph> graphs;
  std::vector<const models::Trajectory*> trajs;
  double seq_sum = 0.0, grade_sum = 0.0;
  for (const auto* inst : batch) {
    GroupRollout g = rollout_group(old.model(), *inst, source, cfg, sample_rng, verdict_seed, attribute);
    Ragged a = group_advantages(g, cfg);
    for (std::size_t i = 0; i < g.traj.size(); ++i) {
      seq_sum += g.seq_score[i];
      grade_sum += g.grader_score[i];
      adv.push_back(std::move(a[i]));
    }
    rep.groups.push_back(std::move(g));
  }
  for (const auto& g : rep.groups) {
    for (const auto& t : g.traj) {
      graphs.push_back(models::policy_logprob_graph(policy, t.query, t.response, true));
      const auto& lpv = graphs.back().graph.value(graphs.back().logprobs).values();
      new_lp.emplace_back(lpv.begin(), lpv.end());
      old_lp.push_back(t.logprobs);
      trajs.push_back(&t);
    }
  }
  const double n = static_cast<double>(adv.size());
  rep.mean_seq_reward = seq_sum / n;
  rep.mean_grader_score = grade_sum / n;
  const Moments m = pooled_moments(adv);
  rep.adv_mean = m.mean;
  rep.adv_std = m.std;

  SurrogateResult s = clipped_surrogate(new_lp, old_lp, adv, cfg.clip_eps);
  rep.surrogate = s.value;
  rep.clip_frac = s.clip_frac;

  ad::GradientSet total;
  for (std::size_t i = 0; i < graphs.size(); ++i) {
    auto& lg = graphs[i];
    ad::Graph& gr = lg.graph;
    const std::size_t T = new_lp[i].size();
    std::vector<double> coeff = s.coeff[i];
    if (cfg.kl_coef > 0.0) {
      const auto ref = models::policy_logprobs(*reference, trajs[i]->query, trajs[i]->response);
      for (std::size_t t = 0; t < T; ++t) {
        coeff[t] -= cfg.kl_coef * (1.0 - std::exp(ref[t] - new_lp[i][t])) / (n * static_cast<double>(T));
      }
    }
    ad::Var root = gr.sum(gr.mul(lg.logprobs, gr.constant(ad::Array({T, 1}, coeff))));
    if (cfg.entropy_coef > 0.0) {
      ad::Var p = gr.softmax_rows(lg.logits);
      ad::Var h = gr.scale(gr.sum(gr.mul(p, gr.log(p))), -cfg.entropy_coef / (n * static_cast<double>(T)));
      root = gr.add(root, h);
    }
    ad::GradientSet gs = ad::backward(gr, root);
    for (auto& [name, arr] : gs) {
      if (!policy.params().count(name)) continue;
      auto it = total.find(name);
      if (it == total.end()) {
        total.emplace(name, std::move(arr));
      } else {
        auto dst = it->second.values();
        auto src = arr.values();
        for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
      }
    }
  }
  rep.grad_norm = ad::global_norm(total, policy.params());
  if (!std::isfinite(rep.grad_norm)) throw NumericError("policy gradient is not finite");
  optimizer.step(policy.mutable_params(), total, true);
  return rep;
}

}  // namespace gradcredit::optim
