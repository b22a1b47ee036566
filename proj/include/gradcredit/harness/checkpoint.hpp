#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>

#include "json.hpp"
#include "gradcredit/autodiff/optimizer.hpp"
#include "gradcredit/autodiff/params.hpp"
#include "gradcredit/models/judge.hpp"
#include "gradcredit/models/orm.hpp"
#include "gradcredit/models/policy.hpp"

namespace gradcredit::harness {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct JudgeState {
  models::JudgeKind kind = models::JudgeKind::SelfJudge;
  bool frozen = true;
  std::optional<models::PolicyConfig> backbone;
  ad::ParamSet params;
  std::string digest;
};

/// Everything needed to resume a run.
///
/// File layout, all integers little-endian:
///   magic "GCCKPT01" | u32 version
///   str config_json | u64 step | u32 vocab_size | 7 x u32 reserved token ids
///   str policy_config_json | params policy
///   u8 has_judge [ str kind | u8 frozen | str backbone_json | str digest | params ]
///   u8 has_orm [ params ]
///   str optimizer_kind | u64 t | params m | params v
///   u32 n_streams { str name | str engine_state }
///   str extra_json
///   32-byte SHA-256 of every preceding byte
/// where str = u64 length + bytes and params = u32 count { str name | u32 rank
/// | rank x u64 extent | values as IEEE-754 binary64 bit patterns }.
struct CheckpointState {
  nlohmann::json config = nlohmann::json::object();
  std::uint64_t step = 0;
  models::Vocab vocab;
  models::PolicyConfig policy_config;
  ad::ParamSet policy;
  std::optional<JudgeState> judge;
  std::optional<ad::ParamSet> orm;
  std::string optimizer_kind = "adam";
  std::uint64_t optimizer_t = 0;
  ad::ParamSet optimizer_m;
  ad::ParamSet optimizer_v;
  std::map<std::string, std::string> rng_states;
  nlohmann::json extra = nlohmann::json::object();
};

std::string encode_checkpoint(const CheckpointState& state);
/// Throws CheckpointError on truncation, digest mismatch or version mismatch.
CheckpointState decode_checkpoint(const std::string& bytes);

/// Writes to a temporary file and renames it into place.
void save_checkpoint(const std::string& path, const CheckpointState& state);
CheckpointState load_checkpoint(const std::string& path);

nlohmann::json policy_config_to_json(const models::PolicyConfig& c);
models::PolicyConfig policy_config_from_json(const nlohmann::json& j);

JudgeState judge_state(const models::JudgeModel& judge);
models::JudgeModel judge_from_state(const JudgeState& s, const models::Vocab& vocab);

}  // namespace gradcredit::harness
