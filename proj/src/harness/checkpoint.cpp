#include "gradcredit/harness/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <openssl/evp.h>

#include "gradcredit/error.hpp"

namespace gradcredit::harness {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'G', 'C', 'C', 'K', 'P', 'T', '0', '1'};
constexpr std::size_t kDigestBytes = 32;

class Writer {
 public:
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u64(s.size());
    buf_ += s;
  }
  void raw(const char* p, std::size_t n) { buf_.append(p, n); }
  void params(const ad::ParamSet& ps) {
    u32(static_cast<std::uint32_t>(ps.size()));
    for (const auto& [name, arr] : ps) {
      str(name);
      u32(static_cast<std::uint32_t>(arr.shape().size()));
      for (std::size_t e : arr.shape()) u64(e);
      for (double v : arr.values()) f64(v);
    }
  }
  std::string& buffer() { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  Reader(const std::string& b, std::size_t end) : b_(b), end_(end) {}
  void need(std::size_t n) const {
    if (pos_ + n > end_) throw CheckpointError("checkpoint is truncated");
  }
  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(b_[pos_++]);
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(b_[pos_++])) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(b_[pos_++])) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    const std::uint64_t n = u64();
    need(n);
    std::string s = b_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  ad::ParamSet params() {
    ad::ParamSet ps;
    const std::uint32_t count = u32();
    for (std::uint32_t i = 0; i < count; ++i) {
      std::string name = str();
      const std::uint32_t rank = u32();
      if (rank < 1 || rank > 2) throw CheckpointError("checkpoint parameter '" + name + "' has rank " + std::to_string(rank));
      std::vector<std::size_t> shape(rank);
      std::size_t n = 1;
      for (auto& e : shape) {
        e = u64();
        if (e == 0 || e > (1u << 20)) throw CheckpointError("checkpoint parameter '" + name + "' has a bad extent");
        n *= e;
      }
      need(8 * n);
      std::vector<double> vals(n);
      for (auto& v : vals) v = f64();
      ps.emplace(std::move(name), ad::Array(shape, std::move(vals)));
    }
    return ps;
  }
  std::size_t pos() const { return pos_; }
  void skip(std::size_t n) {
    need(n);
    pos_ += n;
  }

 private:
  const std::string& b_;
  std::size_t end_;
  std::size_t pos_ = 0;
};

std::string raw_sha256(const std::string& data, std::size_t n) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), n, md, &len, EVP_sha256(), nullptr) != 1 || len != kDigestBytes) {
    throw CheckpointError("SHA-256 computation failed");
  }
  return std::string(reinterpret_cast<const char*>(md), len);
}

json parse_json(const std::string& s, const char* what) {
  try {
    return json::parse(s);
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("checkpoint ") + what + " is not valid JSON: " + e.what());
  }
}

}  // namespace

json policy_config_to_json(const models::PolicyConfig& c) {
  return {{"d", c.d},
          {"hidden", c.hidden},
          {"context", c.context},
          {"attn_scale", c.attn_scale},
          {"null_score", c.null_score},
          {"pos_init", c.pos_init},
          {"eos_bias", c.eos_bias}};
}

models::PolicyConfig policy_config_from_json(const json& j) {
  models::PolicyConfig c;
  c.d = j.at("d").get<int>();
  c.hidden = j.at("hidden").get<int>();
  c.context = j.at("context").get<int>();
  c.attn_scale = j.at("attn_scale").get<double>();
  c.null_score = j.at("null_score").get<double>();
  c.pos_init = j.at("pos_init").get<double>();
  c.eos_bias = j.at("eos_bias").get<double>();
  return c;
}

JudgeState judge_state(const models::JudgeModel& judge) {
  return {judge.kind(), judge.frozen(), judge.backbone(), judge.params(), judge.digest()};
}

models::JudgeModel judge_from_state(const JudgeState& s, const models::Vocab& vocab) {
  auto j = models::JudgeModel::restore(s.kind, vocab, s.backbone, s.params, s.frozen);
  if (j.digest() != s.digest) throw CheckpointError("judge digest does not match its stored parameters");
  return j;
}

std::string encode_checkpoint(const CheckpointState& st) {
  Writer w;
  w.raw(kMagic, sizeof kMagic);
  w.u32(kCheckpointVersion);
  w.str(st.config.dump());
  w.u64(st.step);
  w.u32(static_cast<std::uint32_t>(st.vocab.size));
  for (int id : {models::Vocab::PAD, models::Vocab::BOS, models::Vocab::EOS, models::Vocab::SEP,
                 models::Vocab::TRUE_TOK, models::Vocab::FALSE_TOK, models::Vocab::FIRST_CONTENT}) {
    w.u32(static_cast<std::uint32_t>(id));
  }
  w.str(policy_config_to_json(st.policy_config).dump());
  w.params(st.policy);
  w.u8(st.judge ? 1 : 0);
  if (st.judge) {
    w.str(models::to_string(st.judge->kind));
    w.u8(st.judge->frozen ? 1 : 0);
    w.str(st.judge->backbone ? policy_config_to_json(*st.judge->backbone).dump() : std::string("null"));
    w.str(st.judge->digest);
    w.params(st.judge->params);
  }
  w.u8(st.orm ? 1 : 0);
  if (st.orm) w.params(*st.orm);
  w.str(st.optimizer_kind);
  w.u64(st.optimizer_t);
  w.params(st.optimizer_m);
  w.params(st.optimizer_v);
  w.u32(static_cast<std::uint32_t>(st.rng_states.size()));
  for (const auto& [name, state] : st.rng_states) {
    w.str(name);
    w.str(state);
  }
  w.str(st.extra.dump());
  std::string& buf = w.buffer();
  buf += raw_sha256(buf, buf.size());
  return buf;
}

CheckpointState decode_checkpoint(const std::string& bytes) {
  if (bytes.size() < sizeof kMagic + 4 + kDigestBytes || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
    throw CheckpointError("not a checkpoint file (bad magic)");
  }
  Reader r(bytes, bytes.size() - kDigestBytes);
  r.skip(sizeof kMagic);
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw CheckpointError("checkpoint version " + std::to_string(version) + " is not supported (this build reads version " +
                          std::to_string(kCheckpointVersion) + ")");
  }
  const std::size_t body = bytes.size() - kDigestBytes;
  if (raw_sha256(bytes, body) != bytes.substr(body)) throw CheckpointError("checkpoint digest mismatch (file is corrupted)");

  CheckpointState st;
  st.config = parse_json(r.str(), "config");
  st.step = r.u64();
  st.vocab.size = static_cast<int>(r.u32());
  const int expected[] = {models::Vocab::PAD, models::Vocab::BOS, models::Vocab::EOS, models::Vocab::SEP,
                          models::Vocab::TRUE_TOK, models::Vocab::FALSE_TOK, models::Vocab::FIRST_CONTENT};
  for (int id : expected) {
    if (static_cast<int>(r.u32()) != id) throw CheckpointError("checkpoint uses different reserved token ids");
  }
  try {
    st.policy_config = policy_config_from_json(parse_json(r.str(), "policy config"));
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("checkpoint policy config: ") + e.what());
  }
  st.policy = r.params();
  if (r.u8()) {
    JudgeState j;
    const std::string kind = r.str();
    if (kind == "linear") j.kind = models::JudgeKind::Linear;
    else if (kind == "mlp") j.kind = models::JudgeKind::MLP;
    else if (kind == "self") j.kind = models::JudgeKind::SelfJudge;
    else throw CheckpointError("checkpoint has unknown judge kind '" + kind + "'");
    j.frozen = r.u8() != 0;
    const json bb = parse_json(r.str(), "judge backbone");
    if (!bb.is_null()) j.backbone = policy_config_from_json(bb);
    j.digest = r.str();
    j.params = r.params();
    st.judge = std::move(j);
  }
  if (r.u8()) st.orm = r.params();
  st.optimizer_kind = r.str();
  st.optimizer_t = r.u64();
  st.optimizer_m = r.params();
  st.optimizer_v = r.params();
  const std::uint32_t n = r.u32();
  for (std::uint32_t i = 0; i < n; ++i) {
    std::string name = r.str();
    st.rng_states[name] = r.str();
  }
  st.extra = parse_json(r.str(), "extra section");
  if (r.pos() != body) throw CheckpointError("checkpoint has trailing bytes");
  return st;
}

void save_checkpoint(const std::string& path, const CheckpointState& state) {
  const std::string bytes = encode_checkpoint(state);
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write checkpoint '" + tmp + "'");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw CheckpointError("failed writing checkpoint '" + tmp + "'");
  }
  std::filesystem::rename(tmp, path);
}

CheckpointState load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return decode_checkpoint(ss.str());
  } catch (const CheckpointError& e) {
    throw CheckpointError(path + ": " + e.what());
  }
}

}  // namespace gradcredit::harness
