#pragma once

#include <vector>

namespace gradcredit::models {

using Tokens = std::vector<int>;

/// Token id space. Ids below FIRST_CONTENT are reserved.
struct Vocab {
  static constexpr int PAD = 0;
  static constexpr int BOS = 1;
  static constexpr int EOS = 2;
  static constexpr int SEP = 3;
  static constexpr int TRUE_TOK = 4;
  static constexpr int FALSE_TOK = 5;
  static constexpr int FIRST_CONTENT = 6;

  int size = 16;

  /// Throws ConfigError unless 8 <= size <= 64.
  void validate() const;
  bool valid(int id) const { return id >= 0 && id < size; }
  bool is_content(int id) const { return id >= FIRST_CONTENT && id < size; }
  int num_content() const { return size - FIRST_CONTENT; }
  /// Throws InputError naming the first out-of-range id.
  void check_tokens(const Tokens& tokens, const char* what) const;
};

}  // namespace gradcredit::models
