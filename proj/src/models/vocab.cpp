#include "gradcredit/models/vocab.hpp"

#include <string>

#include "gradcredit/error.hpp"

namespace gradcredit::models {

void Vocab::validate() const {
  if (size < 8 || size > 64) throw ConfigError("vocab.size must be in [8, 64], got " + std::to_string(size));
}

void Vocab::check_tokens(const Tokens& tokens, const char* what) const {
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (!valid(tokens[i])) {
      throw InputError(std::string(what) + ": token id " + std::to_string(tokens[i]) + " at position " +
                       std::to_string(i) + " is outside vocab of size " + std::to_string(size));
    }
  }
}

}  // namespace gradcredit::models
