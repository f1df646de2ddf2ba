#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace hf {

// Every failure thrown by the library carries a stable kebab-case code
// ("infeasible-parameters", "cfl-violation", "not-regular", ...) next to the
// human-readable message, so callers and the CLI can branch without parsing
// prose.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& what)
      : std::runtime_error(code + ": " + what), code_(std::move(code)) {}

  const std::string& code() const { return code_; }

 private:
  std::string code_;
};

[[noreturn]] inline void fail(const std::string& code, const std::string& msg) {
  throw Error(code, msg);
}

inline void require(bool ok, const std::string& code, const std::string& msg) {
  if (!ok) fail(code, msg);
}

}  // namespace hf
