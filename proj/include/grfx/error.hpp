#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace grfx {

enum class ErrorCode {
  model_invalid,
  ill_conditioned,
  b_too_small,
  insufficient_hits,
  out_of_range,
  unsupported,
  config_invalid,
  internal,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::model_invalid: return "model_invalid";
    case ErrorCode::ill_conditioned: return "ill_conditioned";
    case ErrorCode::b_too_small: return "b_too_small";
    case ErrorCode::insufficient_hits: return "insufficient_hits";
    case ErrorCode::out_of_range: return "out_of_range";
    case ErrorCode::unsupported: return "unsupported";
    case ErrorCode::config_invalid: return "config_invalid";
    case ErrorCode::internal: return "internal";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  [[nodiscard]] ErrorCode code() const noexcept { return code_; }

  // Configuration problems map to exit status 2, everything else is numerical (3).
  [[nodiscard]] bool is_config_error() const noexcept { return code_ == ErrorCode::config_invalid; }

 private:
  ErrorCode code_;
};

}  // namespace grfx
