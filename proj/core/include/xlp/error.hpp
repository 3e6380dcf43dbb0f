#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace xlp {

enum class Errc {
  invalid_argument,
  parse_error,
  empty_input,
  not_found,
  duplicate_id,
  unknown_language,
  insufficient_data,
  io_error,
  bad_magic,
  truncated,
  checksum_mismatch,
  dim_mismatch,
  encoder_mismatch,
  not_normalized,
  adapter_error,
  adapter_timeout,
};

// Stable lowercase identifier, printed on the CLI error line.
std::string_view to_string(Errc code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

// Re-raises `e` with `context` prefixed to the message, keeping the code.
[[noreturn]] void rethrow_with_context(const Error& e, std::string_view context);

}  // namespace xlp
