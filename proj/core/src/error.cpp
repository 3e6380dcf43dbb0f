#include "xlp/error.hpp"

namespace xlp {

std::string_view to_string(Errc code) noexcept {
  switch (code) {
    case Errc::invalid_argument: return "invalid_argument";
    case Errc::parse_error: return "parse_error";
    case Errc::empty_input: return "empty_input";
    case Errc::not_found: return "not_found";
    case Errc::duplicate_id: return "duplicate_id";
    case Errc::unknown_language: return "unknown_language";
    case Errc::insufficient_data: return "insufficient_data";
    case Errc::io_error: return "io_error";
    case Errc::bad_magic: return "bad_magic";
    case Errc::truncated: return "truncated";
    case Errc::checksum_mismatch: return "checksum_mismatch";
    case Errc::dim_mismatch: return "dim_mismatch";
    case Errc::encoder_mismatch: return "encoder_mismatch";
    case Errc::not_normalized: return "not_normalized";
    case Errc::adapter_error: return "adapter_error";
    case Errc::adapter_timeout: return "adapter_timeout";
  }
  return "unknown";
}

void rethrow_with_context(const Error& e, std::string_view context) {
  throw Error(e.code(), std::string(context) + ": " + e.what());
}

}  // namespace xlp
