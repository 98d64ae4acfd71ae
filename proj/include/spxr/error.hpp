#pragma once

#include <stdexcept>
#include <string>

namespace spxr {

enum class Errc {
  io_error,
  corrupt_image,
  unsupported_format,
  unsupported_bit_depth,
  bad_magic,
  payload_size_mismatch,
  invalid_label_map,
  dimension_mismatch,
  invalid_argument,
  degenerate_training_set,
  instance_too_large,
  level_mismatch,
  config_error,
};

inline const char* errc_name(Errc c) {
  switch (c) {
    case Errc::io_error: return "io_error";
    case Errc::corrupt_image: return "corrupt_image";
    case Errc::unsupported_format: return "unsupported_format";
    case Errc::unsupported_bit_depth: return "unsupported_bit_depth";
    case Errc::bad_magic: return "bad_magic";
    case Errc::payload_size_mismatch: return "payload_size_mismatch";
    case Errc::invalid_label_map: return "invalid_label_map";
    case Errc::dimension_mismatch: return "dimension_mismatch";
    case Errc::invalid_argument: return "invalid_argument";
    case Errc::degenerate_training_set: return "degenerate_training_set";
    case Errc::instance_too_large: return "instance_too_large";
    case Errc::level_mismatch: return "level_mismatch";
    case Errc::config_error: return "config_error";
  }
  return "unknown";
}

// Every failure in the library is reported through this exception. The code
// is stable and machine-readable; the message is for humans.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what) : std::runtime_error(what), code_(code) {}
  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) { throw Error(code, what); }

inline void require(bool cond, Errc code, const std::string& what) {
  if (!cond) fail(code, what);
}

}  // namespace spxr
