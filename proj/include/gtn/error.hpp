#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace gtn {

enum class Errc {
  shape_mismatch,
  non_finite,
  bad_magic,
  bad_dtype,
  truncated,
  shape_overflow,
  io,
  parse,
  invalid_argument,
  label_mismatch,
  no_healthy_frames,
  overlapping_segments,
  uncovered_frame,
};

constexpr std::string_view errc_name(Errc c) {
  switch (c) {
    case Errc::shape_mismatch: return "shape_mismatch";
    case Errc::non_finite: return "non_finite";
    case Errc::bad_magic: return "bad_magic";
    case Errc::bad_dtype: return "bad_dtype";
    case Errc::truncated: return "truncated";
    case Errc::shape_overflow: return "shape_overflow";
    case Errc::io: return "io";
    case Errc::parse: return "parse";
    case Errc::invalid_argument: return "invalid_argument";
    case Errc::label_mismatch: return "label_mismatch";
    case Errc::no_healthy_frames: return "no_healthy_frames";
    case Errc::overlapping_segments: return "overlapping_segments";
    case Errc::uncovered_frame: return "uncovered_frame";
  }
  return "unknown";
}

/// Single exception type for the library. The code survives to the CLI,
/// which prints it as `ERROR <code>: <msg>`.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& msg) : std::runtime_error(msg), code_(code) {}
  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& msg) { throw Error(code, msg); }

inline void require(bool cond, Errc code, const char* msg) {
  if (!cond) fail(code, msg);
}

}  // namespace gtn
