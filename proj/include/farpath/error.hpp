#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

namespace farpath {

enum class Errc {
  unmapped_address,
  crosses_page_boundary,
  underflow,
  store_full,
  dead_slot,
  out_of_range,
  out_of_memory,
  no_victims,
  field_overflow,
  double_free,
  duplicate_name,
  unknown_function,
  skipped_busy,
  config_error,
  parse_error,
  invalid_argument,
};

constexpr std::string_view to_string(Errc e) noexcept {
  switch (e) {
    case Errc::unmapped_address: return "UnmappedAddress";
    case Errc::crosses_page_boundary: return "CrossesPageBoundary";
    case Errc::underflow: return "Underflow";
    case Errc::store_full: return "StoreFull";
    case Errc::dead_slot: return "DeadSlot";
    case Errc::out_of_range: return "OutOfRange";
    case Errc::out_of_memory: return "OutOfMemory";
    case Errc::no_victims: return "NoVictims";
    case Errc::field_overflow: return "FieldOverflow";
    case Errc::double_free: return "DoubleFree";
    case Errc::duplicate_name: return "DuplicateName";
    case Errc::unknown_function: return "UnknownFunction";
    case Errc::skipped_busy: return "SkippedBusy";
    case Errc::config_error: return "ConfigError";
    case Errc::parse_error: return "ParseError";
    case Errc::invalid_argument: return "InvalidArgument";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

// Trace and config parse failures carry the 1-based line number.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error(Errc::parse_error, "line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace farpath
