#pragma once

#include <cstdint>
#include <fstream>
#include <istream>
#include <sstream>
#include <string>
#include <vector>

#include "farpath/error.hpp"

namespace farpath {

// One op per line:
//   get <object_id>
//   set <object_id> <size>
//   phase <name>
// Object ids are allocation order. Blank lines and lines starting with '#'
// are skipped.
struct TraceOp {
  enum Kind : std::uint8_t { get, set, phase };
  Kind kind = get;
  std::uint64_t id = 0;
  std::size_t size = 0;
  std::string name;
  std::size_t line = 0;
};

inline std::vector<TraceOp> parse_trace(std::istream& in) {
  std::vector<TraceOp> ops;
  std::string text;
  std::size_t line = 0;
  auto number = [&](std::istringstream& ss, const char* what) {
    std::string tok;
    if (!(ss >> tok)) throw ParseError(line, std::string("missing ") + what);
    std::size_t used = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(tok, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != tok.size() || tok[0] == '-') throw ParseError(line, std::string("bad ") + what + " '" + tok + "'");
    return static_cast<std::uint64_t>(v);
  };
  while (std::getline(in, text)) {
    ++line;
    std::istringstream ss(text);
    std::string verb;
    if (!(ss >> verb) || verb[0] == '#') continue;
    TraceOp op;
    op.line = line;
    if (verb == "get") {
      op.kind = TraceOp::get;
      op.id = number(ss, "object id");
    } else if (verb == "set") {
      op.kind = TraceOp::set;
      op.id = number(ss, "object id");
      op.size = number(ss, "size");
      if (op.size == 0) throw ParseError(line, "size must be > 0");
    } else if (verb == "phase") {
      op.kind = TraceOp::phase;
      if (!(ss >> op.name)) throw ParseError(line, "missing phase name");
    } else {
      throw ParseError(line, "unknown op '" + verb + "'");
    }
    std::string extra;
    if (ss >> extra) throw ParseError(line, "trailing '" + extra + "'");
    ops.push_back(std::move(op));
  }
  return ops;
}

inline std::vector<TraceOp> parse_trace_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::config_error, "cannot open trace '" + path + "'");
  return parse_trace(in);
}

}  // namespace farpath
