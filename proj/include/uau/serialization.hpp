#pragma once

#include <iosfwd>
#include <map>
#include <string>

#include "uau/autodiff.hpp"

namespace uau {

/// Versioned text format:
///
///   uaunet-params 1
///   meta <m>
///   <key> <value>            (m lines, no whitespace inside keys/values)
///   count <n>
///   param <name> <rank> <d0> ... <d_rank-1>
///   <values, shortest round-trip decimal, one line>
///
/// Values are written with std::to_chars, so reading them back yields the
/// identical doubles.
using Metadata = std::map<std::string, std::string>;

struct ParameterFile {
  ParameterStore params;
  Metadata meta;
};

void write_parameters(std::ostream& os, const ParameterStore& store, const Metadata& meta = {});
ParameterFile read_parameters(std::istream& is);

void save_parameters(const std::string& path, const ParameterStore& store, const Metadata& meta = {});
ParameterFile load_parameters(const std::string& path);

/// Shortest decimal string that parses back to exactly `v`.
std::string format_double(double v);

}  // namespace uau
