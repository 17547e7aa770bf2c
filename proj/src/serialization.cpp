#include "uau/serialization.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "uau/errors.hpp"

namespace uau {

namespace {
constexpr const char* kMagic = "uaunet-params";
constexpr int kVersion = 1;

double parse_double(const std::string& token) {
  double v = 0.0;
  const auto* end = token.data() + token.size();
  auto [ptr, ec] = std::from_chars(token.data(), end, v);
  if (ec != std::errc() || ptr != end) throw ConfigError("parameter file: bad number '" + token + "'");
  return v;
}
}  // namespace

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) throw Error("format_double: conversion failed");
  return std::string(buf, ptr);
}

void write_parameters(std::ostream& os, const ParameterStore& store, const Metadata& meta) {
  os << kMagic << ' ' << kVersion << '\n';
  os << "meta " << meta.size() << '\n';
  for (const auto& [k, v] : meta) {
    if (k.find_first_of(" \t\n") != std::string::npos || v.find_first_of(" \t\n") != std::string::npos ||
        k.empty() || v.empty())
      throw ConfigError("parameter metadata '" + k + "' must be non-empty and whitespace-free");
    os << k << ' ' << v << '\n';
  }
  os << "count " << store.entries().size() << '\n';
  for (const auto& [name, e] : store.entries()) {
    os << "param " << name << ' ' << e.value.rank();
    for (auto d : e.value.shape()) os << ' ' << d;
    os << '\n';
    for (std::size_t i = 0; i < e.value.size(); ++i) {
      if (i) os << ' ';
      os << format_double(e.value[i]);
    }
    os << '\n';
  }
}

ParameterFile read_parameters(std::istream& is) {
  std::string magic;
  int version = 0;
  if (!(is >> magic >> version) || magic != kMagic)
    throw ConfigError("parameter file: missing '" + std::string(kMagic) + "' header");
  if (version != kVersion) throw ConfigError("parameter file: unsupported version " + std::to_string(version));
  std::string tag;
  std::size_t count = 0;
  ParameterFile file;
  if (!(is >> tag >> count) || tag != "meta") throw ConfigError("parameter file: missing meta");
  for (std::size_t i = 0; i < count; ++i) {
    std::string k, v;
    if (!(is >> k >> v)) throw ConfigError("parameter file: truncated meta");
    file.meta[k] = v;
  }
  if (!(is >> tag >> count) || tag != "count") throw ConfigError("parameter file: missing count");
  ParameterStore& store = file.params;
  for (std::size_t p = 0; p < count; ++p) {
    std::string name;
    std::size_t rank = 0;
    if (!(is >> tag >> name >> rank) || tag != "param") throw ConfigError("parameter file: bad param record");
    Shape shape(rank);
    for (auto& d : shape)
      if (!(is >> d)) throw ConfigError("parameter file: bad shape for '" + name + "'");
    std::vector<double> values(shape_numel(shape));
    std::string token;
    for (auto& v : values) {
      if (!(is >> token)) throw ConfigError("parameter file: truncated values for '" + name + "'");
      v = parse_double(token);
    }
    store.add(name, Tensor(shape, std::move(values)));
  }
  return file;
}

void save_parameters(const std::string& path, const ParameterStore& store, const Metadata& meta) {
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot write '" + path + "'");
  write_parameters(os, store, meta);
}

ParameterFile load_parameters(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read '" + path + "'");
  return read_parameters(is);
}

}  // namespace uau
