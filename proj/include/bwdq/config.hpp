#pragma once

#include <cstdio>
#include <string>
#include <vector>

#include "bwdq/dataset.hpp"
#include "bwdq/errors.hpp"
#include "bwdq/rng.hpp"
#include "json.hpp"

namespace bwdq {

using Json = nlohmann::json;

// 16 hex digits of FNV-1a over the compact JSON dump (keys are sorted by nlohmann).
inline std::string config_hash(const Json& config) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a64(config.dump())));
  return buf;
}

inline Json standardizer_to_json(const Standardizer& s) {
  return {{"mean", std::vector<double>(s.mean.data(), s.mean.data() + s.mean.size())},
          {"std", std::vector<double>(s.std.data(), s.std.data() + s.std.size())}};
}

inline Standardizer standardizer_from_json(const Json& j) {
  const auto mean = j.at("mean").get<std::vector<double>>();
  const auto std = j.at("std").get<std::vector<double>>();
  if (mean.size() != std.size()) throw FormatError("standardizer size mismatch", 0);
  Standardizer s;
  s.mean = Eigen::Map<const Vector>(mean.data(), static_cast<Eigen::Index>(mean.size()));
  s.std = Eigen::Map<const Vector>(std.data(), static_cast<Eigen::Index>(std.size()));
  return s;
}

}  // namespace bwdq
