// Copyright 2026 The mveq Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// JSON evaluation reports. Every report carries "config_hash" and "version".

#ifndef MVEQ_REPORT_HPP_
#define MVEQ_REPORT_HPP_

#include "mveq/common.hpp"
#include "mveq/manifest.hpp"
#include "mveq/metrics.hpp"

#include <cstdio>
#include <map>
#include <string>

namespace mveq {

inline std::string threshold_key(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

inline json percent_map(const std::map<double, double>& m) {
  json j = json::object();
  for (const auto& [k, v] : m) j[threshold_key(k)] = v;
  return j;
}

inline json to_json(const EquivarianceReport& r) {
  return {{"ape", r.ape_percent}, {"pcdp", percent_map(r.pcdp)}, {"pair_count", r.pair_count}};
}

inline json to_json(const PoseAccuracyReport& r) {
  json acc = json::object();
  for (std::size_t t = 0; t < kPoseThresholds.size(); ++t) {
    char key[32];
    std::snprintf(key, sizeof key, "%gcm-%gdeg", kPoseThresholds[t].cm, kPoseThresholds[t].deg);
    acc[key] = r.acc[t];
  }
  return {{"acc", acc}, {"n_frames", r.n_frames}};
}

inline json to_json(const TrackingReport& r) {
  return {{"aj", r.aj}, {"delta_avg", r.delta_avg}, {"oa", r.oa}};
}

/// Adds the config, its hash and the toolkit version to a report body.
inline json finalize_report(json body, const json& config) {
  body["config"] = config;
  body["config_hash"] = config_hash(config);
  body["version"] = kVersion;
  return body;
}

/// Checks the keys and value ranges every equivariance report must have.
inline void validate_equivariance_report(const json& j) {
  auto fail = [](const std::string& why) { throw Error(ErrorKind::kFormat, "equivariance report: " + why); };
  for (const char* key : {"ape", "pcdp", "pair_count", "config_hash", "version"}) {
    if (!j.contains(key)) fail(std::string("missing '") + key + "'");
  }
  if (!j.at("ape").is_number() || j.at("ape").get<double>() < 0.0) fail("ape must be a non-negative number");
  double prev = 0.0;
  for (double d : kPcdpDeltas) {
    const std::string key = threshold_key(d);
    if (!j.at("pcdp").contains(key)) fail("pcdp lacks '" + key + "'");
    const double v = j.at("pcdp").at(key).get<double>();
    if (v < 0.0 || v > 100.0 || v < prev) fail("pcdp values must be in [0, 100] and nondecreasing");
    prev = v;
  }
  if (!j.at("pair_count").is_number_unsigned()) fail("pair_count must be a non-negative integer");
  if (j.at("config_hash").get<std::string>().size() != 16) fail("config_hash must be 16 hex digits");
}

}  // namespace mveq

#endif  // MVEQ_REPORT_HPP_
