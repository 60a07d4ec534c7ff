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

// Dataset manifests (JSON) and stable configuration hashing.
//
//   {
//     "units": "meters",
//     "working_resolution": 512,
//     "objects": [{"id": "obj", "views": [{
//         "id": "v00", "width": 64, "height": 64,
//         "intrinsics": {"fx": .., "fy": .., "cx": .., "cy": ..},
//         "pose": {"rotation": [[..], [..], [..]], "translation": [..]},
//         "depth": "obj/v00.dpt", "features": "obj/v00.ftb",
//         "role": "reference" | "query"}]}]
//   }
//
// File paths are relative to the manifest's directory.

#ifndef MVEQ_MANIFEST_HPP_
#define MVEQ_MANIFEST_HPP_

#include "mveq/common.hpp"
#include "mveq/geometry.hpp"

#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace mveq {

using json = nlohmann::json;

struct ViewEntry {
  std::string id;
  Intrinsics intrinsics;
  RigidPose pose;
  std::optional<std::string> depth_path;
  std::optional<std::string> feature_path;
  std::string role = "reference";
};

struct ObjectEntry {
  std::string id;
  std::vector<ViewEntry> views;
};

struct DatasetManifest {
  std::string units = "meters";
  int working_resolution = 512;
  std::vector<ObjectEntry> objects;
  std::filesystem::path base_dir;

  std::filesystem::path resolve(const std::string& rel) const { return base_dir / rel; }
};

inline json to_json(const RigidPose& p) {
  json rot = json::array();
  for (int r = 0; r < 3; ++r) rot.push_back({p.rotation(r, 0), p.rotation(r, 1), p.rotation(r, 2)});
  return {{"rotation", rot}, {"translation", {p.translation.x(), p.translation.y(), p.translation.z()}}};
}

inline RigidPose pose_from_json(const json& j) {
  RigidPose p;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) p.rotation(r, c) = j.at("rotation").at(r).at(c).get<double>();
  }
  for (int i = 0; i < 3; ++i) p.translation[i] = j.at("translation").at(i).get<double>();
  return p;
}

inline json manifest_to_json(const DatasetManifest& m) {
  json objs = json::array();
  for (const ObjectEntry& o : m.objects) {
    json views = json::array();
    for (const ViewEntry& v : o.views) {
      json jv = {{"id", v.id},
                 {"width", v.intrinsics.width},
                 {"height", v.intrinsics.height},
                 {"intrinsics", {{"fx", v.intrinsics.fx}, {"fy", v.intrinsics.fy}, {"cx", v.intrinsics.cx}, {"cy", v.intrinsics.cy}}},
                 {"pose", to_json(v.pose)},
                 {"role", v.role}};
      if (v.depth_path) jv["depth"] = *v.depth_path;
      if (v.feature_path) jv["features"] = *v.feature_path;
      views.push_back(std::move(jv));
    }
    objs.push_back({{"id", o.id}, {"views", std::move(views)}});
  }
  return {{"units", m.units}, {"working_resolution", m.working_resolution}, {"objects", std::move(objs)}};
}

/// Parses and validates a manifest; every referenced file must exist.
inline DatasetManifest load_manifest(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(read_file_bytes(path));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kFormat, "manifest " + path.string() + ": " + e.what());
  }
  DatasetManifest m;
  m.base_dir = path.parent_path();
  try {
    if (!j.contains("units")) throw Error(ErrorKind::kConfiguration, "manifest lacks the mandatory 'units' field");
    m.units = j.at("units").get<std::string>();
    m.working_resolution = j.value("working_resolution", 512);
    for (const json& jo : j.at("objects")) {
      ObjectEntry o;
      o.id = jo.at("id").get<std::string>();
      for (const json& jv : jo.at("views")) {
        ViewEntry v;
        v.id = jv.at("id").get<std::string>();
        const json& k = jv.at("intrinsics");
        v.intrinsics = {k.at("fx").get<double>(), k.at("fy").get<double>(), k.at("cx").get<double>(),
                        k.at("cy").get<double>(), jv.at("width").get<int>(), jv.at("height").get<int>()};
        v.intrinsics.validate();
        v.pose = pose_from_json(jv.at("pose"));
        v.pose.validate(1e-6);
        if (jv.contains("depth")) v.depth_path = jv.at("depth").get<std::string>();
        if (jv.contains("features")) v.feature_path = jv.at("features").get<std::string>();
        v.role = jv.value("role", std::string("reference"));
        for (const auto& rel : {v.depth_path, v.feature_path}) {
          if (rel && !std::filesystem::exists(m.resolve(*rel))) {
            throw Error(ErrorKind::kIo, "view '" + v.id + "' references missing file " + m.resolve(*rel).string());
          }
        }
        o.views.push_back(std::move(v));
      }
      m.objects.push_back(std::move(o));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kFormat, "manifest " + path.string() + ": " + e.what());
  }
  return m;
}

inline void save_manifest(const std::filesystem::path& path, const DatasetManifest& m) {
  write_file_atomic(path, manifest_to_json(m).dump(2) + "\n");
}

/// Loads depth and features for one manifest view and checks their shapes.
inline ViewRecord load_view(const DatasetManifest& m, const ViewEntry& v, bool need_features = true) {
  ViewRecord r;
  r.id = v.id;
  r.intrinsics = v.intrinsics;
  r.pose = v.pose;
  if (v.depth_path) {
    r.depth = load_depth_map(m.resolve(*v.depth_path));
    if (r.depth->width != v.intrinsics.width || r.depth->height != v.intrinsics.height) {
      throw Error(ErrorKind::kConfiguration, "depth dims of view '" + v.id + "' do not match the manifest");
    }
  }
  if (v.feature_path) {
    r.features = load_feature_map(m.resolve(*v.feature_path));
    r.features->validate();
    if (r.features->img_w != v.intrinsics.width || r.features->img_h != v.intrinsics.height) {
      throw Error(ErrorKind::kConfiguration, "feature image dims of view '" + v.id + "' do not match the manifest");
    }
  } else if (need_features) {
    throw Error(ErrorKind::kConfiguration, "view '" + v.id + "' has no features");
  }
  return r;
}

/// 64-bit FNV-1a of the canonical (sorted-key, compact) JSON dump, as hex.
inline std::string config_hash(const json& config) {
  const std::string canon = config.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : canon) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace mveq

#endif  // MVEQ_MANIFEST_HPP_
