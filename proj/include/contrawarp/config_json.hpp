// Copyright 2026 The contrawarp Authors
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

#pragma once

// JSON bindings for every configuration struct. Missing keys keep their
// defaults, so a partial config file overrides only what it names.

#include <cstdint>
#include <cstdio>
#include <string>

#include "json.hpp"

#include "contrawarp/augment.hpp"
#include "contrawarp/net.hpp"
#include "contrawarp/warp.hpp"

namespace contrawarp {

inline void to_json(nlohmann::json& j, const Interval& r) { j = nlohmann::json::array({r.lo, r.hi}); }
inline void from_json(const nlohmann::json& j, Interval& r) {
  if (!j.is_array() || j.size() != 2) throw ConfigError("interval must be a two-element array");
  r.lo = j[0].get<double>();
  r.hi = j[1].get<double>();
}

NLOHMANN_JSON_SERIALIZE_ENUM(PlacementMode, {{PlacementMode::kRandom, "random"},
                                             {PlacementMode::kLandmarkBased, "landmark"}})

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(WarpSamplerConfig, center_range, sq_step_range,
                                                radius_range, strength_range, repeat_n,
                                                placement_mode, landmark_jitter, reference_size)

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(GlobalTransformConfig, flip_prob,
                                                brightness_jitter, contrast_jitter,
                                                crop_scale_range, rotation_range, enable_crop,
                                                flip_permutation)

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(NetConfig, input_side, encoder_dims,
                                                projector_dims, predictor_dims, heatmap_side,
                                                num_landmarks, heatmap_sigma, center_inputs)

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(LossConfig, s_t, lambda, use_cont13,
                                                linear_landmark_weights)

/// merge_patch that rejects keys `base` does not already have, so typos in
/// config files fail loudly instead of being ignored.
inline void strict_merge_patch(nlohmann::json& base, const nlohmann::json& patch,
                               const std::string& where = "") {
  if (!patch.is_object()) throw ConfigError("config" + where + ": expected a JSON object");
  for (const auto& [key, value] : patch.items()) {
    const std::string path = where + "." + key;
    if (!base.contains(key)) throw ConfigError("config: unknown key '" + path.substr(1) + "'");
    if (base[key].is_object() && value.is_object())
      strict_merge_patch(base[key], value, path);
    else
      base[key] = value;
  }
}

/// 64-bit FNV-1a of the canonical (sorted-key, compact) JSON text, as hex.
inline std::string config_hash(const nlohmann::json& j) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : j.dump()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace contrawarp
