// Copyright (c) 2026 The tslab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef TSLAB_HARNESS_CHECKPOINT_H_
#define TSLAB_HARNESS_CHECKPOINT_H_

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "tslab/gradcore/optim.h"

namespace tslab {

// Everything needed to resume or evaluate a run. Tensors and Adam moments
// are stored as base64 little-endian float32, so values must already sit on
// the float32 grid (Adam's float32 storage guarantees this).
struct CheckpointData {
  nlohmann::json config;  // resolved experiment config
  long step = 0;
  std::vector<std::string> names;
  std::vector<Shape> shapes;
  std::vector<std::vector<double>> values;
  AdamState adam;
  std::string rng_state;
  nlohmann::json meta;  // free-form: best dev metric, etc.
};

// Snapshot of a parameter set plus optimizer and RNG state.
CheckpointData CaptureCheckpoint(const nlohmann::json& config, long step,
                                 const ParameterSet& params, const Adam& adam,
                                 const Rng& rng, nlohmann::json meta = nlohmann::json::object());

std::string SerializeCheckpoint(const CheckpointData& ck);
CheckpointData ParseCheckpoint(const std::string& text);

// Writes through a temporary file and renames, so a crash never leaves a
// truncated checkpoint behind.
void SaveCheckpoint(const CheckpointData& ck, const std::filesystem::path& path);
CheckpointData LoadCheckpoint(const std::filesystem::path& path);

// Copies stored values into `params` (matched by name and shape; every
// parameter must be present).
void RestoreParameters(const CheckpointData& ck, ParameterSet* params);

std::string Base64Encode(std::span<const uint8_t> bytes);
std::vector<uint8_t> Base64Decode(const std::string& text);
std::string EncodeFloat32(std::span<const double> values);
std::vector<double> DecodeFloat32(const std::string& text, size_t expected);

}  // namespace tslab

#endif  // TSLAB_HARNESS_CHECKPOINT_H_
