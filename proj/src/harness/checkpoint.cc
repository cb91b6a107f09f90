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

#include "tslab/harness/checkpoint.h"

#include <openssl/evp.h>

#include <bit>
#include <fstream>
#include <sstream>

namespace tslab {

using nlohmann::json;

namespace {
constexpr const char* kFormat = "tslab-checkpoint/1";
}  // namespace

std::string Base64Encode(std::span<const uint8_t> bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(),
                                static_cast<int>(bytes.size()));
  out.resize(n);
  return out;
}

std::vector<uint8_t> Base64Decode(const std::string& text) {
  if (text.size() % 4 != 0) throw ContractError("base64: length not a multiple of 4");
  std::vector<uint8_t> out(3 * text.size() / 4);
  const int n = EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(text.data()),
                                static_cast<int>(text.size()));
  if (n < 0) throw ContractError("base64: invalid characters");
  size_t pad = 0;
  if (!text.empty() && text.back() == '=') ++pad;
  if (text.size() > 1 && text[text.size() - 2] == '=') ++pad;
  out.resize(static_cast<size_t>(n) - pad);
  return out;
}

std::string EncodeFloat32(std::span<const double> values) {
  std::vector<uint8_t> bytes(values.size() * 4);
  for (size_t i = 0; i < values.size(); ++i) {
    const uint32_t u = std::bit_cast<uint32_t>(static_cast<float>(values[i]));
    for (int b = 0; b < 4; ++b) bytes[4 * i + b] = static_cast<uint8_t>(u >> (8 * b));
  }
  return Base64Encode(bytes);
}

std::vector<double> DecodeFloat32(const std::string& text, size_t expected) {
  const std::vector<uint8_t> bytes = Base64Decode(text);
  if (bytes.size() != expected * 4) {
    throw ContractError("checkpoint: array holds " + std::to_string(bytes.size() / 4) +
                        " floats, expected " + std::to_string(expected));
  }
  std::vector<double> out(expected);
  for (size_t i = 0; i < expected; ++i) {
    uint32_t u = 0;
    for (int b = 0; b < 4; ++b) u |= static_cast<uint32_t>(bytes[4 * i + b]) << (8 * b);
    out[i] = static_cast<double>(std::bit_cast<float>(u));
  }
  return out;
}

CheckpointData CaptureCheckpoint(const json& config, long step, const ParameterSet& params,
                                 const Adam& adam, const Rng& rng, json meta) {
  CheckpointData ck;
  ck.config = config;
  ck.step = step;
  for (size_t i = 0; i < params.size(); ++i) {
    ck.names.push_back(params.name(i));
    ck.shapes.push_back(params.tensor(i).shape());
    auto v = params.tensor(i).values();
    ck.values.emplace_back(v.begin(), v.end());
  }
  ck.adam = adam.state();
  ck.rng_state = rng.SaveState();
  ck.meta = std::move(meta);
  return ck;
}

std::string SerializeCheckpoint(const CheckpointData& ck) {
  json tensors = json::array();
  for (size_t i = 0; i < ck.names.size(); ++i) {
    tensors.push_back({{"name", ck.names[i]},
                       {"shape", ck.shapes[i]},
                       {"data", EncodeFloat32(ck.values[i])}});
  }
  json m = json::array(), v = json::array();
  for (size_t i = 0; i < ck.adam.m.size(); ++i) {
    m.push_back(EncodeFloat32(ck.adam.m[i]));
    v.push_back(EncodeFloat32(ck.adam.v[i]));
  }
  json j = {{"format", kFormat},
            {"config", ck.config},
            {"step", ck.step},
            {"tensors", tensors},
            {"adam", {{"step", ck.adam.step}, {"m", m}, {"v", v}}},
            {"rng", ck.rng_state},
            {"meta", ck.meta}};
  return j.dump(1) + "\n";
}

CheckpointData ParseCheckpoint(const std::string& text) {
  CheckpointData ck;
  try {
    const json j = json::parse(text);
    if (j.at("format") != kFormat) {
      throw ContractError("checkpoint: unsupported format " + j.at("format").dump());
    }
    ck.config = j.at("config");
    ck.step = j.at("step").get<long>();
    for (const auto& t : j.at("tensors")) {
      ck.names.push_back(t.at("name").get<std::string>());
      ck.shapes.push_back(t.at("shape").get<Shape>());
      size_t n = 1;
      for (int d : ck.shapes.back()) n *= static_cast<size_t>(d);
      ck.values.push_back(DecodeFloat32(t.at("data").get<std::string>(), n));
    }
    const json& a = j.at("adam");
    ck.adam.step = a.at("step").get<long>();
    const auto& m = a.at("m");
    const auto& v = a.at("v");
    TSLAB_REQUIRE(m.size() == v.size(), "checkpoint: adam moment count mismatch");
    for (size_t i = 0; i < m.size(); ++i) {
      const std::string ms = m[i].get<std::string>(), vs = v[i].get<std::string>();
      ck.adam.m.push_back(DecodeFloat32(ms, Base64Decode(ms).size() / 4));
      ck.adam.v.push_back(DecodeFloat32(vs, ck.adam.m.back().size()));
    }
    ck.rng_state = j.at("rng").get<std::string>();
    ck.meta = j.at("meta");
  } catch (const json::exception& e) {
    throw ContractError(std::string("checkpoint: ") + e.what());
  }
  return ck;
}

void SaveCheckpoint(const CheckpointData& ck, const std::filesystem::path& path) {
  const std::string text = SerializeCheckpoint(ck);
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw ContractError("cannot write " + tmp.string());
    out << text;
    if (!out) throw ContractError("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

CheckpointData LoadCheckpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ContractError("cannot read checkpoint " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ParseCheckpoint(ss.str());
}

void RestoreParameters(const CheckpointData& ck, ParameterSet* params) {
  TSLAB_REQUIRE(ck.names.size() == params->size(),
                "checkpoint: holds " + std::to_string(ck.names.size()) +
                    " tensors, model has " + std::to_string(params->size()));
  for (size_t i = 0; i < params->size(); ++i) {
    if (ck.names[i] != params->name(i) || ck.shapes[i] != params->tensor(i).shape()) {
      throw ContractError("checkpoint: tensor " + std::to_string(i) + " is " + ck.names[i] +
                          " " + ShapeString(ck.shapes[i]) + ", model expects " +
                          params->name(i) + " " + ShapeString(params->tensor(i).shape()));
    }
    auto dst = params->tensor(i).mutable_values();
    std::copy(ck.values[i].begin(), ck.values[i].end(), dst.begin());
  }
}

}  // namespace tslab
