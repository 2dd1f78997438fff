// Copyright 2026 The meshmark Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Training configuration and its JSON schema. Every field has a default
// except n_bits, steps and data; unknown keys are rejected so typos surface.

#pragma once

#include <array>
#include <fstream>
#include <map>
#include <numbers>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "meshmark/camera.hpp"
#include "meshmark/distortion.hpp"
#include "meshmark/losses.hpp"
#include "meshmark/optimizer.hpp"
#include "meshmark/render.hpp"

namespace meshmark {

using Json = nlohmann::json;

enum class EmbedStrategy { kVertexOnly, kTextureOnly, kVertexAndTexture };

inline std::string to_string(EmbedStrategy s) {
  switch (s) {
    case EmbedStrategy::kVertexOnly: return "vertex_only";
    case EmbedStrategy::kTextureOnly: return "texture_only";
    case EmbedStrategy::kVertexAndTexture: return "vertex_and_texture";
  }
  return "vertex_and_texture";
}

inline EmbedStrategy strategy_from_string(const std::string& s) {
  for (auto k : {EmbedStrategy::kVertexOnly, EmbedStrategy::kTextureOnly, EmbedStrategy::kVertexAndTexture}) {
    if (to_string(k) == s) return k;
  }
  throw DataError("unknown embedding strategy '" + s + "'");
}

inline bool uses_vertices(EmbedStrategy s) { return s != EmbedStrategy::kTextureOnly; }
inline bool uses_texture(EmbedStrategy s) { return s != EmbedStrategy::kVertexOnly; }

struct DataConfig {
  std::vector<std::string> meshes;  // OBJ paths
  int toy_meshes = 0;               // procedural shapes instead of (or after) files
  std::string texture_dir;          // PNG library to crop textures from
  int64_t texture_size = 32;
  double texture_sigma = 1.5;       // noise texture smoothing when no texture is given
  bool spherical_uv = true;
  bool keep_mesh_textures = true;
  uint64_t texture_seed = 0;
};

struct EvalConfig {
  int views = 8;
  int max_meshes = 0;  // 0 = all
  uint64_t seed = 1234;
  // Rows of the robustness table.
  std::vector<DistortionSpec> table = [] {
    std::vector<DistortionSpec> rows;
    rows.push_back(DistortionSpec{});
    rows.push_back(DistortionSpec::of(DistortionKind::kNoise, 0.01));
    rows.push_back(DistortionSpec::of(DistortionKind::kRotation, std::numbers::pi / 6));
    rows.push_back(DistortionSpec::of(DistortionKind::kScaling, 0.25));
    rows.push_back(DistortionSpec::of(DistortionKind::kCropping, 0.2));
    return rows;
  }();
};

struct SweepConfig {
  std::map<DistortionKind, std::vector<double>> strengths = {
      {DistortionKind::kNoise, {0, 0.005, 0.01, 0.02, 0.04}},
      {DistortionKind::kRotation, {0, std::numbers::pi / 12, std::numbers::pi / 6, std::numbers::pi / 4}},
      {DistortionKind::kScaling, {0, 0.1, 0.25, 0.4}},
      {DistortionKind::kCropping, {0, 0.1, 0.2, 0.3}},
  };
};

struct FinetuneConfig {
  std::string image_dir;
  std::string labels;  // JSON object: file name -> hex message
  int64_t steps = 200;
  int batch_size = 4;
  double learning_rate = 1e-4;
};

struct TrainConfig {
  int n_bits = 0;
  int64_t steps = 0;
  int batch_size = 4;
  uint64_t seed = 0;
  std::string precision = "f32";
  EmbedStrategy strategy = EmbedStrategy::kVertexAndTexture;
  OptimizerConfig optimizer;
  LossWeights loss;
  ArchConfig arch;
  RenderOptions render;
  CameraSampling camera;
  LightSampling light;
  std::array<double, 3> light_color{1, 1, 1};
  std::array<double, 3> attenuation{1.0, 0.07, 0.017};
  std::vector<DistortionSpec> distortions{DistortionSpec{}};
  DataConfig data;
  EvalConfig eval;
  SweepConfig sweep;
  FinetuneConfig finetune;
  int64_t log_every = 10;
  int64_t checkpoint_every = 0;

  void validate() const {
    if (n_bits < 1) throw DataError("config: n_bits must be >= 1");
    if (steps < 0) throw DataError("config: steps must be >= 0");
    if (batch_size < 1) throw DataError("config: batch_size must be >= 1");
    if (precision != "f32" && precision != "f64") throw DataError("config: precision must be f32 or f64");
    if (!(optimizer.learning_rate >= 0)) throw DataError("config: learning_rate must be >= 0");
    loss.validate();
    arch.validate();
    if (arch.n_bits != n_bits) throw DataError("config: arch n_bits disagrees with n_bits");
    if (render.height < 32 || render.width < 32) throw DataError("config: render size must be at least 32x32");
    if (distortions.empty()) throw DataError("config: distortions must list at least one entry");
    for (const auto& d : distortions) d.validate();
    if (data.meshes.empty() && data.toy_meshes < 1) throw DataError("config: data needs meshes or toy_meshes");
    if (data.texture_size < 16) throw DataError("config: data.texture_size must be >= 16");
    if (eval.views < 1) throw DataError("config: eval.views must be >= 1");
    if (log_every < 1) throw DataError("config: log_every must be >= 1");
  }
};

namespace detail {

// Field reader that names the JSON path in every error and tracks which keys
// were consumed.
class JsonReader {
 public:
  JsonReader(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw DataError("config: '" + display() + "' must be an object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  template <class T>
  void opt(const std::string& key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    out = convert<T>(j_.at(key), join(key));
  }

  template <class T>
  T req(const std::string& key) {
    seen_.insert(key);
    if (!j_.contains(key)) throw DataError("config: missing required field '" + join(key) + "'");
    return convert<T>(j_.at(key), join(key));
  }

  JsonReader child(const std::string& key) {
    seen_.insert(key);
    if (!j_.contains(key)) throw DataError("config: missing required field '" + join(key) + "'");
    return JsonReader(j_.at(key), join(key));
  }

  const Json& raw(const std::string& key) {
    seen_.insert(key);
    return j_.at(key);
  }

  // Rejects keys nobody asked for.
  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw DataError("config: unknown field '" + join(it.key()) + "'");
    }
  }

  std::string join(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

 private:
  std::string display() const { return path_.empty() ? "<root>" : path_; }

  template <class T>
  static T convert(const Json& v, const std::string& where) {
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw DataError("");
      } else if constexpr (std::is_arithmetic_v<T>) {
        if (!v.is_number()) throw DataError("");
        if constexpr (std::is_integral_v<T>) {
          if (!v.is_number_integer() && !v.is_number_unsigned()) throw DataError("");
        }
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) throw DataError("");
      }
      return v.get<T>();
    } catch (const std::exception&) {
      throw DataError("config: field '" + where + "' has the wrong type (got " + std::string(v.type_name()) + ")");
    }
  }

  const Json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

inline DistortionSpec distortion_from_json(JsonReader r) {
  DistortionSpec d;
  d.kind = distortion_kind_from_string(r.req<std::string>("kind"));
  r.opt("mean", d.mean);
  r.opt("sigma", d.sigma);
  r.opt("max_angle", d.max_angle);
  r.opt("max_scale", d.max_scale);
  r.opt("max_crop", d.max_crop);
  r.finish();
  return d;
}

inline std::vector<DistortionSpec> distortion_list(JsonReader& parent, const std::string& key) {
  const Json& arr = parent.raw(key);
  if (!arr.is_array()) throw DataError("config: field '" + parent.join(key) + "' must be an array");
  std::vector<DistortionSpec> out;
  for (size_t i = 0; i < arr.size(); ++i) {
    out.push_back(distortion_from_json(JsonReader(arr[i], parent.join(key) + "[" + std::to_string(i) + "]")));
  }
  return out;
}

}  // namespace detail

inline Json distortion_to_json(const DistortionSpec& d) {
  return {{"kind", to_string(d.kind)}, {"mean", d.mean},           {"sigma", d.sigma},
          {"max_angle", d.max_angle},  {"max_scale", d.max_scale}, {"max_crop", d.max_crop}};
}

inline Json arch_to_json(const ArchConfig& a) {
  return {{"n_bits", a.n_bits},
          {"vertex_mlp", a.vertex_mlp},
          {"vertex_head", a.vertex_head},
          {"vertex_pool", to_string(a.vertex_pool)},
          {"num_vertices", a.num_vertices},
          {"texture_width", a.texture_width},
          {"decoder_width", a.decoder_width},
          {"decoder_blocks", a.decoder_blocks},
          {"decoder_strided", a.decoder_strided}};
}

inline ArchConfig arch_from_json(const Json& j, const std::string& path = "arch") {
  detail::JsonReader r(j, path);
  ArchConfig a;
  r.opt("n_bits", a.n_bits);
  r.opt("vertex_mlp", a.vertex_mlp);
  r.opt("vertex_head", a.vertex_head);
  std::string pool = to_string(a.vertex_pool);
  r.opt("vertex_pool", pool);
  a.vertex_pool = vertex_pool_from_string(pool);
  r.opt("num_vertices", a.num_vertices);
  r.opt("texture_width", a.texture_width);
  r.opt("decoder_width", a.decoder_width);
  r.opt("decoder_blocks", a.decoder_blocks);
  r.opt("decoder_strided", a.decoder_strided);
  r.finish();
  return a;
}

inline TrainConfig config_from_json(const Json& j) {
  detail::JsonReader r(j, "");
  TrainConfig c;
  c.n_bits = r.req<int>("n_bits");
  c.steps = r.req<int64_t>("steps");
  r.opt("batch_size", c.batch_size);
  r.opt("seed", c.seed);
  r.opt("precision", c.precision);
  r.opt("log_every", c.log_every);
  r.opt("checkpoint_every", c.checkpoint_every);
  std::string strategy = to_string(c.strategy);
  r.opt("strategy", strategy);
  c.strategy = strategy_from_string(strategy);

  if (r.has("optimizer")) {
    auto o = r.child("optimizer");
    std::string kind = to_string(c.optimizer.kind);
    o.opt("kind", kind);
    c.optimizer.kind = optimizer_from_string(kind);
    o.opt("learning_rate", c.optimizer.learning_rate);
    o.opt("beta1", c.optimizer.beta1);
    o.opt("beta2", c.optimizer.beta2);
    o.opt("epsilon", c.optimizer.epsilon);
    o.finish();
  }
  r.opt("learning_rate", c.optimizer.learning_rate);

  if (r.has("loss")) {
    auto l = r.child("loss");
    l.opt("lambda", c.loss.lambda);
    l.opt("gamma", c.loss.gamma);
    l.opt("delta", c.loss.delta);
    l.opt("theta", c.loss.theta);
    l.opt("eta", c.loss.eta);
    l.opt("w_normal", c.loss.w_normal);
    l.opt("w_texcoord", c.loss.w_texcoord);
    l.finish();
  }

  if (r.has("arch")) c.arch = arch_from_json(r.raw("arch"));
  c.arch.n_bits = c.n_bits;

  if (r.has("render")) {
    auto o = r.child("render");
    o.opt("height", c.render.height);
    o.opt("width", c.render.width);
    o.opt("splat_radius", c.render.splat.radius);
    o.opt("splat_sigma", c.render.splat.sigma);
    o.opt("k_a", c.render.shading.k_a);
    o.opt("k_d", c.render.shading.k_d);
    o.opt("k_r", c.render.shading.k_r);
    o.finish();
  }

  if (r.has("camera")) {
    auto o = r.child("camera");
    o.opt("x", c.camera.x);
    o.opt("y", c.camera.y);
    o.opt("z", c.camera.z);
    o.opt("look_at", c.camera.look_at);
    o.opt("up", c.camera.up);
    o.opt("fov_y", c.camera.fov_y);
    o.finish();
  }

  if (r.has("light")) {
    auto o = r.child("light");
    o.opt("mean", c.light.mean);
    o.opt("sigma", c.light.sigma);
    o.opt("color", c.light_color);
    o.opt("attenuation", c.attenuation);
    o.finish();
  }

  if (r.has("distortions")) c.distortions = detail::distortion_list(r, "distortions");

  {
    auto d = r.child("data");
    d.opt("meshes", c.data.meshes);
    d.opt("toy_meshes", c.data.toy_meshes);
    d.opt("texture_dir", c.data.texture_dir);
    d.opt("texture_size", c.data.texture_size);
    d.opt("texture_sigma", c.data.texture_sigma);
    d.opt("spherical_uv", c.data.spherical_uv);
    d.opt("keep_mesh_textures", c.data.keep_mesh_textures);
    d.opt("texture_seed", c.data.texture_seed);
    d.finish();
  }

  if (r.has("eval")) {
    auto e = r.child("eval");
    e.opt("views", c.eval.views);
    e.opt("max_meshes", c.eval.max_meshes);
    e.opt("seed", c.eval.seed);
    if (e.has("table")) c.eval.table = detail::distortion_list(e, "table");
    e.finish();
  }

  if (r.has("sweep")) {
    auto s = r.child("sweep");
    c.sweep.strengths.clear();
    for (auto k : {DistortionKind::kNoise, DistortionKind::kRotation, DistortionKind::kScaling, DistortionKind::kCropping}) {
      if (!s.has(to_string(k))) continue;
      std::vector<double> v;
      s.opt(to_string(k), v);
      c.sweep.strengths[k] = v;
    }
    s.finish();
  }

  if (r.has("finetune")) {
    auto f = r.child("finetune");
    f.opt("image_dir", c.finetune.image_dir);
    f.opt("labels", c.finetune.labels);
    f.opt("steps", c.finetune.steps);
    f.opt("batch_size", c.finetune.batch_size);
    f.opt("learning_rate", c.finetune.learning_rate);
    f.finish();
  }
  r.finish();
  c.validate();
  return c;
}

inline Json config_to_json(const TrainConfig& c) {
  Json sweep = Json::object();
  for (const auto& [k, v] : c.sweep.strengths) sweep[to_string(k)] = v;
  Json dist = Json::array();
  for (const auto& d : c.distortions) dist.push_back(distortion_to_json(d));
  Json table = Json::array();
  for (const auto& d : c.eval.table) table.push_back(distortion_to_json(d));
  return {
      {"n_bits", c.n_bits},
      {"steps", c.steps},
      {"batch_size", c.batch_size},
      {"seed", c.seed},
      {"precision", c.precision},
      {"log_every", c.log_every},
      {"checkpoint_every", c.checkpoint_every},
      {"strategy", to_string(c.strategy)},
      {"optimizer",
       {{"kind", to_string(c.optimizer.kind)},
        {"learning_rate", c.optimizer.learning_rate},
        {"beta1", c.optimizer.beta1},
        {"beta2", c.optimizer.beta2},
        {"epsilon", c.optimizer.epsilon}}},
      {"loss",
       {{"lambda", c.loss.lambda},
        {"gamma", c.loss.gamma},
        {"delta", c.loss.delta},
        {"theta", c.loss.theta},
        {"eta", c.loss.eta},
        {"w_normal", c.loss.w_normal},
        {"w_texcoord", c.loss.w_texcoord}}},
      {"arch", arch_to_json(c.arch)},
      {"render",
       {{"height", c.render.height},
        {"width", c.render.width},
        {"splat_radius", c.render.splat.radius},
        {"splat_sigma", c.render.splat.sigma},
        {"k_a", c.render.shading.k_a},
        {"k_d", c.render.shading.k_d},
        {"k_r", c.render.shading.k_r}}},
      {"camera",
       {{"x", c.camera.x},
        {"y", c.camera.y},
        {"z", c.camera.z},
        {"look_at", c.camera.look_at},
        {"up", c.camera.up},
        {"fov_y", c.camera.fov_y}}},
      {"light",
       {{"mean", c.light.mean}, {"sigma", c.light.sigma}, {"color", c.light_color}, {"attenuation", c.attenuation}}},
      {"distortions", dist},
      {"data",
       {{"meshes", c.data.meshes},
        {"toy_meshes", c.data.toy_meshes},
        {"texture_dir", c.data.texture_dir},
        {"texture_size", c.data.texture_size},
        {"texture_sigma", c.data.texture_sigma},
        {"spherical_uv", c.data.spherical_uv},
        {"keep_mesh_textures", c.data.keep_mesh_textures},
        {"texture_seed", c.data.texture_seed}}},
      {"eval", {{"views", c.eval.views}, {"max_meshes", c.eval.max_meshes}, {"seed", c.eval.seed}, {"table", table}}},
      {"sweep", sweep},
      {"finetune",
       {{"image_dir", c.finetune.image_dir},
        {"labels", c.finetune.labels},
        {"steps", c.finetune.steps},
        {"batch_size", c.finetune.batch_size},
        {"learning_rate", c.finetune.learning_rate}}},
  };
}

inline Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw DataError("'" + path + "' is not valid JSON: " + e.what());
  }
}

inline TrainConfig load_config(const std::string& path) { return config_from_json(read_json_file(path)); }

}  // namespace meshmark
