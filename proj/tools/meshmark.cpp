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

// meshmark command-line tool.
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "meshmark/checkpoint.hpp"
#include "meshmark/config.hpp"
#include "meshmark/pipeline.hpp"

namespace fs = std::filesystem;
using namespace meshmark;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw DataError("error while writing '" + path.string() + "'");
}

uint64_t fnv1a64(const std::string& s) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string hex64(uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

Vec3 vec3_field(const Json& j, const char* key, const Vec3& fallback, const std::string& where) {
  if (!j.contains(key)) return fallback;
  const Json& v = j.at(key);
  if (!v.is_array() || v.size() != 3) throw DataError(where + ": '" + key + "' must be an array of 3 numbers");
  Vec3 out{};
  for (size_t i = 0; i < 3; ++i) {
    if (!v[i].is_number()) throw DataError(where + ": '" + key + "' must be an array of 3 numbers");
    out[i] = v[i].get<double>();
  }
  return out;
}

Camera camera_from_json(const std::string& path) {
  const Json j = read_json_file(path);
  if (!j.is_object()) throw DataError(path + ": camera must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (it.key() != "position" && it.key() != "look_at" && it.key() != "up" && it.key() != "fov_y") {
      throw DataError(path + ": unknown camera field '" + it.key() + "'");
    }
  }
  Camera cam;
  cam.position = vec3_field(j, "position", cam.position, path);
  cam.look_at = vec3_field(j, "look_at", cam.look_at, path);
  cam.up = vec3_field(j, "up", cam.up, path);
  if (j.contains("fov_y")) {
    if (!j.at("fov_y").is_number()) throw DataError(path + ": 'fov_y' must be a number");
    cam.fov_y = j.at("fov_y").get<double>();
  }
  return cam;
}

template <class Real>
PointLight<Real> light_from_json(const std::string& path) {
  const Json j = read_json_file(path);
  if (!j.is_object()) throw DataError(path + ": light must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (it.key() != "position" && it.key() != "color" && it.key() != "attenuation") {
      throw DataError(path + ": unknown light field '" + it.key() + "'");
    }
  }
  PointLight<Real> light;
  light.position = vec3_field(j, "position", light.position, path);
  const Vec3 color = vec3_field(j, "color", {1, 1, 1}, path);
  light.color = Tensor<Real>({3}, {static_cast<Real>(color[0]), static_cast<Real>(color[1]), static_cast<Real>(color[2])});
  const Vec3 att = vec3_field(j, "attenuation", {light.attenuation[0], light.attenuation[1], light.attenuation[2]}, path);
  light.attenuation = {att[0], att[1], att[2]};
  light.validate();
  return light;
}

// Mesh ready for rendering: unit box, missing normals/UVs filled in.
template <class Real>
Mesh<Real> load_render_mesh(const std::string& path) {
  DataConfig d;
  d.spherical_uv = false;
  return prepare_mesh(load_obj<Real>(path), d);
}

// Scene for a (mesh, camera, light) triple; unspecified parts are sampled from
// `seed` with the training distributions.
template <class Real>
std::pair<Camera, PointLight<Real>> scene_from_flags(const std::string& camera_json, const std::string& light_json,
                                                     uint64_t seed, const TrainConfig& cfg) {
  auto rng = detail::derive_rng(seed, {5});
  Camera cam = sample_scene_camera(rng, cfg);
  PointLight<Real> light = sample_scene_light<Real>(rng, cfg);
  if (!camera_json.empty()) cam = camera_from_json(camera_json);
  if (!light_json.empty()) light = light_from_json<Real>(light_json);
  return {cam, light};
}

// ------------------------------------------------------------ commands

template <class Real>
int run_train(const TrainConfig& cfg, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  write_text(out_dir / "config.json", config_to_json(cfg).dump(2) + "\n");
  const auto data = load_dataset<Real>(cfg.data);
  Trainer<Real> trainer(cfg, data);
  std::ofstream csv(out_dir / "train_log.csv");
  if (!csv) throw DataError("cannot write training log");
  const auto on_step = [&](const StepMetrics& m) {
    if (m.step % cfg.log_every == 0 || m.step == cfg.steps) {
      std::cerr << "step " << m.step << "  loss " << m.total << "  bit_acc " << m.bit_accuracy << "\n";
    }
    if (cfg.checkpoint_every > 0 && m.step % cfg.checkpoint_every == 0) {
      save_checkpoint((out_dir / ("step_" + std::to_string(m.step) + ".ckpt")).string(), trainer.params(),
                      cfg.strategy, m.step);
    }
  };
  trainer.run(cfg.steps, &csv, on_step);
  save_checkpoint((out_dir / "model.ckpt").string(), trainer.params(), cfg.strategy, trainer.steps_done());
  const EvalReport rep = evaluate(trainer.params(), data, cfg, cfg.strategy);
  write_text(out_dir / "eval.json", rep.to_json().dump(2) + "\n");
  write_text(out_dir / "eval_table.csv", rep.table_csv());
  std::cout << "bit_accuracy " << rep.bit_accuracy << "\n";
  return 0;
}

template <class Real>
int run_eval(const TrainConfig& cfg, const std::string& checkpoint, const fs::path& out_dir) {
  const auto ck = load_checkpoint<Real>(checkpoint, cfg.n_bits);
  const auto data = load_dataset<Real>(cfg.data);
  const EvalReport rep = evaluate(ck.params, data, cfg, ck.strategy);
  fs::create_directories(out_dir);
  write_text(out_dir / "eval.json", rep.to_json().dump(2) + "\n");
  write_text(out_dir / "eval_table.csv", rep.table_csv());
  std::cout << rep.table_csv();
  std::cout << "bit_accuracy " << rep.bit_accuracy << "\n";
  return 0;
}

template <class Real>
int run_sweep(const TrainConfig& cfg, const std::string& checkpoint, const fs::path& out_dir) {
  const auto ck = load_checkpoint<Real>(checkpoint, cfg.n_bits);
  const auto data = load_dataset<Real>(cfg.data);
  fs::create_directories(out_dir);
  for (const auto& [kind, strengths] : cfg.sweep.strengths) {
    const auto curve = distortion_curve(ck.params, data, kind, strengths, cfg, ck.strategy);
    const fs::path file = out_dir / ("sweep_" + to_string(kind) + ".csv");
    write_text(file, curve_csv(curve, cfg.n_bits));
    std::cout << file.string() << "\n";
  }
  return 0;
}

template <class Real>
int run_finetune(const TrainConfig& cfg, const std::string& checkpoint, const std::string& image_dir,
                 const std::string& labels, const std::string& out) {
  auto ck = load_checkpoint<Real>(checkpoint, cfg.n_bits);
  const auto set = load_labeled_images<Real>(image_dir.empty() ? cfg.finetune.image_dir : image_dir,
                                             labels.empty() ? cfg.finetune.labels : labels, ck.params.arch.n_bits);
  const FineTuneReport rep = fine_tune_decoder(ck.params, set, cfg.finetune, cfg.optimizer, cfg.seed);
  save_checkpoint(out, ck.params, ck.strategy, ck.step);
  const Json j = {{"images", rep.images}, {"steps", rep.steps}, {"bit_accuracy_before", rep.before},
                  {"bit_accuracy_after", rep.after}};
  write_text(fs::path(out).replace_extension(".json"), j.dump(2) + "\n");
  std::cout << "before " << rep.before << "\nafter " << rep.after << "\n";
  return 0;
}

int run_embed(const std::string& mesh_path, const std::string& texture_path, const std::string& message,
              const std::string& checkpoint, const std::string& prefix) {
  const auto ck = load_checkpoint<float>(checkpoint);
  const int nb = ck.params.arch.n_bits;
  const std::vector<uint8_t> bits = bits_from_hex(message, nb);
  DataConfig d;
  d.spherical_uv = false;
  Mesh<float> mesh = load_obj<float>(mesh_path);
  if (!mesh.attributes.defined() || detail::columns_all_zero(mesh.attributes, kTexcoordBegin, kAttributeChannels)) {
    mesh = spherical_uv(mesh);
  }
  if (detail::columns_all_zero(mesh.attributes, kNormalBegin, kNormalBegin + 3)) mesh = compute_normals(mesh);
  if (!texture_path.empty()) mesh.texture = read_png<float>(texture_path);
  if (uses_texture(ck.strategy) && !mesh.texture.defined()) {
    throw DataError("checkpoint uses the texture encoder; pass --texture or a mesh with a texture map");
  }
  const Mesh<float> wm = embed_mesh(ck.params, mesh, bits, ck.strategy);
  const fs::path obj = prefix + ".obj";
  if (obj.has_parent_path()) fs::create_directories(obj.parent_path());
  const fs::path png = prefix + ".png";
  if (wm.texture.defined()) {
    write_png(png.string(), wm.texture);
    save_obj(obj.string(), wm, png.filename().string());
  } else {
    save_obj(obj.string(), wm);
  }
  const Json side = {{"n_bits", nb},
                     {"strategy", to_string(ck.strategy)},
                     {"message_hash", "fnv1a64:" + hex64(fnv1a64(bits_to_hex(bits)))},
                     {"checkpoint_step", ck.step}};
  write_text(prefix + ".json", side.dump(2) + "\n");
  std::cout << obj.string() << "\n";
  return 0;
}

int run_extract(const std::string& image, const std::string& mesh, const std::string& camera_json,
                const std::string& light_json, uint64_t seed, const std::string& checkpoint, int height, int width) {
  const auto ck = load_checkpoint<float>(checkpoint);
  Tensor<float> img;
  if (!image.empty()) {
    img = read_png<float>(image, AlphaPolicy::kCompositeBlack);
  } else {
    TrainConfig cfg;
    cfg.render.height = height;
    cfg.render.width = width;
    const auto [cam, light] = scene_from_flags<float>(camera_json, light_json, seed, cfg);
    img = render(load_render_mesh<float>(mesh), cam, light, cfg.render);
  }
  const int side = ck.params.arch.min_image_side();
  if (img.dim(0) < side || img.dim(1) < side) {
    throw DataError("image is " + std::to_string(img.dim(1)) + "x" + std::to_string(img.dim(0)) +
                    ", smaller than the decoder minimum of " + std::to_string(side) + "x" + std::to_string(side));
  }
  const std::vector<double> mr = decode_image(ck.params, img);
  std::cout << "message " << bits_to_hex(binarize_values(mr)) << "\n";
  std::cout << "confidence";
  for (double v : mr) std::cout << ' ' << detail::fmt(v);
  std::cout << "\n";
  return 0;
}

int run_render(const std::string& mesh, const std::string& camera_json, const std::string& light_json, uint64_t seed,
               const std::string& out, int height, int width) {
  TrainConfig cfg;
  cfg.render.height = height;
  cfg.render.width = width;
  const auto [cam, light] = scene_from_flags<float>(camera_json, light_json, seed, cfg);
  write_png(out, render(load_render_mesh<float>(mesh), cam, light, cfg.render));
  return 0;
}

template <class F>
int with_precision(const TrainConfig& cfg, F&& f) {
  return cfg.precision == "f64" ? f(double{}) : f(float{});
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"meshmark: watermark 3D meshes and decode the message from renders"};
  app.require_subcommand(1);

  std::string config, checkpoint, out_dir, mesh, texture, message, prefix, image, camera_json, light_json, out;
  std::string image_dir, labels;
  uint64_t seed = 0;
  int height = 400, width = 600;
  std::optional<int64_t> steps_override;

  auto* train = app.add_subcommand("train", "train encoders and decoder from a JSON config");
  train->add_option("--config", config, "training config (JSON)")->required()->check(CLI::ExistingFile);
  train->add_option("--out-dir", out_dir, "directory for logs, checkpoints and the eval report")->required();
  train->add_option("--steps", steps_override, "override the configured step count");

  auto* embed = app.add_subcommand("embed", "embed a message into a mesh and its texture");
  embed->add_option("--mesh", mesh, "input OBJ")->required()->check(CLI::ExistingFile);
  embed->add_option("--texture", texture, "texture PNG (default: the mesh's map_Kd)")->check(CLI::ExistingFile);
  embed->add_option("--message", message, "message as hex, most significant bit first")->required();
  embed->add_option("--checkpoint", checkpoint, "trained model")->required()->check(CLI::ExistingFile);
  embed->add_option("--out-prefix", prefix, "writes <prefix>.obj, .mtl, .png and .json")->required();

  auto* extract = app.add_subcommand("extract", "decode a message from an image or a rendered mesh");
  auto* img_opt = extract->add_option("--image", image, "rendered PNG")->check(CLI::ExistingFile);
  auto* mesh_opt = extract->add_option("--mesh", mesh, "OBJ to render first")->check(CLI::ExistingFile);
  img_opt->excludes(mesh_opt);
  extract->add_option("--camera", camera_json, "camera JSON (with --mesh)")->check(CLI::ExistingFile)->needs(mesh_opt);
  extract->add_option("--light", light_json, "light JSON (with --mesh)")->check(CLI::ExistingFile)->needs(mesh_opt);
  extract->add_option("--seed", seed, "seed for sampled camera/light");
  extract->add_option("--checkpoint", checkpoint, "trained model")->required()->check(CLI::ExistingFile);
  extract->add_option("--height", height, "render height")->check(CLI::PositiveNumber);
  extract->add_option("--width", width, "render width")->check(CLI::PositiveNumber);

  auto* rend = app.add_subcommand("render", "render a mesh to PNG");
  rend->add_option("--mesh", mesh, "input OBJ")->required()->check(CLI::ExistingFile);
  rend->add_option("--camera-json", camera_json, "camera JSON")->check(CLI::ExistingFile);
  rend->add_option("--light-json", light_json, "light JSON")->check(CLI::ExistingFile);
  rend->add_option("--seed", seed, "seed for sampled camera/light");
  rend->add_option("--out", out, "output PNG")->required();
  rend->add_option("--height", height, "image height")->check(CLI::PositiveNumber);
  rend->add_option("--width", width, "image width")->check(CLI::PositiveNumber);

  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on the configured data");
  ev->add_option("--config", config, "config (JSON)")->required()->check(CLI::ExistingFile);
  ev->add_option("--checkpoint", checkpoint, "trained model")->required()->check(CLI::ExistingFile);
  ev->add_option("--out-dir", out_dir, "output directory")->required();

  auto* sweep = app.add_subcommand("sweep", "bit accuracy against distortion strength, one CSV per kind");
  sweep->add_option("--config", config, "config (JSON)")->required()->check(CLI::ExistingFile);
  sweep->add_option("--checkpoint", checkpoint, "trained model")->required()->check(CLI::ExistingFile);
  sweep->add_option("--out-dir", out_dir, "output directory")->required();

  auto* ft = app.add_subcommand("finetune", "fine-tune the decoder on external renders");
  ft->add_option("--config", config, "config (JSON)")->required()->check(CLI::ExistingFile);
  ft->add_option("--checkpoint", checkpoint, "trained model")->required()->check(CLI::ExistingFile);
  ft->add_option("--image-dir", image_dir, "directory of PNG renders (default: finetune.image_dir)");
  ft->add_option("--labels", labels, "JSON {file: hex message} (default: finetune.labels)");
  ft->add_option("--out", out, "output checkpoint")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*extract && image.empty() && mesh.empty()) {
      std::cerr << "extract: one of --image or --mesh is required\n";
      return kExitUsage;
    }
    if (*train) {
      TrainConfig cfg = load_config(config);
      if (steps_override) {
        cfg.steps = *steps_override;
        cfg.validate();
      }
      return with_precision(cfg, [&](auto r) { return run_train<decltype(r)>(cfg, out_dir); });
    }
    if (*embed) return run_embed(mesh, texture, message, checkpoint, prefix);
    if (*extract) return run_extract(image, mesh, camera_json, light_json, seed, checkpoint, height, width);
    if (*rend) return run_render(mesh, camera_json, light_json, seed, out, height, width);
    const TrainConfig cfg = load_config(config);
    if (*ev) return with_precision(cfg, [&](auto r) { return run_eval<decltype(r)>(cfg, checkpoint, out_dir); });
    if (*sweep) return with_precision(cfg, [&](auto r) { return run_sweep<decltype(r)>(cfg, checkpoint, out_dir); });
    if (*ft) {
      return with_precision(cfg, [&](auto r) { return run_finetune<decltype(r)>(cfg, checkpoint, image_dir, labels, out); });
    }
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}
