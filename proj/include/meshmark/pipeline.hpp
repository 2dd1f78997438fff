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

// Training, evaluation, distortion sweeps and decoder fine-tuning.

#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <functional>
#include <mutex>
#include <numeric>
#include <ostream>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "meshmark/checkpoint.hpp"
#include "meshmark/config.hpp"
#include "meshmark/distortion.hpp"
#include "meshmark/losses.hpp"
#include "meshmark/message.hpp"
#include "meshmark/metrics.hpp"
#include "meshmark/networks.hpp"
#include "meshmark/obj_io.hpp"
#include "meshmark/optimizer.hpp"
#include "meshmark/primitives.hpp"
#include "meshmark/render.hpp"
#include "meshmark/texture.hpp"

namespace meshmark {

// Worker count from MESHMARK_THREADS (default 1). Results never depend on it.
inline int thread_count() {
  const char* env = std::getenv("MESHMARK_THREADS");
  if (!env || !*env) return 1;
  char* end = nullptr;
  const long n = std::strtol(env, &end, 10);
  if (*end != '\0' || n < 1 || n > 1024) throw DataError("MESHMARK_THREADS must be an integer in [1, 1024]");
  return static_cast<int>(n);
}

namespace detail {

inline void parallel_for(int64_t n, int threads, const std::function<void(int64_t)>& fn) {
  if (threads <= 1 || n <= 1) {
    for (int64_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int64_t> next{0};
  std::exception_ptr error;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (int64_t t = 0; t < std::min<int64_t>(threads, n); ++t) {
    pool.emplace_back([&] {
      for (int64_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(mu);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

// Independent stream keyed by (seed, keys...).
inline std::mt19937_64 derive_rng(uint64_t seed, std::initializer_list<uint64_t> keys) {
  std::vector<uint32_t> words{static_cast<uint32_t>(seed), static_cast<uint32_t>(seed >> 32)};
  for (uint64_t k : keys) {
    words.push_back(static_cast<uint32_t>(k));
    words.push_back(static_cast<uint32_t>(k >> 32));
  }
  std::seed_seq seq(words.begin(), words.end());
  return std::mt19937_64(seq);
}

template <class Real>
bool columns_all_zero(const Tensor<Real>& attrs, int64_t begin, int64_t end) {
  const int64_t c = attrs.dim(1);
  for (int64_t v = 0; v < attrs.dim(0); ++v) {
    for (int64_t k = begin; k < end; ++k) {
      if (attrs[v * c + k] != Real(0)) return false;
    }
  }
  return true;
}

inline std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

}  // namespace detail

// ---------------------------------------------------------------- data

// Unit-box positions; spherical UVs when requested or absent; normals when
// absent.
template <class Real>
Mesh<Real> prepare_mesh(const Mesh<Real>& mesh, const DataConfig& d) {
  Mesh<Real> m = normalize_positions(mesh);
  if (!m.attributes.defined()) m.attributes = Tensor<Real>::zeros({m.num_vertices(), kAttributeChannels});
  if (d.spherical_uv || detail::columns_all_zero(m.attributes, kTexcoordBegin, kAttributeChannels)) {
    m = spherical_uv(m);
  }
  if (detail::columns_all_zero(m.attributes, kNormalBegin, kNormalBegin + 3)) m = compute_normals(m);
  return m;
}

// Meshes from OBJ files then procedural shapes, each with a texture of the
// configured size.
template <class Real>
std::vector<Mesh<Real>> load_dataset(const DataConfig& d) {
  std::vector<Mesh<Real>> meshes;
  for (const auto& path : d.meshes) meshes.push_back(prepare_mesh(load_obj<Real>(path), d));
  if (d.toy_meshes > 0) {
    auto toys = toy_shapes<Real>();
    if (d.toy_meshes > static_cast<int>(toys.size())) {
      throw DataError("data.toy_meshes is at most " + std::to_string(toys.size()));
    }
    for (int i = 0; i < d.toy_meshes; ++i) meshes.push_back(prepare_mesh(toys[static_cast<size_t>(i)], d));
  }
  if (meshes.empty()) throw DataError("dataset is empty");

  std::optional<TextureLibrary<Real>> library;
  if (!d.texture_dir.empty()) library = TextureLibrary<Real>::load(d.texture_dir, d.texture_size);
  auto rng = detail::derive_rng(d.texture_seed, {0x7e7});
  for (size_t i = 0; i < meshes.size(); ++i) {
    auto& m = meshes[i];
    if (d.keep_mesh_textures && m.texture.defined()) {
      m.texture = resize_bilinear(m.texture, d.texture_size, d.texture_size);
    } else if (library) {
      m.texture = library->sample(rng);
    } else {
      m.texture = synth_noise_texture<Real>(d.texture_seed * 1000003 + i, d.texture_size, d.texture_size,
                                            d.texture_sigma);
    }
  }
  return meshes;
}

// ---------------------------------------------------------------- shared

inline bool network_active(const std::string& name, EmbedStrategy s) {
  if (name.rfind("vertex.", 0) == 0) return uses_vertices(s);
  if (name.rfind("texture.", 0) == 0) return uses_texture(s);
  return true;
}

// Weight penalty over the networks a strategy trains.
template <class Real>
Tensor<Real> reg_loss(const NetworkParams<Real>& params, EmbedStrategy s) {
  Tensor<Real> total = Tensor<Real>::scalar(Real(0));
  for (const auto& p : params.entries()) {
    if (p.regularized() && network_active(p.name, s)) total = add(total, sum(square(p.value)));
  }
  return total;
}

template <class Real, class Rng>
PointLight<Real> sample_scene_light(Rng& rng, const TrainConfig& cfg) {
  PointLight<Real> light = sample_light<Real>(rng, cfg.light);
  light.color = Tensor<Real>({3}, {static_cast<Real>(cfg.light_color[0]), static_cast<Real>(cfg.light_color[1]),
                                   static_cast<Real>(cfg.light_color[2])});
  light.attenuation = cfg.attenuation;
  return light;
}

template <class Rng>
Camera sample_scene_camera(Rng& rng, const TrainConfig& cfg) {
  return sample_camera(rng, cfg.camera, static_cast<double>(cfg.render.width) / static_cast<double>(cfg.render.height));
}

template <class Real>
struct EncodedBatch {
  std::vector<Tensor<Real>> attributes;  // per mesh [N_v,5]
  Tensor<Real> textures;                 // [B,H,W,3], undefined unless the texture branch ran
  Tensor<Real> originals;                // [B,H,W,3] input textures, same condition
};

template <class Real>
EncodedBatch<Real> encode_batch(NetworkParams<Real>& p, const std::vector<const Mesh<Real>*>& meshes,
                                const std::vector<std::vector<uint8_t>>& bits, EmbedStrategy s, BatchNormMode mode) {
  EncodedBatch<Real> out;
  if (uses_vertices(s)) {
    std::vector<Tensor<Real>> vm;
    for (size_t i = 0; i < meshes.size(); ++i) vm.push_back(tile_message_vertices(meshes[i]->attributes, bits[i]));
    out.attributes = vertex_encoder_forward(p, vm, mode);
  } else {
    for (const auto* m : meshes) out.attributes.push_back(m->attributes);
  }
  if (uses_texture(s)) {
    std::vector<Tensor<Real>> tex;
    for (const auto* m : meshes) {
      if (!m->texture.defined()) throw DataError("texture strategy needs a texture on every mesh");
      if (!tex.empty() && m->texture.shape() != tex.front().shape()) {
        throw DataError("textures in a batch must share one size");
      }
      tex.push_back(m->texture);
    }
    out.originals = stack(tex);
    const int64_t h = out.originals.dim(1), w = out.originals.dim(2);
    out.textures = texture_encoder_forward(p, out.originals, tile_message_texture<Real>(bits, h, w), mode);
  }
  return out;
}

template <class Real>
Tensor<Real> batch_item(const Tensor<Real>& batch, int64_t i) {
  Shape s(batch.shape().begin() + 1, batch.shape().end());
  return reshape(slice(batch, 0, i, i + 1), s);
}

// Watermarked copy of `mesh` (inference mode).
template <class Real>
Mesh<Real> embed_mesh(const NetworkParams<Real>& params, const Mesh<Real>& mesh, const std::vector<uint8_t>& bits,
                      EmbedStrategy s) {
  if (static_cast<int>(bits.size()) != params.arch.n_bits) {
    throw DataError("message has " + std::to_string(bits.size()) + " bits but the model expects " +
                    std::to_string(params.arch.n_bits));
  }
  NetworkParams<Real> p = params;
  const auto enc = encode_batch<Real>(p, {&mesh}, {bits}, s, BatchNormMode::kEval);
  Mesh<Real> out = mesh;
  out.attributes = enc.attributes.front();
  if (enc.textures.defined()) out.texture = batch_item(enc.textures, 0);
  return out;
}

// Real-valued message estimate M_r for one [H,W,3] image (inference mode).
template <class Real>
std::vector<double> decode_image(const NetworkParams<Real>& params, const Tensor<Real>& image) {
  if (image.rank() != 3 || image.dim(2) != 3) throw ShapeError("decode: image must be [H,W,3]");
  NetworkParams<Real> p = params;
  const Tensor<Real> mr = decoder_forward(p, reshape(image, {1, image.dim(0), image.dim(1), 3}), BatchNormMode::kEval);
  return std::vector<double>(mr.data().begin(), mr.data().end());
}

inline std::vector<uint8_t> binarize_values(const std::vector<double>& mr) {
  const Tensor<double> b = binarize(Tensor<double>({static_cast<int64_t>(mr.size())}, mr));
  std::vector<uint8_t> out;
  for (double v : b.data()) out.push_back(v > 0.5 ? 1 : 0);
  return out;
}

// ---------------------------------------------------------------- training

struct StepMetrics {
  int64_t step = 0;
  double total = 0, vertex = 0, texture = 0, image = 0, message = 0, reg = 0;
  double bit_accuracy = 0;
  int64_t bits_correct = 0, bits_total = 0;
};

inline const char* kTrainCsvHeader = "step,total,vertex,texture,image,message,reg,bit_accuracy";

inline std::string csv_row(const StepMetrics& m) {
  using detail::fmt;
  return std::to_string(m.step) + "," + fmt(m.total) + "," + fmt(m.vertex) + "," + fmt(m.texture) + "," +
         fmt(m.image) + "," + fmt(m.message) + "," + fmt(m.reg) + "," + fmt(m.bit_accuracy);
}

// One optimizer update on `batch`. Fresh messages, distortions, cameras and
// lights are drawn from `rng`; each distortion is applied identically to the
// original and watermarked mesh.
template <class Real, class Rng>
StepMetrics train_step(NetworkParams<Real>& params, Optimizer<Real>& opt, const std::vector<const Mesh<Real>*>& batch,
                       const TrainConfig& cfg, Rng& rng) {
  if (batch.empty()) throw DataError("train_step: empty batch");
  const auto b = static_cast<int64_t>(batch.size());
  const int nb = params.arch.n_bits;
  std::vector<std::vector<uint8_t>> bits;
  std::vector<Real> m_flat;
  for (int64_t i = 0; i < b; ++i) {
    bits.push_back(random_bits(nb, rng));
    for (uint8_t v : bits.back()) m_flat.push_back(static_cast<Real>(v));
  }
  const Tensor<Real> m({b, nb}, std::move(m_flat));

  Tape<Real> tape;
  NetworkParams<Real> p = params.attach(tape);
  const EncodedBatch<Real> enc = encode_batch(p, batch, bits, cfg.strategy, BatchNormMode::kTrain);

  std::uniform_int_distribution<size_t> pick(0, cfg.distortions.size() - 1);
  std::vector<Tensor<Real>> io, iw;
  Tensor<Real> vloss;
  for (int64_t i = 0; i < b; ++i) {
    const Mesh<Real>& orig = *batch[static_cast<size_t>(i)];
    Mesh<Real> wm = orig;
    wm.attributes = enc.attributes[static_cast<size_t>(i)];
    if (enc.textures.defined()) wm.texture = batch_item(enc.textures, i);
    if (uses_vertices(cfg.strategy)) {
      const Tensor<Real> l = vertex_loss(orig.attributes, wm.attributes, cfg.loss.w_normal, cfg.loss.w_texcoord);
      vloss = vloss.defined() ? add(vloss, l) : l;
    }
    const DistortionSpec& spec = cfg.distortions[pick(rng)];
    Rng twin = rng;
    const Mesh<Real> orig_d = apply(orig, spec, twin);
    const Mesh<Real> wm_d = apply(wm, spec, rng);
    const Camera cam = sample_scene_camera(rng, cfg);
    const PointLight<Real> light = sample_scene_light<Real>(rng, cfg);
    io.push_back(render(orig_d, cam, light, cfg.render));
    iw.push_back(render(wm_d, cam, light, cfg.render));
  }
  const Tensor<Real> iw_all = stack(iw);
  const Tensor<Real> mr = decoder_forward(p, iw_all, BatchNormMode::kTrain);

  LossParts<Real> parts;
  if (vloss.defined()) parts.vertex = div(vloss, Tensor<Real>::scalar(static_cast<Real>(b)));
  if (enc.textures.defined()) parts.texture = texture_loss(enc.originals, enc.textures);
  parts.image = image_loss(stack(io), iw_all);
  parts.message = message_loss(m, mr);
  parts.reg = reg_loss(p, cfg.strategy);
  const Tensor<Real> total = total_loss(parts, cfg.loss);

  StepMetrics out;
  auto value = [](const Tensor<Real>& t) { return t.defined() ? static_cast<double>(t.item()) : 0.0; };
  out.total = value(total);
  out.vertex = value(parts.vertex);
  out.texture = value(parts.texture);
  out.image = value(parts.image);
  out.message = value(parts.message);
  out.reg = value(parts.reg);
  if (!std::isfinite(out.total)) {
    throw NumericError("non-finite training loss (vertex " + detail::fmt(out.vertex) + ", texture " +
                       detail::fmt(out.texture) + ", image " + detail::fmt(out.image) + ", message " +
                       detail::fmt(out.message) + ", reg " + detail::fmt(out.reg) + ")");
  }

  std::vector<size_t> index;
  std::vector<Tensor<Real>> leaves;
  for (size_t k = 0; k < p.entries().size(); ++k) {
    const auto& e = p.entries()[k];
    if (e.trainable() && network_active(e.name, cfg.strategy)) {
      index.push_back(k);
      leaves.push_back(e.value);
    }
  }
  const std::vector<Tensor<Real>> grads = tape.backward(total, leaves);
  for (size_t k = 0; k < grads.size(); ++k) {
    for (Real g : grads[k].data()) {
      if (!std::isfinite(static_cast<double>(g))) {
        throw NumericError("non-finite gradient for parameter '" + p.entries()[index[k]].name + "'");
      }
    }
  }
  params.absorb_stats(p);
  opt.step(params, index, grads);

  const Tensor<Real> mrb = binarize(mr.detach());
  for (int64_t i = 0; i < mrb.size(); ++i) out.bits_correct += mrb[i] == m[i] ? 1 : 0;
  out.bits_total = mrb.size();
  out.bit_accuracy = static_cast<double>(out.bits_correct) / static_cast<double>(out.bits_total);
  return out;
}

// Owns params, optimizer state and the sampling stream for one run.
template <class Real>
class Trainer {
 public:
  Trainer(TrainConfig cfg, std::vector<Mesh<Real>> data)
      : cfg_(std::move(cfg)), data_(std::move(data)), opt_(cfg_.optimizer) {
    cfg_.validate();
    if (data_.empty()) throw DataError("trainer: no training meshes");
    auto init = detail::derive_rng(cfg_.seed, {0});
    params_ = init_params<Real>(init, cfg_.arch);
    rng_ = detail::derive_rng(cfg_.seed, {1});
  }

  // Continues from existing parameters with fresh optimizer state.
  Trainer(TrainConfig cfg, std::vector<Mesh<Real>> data, NetworkParams<Real> params, int64_t step)
      : Trainer(std::move(cfg), std::move(data)) {
    if (params.arch.n_bits != cfg_.n_bits) throw DataError("trainer: checkpoint N_b differs from config");
    params_ = std::move(params);
    step_ = step;
  }

  StepMetrics step() {
    std::vector<const Mesh<Real>*> batch;
    for (int i = 0; i < cfg_.batch_size; ++i) {
      if (cursor_ == order_.size()) {
        order_.resize(data_.size());
        std::iota(order_.begin(), order_.end(), size_t{0});
        std::shuffle(order_.begin(), order_.end(), rng_);
        cursor_ = 0;
      }
      batch.push_back(&data_[order_[cursor_++]]);
    }
    StepMetrics m = train_step(params_, opt_, batch, cfg_, rng_);
    m.step = ++step_;
    return m;
  }

  // Runs `steps` updates, writing a CSV row every log_every steps and on the
  // last one.
  std::vector<StepMetrics> run(int64_t steps, std::ostream* csv = nullptr,
                               const std::function<void(const StepMetrics&)>& on_step = {}) {
    std::vector<StepMetrics> history;
    if (csv) *csv << kTrainCsvHeader << "\n";
    for (int64_t s = 0; s < steps; ++s) {
      const StepMetrics m = step();
      history.push_back(m);
      if (csv && (m.step % cfg_.log_every == 0 || s + 1 == steps)) *csv << csv_row(m) << "\n";
      if (on_step) on_step(m);
    }
    if (csv) csv->flush();
    return history;
  }

  const NetworkParams<Real>& params() const { return params_; }
  NetworkParams<Real>& params() { return params_; }
  const TrainConfig& config() const { return cfg_; }
  const std::vector<Mesh<Real>>& data() const { return data_; }
  int64_t steps_done() const { return step_; }

 private:
  TrainConfig cfg_;
  std::vector<Mesh<Real>> data_;
  NetworkParams<Real> params_;
  Optimizer<Real> opt_;
  std::mt19937_64 rng_;
  std::vector<size_t> order_;
  size_t cursor_ = 0;
  int64_t step_ = 0;
};

// ---------------------------------------------------------------- evaluation

struct QualityStats {
  double psnr = 0, ssim = 0, l1 = 0;
};

struct DistortionRow {
  DistortionSpec spec;
  double bit_accuracy = 0;
  int64_t bits = 0;
};

inline std::string distortion_label(const DistortionSpec& d) {
  switch (d.kind) {
    case DistortionKind::kNone: return "none";
    case DistortionKind::kNoise: return "noise(sigma=" + detail::fmt(d.sigma) + ")";
    case DistortionKind::kRotation: return "rotation(+-" + detail::fmt(d.max_angle) + " rad)";
    case DistortionKind::kScaling: return "scaling(<" + detail::fmt(d.max_scale) + ")";
    case DistortionKind::kCropping: return "cropping(<" + detail::fmt(d.max_crop) + ")";
  }
  return "unknown";
}

struct EvalReport {
  int n_bits = 0;
  int meshes = 0;
  int views = 0;
  double bit_accuracy = 0;       // mean over every decoded bit
  double bit_accuracy_best = 0;  // best view index
  double bit_accuracy_std = 0;   // spread over view indices
  int64_t bits = 0;
  QualityStats image, texture;
  double normal_l1 = 0, texcoord_l1 = 0;
  std::vector<DistortionRow> table;

  Json to_json() const {
    Json rows = Json::array();
    for (const auto& r : table) {
      rows.push_back({{"distortion", distortion_label(r.spec)}, {"spec", distortion_to_json(r.spec)},
                      {"bit_accuracy", r.bit_accuracy}, {"bits", r.bits}});
    }
    return {{"n_bits", n_bits},
            {"meshes", meshes},
            {"views", views},
            {"bit_accuracy", {{"mean", bit_accuracy}, {"best", bit_accuracy_best}, {"std", bit_accuracy_std}}},
            {"bits", bits},
            {"image", {{"psnr", image.psnr}, {"ssim", image.ssim}, {"l1", image.l1}}},
            {"texture", {{"psnr", texture.psnr}, {"ssim", texture.ssim}, {"l1", texture.l1}}},
            {"geometry_l1", {{"normal", normal_l1}, {"texcoord", texcoord_l1}}},
            {"distortions", rows}};
  }

  std::string table_csv() const {
    std::string s = "distortion,bit_accuracy,bits\n";
    for (const auto& r : table) s += distortion_label(r.spec) + "," + detail::fmt(r.bit_accuracy) + "," + std::to_string(r.bits) + "\n";
    return s;
  }
};

template <class Real>
struct EvalCase {
  Mesh<Real> original;
  Mesh<Real> watermarked;
  std::vector<uint8_t> bits;
};

// Fixed per-mesh messages and their watermarked meshes.
template <class Real>
std::vector<EvalCase<Real>> prepare_eval_cases(const NetworkParams<Real>& params, const std::vector<Mesh<Real>>& meshes,
                                               EmbedStrategy strategy, const EvalConfig& e) {
  size_t n = meshes.size();
  if (e.max_meshes > 0) n = std::min(n, static_cast<size_t>(e.max_meshes));
  std::vector<EvalCase<Real>> cases(n);
  detail::parallel_for(static_cast<int64_t>(n), thread_count(), [&](int64_t i) {
    auto rng = detail::derive_rng(e.seed, {1, static_cast<uint64_t>(i)});
    auto& c = cases[static_cast<size_t>(i)];
    c.original = meshes[static_cast<size_t>(i)];
    c.bits = random_bits(params.arch.n_bits, rng);
    c.watermarked = embed_mesh(params, c.original, c.bits, strategy);
  });
  return cases;
}

struct ViewResult {
  int64_t correct = 0, total = 0;
  double psnr = 0, ssim = 0, l1 = 0;
};

// Decodes every (mesh, view) pair under `spec`; result[i][v]. Cameras depend
// only on (seed, mesh, view) so rows of a table see the same views.
template <class Real>
std::vector<std::vector<ViewResult>> decode_views(const NetworkParams<Real>& params,
                                                  const std::vector<EvalCase<Real>>& cases, const DistortionSpec& spec,
                                                  const TrainConfig& cfg, int views, bool image_metrics) {
  std::vector<std::vector<ViewResult>> out(cases.size(), std::vector<ViewResult>(static_cast<size_t>(views)));
  const auto n = static_cast<int64_t>(cases.size());
  detail::parallel_for(n * views, thread_count(), [&](int64_t job) {
    const int64_t i = job / views, v = job % views;
    const auto& c = cases[static_cast<size_t>(i)];
    auto view_rng = detail::derive_rng(cfg.eval.seed, {2, static_cast<uint64_t>(i), static_cast<uint64_t>(v)});
    const Camera cam = sample_scene_camera(view_rng, cfg);
    const PointLight<Real> light = sample_scene_light<Real>(view_rng, cfg);
    auto dist_rng = detail::derive_rng(cfg.eval.seed, {3, static_cast<uint64_t>(spec.kind), static_cast<uint64_t>(i),
                                                       static_cast<uint64_t>(v)});
    auto twin = dist_rng;
    const Tensor<Real> iw = render(apply(c.watermarked, spec, dist_rng), cam, light, cfg.render);
    const auto bits = binarize_values(decode_image(params, iw));
    ViewResult r;
    r.correct = count_matching_bits(bits, c.bits);
    r.total = static_cast<int64_t>(c.bits.size());
    if (image_metrics) {
      const Tensor<Real> io = render(apply(c.original, spec, twin), cam, light, cfg.render);
      r.psnr = psnr(io, iw);
      r.ssim = ssim(io, iw);
      r.l1 = mean_abs_error(io, iw);
    }
    out[static_cast<size_t>(i)][static_cast<size_t>(v)] = r;
  });
  return out;
}

inline double accuracy_of(const std::vector<std::vector<ViewResult>>& r) {
  int64_t c = 0, t = 0;
  for (const auto& row : r) {
    for (const auto& v : row) {
      c += v.correct;
      t += v.total;
    }
  }
  return t ? static_cast<double>(c) / static_cast<double>(t) : 0.0;
}

// Bit accuracy and quality metrics over cfg.eval.views sampled views of each
// mesh, plus the per-distortion table.
template <class Real>
EvalReport evaluate(const NetworkParams<Real>& params, const std::vector<Mesh<Real>>& meshes, const TrainConfig& cfg,
                    EmbedStrategy strategy) {
  const auto cases = prepare_eval_cases(params, meshes, strategy, cfg.eval);
  const int views = cfg.eval.views;
  EvalReport rep;
  rep.n_bits = params.arch.n_bits;
  rep.meshes = static_cast<int>(cases.size());
  rep.views = views;

  const auto base = decode_views(params, cases, DistortionSpec{}, cfg, views, true);
  std::vector<double> per_view;
  int64_t correct = 0;
  for (int v = 0; v < views; ++v) {
    int64_t c = 0, t = 0;
    for (const auto& row : base) {
      c += row[static_cast<size_t>(v)].correct;
      t += row[static_cast<size_t>(v)].total;
      rep.image.psnr += row[static_cast<size_t>(v)].psnr;
      rep.image.ssim += row[static_cast<size_t>(v)].ssim;
      rep.image.l1 += row[static_cast<size_t>(v)].l1;
    }
    correct += c;
    rep.bits += t;
    per_view.push_back(static_cast<double>(c) / static_cast<double>(t));
  }
  const double pairs = static_cast<double>(cases.size()) * views;
  rep.image.psnr /= pairs;
  rep.image.ssim /= pairs;
  rep.image.l1 /= pairs;
  rep.bit_accuracy = static_cast<double>(correct) / static_cast<double>(rep.bits);
  rep.bit_accuracy_best = *std::max_element(per_view.begin(), per_view.end());
  double var = 0;
  for (double a : per_view) var += (a - rep.bit_accuracy) * (a - rep.bit_accuracy);
  rep.bit_accuracy_std = std::sqrt(var / static_cast<double>(per_view.size()));

  int textured = 0;
  for (const auto& c : cases) {
    const auto& a = c.original.attributes;
    const auto& b = c.watermarked.attributes;
    double dn = 0, dt = 0;
    for (int64_t v = 0; v < a.dim(0); ++v) {
      for (int64_t k = 0; k < kAttributeChannels; ++k) {
        const double d = std::abs(static_cast<double>(a[v * kAttributeChannels + k]) -
                                  static_cast<double>(b[v * kAttributeChannels + k]));
        (k < kTexcoordBegin ? dn : dt) += d;
      }
    }
    rep.normal_l1 += dn / static_cast<double>(a.dim(0) * 3);
    rep.texcoord_l1 += dt / static_cast<double>(a.dim(0) * 2);
    if (c.original.texture.defined() && c.watermarked.texture.defined()) {
      rep.texture.psnr += psnr(c.original.texture, c.watermarked.texture);
      rep.texture.ssim += ssim(c.original.texture, c.watermarked.texture);
      rep.texture.l1 += mean_abs_error(c.original.texture, c.watermarked.texture);
      ++textured;
    }
  }
  rep.normal_l1 /= static_cast<double>(cases.size());
  rep.texcoord_l1 /= static_cast<double>(cases.size());
  if (textured) {
    rep.texture.psnr /= textured;
    rep.texture.ssim /= textured;
    rep.texture.l1 /= textured;
  }

  for (const auto& spec : cfg.eval.table) {
    DistortionRow row{spec, rep.bit_accuracy, rep.bits};
    if (spec.kind != DistortionKind::kNone) {
      const auto r = decode_views(params, cases, spec, cfg, views, false);
      row.bit_accuracy = accuracy_of(r);
    }
    rep.table.push_back(row);
  }
  return rep;
}

struct CurvePoint {
  double strength = 0;
  double bit_accuracy = 0;
};

// Bit accuracy per distortion strength over the eval views.
template <class Real>
std::vector<CurvePoint> distortion_curve(const NetworkParams<Real>& params, const std::vector<Mesh<Real>>& meshes,
                                         DistortionKind kind, const std::vector<double>& strengths,
                                         const TrainConfig& cfg, EmbedStrategy strategy) {
  if (!std::is_sorted(strengths.begin(), strengths.end())) throw DataError("sweep strengths must be ascending");
  const auto cases = prepare_eval_cases(params, meshes, strategy, cfg.eval);
  std::vector<CurvePoint> out;
  for (double s : strengths) {
    const DistortionSpec spec = s == 0 ? DistortionSpec{} : DistortionSpec::of(kind, s);
    out.push_back({s, accuracy_of(decode_views(params, cases, spec, cfg, cfg.eval.views, false))});
  }
  return out;
}

inline std::string curve_csv(const std::vector<CurvePoint>& points, int n_bits) {
  std::string s = "strength,bit_accuracy,n_bits\n";
  for (const auto& p : points) s += detail::fmt(p.strength) + "," + detail::fmt(p.bit_accuracy) + "," + std::to_string(n_bits) + "\n";
  return s;
}

// ---------------------------------------------------------------- fine-tuning

template <class Real>
struct LabeledImages {
  std::vector<std::string> names;
  std::vector<Tensor<Real>> images;
  std::vector<std::vector<uint8_t>> labels;
};

// PNGs in `dir` paired with hex messages from a JSON object {file: hex}.
template <class Real>
LabeledImages<Real> load_labeled_images(const std::string& dir, const std::string& labels_path, int n_bits) {
  if (!std::filesystem::is_directory(dir)) throw DataError("image directory '" + dir + "' not found");
  const Json labels = read_json_file(labels_path);
  if (!labels.is_object()) throw DataError("labels file must map image names to hex messages");
  std::vector<std::string> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".png") files.push_back(entry.path().filename().string());
  }
  std::sort(files.begin(), files.end());
  if (files.size() != labels.size()) {
    throw DataError("found " + std::to_string(files.size()) + " images but " + std::to_string(labels.size()) +
                    " labels");
  }
  LabeledImages<Real> out;
  for (const auto& f : files) {
    if (!labels.contains(f)) throw DataError("image '" + f + "' has no label");
    if (!labels.at(f).is_string()) throw DataError("label for '" + f + "' must be a hex string");
    out.names.push_back(f);
    out.images.push_back(read_png<Real>((std::filesystem::path(dir) / f).string(), AlphaPolicy::kCompositeBlack));
    out.labels.push_back(bits_from_hex(labels.at(f).get<std::string>(), n_bits));
  }
  return out;
}

struct FineTuneReport {
  double before = 0;
  double after = 0;
  int64_t images = 0;
  int64_t steps = 0;
};

template <class Real>
double labeled_accuracy(const NetworkParams<Real>& params, const LabeledImages<Real>& set) {
  int64_t c = 0, t = 0;
  for (size_t i = 0; i < set.images.size(); ++i) {
    c += count_matching_bits(binarize_values(decode_image(params, set.images[i])), set.labels[i]);
    t += static_cast<int64_t>(set.labels[i].size());
  }
  return t ? static_cast<double>(c) / static_cast<double>(t) : 0.0;
}

// Trains decoder parameters only, on message loss, with encoders frozen.
template <class Real>
FineTuneReport fine_tune_decoder(NetworkParams<Real>& params, const LabeledImages<Real>& set, const FinetuneConfig& fc,
                                 const OptimizerConfig& base, uint64_t seed) {
  if (set.images.size() != set.labels.size()) throw DataError("fine-tune: image/label count mismatch");
  if (set.images.empty()) throw DataError("fine-tune: no images");
  for (const auto& img : set.images) {
    if (img.shape() != set.images.front().shape()) throw DataError("fine-tune: images must share one size");
  }
  for (const auto& l : set.labels) {
    if (static_cast<int>(l.size()) != params.arch.n_bits) throw DataError("fine-tune: label length differs from N_b");
  }
  FineTuneReport rep;
  rep.images = static_cast<int64_t>(set.images.size());
  rep.before = labeled_accuracy(params, set);

  OptimizerConfig oc = base;
  oc.learning_rate = fc.learning_rate;
  Optimizer<Real> opt(oc);
  auto rng = detail::derive_rng(seed, {4});
  std::uniform_int_distribution<size_t> pick(0, set.images.size() - 1);
  const int nb = params.arch.n_bits;
  for (int64_t s = 0; s < fc.steps; ++s) {
    std::vector<Tensor<Real>> imgs;
    std::vector<Real> m;
    for (int i = 0; i < fc.batch_size; ++i) {
      const size_t k = pick(rng);
      imgs.push_back(set.images[k]);
      for (uint8_t bit : set.labels[k]) m.push_back(static_cast<Real>(bit));
    }
    Tape<Real> tape;
    NetworkParams<Real> p = params.attach(tape);
    const Tensor<Real> mr = decoder_forward(p, stack(imgs), BatchNormMode::kTrain);
    const Tensor<Real> loss = message_loss(Tensor<Real>({fc.batch_size, nb}, std::move(m)), mr);
    if (!std::isfinite(static_cast<double>(loss.item()))) throw NumericError("non-finite fine-tuning loss");
    std::vector<size_t> index;
    std::vector<Tensor<Real>> leaves;
    for (size_t k = 0; k < p.entries().size(); ++k) {
      const auto& e = p.entries()[k];
      if (e.trainable() && e.name.rfind("decoder.", 0) == 0) {
        index.push_back(k);
        leaves.push_back(e.value);
      }
    }
    const auto grads = tape.backward(loss, leaves);
    params.absorb_stats(p);
    opt.step(params, index, grads);
    ++rep.steps;
  }
  rep.after = labeled_accuracy(params, set);
  return rep;
}

}  // namespace meshmark
