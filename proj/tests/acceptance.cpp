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

// Acceptance suite: prints one PASS/FAIL line per criterion and exits 1 when
// any selected criterion fails. Criteria 5-8 train the toy model and take
// about 15 minutes on one core; select a subset with --only.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "meshmark/checkpoint.hpp"
#include "meshmark/grad_check.hpp"
#include "meshmark/pipeline.hpp"
#include "raster_oracle.hpp"

namespace meshmark {
namespace {

using T = Tensor<double>;
using P = NetworkParams<double>;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string num(double v) { return detail::fmt(v); }

// Fixed non-uniform weights so every output element reaches the scalar.
T weighted_sum(const T& y) {
  std::vector<double> w(static_cast<size_t>(y.size()));
  for (size_t i = 0; i < w.size(); ++i) w[i] = 0.3 + std::sin(1.7 * static_cast<double>(i) + 0.4);
  return sum(mul(y, T(y.shape(), std::move(w))));
}

// Uniform values in +-[lo, hi] so kinked ops stay off their kinks.
T away_from_zero(const Shape& s, uint64_t seed, double lo = 0.05, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> mag(lo, hi);
  std::bernoulli_distribution neg(0.5);
  int64_t n = 1;
  for (auto d : s) n *= d;
  std::vector<double> v(static_cast<size_t>(n));
  for (auto& x : v) x = neg(rng) ? -mag(rng) : mag(rng);
  return T(s, std::move(v));
}

T smooth_texture(int64_t h, int64_t w, double phase) {
  std::vector<double> v(static_cast<size_t>(h * w * 3));
  for (size_t i = 0; i < v.size(); ++i) v[i] = 0.5 + 0.2 * std::sin(0.37 * static_cast<double>(i) + phase);
  return T({h, w, 3}, std::move(v));
}

Mesh<double> quad(double tilt, double phase) {
  Mesh<double> m;
  m.positions = T({4, 3}, {-0.8, 0, -0.7, 0.9, tilt, -0.8, 0.7, 0, 0.8, -0.9, -tilt, 0.75});
  m.attributes = T({4, 5}, {0.1, -1, 0.2, 0.1, 0.15,   //
                            -0.2, -0.9, 0.1, 0.8, 0.2,  //
                            0.15, -1, -0.3, 0.85, 0.9,  //
                            -0.1, -0.8, 0.05, 0.2, 0.8});
  m.faces = {{0, 1, 2}, {0, 2, 3}};
  m.texture = smooth_texture(16, 16, phase);
  return m;
}

Camera front_camera() {
  Camera cam;
  cam.position = {0, -3, 0};
  cam.look_at = {0, 0, 0};
  cam.up = {0, 0, 1};
  cam.aspect = 1;
  return cam;
}

PointLight<double> side_light() {
  PointLight<double> l;
  l.position = {1.0, -2.0, 1.5};
  l.color = T({3}, {0.9, 1.0, 0.8});
  return l;
}

// ---------------------------------------------------------------------------

Outcome gradients() {
  struct Worst {
    std::string name;
    double err = 0;
  } worst;
  double limit = 1e-3;
  int checks = 0;
  int64_t coords = 0, kinks = 0;
  auto run = [&](const std::string& name, auto&& f, const T& x, int64_t max_coords = 0) {
    GradCheckOptions o;
    o.eps = 1e-5;
    o.max_coords = max_coords;
    o.seed = static_cast<uint64_t>(checks);
    o.skip_kinks = true;
    const GradCheckResult r = grad_check_report(f, x, o);
    const double e = r.max_rel_err;
    coords += r.coords_checked;
    kinks += r.kinks_skipped;
    ++checks;
    if (e >= worst.err) worst = {name, e};
  };

  // Layer ops.
  const T a = away_from_zero({3, 4}, 1), b = away_from_zero({4, 5}, 2);
  run("matmul", [&](const T& x) { return weighted_sum(matmul(x, b)); }, a);
  run("relu", [&](const T& x) { return weighted_sum(relu(x)); }, a);
  run("abs", [&](const T& x) { return weighted_sum(abs(x)); }, a);
  run("sigmoid", [&](const T& x) { return weighted_sum(sigmoid(x)); }, a);
  run("clamp", [&](const T& x) { return weighted_sum(clamp(x, -0.5, 0.5)); }, away_from_zero({3, 4}, 3, 0.05, 0.45));
  run("mean_axis", [&](const T& x) { return weighted_sum(mean_axis(x, 0)); }, a);
  run("concat/slice", [&](const T& x) { return weighted_sum(slice(concat(std::vector<T>{x, x}, 1), 1, 2, 7)); }, a);
  run("gather/scatter", [&](const T& x) { return weighted_sum(scatter_rows(gather_rows(x, {2, 0, 2}), {1, 3, 4}, 5)); }, a);
  const T img = away_from_zero({2, 6, 7, 3}, 4);
  const T kernel = away_from_zero({3, 3, 3, 4}, 5, 0.05, 0.5);
  for (int stride : {1, 2}) {
    run("conv2d stride " + std::to_string(stride),
        [&](const T& x) { return weighted_sum(conv2d(x, kernel, Padding::kSame, stride)); }, img);
    run("conv2d kernel stride " + std::to_string(stride),
        [&](const T& k) { return weighted_sum(conv2d(img, k, Padding::kSame, stride)); }, kernel);
  }
  const T gamma({3}, {1.1, 0.9, 1.3}), beta({3}, {0.1, -0.2, 0.05});
  run("batchnorm", [&](const T& x) {
    T rm = T::zeros({3}), rv = T::full({3}, 1.0);
    return weighted_sum(batchnorm(x, gamma, beta, rm, rv, BatchNormMode::kTrain));
  }, img);
  run("global mean pool", [&](const T& x) { return weighted_sum(pool(x, PoolKind::kGlobalMean)); }, img);
  run("global max pool", [&](const T& x) { return weighted_sum(pool(x, PoolKind::kGlobalMax)); }, img);
  run("window max pool", [&](const T& x) { return weighted_sum(pool(x, PoolKind::kMaxWindow)); }, away_from_zero({1, 4, 4, 2}, 6));

  // Renderer stages and networks.
  const Mesh<double> m0 = quad(0.1, 0.2), m1 = quad(-0.15, 1.1);
  const Camera cam = front_camera();
  const PointLight<double> light = side_light();
  RenderOptions ro;
  ro.height = 32;
  ro.width = 32;
  run("render wrt attributes", [&](const T& x) {
    Mesh<double> m = m0;
    m.attributes = x;
    return weighted_sum(render(m, cam, light, ro));
  }, m0.attributes);
  run("render wrt texture", [&](const T& x) {
    Mesh<double> m = m0;
    m.texture = x;
    return weighted_sum(render(m, cam, light, ro));
  }, m0.texture, 200);

  ArchConfig arch;
  arch.n_bits = 4;
  arch.vertex_mlp = {8, 12, 16};
  arch.vertex_head = 10;
  arch.texture_width = 6;
  arch.decoder_width = 6;
  std::mt19937_64 init(3);
  P params = init_params<double>(init, arch);
  std::mt19937_64 heads(4);
  for (const char* name : {"vertex.head1.w", "vertex.head1.b", "texture.out.w", "decoder.fc.b"}) {
    params.at(name) = detail::uniform_tensor<double>(params.at(name).shape(), 0.05, heads);
  }
  const std::vector<std::vector<uint8_t>> bits = {{1, 0, 1, 1}, {0, 1, 0, 0}};
  const T msg({2, 4}, {1, 0, 1, 1, 0, 1, 0, 0});
  LossWeights weights;

  auto chain = [&](const P& q_in, const Mesh<double>& a0) {
    P q = q_in;
    const EmbedStrategy s = EmbedStrategy::kVertexAndTexture;
    const auto enc = encode_batch<double>(q, {&a0, &m1}, bits, s, BatchNormMode::kTrain);
    std::vector<T> io, iw;
    LossParts<double> parts;
    const Mesh<double>* orig[2] = {&a0, &m1};
    for (int i = 0; i < 2; ++i) {
      Mesh<double> wm = *orig[i];
      wm.attributes = enc.attributes[static_cast<size_t>(i)];
      wm.texture = batch_item(enc.textures, i);
      const T l = vertex_loss(orig[i]->attributes, wm.attributes);
      parts.vertex = parts.vertex.defined() ? add(parts.vertex, l) : l;
      io.push_back(render(*orig[i], cam, light, ro));
      iw.push_back(render(wm, cam, light, ro));
    }
    const T iw_all = stack(iw);
    parts.texture = texture_loss(enc.originals, enc.textures);
    parts.image = image_loss(stack(io), iw_all);
    parts.message = message_loss(msg, decoder_forward(q, iw_all, BatchNormMode::kTrain));
    parts.reg = reg_loss(q, s);
    return total_loss(parts, weights);
  };
  run("full chain wrt parameters", [&](const T& flat) { return chain(params.with_trainable(flat), m0); },
      params.flat_trainable(), 150);
  run("full chain wrt attributes", [&](const T& x) {
    Mesh<double> m = m0;
    m.attributes = x;
    return chain(params, m);
  }, m0.attributes);
  run("full chain wrt texture", [&](const T& x) {
    Mesh<double> m = m0;
    m.texture = x;
    return chain(params, m);
  }, m0.texture, 150);

  return {worst.err < limit, std::to_string(checks) + " checks over " + std::to_string(coords) + " coordinates (" +
                                std::to_string(kinks) + " within eps of a kink skipped), worst " + worst.name +
                                " rel err " + num(worst.err)};
}

Outcome rasterizer() {
  std::mt19937_64 rng(2026);
  std::uniform_real_distribution<double> u(-1.2, 1.2), depth(0.5, 4.0);
  Camera cam;
  cam.position = {0, 0, 0};
  cam.look_at = {0, 0, -1};
  cam.up = {0, 1, 0};
  cam.aspect = 1;
  int64_t id_mismatch = 0, covered = 0;
  double bary_err = 0, sum_err = 0;
  for (int scene = 0; scene < 100; ++scene) {
    const int nf = 1 + scene % 8;
    std::vector<double> p;
    std::vector<Face> faces;
    for (int f = 0; f < nf; ++f) {
      for (int k = 0; k < 3; ++k) {
        const double z = -depth(rng);
        p.insert(p.end(), {u(rng) * -z * 0.6, u(rng) * -z * 0.6, z});
      }
      faces.push_back({3 * f, 3 * f + 1, 3 * f + 2});
    }
    const T clip = project_vertices(T({3 * nf, 3}, p), cam);
    const auto r = rasterize(clip, faces, 32, 32);
    const auto o = testing::oracle_raster(clip, faces, 32, 32);
    for (size_t px = 0; px < o.size(); ++px) {
      if (r.tri_id[px] != o[px].tri) {
        ++id_mismatch;
        continue;
      }
      if (r.tri_id[px] < 0) continue;
      ++covered;
      double s = 0;
      for (size_t k = 0; k < 3; ++k) {
        const double v = r.bary[static_cast<int64_t>(px * 3 + k)];
        bary_err = std::max(bary_err, std::abs(v - o[px].bary[k]));
        s += v;
      }
      sum_err = std::max(sum_err, std::abs(s - 1.0));
    }
  }
  const bool ok = id_mismatch == 0 && bary_err <= 1e-9 && sum_err <= 1e-6 && covered > 0;
  return {ok, "100 scenes, " + std::to_string(covered) + " covered pixels, " + std::to_string(id_mismatch) +
                  " id mismatches, max bary err " + num(bary_err) + ", max sum err " + num(sum_err)};
}

Outcome identity() {
  TrainConfig c;
  c.n_bits = 4;
  c.arch.n_bits = 4;
  c.render.height = 64;
  c.render.width = 96;
  c.data.toy_meshes = 4;
  const auto meshes = load_dataset<double>(c.data);
  std::mt19937_64 init(5);
  const P params = init_params<double>(init, c.arch);
  std::mt19937_64 rng(6);
  bool identical = true;
  double worst_loss = 0, min_psnr = kPsnrCap, min_ssim = 1.0;
  for (const auto& mesh : meshes) {
    const auto bits = random_bits(4, rng);
    const Mesh<double> wm = embed_mesh(params, mesh, bits, EmbedStrategy::kVertexAndTexture);
    const Camera cam = sample_scene_camera(rng, c);
    const auto light = sample_scene_light<double>(rng, c);
    const T io = render(mesh, cam, light, c.render), iw = render(wm, cam, light, c.render);
    identical = identical && io.vec() == iw.vec();
    const std::vector<double> losses = {
        vertex_loss(mesh.attributes, wm.attributes, 1.0, 0.0).item(),
        vertex_loss(mesh.attributes, wm.attributes, 0.0, 1.0).item(),
        texture_loss(mesh.texture, wm.texture).item(),
        image_loss(io, iw).item(),
    };
    for (double l : losses) worst_loss = std::max(worst_loss, std::abs(l));
    min_psnr = std::min(min_psnr, psnr(io, iw));
    min_ssim = std::min(min_ssim, ssim(io, iw));
  }
  const bool ok = identical && worst_loss == 0.0 && min_psnr == kPsnrCap && min_ssim == 1.0;
  return {ok, std::string("renders ") + (identical ? "bit-identical" : "differ") + ", max data loss " +
                  num(worst_loss) + ", psnr " + num(min_psnr) + ", ssim " + num(min_ssim)};
}

Outcome binarization() {
  const std::vector<double> grid = {0.0, 0.1, 0.25, 0.4999999999, 0.5, 0.5000000001, 0.75, 0.9, 1.0};
  const auto g = static_cast<int64_t>(grid.size());
  int64_t cases = 0, wrong = 0;
  for (int64_t code = 0; code < g * g * g * g; ++code) {
    std::vector<double> v;
    for (int64_t k = 0, c = code; k < 4; ++k, c /= g) v.push_back(grid[static_cast<size_t>(c % g)]);
    const T out = binarize(T({1, 4}, v));
    for (size_t k = 0; k < 4; ++k) {
      const double d = v[k] - 0.5;
      const double expect = std::clamp(d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0), 0.0, 1.0);
      if (out[static_cast<int64_t>(k)] != expect) ++wrong;
    }
    ++cases;
  }
  return {wrong == 0, std::to_string(cases) + " messages, " + std::to_string(wrong) + " wrong bits"};
}

// ---------------------------------------------------------------------------

// Bit accuracy with a fresh message, view and light per decoded image, so
// the decoded bits are independent draws.
double fresh_accuracy(const NetworkParams<float>& params, const std::vector<Mesh<float>>& meshes,
                      const TrainConfig& c, const DistortionSpec& spec, int64_t min_bits, int64_t* bits_out = nullptr) {
  auto rng = detail::derive_rng(c.eval.seed, {9, static_cast<uint64_t>(spec.kind)});
  int64_t correct = 0, total = 0;
  while (total < min_bits) {
    for (const auto& mesh : meshes) {
      const auto bits = random_bits(c.n_bits, rng);
      const Mesh<float> wm = apply(embed_mesh(params, mesh, bits, c.strategy), spec, rng);
      const Camera cam = sample_scene_camera(rng, c);
      const auto light = sample_scene_light<float>(rng, c);
      const auto decoded = binarize_values(decode_image(params, render(wm, cam, light, c.render)));
      for (size_t k = 0; k < bits.size(); ++k) correct += decoded[k] == bits[k] ? 1 : 0;
      total += static_cast<int64_t>(bits.size());
    }
  }
  if (bits_out) *bits_out = total;
  return static_cast<double>(correct) / static_cast<double>(total);
}

struct ToyRun {
  std::string csv;
  EvalReport report;
  NetworkParams<float> params;
  double accuracy = 0, rotation = 0, noise = 0;  // fresh-message accuracies
  int64_t bits = 0;
  double train_tail = 0;  // mean train bit accuracy over the last 100 steps
  double seconds = 0;
};

constexpr int64_t kEvalBits = 2048;

ToyRun train_toy(TrainConfig c, const std::string& csv_path) {
  const auto t0 = std::chrono::steady_clock::now();
  Trainer<float> trainer(c, load_dataset<float>(c.data));
  std::ostringstream csv;
  double tail = 0;
  int64_t tail_n = 0;
  trainer.run(c.steps, &csv, [&](const StepMetrics& m) {
    if (m.step > c.steps - 100) {
      tail += m.bit_accuracy;
      ++tail_n;
    }
    if (m.step % 500 == 0) std::cerr << "  step " << m.step << " bit_accuracy " << m.bit_accuracy << "\n";
  });
  ToyRun r;
  r.csv = csv.str();
  std::ofstream(csv_path) << r.csv;
  r.params = trainer.params();
  r.report = evaluate(r.params, trainer.data(), c, c.strategy);
  r.accuracy = fresh_accuracy(r.params, trainer.data(), c, DistortionSpec{}, kEvalBits, &r.bits);
  r.rotation = fresh_accuracy(r.params, trainer.data(), c,
                              DistortionSpec::of(DistortionKind::kRotation, std::numbers::pi / 6), kEvalBits);
  r.noise = fresh_accuracy(r.params, trainer.data(), c, DistortionSpec::of(DistortionKind::kNoise, 0.01), kEvalBits);
  r.train_tail = tail_n ? tail / static_cast<double>(tail_n) : 0.0;
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

Outcome chance(const TrainConfig& c) {
  const auto meshes = load_dataset<float>(c.data);
  auto init = detail::derive_rng(c.seed, {0});
  const auto params = init_params<float>(init, c.arch);
  int64_t bits = 0;
  const double acc = fresh_accuracy(params, meshes, c, DistortionSpec{}, 512, &bits);
  return {acc >= 0.4 && acc <= 0.6, "untrained bit accuracy " + num(acc) + " over " + std::to_string(bits) + " bits"};
}

void report(int id, const std::string& name, const Outcome& o, bool& all) {
  std::cout << "criterion " << id << " " << (o.pass ? "PASS" : "FAIL") << "  " << name << ": " << o.detail
            << std::endl;
  all = all && o.pass;
}

int run(int argc, char** argv) {
  CLI::App app{"meshmark acceptance suite"};
  std::string config_path = MESHMARK_TOY_CONFIG;
  std::vector<int> only;
  std::string work = (std::filesystem::temp_directory_path() / "meshmark_acceptance").string();
  int64_t steps = 0;
  app.add_option("--config", config_path, "toy training config for criteria 5-9")->check(CLI::ExistingFile);
  app.add_option("--only", only, "criteria to run (default: all)")->delimiter(',')->check(CLI::Range(1, 9));
  app.add_option("--work", work, "directory for training logs and checkpoints");
  app.add_option("--steps", steps, "override the training length (smoke runs only)")->check(CLI::PositiveNumber);
  CLI11_PARSE(app, argc, argv);

  const std::set<int> selected = only.empty() ? std::set<int>{1, 2, 3, 4, 5, 6, 7, 8, 9}
                                              : std::set<int>(only.begin(), only.end());
  auto want = [&](int id) { return selected.count(id) > 0; };
  std::filesystem::create_directories(work);
  TrainConfig cfg = load_config(config_path);
  if (steps > 0) cfg.steps = steps;
  cfg.eval.table = {DistortionSpec{}};
  bool all = true;

  if (want(1)) report(1, "gradient correctness", gradients(), all);
  if (want(2)) report(2, "rasterizer oracle", rasterizer(), all);
  if (want(3)) report(3, "identity pipeline", identity(), all);
  if (want(4)) report(4, "binarization", binarization(), all);

  std::optional<ToyRun> toy;
  if (want(5) || want(6) || want(7) || want(8)) {
    std::cerr << "training toy model (theta " << cfg.loss.theta << ", " << cfg.steps << " steps)\n";
    toy = train_toy(cfg, (std::filesystem::path(work) / "toy_run_a.csv").string());
  }
  if (want(5)) {
    const auto& r = toy->report;
    report(5, "toy trainability",
           {toy->accuracy >= 0.90, "bit accuracy " + num(toy->accuracy) + " over " + std::to_string(toy->bits) +
                                         " bits (fixed-message eval " + num(r.bit_accuracy) +
                                         "), last-100-step train accuracy " + num(toy->train_tail) + ", " +
                                        std::to_string(cfg.steps) + " steps in " + num(toy->seconds) + " s"},
           all);
  }
  if (want(6)) {
    const double base = toy->accuracy, rot = toy->rotation, noise = toy->noise;
    const bool ok = std::abs(rot - base) <= 0.05 && std::abs(noise - base) <= 0.05;
    report(6, "distortion robustness",
           {ok, "undistorted " + num(base) + ", rotation " + num(rot) + ", noise " + num(noise)}, all);
  }
  if (want(7)) {
    TrainConfig low = cfg;
    low.loss.theta = 0.01;
    std::cerr << "training toy model (theta 0.01)\n";
    const ToyRun weak = train_toy(low, (std::filesystem::path(work) / "toy_theta_0.01.csv").string());
    const double hi_l1 = toy->report.texture.l1, lo_l1 = weak.report.texture.l1;
    const bool ok = toy->accuracy > weak.accuracy && hi_l1 > lo_l1;
    report(7, "trade-off direction",
           {ok, "theta 1: accuracy " + num(toy->accuracy) + ", texture L1 " + num(hi_l1) + "; theta 0.01: accuracy " +
                    num(weak.accuracy) + ", texture L1 " + num(lo_l1)},
           all);
  }
  if (want(8)) {
    std::cerr << "repeating toy run\n";
    const ToyRun again = train_toy(cfg, (std::filesystem::path(work) / "toy_run_b.csv").string());
    const bool same_csv = again.csv == toy->csv;
    const std::string bytes = checkpoint_bytes(toy->params, cfg.strategy, cfg.steps);
    const std::string path = (std::filesystem::path(work) / "toy.ckpt").string();
    save_checkpoint(path, toy->params, cfg.strategy, cfg.steps);
    const auto back = load_checkpoint<float>(path, cfg.n_bits);
    const bool same_ckpt = checkpoint_bytes(back.params, back.strategy, back.step) == bytes;
    report(8, "reproducibility",
           {same_csv && same_ckpt, std::string("metric CSVs ") + (same_csv ? "identical" : "differ") +
                                       ", checkpoint round trip " + (same_ckpt ? "bit-exact" : "differs")},
           all);
  }
  if (want(9)) report(9, "chance level", chance(cfg), all);
  return all ? 0 : 1;
}

}  // namespace
}  // namespace meshmark

int main(int argc, char** argv) {
  try {
    return meshmark::run(argc, argv);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
