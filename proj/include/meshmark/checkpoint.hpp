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

// Checkpoint container.
//
//   bytes 0-7   magic "MESHMARK"
//   u32         format version (1)
//   u64         header length, then that many bytes of UTF-8 JSON:
//               {"arch": {...}, "strategy": "...", "n_bits": N, "step": S}
//   u64         tensor count, then per tensor:
//               u32 name length, name bytes, u32 rank, u64 dims[rank],
//               f32 data[prod(dims)]
//
// All integers and floats are little-endian. Tensors appear in parameter
// order; loading matches them by name against the layout implied by the arch.

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <random>
#include <sstream>
#include <string>

#include "meshmark/config.hpp"
#include "meshmark/networks.hpp"

namespace meshmark {

inline constexpr char kCheckpointMagic[8] = {'M', 'E', 'S', 'H', 'M', 'A', 'R', 'K'};
inline constexpr uint32_t kCheckpointVersion = 1;

template <class Real>
struct Checkpoint {
  NetworkParams<Real> params;
  EmbedStrategy strategy = EmbedStrategy::kVertexAndTexture;
  int64_t step = 0;
};

namespace detail {

template <class U>
void put_le(std::string& out, U v) {
  for (size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((static_cast<uint64_t>(v) >> (8 * i)) & 0xff));
}

class ByteReader {
 public:
  ByteReader(const std::string& bytes, std::string path) : b_(bytes), path_(std::move(path)) {}

  template <class U>
  U get() {
    need(sizeof(U));
    uint64_t v = 0;
    for (size_t i = 0; i < sizeof(U); ++i) v |= static_cast<uint64_t>(static_cast<unsigned char>(b_[pos_ + i])) << (8 * i);
    pos_ += sizeof(U);
    return static_cast<U>(v);
  }

  std::string bytes(uint64_t n) {
    need(n);
    std::string s = b_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == b_.size(); }

  [[noreturn]] void fail(const std::string& what) const {
    throw DataError("checkpoint '" + path_ + "': " + what);
  }

 private:
  void need(uint64_t n) const {
    if (n > b_.size() - pos_) fail("truncated file");
  }

  const std::string& b_;
  std::string path_;
  size_t pos_ = 0;
};

}  // namespace detail

template <class Real>
std::string checkpoint_bytes(const NetworkParams<Real>& params, EmbedStrategy strategy, int64_t step) {
  const Json header = {{"arch", arch_to_json(params.arch)},
                       {"strategy", to_string(strategy)},
                       {"n_bits", params.arch.n_bits},
                       {"step", step}};
  const std::string h = header.dump();
  std::string out(kCheckpointMagic, sizeof(kCheckpointMagic));
  detail::put_le<uint32_t>(out, kCheckpointVersion);
  detail::put_le<uint64_t>(out, h.size());
  out += h;
  detail::put_le<uint64_t>(out, params.entries().size());
  for (const auto& p : params.entries()) {
    detail::put_le<uint32_t>(out, static_cast<uint32_t>(p.name.size()));
    out += p.name;
    detail::put_le<uint32_t>(out, static_cast<uint32_t>(p.value.rank()));
    for (int64_t d : p.value.shape()) detail::put_le<uint64_t>(out, static_cast<uint64_t>(d));
    for (Real v : p.value.data()) detail::put_le<uint32_t>(out, std::bit_cast<uint32_t>(static_cast<float>(v)));
  }
  return out;
}

template <class Real>
void save_checkpoint(const std::string& path, const NetworkParams<Real>& params, EmbedStrategy strategy,
                     int64_t step) {
  const std::string bytes = checkpoint_bytes(params, strategy, step);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint '" + path + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("failed writing checkpoint '" + path + "'");
}

// Parses a checkpoint. When expected_n_bits is set, a different N_b is an error.
template <class Real>
Checkpoint<Real> parse_checkpoint(const std::string& bytes, const std::string& path,
                                  std::optional<int> expected_n_bits = std::nullopt) {
  detail::ByteReader r(bytes, path);
  if (r.bytes(sizeof(kCheckpointMagic)) != std::string(kCheckpointMagic, sizeof(kCheckpointMagic))) {
    r.fail("not a meshmark checkpoint (bad magic)");
  }
  const auto version = r.get<uint32_t>();
  if (version != kCheckpointVersion) {
    r.fail("unsupported format version " + std::to_string(version) + " (expected " +
           std::to_string(kCheckpointVersion) + ")");
  }
  const auto hlen = r.get<uint64_t>();
  Json header;
  try {
    header = Json::parse(r.bytes(hlen));
  } catch (const Json::parse_error&) {
    r.fail("corrupt header");
  }
  Checkpoint<Real> ck;
  ArchConfig arch;
  try {
    arch = arch_from_json(header.at("arch"));
    ck.strategy = strategy_from_string(header.at("strategy").get<std::string>());
    ck.step = header.at("step").get<int64_t>();
    if (header.at("n_bits").get<int>() != arch.n_bits) r.fail("header n_bits disagrees with arch");
    arch.validate();
  } catch (const Json::exception& e) {
    r.fail(std::string("corrupt header: ") + e.what());
  } catch (const DataError& e) {
    r.fail(std::string("corrupt header: ") + e.what());
  }
  if (expected_n_bits && *expected_n_bits != arch.n_bits) {
    r.fail("message length mismatch: checkpoint was trained for N_b=" + std::to_string(arch.n_bits) +
           " but N_b=" + std::to_string(*expected_n_bits) + " was requested");
  }

  std::mt19937_64 dummy(0);
  ck.params = init_params<Real>(dummy, arch);
  const auto count = r.get<uint64_t>();
  if (count != ck.params.entries().size()) {
    r.fail("expected " + std::to_string(ck.params.entries().size()) + " tensors for this architecture, found " +
           std::to_string(count));
  }
  for (uint64_t t = 0; t < count; ++t) {
    const std::string name = r.bytes(r.get<uint32_t>());
    if (!ck.params.contains(name)) r.fail("unexpected tensor '" + name + "'");
    Tensor<Real>& dst = ck.params.at(name);
    const auto rank = r.get<uint32_t>();
    Shape shape;
    for (uint32_t d = 0; d < rank; ++d) shape.push_back(static_cast<int64_t>(r.get<uint64_t>()));
    if (shape != dst.shape()) {
      r.fail("tensor '" + name + "' has shape " + to_string(shape) + " but the arch expects " +
             to_string(dst.shape()));
    }
    std::vector<Real> values(static_cast<size_t>(dst.size()));
    for (auto& v : values) v = static_cast<Real>(std::bit_cast<float>(r.get<uint32_t>()));
    dst = Tensor<Real>(shape, std::move(values));
  }
  if (!r.done()) r.fail("trailing bytes after the last tensor");
  return ck;
}

template <class Real>
Checkpoint<Real> load_checkpoint(const std::string& path, std::optional<int> expected_n_bits = std::nullopt) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_checkpoint<Real>(ss.str(), path, expected_n_bits);
}

}  // namespace meshmark
