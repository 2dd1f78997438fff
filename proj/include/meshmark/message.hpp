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

// Binary payloads and their hex text form.

#pragma once

#include <cctype>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "meshmark/errors.hpp"

namespace meshmark {

struct Message {
  std::vector<uint8_t> bits;                     // ground truth, each 0 or 1
  std::optional<std::vector<double>> decoded;    // real-valued decoder output
  std::optional<std::vector<uint8_t>> binarized; // thresholded decoder output

  int64_t size() const { return static_cast<int64_t>(bits.size()); }
};

// Hex strings are most-significant bit first. An N-bit message takes
// ceil(N / 4) digits; any padding bits in the leading digit must be zero.
inline std::vector<uint8_t> bits_from_hex(std::string hex, int64_t n_bits) {
  if (n_bits < 1) throw DataError("message length must be positive");
  if (hex.size() > 2 && hex[0] == '0' && (hex[1] == 'x' || hex[1] == 'X')) hex = hex.substr(2);
  const auto digits = static_cast<size_t>((n_bits + 3) / 4);
  if (hex.size() != digits) {
    throw DataError("message '" + hex + "' has " + std::to_string(hex.size()) +
                    " hex digits; " + std::to_string(n_bits) + " bits need " +
                    std::to_string(digits));
  }
  std::vector<uint8_t> all;
  all.reserve(digits * 4);
  for (char ch : hex) {
    if (!std::isxdigit(static_cast<unsigned char>(ch))) {
      throw DataError("message '" + hex + "' is not a hex string");
    }
    const int v = std::stoi(std::string(1, ch), nullptr, 16);
    for (int b = 3; b >= 0; --b) all.push_back(static_cast<uint8_t>((v >> b) & 1));
  }
  const size_t pad = all.size() - static_cast<size_t>(n_bits);
  for (size_t i = 0; i < pad; ++i) {
    if (all[i]) {
      throw DataError("message '" + hex + "' does not fit in " + std::to_string(n_bits) + " bits");
    }
  }
  return {all.begin() + static_cast<std::ptrdiff_t>(pad), all.end()};
}

inline std::string bits_to_hex(const std::vector<uint8_t>& bits) {
  static constexpr char kDigits[] = "0123456789abcdef";
  const size_t pad = (4 - bits.size() % 4) % 4;
  std::vector<uint8_t> all(pad, 0);
  all.insert(all.end(), bits.begin(), bits.end());
  std::string out;
  for (size_t i = 0; i < all.size(); i += 4) {
    out.push_back(kDigits[(all[i] << 3) | (all[i + 1] << 2) | (all[i + 2] << 1) | all[i + 3]]);
  }
  return out;
}

// Fair-coin bits.
template <class Rng>
std::vector<uint8_t> random_bits(int64_t n, Rng& rng) {
  std::bernoulli_distribution coin(0.5);
  std::vector<uint8_t> bits(static_cast<size_t>(n));
  for (auto& b : bits) b = coin(rng) ? 1 : 0;
  return bits;
}

inline int64_t count_matching_bits(const std::vector<uint8_t>& a, const std::vector<uint8_t>& b) {
  if (a.size() != b.size()) throw DataError("bit vectors differ in length");
  int64_t same = 0;
  for (size_t i = 0; i < a.size(); ++i) same += a[i] == b[i] ? 1 : 0;
  return same;
}

}  // namespace meshmark
