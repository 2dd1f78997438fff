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

// Wavefront OBJ/MTL reading and writing.
//
// Each distinct (position, texcoord, normal) index triple referenced by a face
// becomes one mesh vertex. Polygons are fan-triangulated. Missing normals and
// texcoords are zero-filled for compute_normals / spherical_uv to fill in.

#pragma once

#include <array>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "meshmark/image_io.hpp"
#include "meshmark/mesh.hpp"

namespace meshmark {

namespace detail {

struct MtlInfo {
  std::string texture_path;
  std::array<double, 10> material{0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 10.0};
  bool has_material = false;
};

inline std::map<std::string, MtlInfo> parse_mtl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open material library '" + path.string() + "'");
  std::map<std::string, MtlInfo> out;
  MtlInfo* cur = nullptr;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ss(line);
    std::string key;
    if (!(ss >> key) || key[0] == '#') continue;
    if (key == "newmtl") {
      std::string name;
      ss >> name;
      cur = &out[name];
      continue;
    }
    if (!cur) continue;
    auto read3 = [&](size_t offset) {
      double r, g, b;
      if (!(ss >> r >> g >> b)) {
        throw DataError(path.string() + ":" + std::to_string(lineno) + ": malformed " + key);
      }
      cur->material[offset] = r;
      cur->material[offset + 1] = g;
      cur->material[offset + 2] = b;
      cur->has_material = true;
    };
    if (key == "Ka") {
      read3(0);
    } else if (key == "Kd") {
      read3(3);
    } else if (key == "Ks") {
      read3(6);
    } else if (key == "Ns") {
      ss >> cur->material[9];
    } else if (key == "map_Kd") {
      std::string rest;
      std::getline(ss, rest);
      const auto first = rest.find_first_not_of(" \t");
      const auto last = rest.find_last_not_of(" \t\r");
      if (first == std::string::npos) {
        throw DataError(path.string() + ":" + std::to_string(lineno) + ": empty map_Kd");
      }
      // Options such as "-s 1 1 1" are not supported; the last token is the file.
      const std::string spec = rest.substr(first, last - first + 1);
      const auto space = spec.find_last_of(" \t");
      cur->texture_path = (path.parent_path() /
                           (space == std::string::npos ? spec : spec.substr(space + 1)))
                              .string();
    }
  }
  return out;
}

// Parses "v", "v/vt", "v//vn" or "v/vt/vn" into zero-based indices (-1 = absent).
inline std::array<int64_t, 3> parse_corner(const std::string& tok, const std::array<int64_t, 3>& counts,
                                           const std::string& where) {
  std::array<int64_t, 3> idx{-1, -1, -1};
  size_t start = 0;
  for (size_t part = 0; part < 3; ++part) {
    const size_t slash = tok.find('/', start);
    const std::string field = tok.substr(start, slash == std::string::npos ? std::string::npos : slash - start);
    if (!field.empty()) {
      long long v = 0;
      try {
        size_t used = 0;
        v = std::stoll(field, &used);
        if (used != field.size()) throw std::invalid_argument("trailing");
      } catch (const std::exception&) {
        throw DataError(where + ": malformed face corner '" + tok + "'");
      }
      const int64_t n = counts[part];
      const int64_t zero_based = v > 0 ? v - 1 : n + v;
      if (v == 0 || zero_based < 0 || zero_based >= n) {
        throw DataError(where + ": index " + field + " out of range (have " + std::to_string(n) + ")");
      }
      idx[part] = zero_based;
    } else if (part == 0) {
      throw DataError(where + ": face corner without a position index");
    }
    if (slash == std::string::npos) break;
    start = slash + 1;
  }
  return idx;
}

}  // namespace detail

template <class Real>
Mesh<Real> load_obj(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open OBJ '" + path + "'");
  const std::filesystem::path base = std::filesystem::path(path).parent_path();

  std::vector<std::array<double, 3>> pos, nrm;
  std::vector<std::array<double, 2>> tex;
  std::map<std::tuple<int64_t, int64_t, int64_t>, int32_t> vertex_of;
  std::vector<std::array<int64_t, 3>> corners;
  std::vector<Face> faces;
  std::map<std::string, detail::MtlInfo> materials;
  std::string active_material;

  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string where = path + ":" + std::to_string(lineno);
    std::istringstream ss(line);
    std::string key;
    if (!(ss >> key) || key[0] == '#') continue;
    if (key == "v") {
      std::array<double, 3> p{};
      if (!(ss >> p[0] >> p[1] >> p[2])) throw DataError(where + ": malformed vertex");
      pos.push_back(p);
    } else if (key == "vn") {
      std::array<double, 3> p{};
      if (!(ss >> p[0] >> p[1] >> p[2])) throw DataError(where + ": malformed normal");
      nrm.push_back(p);
    } else if (key == "vt") {
      std::array<double, 2> t{};
      if (!(ss >> t[0] >> t[1])) throw DataError(where + ": malformed texcoord");
      tex.push_back(t);
    } else if (key == "f") {
      const std::array<int64_t, 3> counts{static_cast<int64_t>(pos.size()),
                                          static_cast<int64_t>(tex.size()),
                                          static_cast<int64_t>(nrm.size())};
      std::vector<int32_t> poly;
      std::string tok;
      while (ss >> tok) {
        const auto c = detail::parse_corner(tok, counts, where);
        const auto triple = std::make_tuple(c[0], c[1], c[2]);
        auto it = vertex_of.find(triple);
        if (it == vertex_of.end()) {
          it = vertex_of.emplace(triple, static_cast<int32_t>(corners.size())).first;
          corners.push_back(c);
        }
        poly.push_back(it->second);
      }
      if (poly.size() < 3) throw DataError(where + ": face needs at least 3 corners");
      for (size_t k = 1; k + 1 < poly.size(); ++k) {
        const Face f{poly[0], poly[k], poly[k + 1]};
        if (f[0] == f[1] || f[1] == f[2] || f[0] == f[2]) continue;
        faces.push_back(f);
      }
    } else if (key == "mtllib") {
      std::string name;
      ss >> name;
      auto lib = detail::parse_mtl(base / name);
      materials.insert(lib.begin(), lib.end());
    } else if (key == "usemtl") {
      ss >> active_material;
    }
  }

  // Files without faces still load their points, one vertex each.
  if (corners.empty()) {
    for (size_t i = 0; i < pos.size(); ++i) corners.push_back({static_cast<int64_t>(i), -1, -1});
  }

  const auto n = static_cast<int64_t>(corners.size());
  std::vector<Real> p(static_cast<size_t>(n * 3));
  std::vector<Real> a(static_cast<size_t>(n * kAttributeChannels), Real(0));
  for (int64_t v = 0; v < n; ++v) {
    const auto& c = corners[static_cast<size_t>(v)];
    for (size_t k = 0; k < 3; ++k) p[static_cast<size_t>(v * 3) + k] = static_cast<Real>(pos[static_cast<size_t>(c[0])][k]);
    if (c[2] >= 0) {
      for (size_t k = 0; k < 3; ++k) {
        a[static_cast<size_t>(v * kAttributeChannels) + k] = static_cast<Real>(nrm[static_cast<size_t>(c[2])][k]);
      }
    }
    if (c[1] >= 0) {
      for (size_t k = 0; k < 2; ++k) {
        a[static_cast<size_t>(v * kAttributeChannels + kTexcoordBegin) + k] =
            static_cast<Real>(tex[static_cast<size_t>(c[1])][k]);
      }
    }
  }

  Mesh<Real> mesh;
  mesh.positions = Tensor<Real>({n, 3}, std::move(p));
  mesh.attributes = Tensor<Real>({n, kAttributeChannels}, std::move(a));
  mesh.faces = std::move(faces);
  const detail::MtlInfo* mtl = nullptr;
  if (auto it = materials.find(active_material); it != materials.end()) {
    mtl = &it->second;
  } else if (!materials.empty()) {
    mtl = &materials.begin()->second;
  }
  if (mtl) {
    if (mtl->has_material) {
      mesh.material = Tensor<Real>({kMaterialSize}, std::vector<Real>(mtl->material.begin(), mtl->material.end()));
    }
    if (!mtl->texture_path.empty()) mesh.texture = read_png<Real>(mtl->texture_path);
  }
  mesh.validate();
  return mesh;
}

// Writes `<stem>.obj` with per-vertex normals and texcoords. When
// `texture_file` is non-empty a sibling `<stem>.mtl` referencing it is
// written as well.
template <class Real>
void save_obj(const std::string& path, const Mesh<Real>& mesh, const std::string& texture_file = "") {
  std::filesystem::path obj_path(path);
  std::ofstream out(obj_path);
  if (!out) throw DataError("cannot write OBJ '" + path + "'");
  out.precision(9);
  const bool with_mtl = !texture_file.empty();
  if (with_mtl) {
    std::filesystem::path mtl_path = obj_path;
    mtl_path.replace_extension(".mtl");
    std::ofstream mtl(mtl_path);
    if (!mtl) throw DataError("cannot write MTL '" + mtl_path.string() + "'");
    mtl.precision(9);
    const auto& m = mesh.material;
    mtl << "newmtl watermarked\n";
    mtl << "Ka " << m[0] << ' ' << m[1] << ' ' << m[2] << '\n';
    mtl << "Kd " << m[3] << ' ' << m[4] << ' ' << m[5] << '\n';
    mtl << "Ks " << m[6] << ' ' << m[7] << ' ' << m[8] << '\n';
    mtl << "Ns " << m[9] << '\n';
    mtl << "map_Kd " << texture_file << '\n';
    out << "mtllib " << mtl_path.filename().string() << "\nusemtl watermarked\n";
  }
  const int64_t n = mesh.num_vertices();
  const auto& p = mesh.positions;
  const auto& a = mesh.attributes;
  for (int64_t v = 0; v < n; ++v) out << "v " << p[v * 3] << ' ' << p[v * 3 + 1] << ' ' << p[v * 3 + 2] << '\n';
  for (int64_t v = 0; v < n; ++v) {
    out << "vt " << a[v * kAttributeChannels + 3] << ' ' << a[v * kAttributeChannels + 4] << '\n';
  }
  for (int64_t v = 0; v < n; ++v) {
    out << "vn " << a[v * kAttributeChannels] << ' ' << a[v * kAttributeChannels + 1] << ' '
        << a[v * kAttributeChannels + 2] << '\n';
  }
  for (const Face& f : mesh.faces) {
    out << 'f';
    for (int32_t i : f) out << ' ' << i + 1 << '/' << i + 1 << '/' << i + 1;
    out << '\n';
  }
  if (!out) throw DataError("error while writing OBJ '" + path + "'");
}

}  // namespace meshmark
