// SPDX-License-Identifier: Apache-2.0

#include "muscle/manifest_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "muscle/errors.hpp"

namespace muscle {

using nlohmann::json;

json manifest_to_json(const DatasetManifest& m) {
  json j;
  j["dataset_id"] = m.dataset_id;
  j["gray_mean"] = m.gray_mean;
  j["gray_std"] = m.gray_std;
  if (m.task) {
    j["task"] = to_string(m.task->kind);
    j["num_classes"] = m.task->num_classes;
  } else {
    j["task"] = nullptr;
  }
  json recs = json::array();
  for (const auto& r : m.records) {
    json jr;
    jr["height"] = r.height();
    jr["width"] = r.width();
    jr["pixels"] = r.pixels.vec();
    if (r.label) jr["label"] = *r.label;
    if (r.mask) jr["mask"] = *r.mask;
    recs.push_back(std::move(jr));
  }
  j["records"] = std::move(recs);
  j["splits"] = {{"train", m.splits.train}, {"val", m.splits.val}, {"test", m.splits.test}};
  return j;
}

DatasetManifest manifest_from_json(const json& j, const std::filesystem::path& base_dir) {
  DatasetManifest m;
  try {
    m.dataset_id = j.at("dataset_id").get<std::string>();
    m.gray_mean = j.at("gray_mean").get<double>();
    m.gray_std = j.at("gray_std").get<double>();
    if (j.contains("task") && !j["task"].is_null()) {
      HeadConfig h;
      h.kind = head_kind_from_string(j["task"].get<std::string>());
      h.num_classes = j.value("num_classes", std::size_t{2});
      m.task = h;
    }
    for (const auto& jr : j.at("records")) {
      ImageRecord r;
      r.dataset_id = m.dataset_id;
      if (jr.contains("path")) {
        r.pixels = read_pgm(base_dir / jr["path"].get<std::string>());
      } else {
        const auto h = jr.at("height").get<std::size_t>();
        const auto w = jr.at("width").get<std::size_t>();
        r.pixels = Tensor(Shape{1, h, w}, jr.at("pixels").get<std::vector<double>>());
      }
      if (jr.contains("label")) r.label = jr["label"].get<int>();
      if (jr.contains("mask")) r.mask = jr["mask"].get<std::vector<int>>();
      m.records.push_back(std::move(r));
    }
    const auto& s = j.at("splits");
    m.splits.train = s.at("train").get<std::vector<std::size_t>>();
    m.splits.val = s.value("val", std::vector<std::size_t>{});
    m.splits.test = s.value("test", std::vector<std::size_t>{});
  } catch (const json::exception& e) {
    throw FormatError("manifest", e.what());
  }
  m.validate();
  return m;
}

DatasetManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw FormatError("manifest", path.string() + ": " + e.what());
  }
  return manifest_from_json(j, path.parent_path());
}

void write_manifest(const DatasetManifest& m, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write manifest " + path.string());
  out << manifest_to_json(m).dump() << '\n';
}

namespace {
std::string pgm_token(std::istream& in) {
  std::string tok;
  while (in >> tok) {
    if (tok[0] != '#') return tok;
    std::string rest;
    std::getline(in, rest);
  }
  throw FormatError("pgm", "unexpected end of header");
}
}  // namespace

Tensor read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open image " + path.string());
  if (pgm_token(in) != "P5") throw FormatError("pgm", path.string() + " is not a binary P5 file");
  std::size_t w = 0, h = 0, maxval = 0;
  try {
    w = std::stoul(pgm_token(in));
    h = std::stoul(pgm_token(in));
    maxval = std::stoul(pgm_token(in));
  } catch (const std::logic_error&) {
    throw FormatError("pgm", path.string() + ": malformed header");
  }
  if (w == 0 || h == 0 || maxval == 0 || maxval > 255)
    throw FormatError("pgm", path.string() + ": only 8-bit images are supported");
  in.get();  // single whitespace before the raster
  std::vector<unsigned char> raw(w * h);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (static_cast<std::size_t>(in.gcount()) != raw.size()) throw FormatError("pgm", path.string() + ": truncated raster");
  Tensor t(Shape{1, h, w});
  for (std::size_t i = 0; i < raw.size(); ++i) t[i] = static_cast<double>(raw[i]) * 255.0 / static_cast<double>(maxval);
  return t;
}

void write_pgm(const std::filesystem::path& path, const Tensor& img) {
  if (img.rank() != 3 || img.dim(0) != 1) throw DimensionError("write_pgm expects 1×H×W");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write image " + path.string());
  out << "P5\n" << img.dim(2) << ' ' << img.dim(1) << "\n255\n";
  for (double v : img.data()) out.put(static_cast<char>(static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 255.0)))));
}

}  // namespace muscle
