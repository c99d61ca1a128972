// SPDX-License-Identifier: Apache-2.0

#include "muscle/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>

#include "json.hpp"
#include "muscle/errors.hpp"

namespace muscle {

using nlohmann::json;

namespace {

void put_le(std::vector<char>& out, double v) {
  auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

double get_le(const char* p) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  return std::bit_cast<double>(bits);
}

}  // namespace

void save_checkpoint(const ParamVector& params, const std::filesystem::path& path, const CheckpointInfo& info) {
  json h;
  h["format_version"] = 1;
  json names = json::array(), shapes = json::array();
  for (const auto& [name, t] : params) {
    names.push_back(name);
    shapes.push_back(t.shape());
  }
  h["names"] = std::move(names);
  h["shapes"] = std::move(shapes);
  h["byte_order"] = "little";
  h["dtype"] = "f64";
  h["created_by"] = info.created_by;
  h["config_hash"] = info.config_hash;

  std::vector<char> payload;
  payload.reserve(params.total_numel() * 8);
  for (const auto& [_, t] : params)
    for (double v : t.data()) put_le(payload, v);

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out << h.dump() << '\n';
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!out) throw IoError("short write on checkpoint " + path.string());
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path, const std::optional<std::string>& expected_hash) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::string header_line;
  if (!std::getline(in, header_line)) throw FormatError("header", "missing header line");
  std::vector<char> payload((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  json h;
  try {
    h = json::parse(header_line);
  } catch (const json::exception& e) {
    throw FormatError("header", std::string("not valid JSON: ") + e.what());
  }
  if (!h.is_object()) throw FormatError("header", "not a JSON object");

  LoadedCheckpoint out;
  std::vector<std::string> names;
  std::vector<Shape> shapes;
  try {
    out.info.format_version = h.at("format_version").get<int>();
    names = h.at("names").get<std::vector<std::string>>();
    shapes = h.at("shapes").get<std::vector<Shape>>();
    if (h.at("byte_order").get<std::string>() != "little") throw FormatError("byte_order", "must be \"little\"");
    if (h.at("dtype").get<std::string>() != "f64") throw FormatError("dtype", "must be \"f64\"");
    out.info.created_by = h.value("created_by", std::string{});
    out.info.config_hash = h.value("config_hash", std::string{});
  } catch (const json::exception& e) {
    throw FormatError("header", e.what());
  }
  if (out.info.format_version != 1)
    throw FormatError("format_version", "unsupported version " + std::to_string(out.info.format_version));
  if (names.size() != shapes.size())
    throw FormatError("shapes", std::to_string(names.size()) + " names but " + std::to_string(shapes.size()) + " shapes");
  if (!std::is_sorted(names.begin(), names.end()) || std::adjacent_find(names.begin(), names.end()) != names.end())
    throw FormatError("shapes", "name/shape mismatch: names must be unique and in sorted order");

  std::size_t total = 0;
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    if (shapes[i].empty() || std::count(shapes[i].begin(), shapes[i].end(), std::size_t{0}))
      throw FormatError("shapes", "invalid shape for '" + names[i] + "'");
    total += shape_numel(shapes[i]);
  }
  if (payload.size() != total * 8)
    throw FormatError("payload", "expected " + std::to_string(total * 8) + " bytes, found " +
                                     std::to_string(payload.size()));

  std::size_t off = 0;
  for (std::size_t i = 0; i < names.size(); ++i) {
    std::vector<double> data(shape_numel(shapes[i]));
    for (auto& v : data) {
      v = get_le(payload.data() + off);
      off += 8;
    }
    out.params.set(names[i], Tensor(shapes[i], std::move(data)));
  }
  if (expected_hash && *expected_hash != out.info.config_hash)
    out.warnings.push_back("config_hash mismatch: checkpoint " + out.info.config_hash + ", expected " + *expected_hash);
  return out;
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path, const ParamVector& templ,
                                 const std::optional<std::string>& expected_hash) {
  auto out = load_checkpoint(path, expected_hash);
  if (out.params.names() != templ.names()) throw FormatError("names", "parameter names do not match the model");
  if (!out.params.same_template(templ)) throw FormatError("shapes", "parameter shapes do not match the model");
  return out;
}

}  // namespace muscle
