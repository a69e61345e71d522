// Copyright 2026 The floc Authors
// Licensed under the Apache License, Version 2.0 (see LICENSE file)

#include "floc/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>
#include <string>
#include <vector>

#include "floc/png_io.hpp"

namespace floc {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[5] = {'F', 'L', 'O', 'C', '1'};

void put_u32(std::string& out, std::uint32_t v) { out.append(reinterpret_cast<const char*>(&v), 4); }

class Reader {
 public:
  explicit Reader(std::string bytes) : bytes_(std::move(bytes)) {}

  const char* take(std::size_t n) {
    if (bytes_.size() - pos_ < n) throw IoError("checkpoint truncated");
    const char* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }
  std::uint32_t u32() {
    std::uint32_t v;
    std::memcpy(&v, take(4), 4);
    return v;
  }
  std::string str(std::size_t n) { return std::string(take(n), n); }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::string bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Model<float>& model) {
  std::string out(kMagic, sizeof kMagic);
  const std::string cfg = model.config().to_json();
  put_u32(out, static_cast<std::uint32_t>(cfg.size()));
  out += cfg;
  const auto params = model.named_parameters();
  put_u32(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) {
    put_u32(out, static_cast<std::uint32_t>(p.name.size()));
    out += p.name;
    put_u32(out, static_cast<std::uint32_t>(p.tensor.rank()));
    for (auto d : p.tensor.shape()) put_u32(out, static_cast<std::uint32_t>(d));
    const auto data = p.tensor.data();
    put_u32(out, static_cast<std::uint32_t>(data.size()));
    out.append(reinterpret_cast<const char*>(data.data()), data.size() * sizeof(float));
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write checkpoint " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("write failed: " + path.string());
}

Model<float> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read checkpoint " + path.string());
  Reader r(std::string(std::istreambuf_iterator<char>(f), {}));
  if (std::memcmp(r.take(sizeof kMagic), kMagic, sizeof kMagic) != 0)
    throw IoError("not a checkpoint: " + path.string());

  ModelConfig cfg;
  try {
    cfg = ModelConfig::from_json(r.str(r.u32()));
  } catch (const IoError&) {
    throw;
  } catch (const std::exception& e) {
    throw IoError(std::string("checkpoint config: ") + e.what());
  }
  Model<float> model(cfg, 0);
  const auto expected = model.named_parameters();
  const std::uint32_t count = r.u32();
  if (count != expected.size())
    throw IoError("checkpoint has " + std::to_string(count) + " parameters, model expects " +
                  std::to_string(expected.size()));

  std::set<std::string> seen;
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.str(r.u32());
    const std::uint32_t rank = r.u32();
    Shape shape;
    for (std::uint32_t d = 0; d < rank; ++d) shape.push_back(r.u32());
    const std::uint32_t n = r.u32();
    if (n != numel(shape)) throw IoError("checkpoint parameter " + name + ": size does not match its shape");
    std::vector<float> values(n);
    std::memcpy(values.data(), r.take(std::size_t{n} * sizeof(float)), std::size_t{n} * sizeof(float));
    auto it = std::find_if(expected.begin(), expected.end(), [&](const auto& p) { return p.name == name; });
    if (it == expected.end()) throw IoError("checkpoint has unknown parameter " + name);
    if (it->tensor.shape() != shape)
      throw IoError("checkpoint parameter " + name + " has shape " + to_string(shape) + ", expected " +
                    to_string(it->tensor.shape()));
    if (!seen.insert(name).second) throw IoError("checkpoint repeats parameter " + name);
    model.load_parameter(name, values);
  }
  if (!r.done()) throw IoError("trailing bytes in checkpoint");
  return model;
}

}  // namespace floc
