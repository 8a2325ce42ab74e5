// SPDX-License-Identifier: Apache-2.0
#include "smc/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "smc/error.hpp"

namespace smc {

static_assert(std::endian::native == std::endian::little, "checkpoint codec assumes a little-endian host");

Tensor& ParamSet::add(const std::string& name, Shape shape, std::vector<double> values) {
  if (params_.count(name)) throw ContractError("duplicate parameter name: " + name);
  return params_.emplace(name, Tensor::parameter(std::move(shape), std::move(values))).first->second;
}

Tensor& ParamSet::get(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw ContractError("unknown parameter: " + name);
  return it->second;
}

const Tensor& ParamSet::get(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw ContractError("unknown parameter: " + name);
  return it->second;
}

void ParamSet::zero_grad() {
  for (auto& [_, t] : params_) t.zero_grad();
}

std::size_t ParamSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [_, t] : params_) n += t.numel();
  return n;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  nlohmann::json manifest;
  manifest["format"] = "smc-ckpt";
  manifest["version"] = 1;
  manifest["meta"] = ckpt.meta;
  manifest["tensors"] = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, entry] : ckpt.tensors) {
    if (shape_numel(entry.shape) != entry.values.size()) {
      throw ContractError("checkpoint entry " + name + " has inconsistent shape");
    }
    manifest["tensors"].push_back({{"name", name}, {"shape", entry.shape}, {"offset", offset}});
    offset += entry.values.size() * sizeof(double);
  }
  const std::string text = manifest.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open checkpoint for writing: " + path.string());
  const std::uint64_t len = text.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& [_, entry] : ckpt.tensors) {
    out.write(reinterpret_cast<const char*>(entry.values.data()),
              static_cast<std::streamsize>(entry.values.size() * sizeof(double)));
  }
  if (!out) throw Error("write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint: " + path.string());
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  if (!in || len > (1ull << 32)) throw FormatError("checkpoint manifest length unreadable: " + path.string());
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw FormatError("checkpoint manifest truncated: " + path.string());
  std::vector<char> payload((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint manifest is not JSON: ") + e.what());
  }
  if (manifest.value("format", "") != "smc-ckpt" || manifest.value("version", 0) != 1) {
    throw FormatError("unknown checkpoint format/version in " + path.string());
  }
  Checkpoint ckpt;
  ckpt.meta = manifest.value("meta", nlohmann::json::object());
  for (const auto& t : manifest.at("tensors")) {
    CheckpointEntry entry;
    entry.shape = t.at("shape").get<Shape>();
    const std::uint64_t offset = t.at("offset").get<std::uint64_t>();
    const std::size_t n = shape_numel(entry.shape);
    if (offset + n * sizeof(double) > payload.size()) {
      throw FormatError("checkpoint payload truncated at tensor " + t.at("name").get<std::string>());
    }
    entry.values.resize(n);
    std::memcpy(entry.values.data(), payload.data() + offset, n * sizeof(double));
    ckpt.tensors.emplace(t.at("name").get<std::string>(), std::move(entry));
  }
  return ckpt;
}

Checkpoint snapshot_params(const ParamSet& params) {
  Checkpoint ckpt;
  for (const auto& [name, t] : params) {
    ckpt.tensors[name] = {t.shape(), {t.data().begin(), t.data().end()}};
  }
  return ckpt;
}

void restore_params(ParamSet& params, const Checkpoint& ckpt, const std::string& prefix) {
  for (auto& [name, t] : params) {
    auto it = ckpt.tensors.find(prefix + name);
    if (it == ckpt.tensors.end()) throw FormatError("checkpoint lacks parameter " + prefix + name);
    if (it->second.shape != t.shape()) {
      throw FormatError("checkpoint shape mismatch for " + name + ": " + shape_str(it->second.shape) + " vs " +
                        shape_str(t.shape()));
    }
    auto dst = t.mutable_data();
    std::copy(it->second.values.begin(), it->second.values.end(), dst.begin());
  }
}

}  // namespace smc
