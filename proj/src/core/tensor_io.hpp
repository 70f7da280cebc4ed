#ifndef DAR_CORE_TENSOR_IO_HPP
#define DAR_CORE_TENSOR_IO_HPP

#include <torch/torch.h>

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "vendor_json.hpp"

namespace dar {

// Little-endian float32 raw array files, shapes carried by the manifest.
void write_f32(const std::filesystem::path& path, const torch::Tensor& tensor);
torch::Tensor read_f32(const std::filesystem::path& path, const std::vector<std::int64_t>& shape);

// Single-file checkpoint container.
//
// Layout: 8-byte magic "DARCKPT1", u64 little-endian JSON length, JSON header,
// then tightly packed little-endian float32 array payload. The header carries
// a free-form "meta" object (hyperparameters, features config, ...) and an
// "arrays" index of {name, shape, offset} entries. Byte layout is fully
// determined by content, so identical state round-trips bit-exactly.
struct Checkpoint {
  nlohmann::json meta;
  std::vector<std::pair<std::string, torch::Tensor>> arrays;

  void add(const std::string& name, const torch::Tensor& tensor);
  const torch::Tensor& at(const std::string& name) const;
  bool has(const std::string& name) const;

  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);
};

// Copies checkpoint arrays with a given prefix into a module's parameters.
void load_module_arrays(const Checkpoint& ckpt, const std::string& prefix, torch::nn::Module& module);
void save_module_arrays(Checkpoint& ckpt, const std::string& prefix, const torch::nn::Module& module);

}  // namespace dar

#endif
