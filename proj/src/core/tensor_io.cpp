#include "core/tensor_io.hpp"

#include <cstring>
#include <fstream>

#include "core/common.hpp"

namespace dar {

namespace {

constexpr char kMagic[8] = {'D', 'A', 'R', 'C', 'K', 'P', 'T', '1'};

std::int64_t numel(const std::vector<std::int64_t>& shape) {
  std::int64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

}  // namespace

void write_f32(const std::filesystem::path& path, const torch::Tensor& tensor) {
  torch::Tensor flat = tensor.to(torch::kFloat32).contiguous();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.good(), ErrorCode::Io, "cannot write: " + path.string());
  out.write(reinterpret_cast<const char*>(flat.data_ptr<float>()),
            static_cast<std::streamsize>(flat.numel() * sizeof(float)));
  require(out.good(), ErrorCode::Io, "write failed: " + path.string());
}

torch::Tensor read_f32(const std::filesystem::path& path, const std::vector<std::int64_t>& shape) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCode::MissingDependency, "missing array file: " + path.string());
  std::int64_t count = numel(shape);
  torch::Tensor out = torch::empty(shape, torch::kFloat32);
  in.read(reinterpret_cast<char*>(out.data_ptr<float>()),
          static_cast<std::streamsize>(count * sizeof(float)));
  require(in.gcount() == static_cast<std::streamsize>(count * sizeof(float)), ErrorCode::Io,
          "short read (shape mismatch?): " + path.string());
  return out;
}

void Checkpoint::add(const std::string& name, const torch::Tensor& tensor) {
  arrays.emplace_back(name, tensor.to(torch::kFloat32).contiguous().clone());
}

const torch::Tensor& Checkpoint::at(const std::string& name) const {
  for (const auto& [key, value] : arrays) {
    if (key == name) return value;
  }
  fail(ErrorCode::MissingDependency, "checkpoint has no array: " + name);
}

bool Checkpoint::has(const std::string& name) const {
  for (const auto& [key, value] : arrays) {
    (void)value;
    if (key == name) return true;
  }
  return false;
}

void Checkpoint::save(const std::filesystem::path& path) const {
  nlohmann::json header;
  header["format_version"] = 1;
  header["meta"] = meta;
  nlohmann::json index = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, tensor] : arrays) {
    nlohmann::json entry;
    entry["name"] = name;
    entry["dtype"] = "f32";
    entry["shape"] = std::vector<std::int64_t>(tensor.sizes().begin(), tensor.sizes().end());
    entry["offset"] = offset;
    offset += static_cast<std::uint64_t>(tensor.numel()) * sizeof(float);
    index.push_back(entry);
  }
  header["arrays"] = index;

  std::string header_text = header.dump();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.good(), ErrorCode::Io, "cannot write checkpoint: " + path.string());
  out.write(kMagic, sizeof(kMagic));
  std::uint64_t header_len = header_text.size();
  out.write(reinterpret_cast<const char*>(&header_len), sizeof(header_len));
  out.write(header_text.data(), static_cast<std::streamsize>(header_text.size()));
  for (const auto& [name, tensor] : arrays) {
    (void)name;
    out.write(reinterpret_cast<const char*>(tensor.data_ptr<float>()),
              static_cast<std::streamsize>(tensor.numel() * sizeof(float)));
  }
  require(out.good(), ErrorCode::Io, "checkpoint write failed: " + path.string());
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCode::MissingDependency, "missing checkpoint: " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  require(in.gcount() == sizeof(magic) && std::memcmp(magic, kMagic, sizeof(kMagic)) == 0,
          ErrorCode::Io, "not a checkpoint file: " + path.string());
  std::uint64_t header_len = 0;
  in.read(reinterpret_cast<char*>(&header_len), sizeof(header_len));
  std::string header_text(header_len, '\0');
  in.read(header_text.data(), static_cast<std::streamsize>(header_len));
  require(in.good(), ErrorCode::Io, "truncated checkpoint header: " + path.string());

  nlohmann::json header = nlohmann::json::parse(header_text);
  Checkpoint ckpt;
  ckpt.meta = header.at("meta");
  for (const auto& entry : header.at("arrays")) {
    std::vector<std::int64_t> shape = entry.at("shape").get<std::vector<std::int64_t>>();
    torch::Tensor tensor = torch::empty(shape, torch::kFloat32);
    in.read(reinterpret_cast<char*>(tensor.data_ptr<float>()),
            static_cast<std::streamsize>(tensor.numel() * sizeof(float)));
    require(in.gcount() == static_cast<std::streamsize>(tensor.numel() * sizeof(float)),
            ErrorCode::Io, "truncated checkpoint payload: " + path.string());
    ckpt.arrays.emplace_back(entry.at("name").get<std::string>(), tensor);
  }
  return ckpt;
}

void save_module_arrays(Checkpoint& ckpt, const std::string& prefix, const torch::nn::Module& module) {
  for (const auto& item : module.named_parameters(/*recurse=*/true)) {
    ckpt.add(prefix + item.key(), item.value().detach());
  }
}

void load_module_arrays(const Checkpoint& ckpt, const std::string& prefix, torch::nn::Module& module) {
  torch::NoGradGuard guard;
  for (auto& item : module.named_parameters(/*recurse=*/true)) {
    const torch::Tensor& stored = ckpt.at(prefix + item.key());
    require(stored.sizes() == item.value().sizes(), ErrorCode::InvalidArgument,
            "checkpoint shape mismatch for " + prefix + item.key());
    item.value().copy_(stored.to(item.value().dtype()));
  }
}

}  // namespace dar
