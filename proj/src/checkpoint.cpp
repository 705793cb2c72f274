#include "cloudmae/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <set>
#include <stdexcept>

#include "cloudmae/blob_io.hpp"

namespace cloudmae {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'C', 'M', 'C', 'K', '0', '0', '0', '1'};

void list_tensor(json& list, const std::string& name, const torch::Tensor& t,
                 const char* role) {
  json entry;
  entry["name"] = name;
  entry["shape"] = std::vector<int64_t>(t.sizes().begin(), t.sizes().end());
  entry["role"] = role;
  list.push_back(entry);
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, json header,
                     const std::vector<std::pair<std::string, torch::Tensor>>& params,
                     const AdamState* adam) {
  json tensor_list = json::array();
  std::vector<torch::Tensor> blobs;
  for (const auto& [name, t] : params) {
    list_tensor(tensor_list, name, t, "param");
    blobs.push_back(t);
  }
  if (adam) {
    header["adam_step"] = adam->step_count;
    for (const auto& [name, t] : adam->m) {
      list_tensor(tensor_list, name, t, "adam_m");
      blobs.push_back(t);
    }
    for (const auto& [name, t] : adam->v) {
      list_tensor(tensor_list, name, t, "adam_v");
      blobs.push_back(t);
    }
  }
  header["tensors"] = std::move(tensor_list);

  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path.string());
  out.write(kMagic, sizeof(kMagic));
  const std::string hdr = header.dump();
  const uint64_t hdr_len = hdr.size();
  out.write(reinterpret_cast<const char*>(&hdr_len), sizeof(hdr_len));
  out.write(hdr.data(), static_cast<std::streamsize>(hdr.size()));
  torch::NoGradGuard no_grad;
  for (const torch::Tensor& t : blobs)
    append_tensor_bytes(out, t.detach().to(torch::kFloat32).contiguous());
  if (!out) throw std::runtime_error("short checkpoint write: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read checkpoint: " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (in.gcount() != sizeof(magic) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error("not a checkpoint file: " + path.string());
  uint64_t hdr_len = 0;
  in.read(reinterpret_cast<char*>(&hdr_len), sizeof(hdr_len));
  std::string hdr(hdr_len, '\0');
  in.read(hdr.data(), static_cast<std::streamsize>(hdr_len));
  if (in.gcount() != static_cast<std::streamsize>(hdr_len))
    throw std::runtime_error("truncated checkpoint header: " + path.string());

  Checkpoint ckpt;
  ckpt.header = json::parse(hdr);
  for (const auto& entry : ckpt.header.at("tensors")) {
    const std::string role = entry.at("role").get<std::string>();
    const std::string name = entry.at("name").get<std::string>();
    auto shape = entry.at("shape").get<std::vector<int64_t>>();
    std::string key = role == "param" ? name : role + ":" + name;
    ckpt.tensors[key] = read_tensor_bytes(in, shape, torch::kFloat32);
  }
  return ckpt;
}

void load_parameters(torch::nn::Module& module, const Checkpoint& ckpt,
                     const std::vector<std::string>& required_prefixes) {
  torch::NoGradGuard no_grad;
  auto wanted = [&](const std::string& name) {
    if (required_prefixes.empty()) return true;
    for (const std::string& p : required_prefixes)
      if (name.rfind(p, 0) == 0) return true;
    return false;
  };
  std::set<std::string> copied;
  for (const auto& item : module.named_parameters()) {
    const std::string& name = item.key();
    if (!wanted(name)) continue;
    auto it = ckpt.tensors.find(name);
    if (it == ckpt.tensors.end())
      throw std::runtime_error("checkpoint is missing parameter: " + name);
    if (!it->second.sizes().equals(item.value().sizes()))
      throw std::runtime_error("checkpoint shape mismatch for: " + name);
    item.value().copy_(it->second.to(item.value().dtype()));
    copied.insert(name);
  }
  if (copied.empty()) throw std::runtime_error("checkpoint matched no parameters");
}

AdamState adam_state_from_checkpoint(const Checkpoint& ckpt) {
  AdamState state;
  state.step_count = ckpt.header.value("adam_step", int64_t{0});
  for (const auto& [key, t] : ckpt.tensors) {
    if (key.rfind("adam_m:", 0) == 0) state.m[key.substr(7)] = t.clone();
    if (key.rfind("adam_v:", 0) == 0) state.v[key.substr(7)] = t.clone();
  }
  return state;
}

}  // namespace cloudmae
