#pragma once
#include <string>
#include <utility>
#include <vector>

#include "ibn/tensor.hpp"
#include "json.hpp"

namespace ibn {

inline constexpr const char* kCheckpointMagic = "IBNFORGE-CKPT-1";

// A checkpoint is an ordered list of named tensors plus a free-form meta
// block (model dimensions, normalization stats, ...).  Stored as JSON with a
// magic header; doubles round-trip exactly.
struct Checkpoint {
  nlohmann::json meta = nlohmann::json::object();
  std::vector<std::pair<std::string, Tensor>> params;

  void add(const std::string& name, const Tensor& t) { params.push_back({name, t}); }
  bool has(const std::string& name) const;
  Tensor get(const std::string& name) const;  // throws if missing
};

void save_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::string& path);  // throws on bad magic

}  // namespace ibn
