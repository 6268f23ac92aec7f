#include "ibn/checkpoint.hpp"

#include <fstream>
#include <stdexcept>

namespace ibn {

using nlohmann::json;

bool Checkpoint::has(const std::string& name) const {
  for (const auto& [n, t] : params)
    if (n == name) return true;
  return false;
}

Tensor Checkpoint::get(const std::string& name) const {
  for (const auto& [n, t] : params)
    if (n == name) return t;
  throw std::runtime_error("checkpoint: missing parameter " + name);
}

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  json j;
  j["magic"] = kCheckpointMagic;
  j["meta"] = ck.meta;
  json arr = json::array();
  for (const auto& [name, t] : ck.params) {
    json p;
    p["name"] = name;
    p["shape"] = t.shape();
    p["values"] = t.values();
    arr.push_back(std::move(p));
  }
  j["params"] = std::move(arr);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("checkpoint: cannot write " + path);
  f << j.dump();
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("checkpoint: cannot read " + path);
  json j = json::parse(f, nullptr, true);
  if (!j.contains("magic") || j["magic"] != kCheckpointMagic)
    throw std::runtime_error("checkpoint: bad or missing magic in " + path);
  Checkpoint ck;
  ck.meta = j.value("meta", json::object());
  for (const auto& p : j["params"]) {
    Shape shape = p["shape"].get<Shape>();
    std::vector<double> vals = p["values"].get<std::vector<double>>();
    ck.params.push_back({p["name"].get<std::string>(),
                         Tensor::from(std::move(shape), std::move(vals))});
  }
  return ck;
}

}  // namespace ibn
