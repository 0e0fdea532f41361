#include "rare/checkpoint.hpp"

#include <json.hpp>

namespace rare {

using nlohmann::json;

namespace ckpt_detail {

std::string header_json(const RunConfig& cfg, int attr_dim,
                        const std::vector<std::string>& names,
                        const std::vector<std::pair<int, int>>& shapes) {
  json j;
  j["format"] = "RAREv1";
  j["version"] = 1;
  j["config"] = json::parse(to_json(cfg));
  j["attr_dim"] = attr_dim;
  const std::string dtype = cfg.precision == Precision::f32 ? "f32" : "f64";
  json tensors = json::array();
  for (size_t i = 0; i < names.size(); ++i) {
    json t;
    t["name"] = names[i];
    t["shape"] = {shapes[i].first, shapes[i].second};
    t["dtype"] = dtype;
    tensors.push_back(t);
  }
  j["tensors"] = tensors;
  return j.dump();
}

ParsedHeader read_header(std::istream& in, const std::string& path) {
  std::string magic;
  size_t json_len = 0;
  in >> magic >> json_len;
  if (magic != "RAREv1") throw parse_error(path + ": not a RAREv1 checkpoint");
  in.get();  // newline
  std::string text(json_len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(json_len));
  if (!in) throw parse_error(path + ": truncated header");

  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw parse_error(path + ": bad header: " + e.what());
  }
  ParsedHeader h;
  h.cfg = config_from_json(j["config"].dump());
  h.attr_dim = j["attr_dim"];
  for (const auto& t : j["tensors"]) {
    h.names.push_back(t["name"]);
    h.shapes.emplace_back(t["shape"][0], t["shape"][1]);
    h.dtype = t["dtype"];
  }
  return h;
}

}  // namespace ckpt_detail

RunConfig checkpoint_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw parse_error(path + ": cannot open");
  return ckpt_detail::read_header(in, path).cfg;
}

}  // namespace rare
