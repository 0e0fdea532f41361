#pragma once

#include <bit>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "rare/config.hpp"
#include "rare/errors.hpp"
#include "rare/model.hpp"

namespace rare {

// Checkpoint container "RAREv1": one ASCII line `RAREv1 <json_bytes>\n`,
// then a JSON header (format version, config echo, attribute dimension,
// ordered tensor list of {name, rows, cols, dtype}), then the tensors'
// raw little-endian data concatenated in header order.
static_assert(std::endian::native == std::endian::little,
              "checkpoint format is little-endian");

namespace ckpt_detail {

std::string header_json(const RunConfig& cfg, int attr_dim,
                        const std::vector<std::string>& names,
                        const std::vector<std::pair<int, int>>& shapes);

struct ParsedHeader {
  RunConfig cfg;
  int attr_dim = 0;
  std::vector<std::string> names;
  std::vector<std::pair<int, int>> shapes;
  std::string dtype;
};

ParsedHeader read_header(std::istream& in, const std::string& path);

}  // namespace ckpt_detail

template <typename Real>
void save_checkpoint(const std::string& path, RareModel<Real>& model) {
  auto params = model.all_params();
  std::vector<std::string> names;
  std::vector<std::pair<int, int>> shapes;
  for (auto* p : params) {
    names.push_back(p->name);
    shapes.emplace_back(p->rows, p->cols);
  }
  const std::string json = ckpt_detail::header_json(model.cfg, model.attr_dim, names, shapes);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw parse_error(path + ": cannot open for writing");
  out << "RAREv1 " << json.size() << "\n" << json;
  for (auto* p : params)
    out.write(reinterpret_cast<const char*>(p->v.data()),
              static_cast<std::streamsize>(p->v.size() * sizeof(Real)));
  if (!out) throw parse_error(path + ": write failed");
}

// Reads just the config echo (for precision dispatch before loading).
RunConfig checkpoint_config(const std::string& path);

template <typename Real>
RareModel<Real> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw parse_error(path + ": cannot open");
  auto header = ckpt_detail::read_header(in, path);
  const std::string want = sizeof(Real) == 4 ? "f32" : "f64";
  if (header.dtype != want)
    throw config_error(path + ": checkpoint dtype " + header.dtype + ", expected " + want);

  RareModel<Real> model = RareModel<Real>::init(header.cfg, header.attr_dim, /*seed=*/0);
  auto params = model.all_params();
  if (params.size() != header.names.size())
    throw parse_error(path + ": header lists " + std::to_string(header.names.size()) +
                      " tensors, model has " + std::to_string(params.size()));
  for (size_t i = 0; i < params.size(); ++i) {
    if (params[i]->name != header.names[i])
      throw parse_error(path + ": tensor " + std::to_string(i) + " is '" + header.names[i] +
                        "', expected '" + params[i]->name + "'");
    if (params[i]->rows != header.shapes[i].first || params[i]->cols != header.shapes[i].second)
      throw parse_error(path + ": shape mismatch for " + params[i]->name);
    in.read(reinterpret_cast<char*>(params[i]->v.data()),
            static_cast<std::streamsize>(params[i]->v.size() * sizeof(Real)));
    if (!in) throw parse_error(path + ": truncated tensor data at " + params[i]->name);
  }
  return model;
}

}  // namespace rare
