#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "rare/errors.hpp"
#include "rare/tape.hpp"

namespace rare {

// Trainable parameter matrix living outside any tape. Each training step
// registers it as a tape leaf and copies the resulting gradient back.
template <typename Real>
struct Param {
  std::string name;
  int rows = 0, cols = 0;
  std::vector<Real> v;
  std::vector<Real> g;

  Param() = default;
  Param(std::string n, int r, int c, std::vector<Real> data)
      : name(std::move(n)), rows(r), cols(c), v(std::move(data)), g(v.size(), Real(0)) {}

  size_t size() const { return v.size(); }
  void zero_grad() { std::fill(g.begin(), g.end(), Real(0)); }
};

// Glorot/Xavier uniform: +-sqrt(6 / (fan_in + fan_out)), deterministic per seed.
template <typename Real>
std::vector<Real> xavier_uniform(int fan_in, int fan_out, size_t count, uint64_t seed) {
  const double bound = std::sqrt(6.0 / (fan_in + fan_out));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<Real> out(count);
  for (auto& x : out) x = static_cast<Real>(dist(rng));
  return out;
}

// 2-D Xavier init: fan_in = rows, fan_out = cols (inputs multiply W from the left).
template <typename Real>
Param<Real> xavier_init(std::string name, int rows, int cols, uint64_t seed) {
  if (rows < 1 || cols < 1) throw config_error("xavier_init: shape must be 2-D positive");
  return Param<Real>(std::move(name), rows, cols,
                     xavier_uniform<Real>(rows, cols, static_cast<size_t>(rows) * cols, seed));
}

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename Real>
struct AdamState {
  AdamConfig cfg;
  long step = 0;
  std::vector<std::vector<Real>> m, v;

  void init(const std::vector<Param<Real>*>& params, AdamConfig c) {
    cfg = c;
    step = 0;
    m.clear();
    v.clear();
    for (auto* p : params) {
      m.emplace_back(p->size(), Real(0));
      v.emplace_back(p->size(), Real(0));
    }
  }
};

// Bias-corrected Adam update from the gradients currently held in each Param.
template <typename Real>
void adam_step(const std::vector<Param<Real>*>& params, AdamState<Real>& state) {
  if (params.size() != state.m.size())
    throw dim_error("adam_step: state tracks " + std::to_string(state.m.size()) +
                    " params, got " + std::to_string(params.size()));
  ++state.step;
  const Real b1 = static_cast<Real>(state.cfg.beta1);
  const Real b2 = static_cast<Real>(state.cfg.beta2);
  const Real corr1 = Real(1) - static_cast<Real>(std::pow(state.cfg.beta1, state.step));
  const Real corr2 = Real(1) - static_cast<Real>(std::pow(state.cfg.beta2, state.step));
  const Real lr = static_cast<Real>(state.cfg.lr);
  const Real eps = static_cast<Real>(state.cfg.eps);
  for (size_t k = 0; k < params.size(); ++k) {
    Param<Real>& p = *params[k];
    if (p.size() != state.m[k].size()) throw dim_error("adam_step: param shape changed");
    for (size_t i = 0; i < p.size(); ++i) {
      const Real g = p.g[i];
      state.m[k][i] = b1 * state.m[k][i] + (Real(1) - b1) * g;
      state.v[k][i] = b2 * state.v[k][i] + (Real(1) - b2) * g * g;
      const Real mhat = state.m[k][i] / corr1;
      const Real vhat = state.v[k][i] / corr2;
      p.v[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

}  // namespace rare
