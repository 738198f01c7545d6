#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

#include "sphynx/array.hpp"

namespace sphynx::optim {

struct SgdConfig {
  double lr = 0.025;
  double momentum = 0.9;
  double weight_decay = 3e-4;
  double clip = 5.0;  // global grad-norm clip, <= 0 disables
  bool nesterov = true;
};

class Sgd {
 public:
  explicit Sgd(SgdConfig cfg) : cfg_(cfg) {}

  void step(const std::vector<Array*>& params, const std::vector<const Array*>& grads) {
    if (params.size() != grads.size()) throw std::invalid_argument("sgd: size mismatch");
    if (vel_.empty())
      for (const Array* g : grads) vel_.emplace_back(g->shape);
    double scale = 1.0;
    if (cfg_.clip > 0.0) {
      double sq = 0.0;
      for (const Array* g : grads)
        for (double v : g->data) sq += v * v;
      const double norm = std::sqrt(sq);
      if (norm > cfg_.clip) scale = cfg_.clip / norm;
    }
    for (size_t i = 0; i < params.size(); ++i) {
      Array& p = *params[i];
      const Array& g = *grads[i];
      Array& v = vel_[i];
      for (size_t j = 0; j < p.size(); ++j) {
        const double eff = g.data[j] * scale + cfg_.weight_decay * p.data[j];
        v.data[j] = cfg_.momentum * v.data[j] + eff;
        const double upd = cfg_.nesterov ? eff + cfg_.momentum * v.data[j] : v.data[j];
        p.data[j] -= cfg_.lr * upd;
      }
    }
  }

  void set_lr(double lr) { cfg_.lr = lr; }
  double lr() const { return cfg_.lr; }

 private:
  SgdConfig cfg_;
  std::vector<Array> vel_;
};

struct AdamConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-3;
};

class Adam {
 public:
  explicit Adam(AdamConfig cfg) : cfg_(cfg) {}

  void step(const std::vector<Array*>& params, const std::vector<const Array*>& grads) {
    if (params.size() != grads.size()) throw std::invalid_argument("adam: size mismatch");
    if (m_.empty()) {
      for (const Array* g : grads) {
        m_.emplace_back(g->shape);
        v_.emplace_back(g->shape);
      }
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
    const double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
    for (size_t i = 0; i < params.size(); ++i) {
      Array& p = *params[i];
      const Array& g = *grads[i];
      for (size_t j = 0; j < p.size(); ++j) {
        const double eff = g.data[j] + cfg_.weight_decay * p.data[j];
        m_[i].data[j] = cfg_.beta1 * m_[i].data[j] + (1.0 - cfg_.beta1) * eff;
        v_[i].data[j] = cfg_.beta2 * v_[i].data[j] + (1.0 - cfg_.beta2) * eff * eff;
        const double mh = m_[i].data[j] / bc1;
        const double vh = v_[i].data[j] / bc2;
        p.data[j] -= cfg_.lr * mh / (std::sqrt(vh) + cfg_.eps);
      }
    }
  }

 private:
  AdamConfig cfg_;
  int t_ = 0;
  std::vector<Array> m_, v_;
};

// Cosine learning-rate schedule (lr_max -> lr_min over total steps).
inline double cosine_lr(double lr_max, double lr_min, int step, int total) {
  if (total <= 1) return lr_min;
  const double t = static_cast<double>(step) / (total - 1);
  return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + std::cos(3.14159265358979323846 * t));
}

// Parameter snapshot: u64 little-endian element count, then the flattened
// values as 64-bit little-endian IEEE doubles.
inline std::vector<uint8_t> snapshot_params(const std::vector<Array>& params) {
  uint64_t count = 0;
  for (const Array& a : params) count += a.size();
  std::vector<uint8_t> out(8 + count * 8);
  size_t off = 0;
  auto put64 = [&](uint64_t bits) {
    for (int i = 0; i < 8; ++i) out[off++] = static_cast<uint8_t>(bits >> (8 * i));
  };
  put64(count);
  for (const Array& a : params)
    for (double v : a.data) {
      uint64_t bits;
      std::memcpy(&bits, &v, 8);
      put64(bits);
    }
  return out;
}

inline void write_snapshot(const std::string& path, const std::vector<Array>& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("snapshot: cannot open " + path);
  auto bytes = snapshot_params(params);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

inline uint64_t fnv1a(const std::vector<uint8_t>& bytes) {
  uint64_t h = 1469598103934665603ULL;
  for (uint8_t b : bytes) {
    h ^= b;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace sphynx::optim
