#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "editdiff/nn/transformer.hpp"

namespace editdiff::nn {

struct AdamConfig {
  double peak_lr = 1e-3;
  int warmup_steps = 500;
  int total_steps = 20000;
  double final_lr_fraction = 0.1;  // cosine decay floor after warmup
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_norm = 1.0;  // global gradient norm; <= 0 disables
};

/// Linear warmup to the peak, then cosine decay to peak * final_lr_fraction.
inline double learning_rate(const AdamConfig& c, int step) {
  if (c.warmup_steps > 0 && step < c.warmup_steps)
    return c.peak_lr * static_cast<double>(step + 1) / c.warmup_steps;
  const int span = std::max(1, c.total_steps - c.warmup_steps);
  const double frac = std::min(1.0, static_cast<double>(step - c.warmup_steps) / span);
  const double cosine = 0.5 * (1.0 + std::cos(3.14159265358979323846 * frac));
  return c.peak_lr * (c.final_lr_fraction + (1.0 - c.final_lr_fraction) * cosine);
}

template <typename S>
class Adam {
 public:
  Adam() = default;
  Adam(const NetConfig& net, AdamConfig c) : cfg_(c), m_(zeros<S>(net)), v_(zeros<S>(net)) {}

  const AdamConfig& config() const { return cfg_; }
  int steps_taken() const { return t_; }

  /// Applies one update; returns the pre-clipping gradient norm.
  double step(Params<S>& p, const Params<S>& g) {
    double sq = 0.0;
    g.visit([&](const std::string&, const Mat<S>& m) { sq += m.template cast<double>().squaredNorm(); });
    const double norm = std::sqrt(sq);
    const double clip = (cfg_.clip_norm > 0.0 && norm > cfg_.clip_norm) ? cfg_.clip_norm / norm : 1.0;
    const double lr = learning_rate(cfg_, t_);
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
    const double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
    std::vector<const Mat<S>*> gs;
    std::vector<Mat<S>*> ms, vs;
    g.visit([&](const std::string&, const Mat<S>& m) { gs.push_back(&m); });
    m_.visit([&](const std::string&, Mat<S>& m) { ms.push_back(&m); });
    v_.visit([&](const std::string&, Mat<S>& m) { vs.push_back(&m); });
    std::size_t i = 0;
    const S b1 = static_cast<S>(cfg_.beta1), b2 = static_cast<S>(cfg_.beta2);
    const S sclip = static_cast<S>(clip), eps = static_cast<S>(cfg_.eps);
    const S step_size = static_cast<S>(lr / bc1);
    const S inv_bc2 = static_cast<S>(1.0 / bc2);
    p.visit([&](const std::string&, Mat<S>& w) {
      auto& m = *ms[i];
      auto& v = *vs[i];
      const auto gg = (gs[i]->array() * sclip).eval();
      m.array() = b1 * m.array() + (S(1) - b1) * gg;
      v.array() = b2 * v.array() + (S(1) - b2) * gg.square();
      w.array() -= step_size * m.array() / ((v.array() * inv_bc2).sqrt() + eps);
      ++i;
    });
    return norm;
  }

  Params<S>& first_moment() { return m_; }
  Params<S>& second_moment() { return v_; }
  void set_steps_taken(int t) { t_ = t; }

 private:
  AdamConfig cfg_;
  Params<S> m_, v_;
  int t_ = 0;
};

}  // namespace editdiff::nn
