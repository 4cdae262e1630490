#pragma once

#include <cmath>
#include <vector>

#include "bf/steprules.hpp"

namespace bf::testing {

// Loop-based re-implementation of the step rules over plain vectors. Each
// parameter is one flat vector; parameters are kept in sorted-path order.
class NaiveChain {
 public:
  NaiveChain(steprules::RuleChain chain, std::vector<std::size_t> sizes)
      : chain_(std::move(chain)), sizes_(std::move(sizes)) {
    for (std::size_t r = 0; r < chain_.size(); ++r) {
      buf_a_.emplace_back();
      buf_b_.emplace_back();
      for (auto n : sizes_) {
        buf_a_[r].emplace_back(n, 0.0);
        buf_b_[r].emplace_back(n, 0.0);
      }
    }
  }

  std::vector<std::vector<double>> step(std::vector<std::vector<double>> s) {
    bool uses_t = false;
    for (const auto& rule : chain_) uses_t = uses_t || rule.kind == steprules::RuleKind::Adam;
    if (uses_t) t_ += 1;
    for (std::size_t r = 0; r < chain_.size(); ++r) {
      const auto& rule = chain_[r];
      if (rule.kind == steprules::RuleKind::GradientClipping) {
        double sq = 0.0;
        for (const auto& p : s) {
          for (double x : p) sq += x * x;
        }
        const double norm = std::sqrt(sq);
        if (norm > rule.threshold) {
          for (auto& p : s) {
            for (double& x : p) x = x * rule.threshold / norm;
          }
        }
        continue;
      }
      for (std::size_t p = 0; p < s.size(); ++p) {
        for (std::size_t i = 0; i < s[p].size(); ++i) {
          s[p][i] = one(rule, s[p][i], buf_a_[r][p][i], buf_b_[r][p][i]);
        }
      }
    }
    return s;
  }

  const std::vector<double>& buffer_a(std::size_t rule, std::size_t param) const { return buf_a_[rule][param]; }
  const std::vector<double>& buffer_b(std::size_t rule, std::size_t param) const { return buf_b_[rule][param]; }
  long long t() const { return t_; }

 private:
  double one(const steprules::StepRule& rule, double s, double& a, double& b) const {
    using K = steprules::RuleKind;
    switch (rule.kind) {
      case K::Scale:
        return rule.learning_rate * s;
      case K::Momentum:
        a = rule.momentum * a + s;
        return a;
      case K::AdaGrad:
        a = a + s * s;
        return rule.learning_rate * s / (std::sqrt(a) + rule.epsilon);
      case K::RMSProp:
        a = rule.decay * a + (1.0 - rule.decay) * (s * s);
        return rule.learning_rate * s / (std::sqrt(a) + rule.epsilon);
      case K::AdaDelta: {
        a = rule.decay * a + (1.0 - rule.decay) * (s * s);
        const double d = s * std::sqrt(b + rule.epsilon) / std::sqrt(a + rule.epsilon);
        b = rule.decay * b + (1.0 - rule.decay) * (d * d);
        return d;
      }
      case K::Adam: {
        const double t = static_cast<double>(t_);
        a = rule.beta1 * a + (1.0 - rule.beta1) * s;
        b = rule.beta2 * b + (1.0 - rule.beta2) * (s * s);
        const double m_hat = a / (1.0 - std::pow(rule.beta1, t));
        const double v_hat = b / (1.0 - std::pow(rule.beta2, t));
        return rule.learning_rate * m_hat / (std::sqrt(v_hat) + rule.epsilon);
      }
      case K::GradientClipping:
        break;
    }
    return s;
  }

  steprules::RuleChain chain_;
  std::vector<std::size_t> sizes_;
  std::vector<std::vector<std::vector<double>>> buf_a_, buf_b_;
  long long t_ = 0;
};

}  // namespace bf::testing
