#include "kdseq/optim.hpp"

#include <cmath>

namespace kdseq {

void Sgd::step(ParameterSet& params) {
  for (auto& [name, p] : params) {
    Node* n = p.node().get();
    if (n->grad.empty()) continue;
    for (size_t i = 0; i < n->value.size(); i++) n->value[i] -= lr_ * n->grad[i];
  }
}

void Adam::step(ParameterSet& params) {
  t_++;
  double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  for (auto& [name, p] : params) {
    Node* n = p.node().get();
    if (n->grad.empty()) continue;
    auto& m = m_[name];
    auto& v = v_[name];
    if (m.size() != n->value.size()) m.assign(n->value.size(), 0.0);
    if (v.size() != n->value.size()) v.assign(n->value.size(), 0.0);
    for (size_t i = 0; i < n->value.size(); i++) {
      double g = n->grad[i];
      m[i] = b1_ * m[i] + (1.0 - b1_) * g;
      v[i] = b2_ * v[i] + (1.0 - b2_) * g * g;
      n->value[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
    }
  }
}

std::unique_ptr<Optimizer> make_optimizer(const std::string& name, double lr, double beta1,
                                          double beta2) {
  if (name == "sgd") return std::make_unique<Sgd>(lr);
  if (name == "adam") return std::make_unique<Adam>(lr, beta1, beta2);
  throw config_error("unknown optimizer '" + name + "' (expected adam|sgd)");
}

}  // namespace kdseq
