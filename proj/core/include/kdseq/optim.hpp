#pragma once

#include <map>
#include <memory>

#include "kdseq/tensor.hpp"

namespace kdseq {

class Optimizer {
public:
  virtual ~Optimizer() = default;
  virtual void step(ParameterSet& params) = 0;
};

class Sgd : public Optimizer {
public:
  explicit Sgd(double lr) : lr_(lr) {}
  void step(ParameterSet& params) override;

private:
  double lr_;
};

class Adam : public Optimizer {
public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {}
  void step(ParameterSet& params) override;

private:
  double lr_, b1_, b2_, eps_;
  size_t t_ = 0;
  std::map<std::string, std::vector<double>> m_, v_;
};

std::unique_ptr<Optimizer> make_optimizer(const std::string& name, double lr, double beta1 = 0.9,
                                          double beta2 = 0.999);

}  // namespace kdseq
