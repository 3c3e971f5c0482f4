#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "sgen/nn/autograd.hpp"

namespace sgen::nn {

struct AdamOptions {
    double beta1 = 0.5;
    double beta2 = 0.999;
    double eps = 1e-8;
};

template <typename T>
class Adam {
  public:
    // Holds shared handles to the parameters, so the owning modules may move.
    Adam(std::vector<std::pair<std::string, Var<T>>> params, AdamOptions options = {});

    void zero_grad();
    // Rescales all gradients so their global L2 norm is at most max_norm.
    // Returns the norm before clipping.
    double clip_grad_norm(double max_norm);
    void step(double lr);

    long long steps() const { return steps_; }
    const AdamOptions& options() const { return options_; }

    // Moment estimates keyed "m.<param>" / "v.<param>".
    std::map<std::string, Tensor<T>> state() const;
    void load_state(const std::map<std::string, Tensor<T>>& state, long long steps);

  private:
    std::vector<std::pair<std::string, Var<T>>> params_;
    std::vector<Tensor<T>> m_;
    std::vector<Tensor<T>> v_;
    AdamOptions options_;
    long long steps_ = 0;
};

}  // namespace sgen::nn
