#pragma once

#include <string>
#include <utility>
#include <vector>

#include "sgen/nn/autograd.hpp"
#include "sgen/rng.hpp"

namespace sgen::nn {

// Named views of a module's trainable parameters and persistent buffers
// (batch-norm running statistics).
template <typename T>
struct StateRefs {
    std::vector<std::pair<std::string, Var<T>*>> params;
    std::vector<std::pair<std::string, Tensor<T>*>> buffers;

    void append(const StateRefs& other) {
        params.insert(params.end(), other.params.begin(), other.params.end());
        buffers.insert(buffers.end(), other.buffers.begin(), other.buffers.end());
    }
};

// Copies values by name between two structurally identical modules,
// possibly of different scalar types. Throws on missing names or shapes.
template <typename Src, typename Dst>
void copy_state(const StateRefs<Src>& src, StateRefs<Dst>& dst);

inline constexpr double kInitStd = 0.02;

enum class Phase { train, eval };

template <typename T>
Tensor<T> gaussian_tensor(std::vector<int> shape, double mean, double stddev, Rng& rng);

template <typename T>
class Conv2d {
  public:
    Conv2d() = default;
    Conv2d(int in_channels, int out_channels, int kernel, int stride, int padding, PadMode mode, bool with_bias,
           Rng& rng);

    Var<T> forward(const Var<T>& x) const;
    void collect(StateRefs<T>& refs, const std::string& prefix);

    Var<T> weight;
    Var<T> bias;  // undefined when built without bias
    int stride = 1;
    int padding = 0;
    PadMode mode = PadMode::zeros;
};

template <typename T>
class ConvTranspose2d {
  public:
    ConvTranspose2d() = default;
    ConvTranspose2d(int in_channels, int out_channels, int kernel, int stride, int padding, bool with_bias, Rng& rng);

    Var<T> forward(const Var<T>& x) const;
    void collect(StateRefs<T>& refs, const std::string& prefix);

    Var<T> weight;
    Var<T> bias;
    int stride = 1;
    int padding = 0;
};

template <typename T>
class BatchNorm2d {
  public:
    BatchNorm2d() = default;
    BatchNorm2d(int channels, Rng& rng);

    // Training phase normalizes with the input's own statistics and updates
    // the running estimates; eval phase uses the running estimates.
    Var<T> forward(const Var<T>& x, Phase phase);
    Var<T> forward(const Var<T>& x) const;
    void collect(StateRefs<T>& refs, const std::string& prefix);

    Var<T> gamma;
    Var<T> beta;
    Tensor<T> running_mean;
    Tensor<T> running_var;
    T momentum = T(0.1);
    T eps = T(1e-5);
};

}  // namespace sgen::nn
