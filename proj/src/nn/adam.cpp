#include "sgen/nn/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace sgen::nn {

template <typename T>
Adam<T>::Adam(std::vector<std::pair<std::string, Var<T>>> params, AdamOptions options)
    : params_(std::move(params)), options_(options) {
    for (const auto& [name, p] : params_) {
        m_.emplace_back(p.shape());
        v_.emplace_back(p.shape());
    }
}

template <typename T>
void Adam<T>::zero_grad() {
    for (auto& [name, p] : params_) {
        p.zero_grad();
    }
}

template <typename T>
double Adam<T>::clip_grad_norm(double max_norm) {
    double total = 0.0;
    for (const auto& [name, p] : params_) {
        if (!p.has_grad()) {
            continue;
        }
        for (T g : p.grad().values()) {
            total += static_cast<double>(g) * g;
        }
    }
    const double norm = std::sqrt(total);
    if (std::isfinite(norm) && norm > max_norm && max_norm > 0.0) {
        const T factor = static_cast<T>(max_norm / (norm + 1e-6));
        for (auto& [name, p] : params_) {
            if (p.has_grad()) {
                for (auto& g : p.mutable_grad().values()) {
                    g *= factor;
                }
            }
        }
    }
    return norm;
}

template <typename T>
void Adam<T>::step(double lr) {
    ++steps_;
    const double b1 = options_.beta1;
    const double b2 = options_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
        Var<T>& p = params_[k].second;
        if (!p.has_grad()) {
            continue;
        }
        auto& value = p.mutable_value();
        const auto& grad = p.grad();
        auto& m = m_[k];
        auto& v = v_[k];
        for (std::size_t i = 0; i < value.numel(); ++i) {
            const double g = grad[i];
            const double mi = b1 * m[i] + (1.0 - b1) * g;
            const double vi = b2 * v[i] + (1.0 - b2) * g * g;
            m[i] = static_cast<T>(mi);
            v[i] = static_cast<T>(vi);
            const double update = lr * (mi / c1) / (std::sqrt(vi / c2) + options_.eps);
            value[i] = static_cast<T>(value[i] - update);
        }
    }
}

template <typename T>
std::map<std::string, Tensor<T>> Adam<T>::state() const {
    std::map<std::string, Tensor<T>> out;
    for (std::size_t k = 0; k < params_.size(); ++k) {
        out["m." + params_[k].first] = m_[k];
        out["v." + params_[k].first] = v_[k];
    }
    return out;
}

template <typename T>
void Adam<T>::load_state(const std::map<std::string, Tensor<T>>& state, long long steps) {
    for (std::size_t k = 0; k < params_.size(); ++k) {
        for (auto [prefix, dst] : {std::pair{"m.", &m_[k]}, std::pair{"v.", &v_[k]}}) {
            auto it = state.find(prefix + params_[k].first);
            if (it == state.end()) {
                throw std::invalid_argument("optimizer state lacks '" + std::string(prefix) + params_[k].first + "'");
            }
            if (it->second.shape() != dst->shape()) {
                throw std::invalid_argument("optimizer state shape mismatch for " + params_[k].first);
            }
            *dst = it->second;
        }
    }
    steps_ = steps;
}

template class Adam<float>;
template class Adam<double>;

}  // namespace sgen::nn
