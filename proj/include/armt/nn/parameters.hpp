#pragma once

#include <deque>
#include <string>
#include <unordered_map>
#include <vector>

#include "armt/nn/rng.hpp"
#include "armt/nn/tensor.hpp"

namespace armt::nn {

/// Owns a model's parameters; names are unique and addresses stable.
template <typename T>
class ParameterStore {
 public:
  ParameterStore() = default;
  ParameterStore(const ParameterStore&) = delete;
  ParameterStore& operator=(const ParameterStore&) = delete;
  ParameterStore(ParameterStore&&) = default;
  ParameterStore& operator=(ParameterStore&&) = default;

  Parameter<T>& add(const std::string& name, Tensor<T> value) {
    if (index_.count(name)) throw ConfigError("duplicate parameter name: " + name);
    params_.emplace_back(name, std::move(value));
    index_.emplace(name, params_.size() - 1);
    return params_.back();
  }

  Parameter<T>& normal(const std::string& name, Shape shape, Rng& rng, double stddev) {
    Tensor<T> t(std::move(shape));
    for (T& v : t.storage()) v = static_cast<T>(rng.normal(0.0, stddev));
    return add(name, std::move(t));
  }

  Parameter<T>& zeros(const std::string& name, Shape shape) { return add(name, Tensor<T>(std::move(shape))); }

  Parameter<T>& ones(const std::string& name, Shape shape) {
    return add(name, Tensor<T>::filled(std::move(shape), T(1)));
  }

  Parameter<T>* find(const std::string& name) {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : &params_[it->second];
  }
  const Parameter<T>* find(const std::string& name) const {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : &params_[it->second];
  }

  Parameter<T>& at(const std::string& name) {
    Parameter<T>* p = find(name);
    if (!p) throw ConfigError("unknown parameter: " + name);
    return *p;
  }

  std::size_t size() const { return params_.size(); }
  Parameter<T>& operator[](std::size_t i) { return params_[i]; }
  const Parameter<T>& operator[](std::size_t i) const { return params_[i]; }

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
  }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

 private:
  std::deque<Parameter<T>> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace armt::nn
