#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "vitas/ops.hpp"
#include "vitas/tensor.hpp"

namespace vitas {

using Rng = std::mt19937_64;

/// A named leaf tensor owned by a ParameterSet. A frozen parameter never
/// records gradient and is skipped by the optimizer.
template <typename T>
class Parameter {
 public:
  Parameter(std::string name, Tensor<T> value);

  const std::string& name() const { return name_; }
  const Tensor<T>& value() const { return value_; }
  Tensor<T>& value() { return value_; }
  bool frozen() const { return frozen_; }
  void set_frozen(bool frozen);
  /// Zeros when frozen or when nothing has flowed into the parameter.
  std::vector<T> gradient() const { return value_.grad(); }

 private:
  std::string name_;
  Tensor<T> value_;
  bool frozen_ = false;
};

/// Owns all parameters of a model in registration order. References handed
/// out stay valid for the set's lifetime.
template <typename T>
class ParameterSet {
 public:
  ParameterSet() = default;
  ParameterSet(const ParameterSet&) = delete;
  ParameterSet& operator=(const ParameterSet&) = delete;

  Parameter<T>& add(const std::string& name, Tensor<T> value);
  Parameter<T>* find(const std::string& name);
  const Parameter<T>* find(const std::string& name) const;

  std::deque<Parameter<T>>& all() { return params_; }
  const std::deque<Parameter<T>>& all() const { return params_; }
  std::size_t size() const { return params_.size(); }
  std::int64_t element_count() const;
  void zero_grad();

 private:
  std::deque<Parameter<T>> params_;
  std::map<std::string, std::size_t> index_;
};

namespace init {

/// U(-1/sqrt(fan_in), 1/sqrt(fan_in)): Kaiming-uniform with a = sqrt(5).
template <typename T>
Tensor<T> kaiming_uniform(Shape shape, std::int64_t fan_in, Rng& rng);
template <typename T>
Tensor<T> normal(Shape shape, double stddev, Rng& rng);

}  // namespace init

template <typename T>
class Linear {
 public:
  Linear() = default;
  Linear(ParameterSet<T>& ps, const std::string& prefix, std::int64_t in, std::int64_t out, Rng& rng);
  Tensor<T> operator()(const Tensor<T>& x) const;
  Parameter<T>& weight() const { return *weight_; }
  Parameter<T>& bias() const { return *bias_; }
  std::int64_t in_features() const { return in_; }
  std::int64_t out_features() const { return out_; }

 private:
  Parameter<T>* weight_ = nullptr;
  Parameter<T>* bias_ = nullptr;
  std::int64_t in_ = 0, out_ = 0;
};

template <typename T>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(ParameterSet<T>& ps, const std::string& prefix, std::int64_t in, std::int64_t out, int kernel, int stride,
         int pad, Rng& rng);
  Tensor<T> operator()(const Tensor<T>& x) const;

 private:
  Parameter<T>* weight_ = nullptr;
  Parameter<T>* bias_ = nullptr;
  int stride_ = 1, pad_ = 0;
};

template <typename T>
class ConvTranspose2d {
 public:
  ConvTranspose2d() = default;
  ConvTranspose2d(ParameterSet<T>& ps, const std::string& prefix, std::int64_t in, std::int64_t out, int kernel,
                  int stride, Rng& rng);
  Tensor<T> operator()(const Tensor<T>& x) const;

 private:
  Parameter<T>* weight_ = nullptr;
  Parameter<T>* bias_ = nullptr;
  int stride_ = 2;
};

template <typename T>
class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(ParameterSet<T>& ps, const std::string& prefix, std::int64_t channels);
  Tensor<T> operator()(const Tensor<T>& x) const;

 private:
  Parameter<T>* gamma_ = nullptr;
  Parameter<T>* beta_ = nullptr;
};

template <typename T>
class GroupNorm {
 public:
  GroupNorm() = default;
  GroupNorm(ParameterSet<T>& ps, const std::string& prefix, std::int64_t channels, int groups);
  Tensor<T> operator()(const Tensor<T>& x) const;

 private:
  Parameter<T>* gamma_ = nullptr;
  Parameter<T>* beta_ = nullptr;
  int groups_ = 1;
};

/// Largest group count <= preferred that divides channels.
int group_count_for(std::int64_t channels, int preferred);

inline constexpr double kNormEps = 1e-5;

}  // namespace vitas
