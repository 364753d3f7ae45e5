#include "vitas/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace vitas {

template <typename T>
Parameter<T>::Parameter(std::string name, Tensor<T> value) : name_(std::move(name)), value_(std::move(value)) {
  value_.set_requires_grad(true);
}

template <typename T>
void Parameter<T>::set_frozen(bool frozen) {
  frozen_ = frozen;
  value_.set_requires_grad(!frozen);
  if (frozen) value_.zero_grad();
}

template <typename T>
Parameter<T>& ParameterSet<T>::add(const std::string& name, Tensor<T> value) {
  if (index_.count(name)) throw std::invalid_argument("duplicate parameter name: " + name);
  index_[name] = params_.size();
  params_.emplace_back(name, std::move(value));
  return params_.back();
}

template <typename T>
Parameter<T>* ParameterSet<T>::find(const std::string& name) {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : &params_[it->second];
}

template <typename T>
const Parameter<T>* ParameterSet<T>::find(const std::string& name) const {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : &params_[it->second];
}

template <typename T>
std::int64_t ParameterSet<T>::element_count() const {
  std::int64_t n = 0;
  for (const auto& p : params_) n += p.value().numel();
  return n;
}

template <typename T>
void ParameterSet<T>::zero_grad() {
  for (auto& p : params_) p.value().zero_grad();
}

namespace init {

template <typename T>
Tensor<T> kaiming_uniform(Shape shape, std::int64_t fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<T> v(static_cast<std::size_t>(shape_numel(shape)));
  for (auto& x : v) x = static_cast<T>(dist(rng));
  return Tensor<T>(std::move(shape), std::move(v));
}

template <typename T>
Tensor<T> normal(Shape shape, double stddev, Rng& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  std::vector<T> v(static_cast<std::size_t>(shape_numel(shape)));
  for (auto& x : v) x = static_cast<T>(dist(rng));
  return Tensor<T>(std::move(shape), std::move(v));
}

}  // namespace init

template <typename T>
Linear<T>::Linear(ParameterSet<T>& ps, const std::string& prefix, std::int64_t in, std::int64_t out, Rng& rng)
    : in_(in), out_(out) {
  weight_ = &ps.add(prefix + ".weight", init::kaiming_uniform<T>({out, in}, in, rng));
  bias_ = &ps.add(prefix + ".bias", Tensor<T>(Shape{out}));
}

template <typename T>
Tensor<T> Linear<T>::operator()(const Tensor<T>& x) const {
  return ops::linear(x, weight_->value(), bias_->value());
}

template <typename T>
Conv2d<T>::Conv2d(ParameterSet<T>& ps, const std::string& prefix, std::int64_t in, std::int64_t out, int kernel,
                  int stride, int pad, Rng& rng)
    : stride_(stride), pad_(pad) {
  weight_ = &ps.add(prefix + ".weight", init::kaiming_uniform<T>({out, in, kernel, kernel}, in * kernel * kernel, rng));
  bias_ = &ps.add(prefix + ".bias", Tensor<T>(Shape{out}));
}

template <typename T>
Tensor<T> Conv2d<T>::operator()(const Tensor<T>& x) const {
  return ops::conv2d(x, weight_->value(), bias_->value(), stride_, pad_);
}

template <typename T>
ConvTranspose2d<T>::ConvTranspose2d(ParameterSet<T>& ps, const std::string& prefix, std::int64_t in,
                                    std::int64_t out, int kernel, int stride, Rng& rng)
    : stride_(stride) {
  // PyTorch computes fan_in for transposed weights from axis 1.
  weight_ = &ps.add(prefix + ".weight",
                    init::kaiming_uniform<T>({in, out, kernel, kernel}, out * kernel * kernel, rng));
  bias_ = &ps.add(prefix + ".bias", Tensor<T>(Shape{out}));
}

template <typename T>
Tensor<T> ConvTranspose2d<T>::operator()(const Tensor<T>& x) const {
  return ops::conv_transpose2d(x, weight_->value(), bias_->value(), stride_);
}

template <typename T>
LayerNorm<T>::LayerNorm(ParameterSet<T>& ps, const std::string& prefix, std::int64_t channels) {
  gamma_ = &ps.add(prefix + ".weight", Tensor<T>(Shape{channels}, T(1)));
  beta_ = &ps.add(prefix + ".bias", Tensor<T>(Shape{channels}));
}

template <typename T>
Tensor<T> LayerNorm<T>::operator()(const Tensor<T>& x) const {
  return ops::layer_norm(x, gamma_->value(), beta_->value(), static_cast<T>(kNormEps));
}

template <typename T>
GroupNorm<T>::GroupNorm(ParameterSet<T>& ps, const std::string& prefix, std::int64_t channels, int groups)
    : groups_(groups) {
  if (groups < 1 || channels % groups != 0) {
    throw std::invalid_argument("group norm: " + std::to_string(channels) + " channels not divisible by " +
                                std::to_string(groups) + " groups");
  }
  gamma_ = &ps.add(prefix + ".weight", Tensor<T>(Shape{channels}, T(1)));
  beta_ = &ps.add(prefix + ".bias", Tensor<T>(Shape{channels}));
}

template <typename T>
Tensor<T> GroupNorm<T>::operator()(const Tensor<T>& x) const {
  return ops::group_norm(x, groups_, gamma_->value(), beta_->value(), static_cast<T>(kNormEps));
}

int group_count_for(std::int64_t channels, int preferred) {
  for (int g = preferred; g > 1; --g) {
    if (channels % g == 0) return g;
  }
  return 1;
}

template class Parameter<float>;
template class Parameter<double>;
template class ParameterSet<float>;
template class ParameterSet<double>;
template class Linear<float>;
template class Linear<double>;
template class Conv2d<float>;
template class Conv2d<double>;
template class ConvTranspose2d<float>;
template class ConvTranspose2d<double>;
template class LayerNorm<float>;
template class LayerNorm<double>;
template class GroupNorm<float>;
template class GroupNorm<double>;

namespace init {
template Tensor<float> kaiming_uniform(Shape, std::int64_t, Rng&);
template Tensor<double> kaiming_uniform(Shape, std::int64_t, Rng&);
template Tensor<float> normal(Shape, double, Rng&);
template Tensor<double> normal(Shape, double, Rng&);
}  // namespace init

}  // namespace vitas
