#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "otfmri/core/autograd.hpp"
#include "otfmri/core/error.hpp"
#include "otfmri/core/rng.hpp"
#include "otfmri/core/tensor.hpp"

namespace otfmri::gan {

// Ordered collection of named parameter tensors. The insertion order is the
// serialization and optimizer order.
template <class T>
class ParamSet {
 public:
  void add(std::string name, Tensor<T> value) {
    if (index_.contains(name)) throw ConfigError("duplicate parameter " + name);
    index_.emplace(name, tensors_.size());
    names_.push_back(std::move(name));
    tensors_.push_back(std::move(value));
  }

  std::size_t size() const { return tensors_.size(); }
  const std::string& name(std::size_t i) const { return names_[i]; }
  const std::vector<std::string>& names() const { return names_; }
  Tensor<T>& operator[](std::size_t i) { return tensors_[i]; }
  const Tensor<T>& operator[](std::size_t i) const { return tensors_[i]; }

  bool contains(const std::string& name) const { return index_.contains(name); }

  std::size_t index(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unknown parameter " + name);
    return it->second;
  }

  Tensor<T>& at(const std::string& name) { return tensors_[index(name)]; }
  const Tensor<T>& at(const std::string& name) const { return tensors_[index(name)]; }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& t : tensors_) n += t.size();
    return n;
  }

  bool all_finite() const {
    for (const auto& t : tensors_)
      if (!t.all_finite()) return false;
    return true;
  }

  template <class U>
  ParamSet<U> cast() const {
    ParamSet<U> out;
    for (std::size_t i = 0; i < size(); ++i) out.add(names_[i], tensors_[i].template cast<U>());
    return out;
  }

  ParamSet zeros_like() const {
    ParamSet out;
    for (std::size_t i = 0; i < size(); ++i) out.add(names_[i], Tensor<T>(tensors_[i].shape()));
    return out;
  }

  friend bool operator==(const ParamSet& a, const ParamSet& b) {
    return a.names_ == b.names_ && a.tensors_ == b.tensors_;
  }

 private:
  std::vector<std::string> names_;
  std::vector<Tensor<T>> tensors_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Graph handles for one forward pass over a ParamSet.
template <class T>
class BoundParams {
 public:
  BoundParams(const ParamSet<T>& set, bool requires_grad) : set_(&set) {
    vars_.reserve(set.size());
    for (std::size_t i = 0; i < set.size(); ++i) vars_.push_back(ag::leaf(set[i], requires_grad));
  }

  const ag::Var<T>& operator()(const std::string& name) const { return vars_[set_->index(name)]; }
  const std::vector<ag::Var<T>>& vars() const { return vars_; }

 private:
  const ParamSet<T>* set_;
  std::vector<ag::Var<T>> vars_;
};

template <class T>
void check_finite(const ag::Var<T>& v, const std::string& layer) {
  if (!v.value().all_finite()) throw NumericalError("non-finite activation in layer " + layer);
}

template <class T>
Tensor<T> normal_tensor(Shape shape, double sigma, Rng& rng) {
  Tensor<T> t(shape);
  for (auto& v : t.values()) v = static_cast<T>(rng.normal() * sigma);
  return t;
}

// conv1d followed by a per-channel bias of shape (1, Cout, 1).
template <class T>
ag::Var<T> conv_bias(const ag::Var<T>& x, const ag::Var<T>& w, const ag::Var<T>& b, std::size_t stride = 1,
                     std::size_t pad = 0) {
  return ag::add(ag::conv1d(x, w, stride, pad), b);
}

}  // namespace otfmri::gan
