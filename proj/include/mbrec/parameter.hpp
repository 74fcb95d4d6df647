// Copyright 2026 The mbrec Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "mbrec/dense.hpp"

namespace mbrec {

enum class InitScheme { kXavierUniform, kZeros, kOnes, kIdentity };

/// A trainable array with its gradient slot and Adam moment buffers.
template <typename Scalar>
struct BasicParameter {
  std::string name;
  Dense<Scalar> value;
  Dense<Scalar> grad;
  Dense<Scalar> adam_m;
  Dense<Scalar> adam_v;
  InitScheme init = InitScheme::kXavierUniform;

  BasicParameter(std::string n, Index rows, Index cols, InitScheme scheme)
      : name(std::move(n)),
        value(Dense<Scalar>::Zero(rows, cols)),
        grad(Dense<Scalar>::Zero(rows, cols)),
        adam_m(Dense<Scalar>::Zero(rows, cols)),
        adam_v(Dense<Scalar>::Zero(rows, cols)),
        init(scheme) {}

  Index rows() const { return value.rows(); }
  Index cols() const { return value.cols(); }
  void zero_grad() { grad.setZero(); }
};

using Parameter = BasicParameter<double>;

/// Owns every trainable array of a model, in insertion order. Parameter
/// addresses are stable for the lifetime of the store.
template <typename Scalar>
class BasicParameterStore {
 public:
  using Param = BasicParameter<Scalar>;

  Param& add(std::string name, Index rows, Index cols, InitScheme scheme) {
    if (by_name_.count(name)) throw ConfigError("duplicate parameter name '" + name + "'");
    params_.push_back(std::make_unique<Param>(std::move(name), rows, cols, scheme));
    by_name_[params_.back()->name] = params_.size() - 1;
    return *params_.back();
  }

  Param& at(const std::string& name) {
    auto it = by_name_.find(name);
    if (it == by_name_.end()) throw ConfigError("unknown parameter '" + name + "'");
    return *params_[it->second];
  }
  const Param& at(const std::string& name) const {
    return const_cast<BasicParameterStore*>(this)->at(name);
  }
  bool contains(const std::string& name) const { return by_name_.count(name) != 0; }

  std::size_t size() const { return params_.size(); }
  Param& operator[](std::size_t i) { return *params_[i]; }
  const Param& operator[](std::size_t i) const { return *params_[i]; }

  void zero_grad() {
    for (auto& p : params_) p->zero_grad();
  }

  Index scalar_count() const {
    Index n = 0;
    for (const auto& p : params_) n += p->value.size();
    return n;
  }

  /// Xavier-uniform for matrices (fan_in = rows, fan_out = cols), with the
  /// other schemes filled deterministically. Draw order follows insertion.
  void initialize(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    for (auto& p : params_) {
      switch (p->init) {
        case InitScheme::kXavierUniform: {
          const Scalar bound = std::sqrt(Scalar(6) / Scalar(p->rows() + p->cols()));
          std::uniform_real_distribution<Scalar> dist(-bound, bound);
          for (Index i = 0; i < p->value.size(); ++i) p->value.data()[i] = dist(rng);
          break;
        }
        case InitScheme::kZeros:
          p->value.setZero();
          break;
        case InitScheme::kOnes:
          p->value.setOnes();
          break;
        case InitScheme::kIdentity:
          p->value.setIdentity();
          break;
      }
      p->grad.setZero();
      p->adam_m.setZero();
      p->adam_v.setZero();
    }
  }

 private:
  std::vector<std::unique_ptr<Param>> params_;
  std::map<std::string, std::size_t> by_name_;
};

using ParameterStore = BasicParameterStore<double>;

}  // namespace mbrec
