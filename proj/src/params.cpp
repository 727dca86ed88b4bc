#include "spacebyte/params.h"

#include <cmath>

#include "spacebyte/error.h"

namespace spacebyte {

double ParamSpec::init_std() const {
  if (role == ParamRole::linear) {
    return 1.0 / std::sqrt(static_cast<double>(fan_in));
  }
  return 1.0;
}

template <typename Real>
ParamStore<Real>::ParamStore(std::vector<ParamSpec> specs) : specs_(std::move(specs)) {
  tensors_.reserve(specs_.size());
  for (std::size_t i = 0; i < specs_.size(); ++i) {
    if (!index_.emplace(specs_[i].name, i).second) {
      throw ConfigError("duplicate parameter name '" + specs_[i].name + "'");
    }
    tensors_.push_back(Tensor<Real>::zeros(specs_[i].shape, true));
  }
}

template <typename Real>
const Tensor<Real>& ParamStore<Real>::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) {
    throw ConfigError("no parameter named '" + name + "'");
  }
  return tensors_[it->second];
}

template <typename Real>
Tensor<Real>& ParamStore<Real>::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) {
    throw ConfigError("no parameter named '" + name + "'");
  }
  return tensors_[it->second];
}

template <typename Real>
std::size_t ParamStore<Real>::total_count() const {
  std::size_t n = 0;
  for (const auto& s : specs_) {
    n += s.numel();
  }
  return n;
}

template <typename Real>
std::size_t ParamStore<Real>::non_embedding_count() const {
  std::size_t n = 0;
  for (const auto& s : specs_) {
    if (s.counts_as_non_embedding()) {
      n += s.numel();
    }
  }
  return n;
}

template <typename Real>
void ParamStore<Real>::zero_grad() {
  for (auto& t : tensors_) {
    t.zero_grad();
  }
}

template class ParamStore<float>;
template class ParamStore<double>;

}  // namespace spacebyte
