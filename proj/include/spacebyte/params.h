#pragma once

#include <cstddef>
#include <string>
#include <unordered_map>
#include <vector>

#include "spacebyte/tensor.h"

namespace spacebyte {

enum class ParamRole {
  linear,          // weight matrix, sigma_init = 1/sqrt(fan_in)
  embedding,       // token table, sigma_init = 1
  position,        // trained position embedding, sigma_init = 1
  norm_gain,       // layer-norm gain, initialised to 1, sigma_init = 1
  tied_embedding,  // token table shared with the de-embedding
};

struct ParamSpec {
  std::string name;
  Shape shape;
  ParamRole role = ParamRole::linear;
  std::size_t fan_in = 0;

  std::size_t numel() const { return shape_numel(shape); }
  double init_std() const;
  // Counted by the Table-style accounting: linear maps and the de-embedding.
  // Embeddings, position tables, and norm gains are not.
  bool counts_as_non_embedding() const {
    return role == ParamRole::linear || role == ParamRole::tied_embedding;
  }
};

template <typename Real>
class ParamStore {
 public:
  ParamStore() = default;
  // Zero-filled, gradient-tracking leaves for every spec.
  explicit ParamStore(std::vector<ParamSpec> specs);

  std::size_t size() const noexcept { return specs_.size(); }
  const std::vector<ParamSpec>& specs() const noexcept { return specs_; }
  const ParamSpec& spec(std::size_t i) const { return specs_.at(i); }

  Tensor<Real>& tensor(std::size_t i) { return tensors_.at(i); }
  const Tensor<Real>& tensor(std::size_t i) const { return tensors_.at(i); }
  // Throws ConfigError for unknown names.
  const Tensor<Real>& get(const std::string& name) const;
  Tensor<Real>& get(const std::string& name);
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  std::size_t total_count() const;
  std::size_t non_embedding_count() const;

  void zero_grad();

 private:
  std::vector<ParamSpec> specs_;
  std::vector<Tensor<Real>> tensors_;
  std::unordered_map<std::string, std::size_t> index_;
};

extern template class ParamStore<float>;
extern template class ParamStore<double>;

}  // namespace spacebyte
