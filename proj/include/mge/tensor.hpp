#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace mge {

// Dense row-major tensor of 64-bit floats.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s, double fill = 0.0);
  static Tensor from_data(std::vector<int> s, std::vector<double> values);

  int ndim() const { return static_cast<int>(shape.size()); }
  int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }
  std::int64_t numel() const;
  bool same_shape(const Tensor& other) const { return shape == other.shape; }
};

std::int64_t shape_numel(const std::vector<int>& shape);
std::string shape_str(const std::vector<int>& shape);
bool all_finite(const std::vector<double>& v);

// Stack single-image tensors [C,H,W] into a batch [N,C,H,W] in the order
// given.
Tensor stack_batch(const std::vector<const Tensor*>& items);

// Insertion-ordered map from parameter name to tensor. Iteration order is
// the order names were added, which fixes update and serialization order.
class Params {
 public:
  void add(std::string name, Tensor value);
  bool contains(const std::string& name) const;
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  std::size_t size() const { return entries_.size(); }

  std::vector<std::pair<std::string, Tensor>>::iterator begin() {
    return entries_.begin();
  }
  std::vector<std::pair<std::string, Tensor>>::iterator end() {
    return entries_.end();
  }
  std::vector<std::pair<std::string, Tensor>>::const_iterator begin() const {
    return entries_.begin();
  }
  std::vector<std::pair<std::string, Tensor>>::const_iterator end() const {
    return entries_.end();
  }

  static Params zeros_like(const Params& other);

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

std::int64_t param_count(const Params& p);
std::vector<double> flatten(const Params& p);
double l2_norm(const std::vector<double>& v);
double l2_distance(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace mge
