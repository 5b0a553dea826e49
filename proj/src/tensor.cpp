#include "mge/tensor.hpp"

#include <cmath>
#include <stdexcept>

namespace mge {

Tensor::Tensor(std::vector<int> s, double fill) : shape(std::move(s)) {
  data.assign(static_cast<std::size_t>(shape_numel(shape)), fill);
}

Tensor Tensor::from_data(std::vector<int> s, std::vector<double> values) {
  Tensor t;
  t.shape = std::move(s);
  if (shape_numel(t.shape) != static_cast<std::int64_t>(values.size()))
    throw std::runtime_error("Tensor::from_data: " + std::to_string(values.size()) +
                             " values for shape " + shape_str(t.shape));
  t.data = std::move(values);
  return t;
}

std::int64_t Tensor::numel() const { return shape_numel(shape); }

std::int64_t shape_numel(const std::vector<int>& shape) {
  std::int64_t n = 1;
  for (int d : shape) {
    if (d < 0) throw std::runtime_error("negative dimension in shape " + shape_str(shape));
    n *= d;
  }
  return n;
}

std::string shape_str(const std::vector<int>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

bool all_finite(const std::vector<double>& v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

Tensor stack_batch(const std::vector<const Tensor*>& items) {
  if (items.empty()) throw std::runtime_error("stack_batch: empty batch");
  const Tensor& first = *items[0];
  if (first.ndim() != 3)
    throw std::runtime_error("stack_batch: items must be [C,H,W], got " +
                             shape_str(first.shape));
  for (const Tensor* t : items)
    if (!t->same_shape(first))
      throw std::runtime_error("stack_batch: mixed shapes " + shape_str(first.shape) +
                               " vs " + shape_str(t->shape));
  Tensor out({static_cast<int>(items.size()), first.dim(0), first.dim(1), first.dim(2)});
  const std::size_t stride = first.data.size();
  for (std::size_t i = 0; i < items.size(); ++i)
    std::copy(items[i]->data.begin(), items[i]->data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(i * stride));
  return out;
}

void Params::add(std::string name, Tensor value) {
  if (index_.count(name))
    throw std::runtime_error("Params::add: duplicate name '" + name + "'");
  index_.emplace(name, entries_.size());
  entries_.emplace_back(std::move(name), std::move(value));
}

bool Params::contains(const std::string& name) const { return index_.count(name) != 0; }

Tensor& Params::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::runtime_error("Params::at: unknown name '" + name + "'");
  return entries_[it->second].second;
}

const Tensor& Params::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::runtime_error("Params::at: unknown name '" + name + "'");
  return entries_[it->second].second;
}

Params Params::zeros_like(const Params& other) {
  Params p;
  for (const auto& [name, t] : other) p.add(name, Tensor(t.shape));
  return p;
}

std::int64_t param_count(const Params& p) {
  std::int64_t n = 0;
  for (const auto& [name, t] : p) n += t.numel();
  return n;
}

std::vector<double> flatten(const Params& p) {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(param_count(p)));
  for (const auto& [name, t] : p) out.insert(out.end(), t.data.begin(), t.data.end());
  return out;
}

double l2_norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

double l2_distance(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size())
    throw std::runtime_error("l2_distance: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

}  // namespace mge
