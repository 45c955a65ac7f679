#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cgf/tensor.hpp"

namespace cgf {

/// Named parameter tensors in insertion order. Names are unique.
class ParamStore {
 public:
  /// Registers a parameter and returns its index. Rejects duplicates and non-finite values.
  std::size_t add(std::string name, Tensor value);

  std::size_t size() const { return values_.size(); }
  const std::string& name(std::size_t i) const { return names_.at(i); }
  const Tensor& value(std::size_t i) const { return values_.at(i); }
  Tensor& mutable_value(std::size_t i) { return values_.at(i); }
  void set_value(std::size_t i, Tensor v);

  std::optional<std::size_t> find(const std::string& name) const;
  std::size_t index_of(const std::string& name) const;

  /// Total number of scalar parameters.
  std::size_t total_count() const;

  std::vector<double> flatten() const;
  void assign_flat(std::span<const double> flat);

  bool operator==(const ParamStore& o) const = default;

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> values_;
};

}  // namespace cgf
