#include "cgf/param_store.hpp"

#include <algorithm>

#include "cgf/error.hpp"

namespace cgf {

std::size_t ParamStore::add(std::string name, Tensor value) {
  if (find(name)) throw Error("duplicate parameter name '" + name + "'");
  if (!value.all_finite()) throw Error("parameter '" + name + "' has non-finite entries");
  names_.push_back(std::move(name));
  values_.push_back(std::move(value));
  return values_.size() - 1;
}

void ParamStore::set_value(std::size_t i, Tensor v) {
  if (!v.same_shape(values_.at(i))) {
    throw ShapeError("parameter '" + names_[i] + "' expects " + values_[i].shape_str() +
                     ", got " + v.shape_str());
  }
  if (!v.all_finite()) throw Error("parameter '" + names_[i] + "' has non-finite entries");
  values_[i] = std::move(v);
}

std::optional<std::size_t> ParamStore::find(const std::string& name) const {
  auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end()) return std::nullopt;
  return static_cast<std::size_t>(it - names_.begin());
}

std::size_t ParamStore::index_of(const std::string& name) const {
  if (auto i = find(name)) return *i;
  throw Error("unknown parameter '" + name + "'");
}

std::size_t ParamStore::total_count() const {
  std::size_t n = 0;
  for (const auto& v : values_) n += v.size();
  return n;
}

std::vector<double> ParamStore::flatten() const {
  std::vector<double> flat;
  flat.reserve(total_count());
  for (const auto& v : values_) flat.insert(flat.end(), v.data().begin(), v.data().end());
  return flat;
}

void ParamStore::assign_flat(std::span<const double> flat) {
  if (flat.size() != total_count()) throw ShapeError("assign_flat: wrong parameter count");
  std::size_t off = 0;
  for (auto& v : values_) {
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(off), v.size(), v.data().begin());
    off += v.size();
  }
}

}  // namespace cgf
