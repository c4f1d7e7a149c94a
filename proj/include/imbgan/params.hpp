#pragma once

#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "imbgan/autograd.hpp"

namespace imbgan {

// Named trainable tensors in insertion order. Copying deep-copies the values,
// so a copied set never aliases the original's parameters.
class ParamSet {
 public:
  using Entry = std::pair<std::string, Var>;

  ParamSet() = default;
  ParamSet(const ParamSet& other);
  ParamSet& operator=(const ParamSet& other);
  ParamSet(ParamSet&&) noexcept = default;
  ParamSet& operator=(ParamSet&&) noexcept = default;

  void add(std::string name, Tensor value);
  bool contains(std::string_view name) const;
  const Var& at(std::string_view name) const;

  std::size_t size() const { return entries_.size(); }
  std::size_t total_elements() const;
  std::vector<Var> vars() const;
  std::vector<std::string> names() const;
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  // Overwrite the values of `name` in place (shape must match).
  void assign(std::string_view name, const Tensor& value);

  bool all_finite() const;

  // Value equality (names, shapes, payloads).
  friend bool operator==(const ParamSet& a, const ParamSet& b);

 private:
  std::vector<Entry> entries_;
};

}  // namespace imbgan
