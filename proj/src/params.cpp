#include "imbgan/params.hpp"

#include <algorithm>

#include "imbgan/error.hpp"

namespace imbgan {

ParamSet::ParamSet(const ParamSet& other) {
  entries_.reserve(other.entries_.size());
  for (const auto& [name, var] : other.entries_) {
    entries_.emplace_back(name, Var(var.value(), true));
  }
}

ParamSet& ParamSet::operator=(const ParamSet& other) {
  if (this != &other) {
    ParamSet copy(other);
    *this = std::move(copy);
  }
  return *this;
}

void ParamSet::add(std::string name, Tensor value) {
  if (contains(name)) throw ConsistencyError("duplicate parameter " + name);
  entries_.emplace_back(std::move(name), Var(std::move(value), true));
}

bool ParamSet::contains(std::string_view name) const {
  return std::any_of(entries_.begin(), entries_.end(),
                     [&](const Entry& e) { return e.first == name; });
}

const Var& ParamSet::at(std::string_view name) const {
  for (const auto& e : entries_) {
    if (e.first == name) return e.second;
  }
  throw ConsistencyError("no parameter named " + std::string(name));
}

std::size_t ParamSet::total_elements() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.second.size();
  return n;
}

std::vector<Var> ParamSet::vars() const {
  std::vector<Var> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.push_back(e.second);
  return out;
}

std::vector<std::string> ParamSet::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.push_back(e.first);
  return out;
}

void ParamSet::assign(std::string_view name, const Tensor& value) {
  Var v = at(name);
  if (v.shape() != value.shape()) {
    throw ShapeError("parameter " + std::string(name) + " has shape " +
                     shape_str(v.shape()) + ", got " + shape_str(value.shape()));
  }
  v.mutable_value() = value;
}

bool ParamSet::all_finite() const {
  return std::all_of(entries_.begin(), entries_.end(), [](const Entry& e) {
    return e.second.value().all_finite();
  });
}

bool operator==(const ParamSet& a, const ParamSet& b) {
  if (a.entries_.size() != b.entries_.size()) return false;
  for (std::size_t i = 0; i < a.entries_.size(); ++i) {
    if (a.entries_[i].first != b.entries_[i].first ||
        !(a.entries_[i].second.value() == b.entries_[i].second.value())) {
      return false;
    }
  }
  return true;
}

}  // namespace imbgan
