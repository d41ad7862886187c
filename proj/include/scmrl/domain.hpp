#pragma once

#include <compare>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "scmrl/error.hpp"

namespace scmrl {

struct FiniteDomain {
  int cardinality = 1;  // >= 1

  friend auto operator<=>(const FiniteDomain&, const FiniteDomain&) = default;
};

// Cartesian product of finite axes with row-major flat indexing (last axis
// fastest). Flat index 0 is the all-zeros tuple, which is also the
// lexicographically smallest one.
struct ProductSpace {
  std::vector<FiniteDomain> axes;

  ProductSpace() = default;
  explicit ProductSpace(std::vector<FiniteDomain> a) : axes(std::move(a)) {}
  static ProductSpace of_cardinalities(const std::vector<int>& cards) {
    ProductSpace space;
    space.axes.reserve(cards.size());
    for (int c : cards) space.axes.push_back(FiniteDomain{c});
    return space;
  }

  int rank() const { return static_cast<int>(axes.size()); }

  long long size() const {
    long long n = 1;
    for (const auto& axis : axes) n *= axis.cardinality;
    return n;
  }

  long long flatten(std::initializer_list<int> tuple) const {
    return flatten(std::span<const int>(tuple.begin(), tuple.size()));
  }

  long long flatten(std::span<const int> tuple) const {
    if (tuple.size() != axes.size())
      fail(ErrorCode::OutOfDomain, "tuple arity does not match the space rank");
    long long index = 0;
    for (std::size_t i = 0; i < axes.size(); ++i) {
      const int v = tuple[i];
      if (v < 0 || v >= axes[i].cardinality)
        fail(ErrorCode::OutOfDomain,
             "tuple value " + std::to_string(v) + " outside axis " + std::to_string(i));
      index = index * axes[i].cardinality + v;
    }
    return index;
  }

  std::vector<int> unflatten(long long index) const {
    std::vector<int> tuple(axes.size());
    for (int i = rank() - 1; i >= 0; --i) {
      tuple[i] = static_cast<int>(index % axes[i].cardinality);
      index /= axes[i].cardinality;
    }
    return tuple;
  }

  friend bool operator==(const ProductSpace&, const ProductSpace&) = default;
};

struct VariableId {
  enum class Kind { Factor, Confounder, Observable };

  Kind kind = Kind::Factor;
  int index = 0;

  friend auto operator<=>(const VariableId&, const VariableId&) = default;
};

inline std::string to_string(const VariableId& id) {
  switch (id.kind) {
    case VariableId::Kind::Factor: return "S" + std::to_string(id.index);
    case VariableId::Kind::Confounder: return "C" + std::to_string(id.index);
    case VariableId::Kind::Observable: return "X" + std::to_string(id.index);
  }
  return "?";
}

}  // namespace scmrl
