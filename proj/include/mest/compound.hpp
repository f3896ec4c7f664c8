#pragma once

#include <algorithm>
#include <tuple>
#include <utility>

#include "mest/core.hpp"

namespace mest {

/// Cartesian product of manifolds. boxplus and boxminus act component-wise
/// on consecutive slices of the flat tangent vector; slice offsets are the
/// prefix sums of the component DOFs, in declaration order.
template <Manifold... Parts>
class Compound
    : public ManifoldBase<Compound<Parts...>, (Parts::kDof + ... + 0)> {
 public:
  static constexpr int kSize = sizeof...(Parts);
  static constexpr int kDof = (Parts::kDof + ... + 0);
  static constexpr double kChartRadius = std::min({Parts::kChartRadius...});
  using Tangent = Eigen::Matrix<double, kDof, 1>;

  static constexpr std::array<int, kSize + 1> kOffsets = [] {
    std::array<int, kSize + 1> offs{};
    int acc = 0;
    int i = 0;
    ((offs[i++] = acc, acc += Parts::kDof), ...);
    offs[kSize] = acc;
    return offs;
  }();

  Compound() = default;
  explicit Compound(Parts... parts) : parts_(std::move(parts)...) {}

  Compound boxplus(const Tangent& delta, double scale = 1.0) const {
    Compound out;
    apply_indexed([&](auto i) {
      constexpr int kI = decltype(i)::value;
      using Part = std::tuple_element_t<kI, std::tuple<Parts...>>;
      out.template get<kI>() = get<kI>().boxplus(
          delta.template segment<Part::kDof>(kOffsets[kI]), scale);
    });
    return out;
  }

  Tangent boxminus(const Compound& other) const {
    Tangent out;
    apply_indexed([&](auto i) {
      constexpr int kI = decltype(i)::value;
      using Part = std::tuple_element_t<kI, std::tuple<Parts...>>;
      out.template segment<Part::kDof>(kOffsets[kI]) =
          get<kI>().boxminus(other.template get<kI>());
    });
    return out;
  }

  /// Component-wise chart test: every slice must fit its component's chart.
  static bool tangent_within(const Tangent& t, double fraction) {
    bool ok = true;
    apply_indexed([&](auto i) {
      constexpr int kI = decltype(i)::value;
      using Part = std::tuple_element_t<kI, std::tuple<Parts...>>;
      ok = ok && Part::tangent_within(
                     t.template segment<Part::kDof>(kOffsets[kI]), fraction);
    });
    return ok;
  }

  template <int I>
  const std::tuple_element_t<I, std::tuple<Parts...>>& get() const {
    return std::get<I>(parts_);
  }
  template <int I>
  std::tuple_element_t<I, std::tuple<Parts...>>& get() {
    return std::get<I>(parts_);
  }

 private:
  template <class F>
  static void apply_indexed(F&& f) {
    [&]<std::size_t... Is>(std::index_sequence<Is...>) {
      (f(std::integral_constant<int, Is>{}), ...);
    }(std::make_index_sequence<kSize>{});
  }

  std::tuple<Parts...> parts_;
};

}  // namespace mest
