#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "doctest.h"
#include "ekd/prob.hpp"

namespace ekd::test {

inline void check_close(std::span<const double> got, std::span<const double> want, double tol) {
  REQUIRE(got.size() == want.size());
  for (std::size_t i = 0; i < got.size(); ++i) {
    INFO("index " << i << ": got " << got[i] << ", want " << want[i]);
    CHECK(std::abs(got[i] - want[i]) <= tol);
  }
}

inline void check_close(const Distribution& got, std::vector<double> want, double tol) {
  check_close(got.probs(), want, tol);
}

template <typename Fn>
void check_error(ErrorCode code, Fn&& fn) {
  try {
    fn();
    FAIL("expected " << to_string(code));
  } catch (const Error& e) {
    CHECK_MESSAGE(e.code() == code, e.what());
  }
}

inline Distribution dist(std::vector<double> v) { return Distribution::validated(std::move(v)); }

}  // namespace ekd::test
