#pragma once

#include <span>

#include "pintent/common.hpp"

namespace pintent::ml {

struct Confusion {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
};

struct PrfScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

inline Confusion confusion(std::span<const int> y_true, std::span<const int> y_pred) {
  if (y_true.size() != y_pred.size()) {
    throw Error(Errc::LengthMismatch, std::to_string(y_true.size()) + " labels vs " +
                                          std::to_string(y_pred.size()) + " predictions");
  }
  Confusion c;
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    if (y_pred[i]) {
      ++(y_true[i] ? c.tp : c.fp);
    } else {
      ++(y_true[i] ? c.fn : c.tn);
    }
  }
  return c;
}

/// Precision, recall and F1 of the positive class; each is 0 when its
/// denominator is 0.
inline PrfScore prf(const Confusion& c) {
  PrfScore s;
  if (c.tp + c.fp) s.precision = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
  if (c.tp + c.fn) s.recall = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
  if (s.precision + s.recall > 0) s.f1 = 2 * s.precision * s.recall / (s.precision + s.recall);
  return s;
}

inline PrfScore f1(std::span<const int> y_true, std::span<const int> y_pred) {
  return prf(confusion(y_true, y_pred));
}

}  // namespace pintent::ml
