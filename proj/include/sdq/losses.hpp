#pragma once

#include <vector>

#include "sdq/tape.hpp"

namespace sdq {

// Mean cross-entropy of row-wise logits [n, c] against integer labels.
Var cross_entropy(Tape& t, Var logits, const std::vector<int>& labels);

// Fraction of rows whose argmax matches the label. Ties resolve to the
// lowest class index.
double accuracy(const Array& logits, const std::vector<int>& labels);

}  // namespace sdq
