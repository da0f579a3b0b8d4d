#include "sdq/losses.hpp"

#include <string>

namespace sdq {

Var cross_entropy(Tape& t, Var logits, const std::vector<int>& labels) {
  const Shape& s = logits.shape();
  check_contract(s.size() == 2, "cross_entropy: logits must be [n, c]");
  check_contract(s[0] == labels.size(), "cross_entropy: batch/label size mismatch");
  const std::size_t classes = s[1];
  std::vector<std::size_t> picks(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    check_contract(labels[i] >= 0 && static_cast<std::size_t>(labels[i]) < classes,
                   "cross_entropy: label " + std::to_string(labels[i]) + " out of range");
    picks[i] = i * classes + static_cast<std::size_t>(labels[i]);
  }
  Var lsm = t.log_softmax_rows(logits);
  return t.scale(t.mean(t.gather(lsm, std::move(picks))), -1.0);
}

double accuracy(const Array& logits, const std::vector<int>& labels) {
  check_contract(logits.shape.size() == 2 && logits.shape[0] == labels.size(),
                 "accuracy: logits/label shape mismatch");
  const std::size_t n = logits.shape[0], c = logits.shape[1];
  std::size_t hits = 0;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t arg = 0;
    for (std::size_t j = 1; j < c; ++j) {
      if (logits[i * c + j] > logits[i * c + arg]) arg = j;
    }
    if (arg == static_cast<std::size_t>(labels[i])) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(n);
}

}  // namespace sdq
