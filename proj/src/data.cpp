#include "sdq/data.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "sdq/rng.hpp"

namespace sdq {

namespace {

constexpr double kPi = 3.14159265358979323846;

void sample_point(const DatasetSpec& spec, std::size_t klass, Rng& rng, double* px,
                  double* py) {
  if (spec.generator == "two_blobs") {
    const double cx = klass == 0 ? -1.0 : 1.0;
    *px = cx + rng.normal(0.0, spec.noise);
    *py = cx + rng.normal(0.0, spec.noise);
    return;
  }
  if (spec.generator == "two_moons") {
    const double theta = rng.uniform(0.0, kPi);
    double bx, by;
    if (klass == 0) {
      bx = std::cos(theta);
      by = std::sin(theta);
    } else {
      bx = 1.0 - std::cos(theta);
      by = 0.5 - std::sin(theta);
    }
    *px = bx + rng.normal(0.0, spec.noise);
    *py = by + rng.normal(0.0, spec.noise);
    return;
  }
  // gaussian_mixture: class means on a circle of radius 1.5
  const double angle = 2.0 * kPi * static_cast<double>(klass) / static_cast<double>(spec.classes);
  *px = 1.5 * std::cos(angle) + rng.normal(0.0, spec.noise);
  *py = 1.5 * std::sin(angle) + rng.normal(0.0, spec.noise);
}

std::size_t class_count(const DatasetSpec& spec) {
  if (spec.generator == "two_blobs" || spec.generator == "two_moons") return 2;
  if (spec.generator == "gaussian_mixture") return spec.classes;
  throw ContractError("gen_dataset: unknown generator '" + spec.generator + "'");
}

}  // namespace

SplitDataset gen_dataset(const DatasetSpec& spec) {
  const std::size_t classes = class_count(spec);
  check_contract(classes >= 2, "gen_dataset: need at least two classes");
  check_contract(spec.samples >= classes, "gen_dataset: need at least one sample per class");
  check_contract(spec.noise >= 0.0, "gen_dataset: negative noise");
  check_contract(spec.train_fraction > 0.0 && spec.train_fraction < 1.0,
                 "gen_dataset: train_fraction must lie in (0,1)");

  Dataset all;
  all.classes = classes;
  all.x = Array({spec.samples, 2});
  all.y.resize(spec.samples);
  Rng rng(spec.seed);
  for (std::size_t i = 0; i < spec.samples; ++i) {
    const std::size_t klass = i % classes;  // interleaved: both splits balanced
    sample_point(spec, klass, rng, &all.x[i * 2], &all.x[i * 2 + 1]);
    all.y[i] = static_cast<int>(klass);
  }

  const auto n_train =
      static_cast<std::size_t>(spec.train_fraction * static_cast<double>(spec.samples) + 0.5);
  SplitDataset split;
  split.train.classes = classes;
  split.test.classes = classes;
  split.train.x = Array({n_train, 2});
  split.test.x = Array({spec.samples - n_train, 2});
  for (std::size_t i = 0; i < spec.samples; ++i) {
    Dataset& part = i < n_train ? split.train : split.test;
    const std::size_t j = i < n_train ? i : i - n_train;
    part.x[j * 2] = all.x[i * 2];
    part.x[j * 2 + 1] = all.x[i * 2 + 1];
    part.y.push_back(all.y[i]);
  }
  return split;
}

void write_csv(const std::string& path, const Dataset& data) {
  std::ofstream out(path);
  check_contract(out.good(), "write_csv: cannot open " + path);
  out << "x0,x1,label\n";
  char buf[64];
  for (std::size_t i = 0; i < data.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%d\n", data.x[i * 2], data.x[i * 2 + 1],
                  data.y[i]);
    out << buf;
  }
  check_contract(out.good(), "write_csv: write failed for " + path);
}

Dataset read_csv(const std::string& path) {
  std::ifstream in(path);
  check_contract(in.good(), "read_csv: cannot open " + path);
  std::string line;
  check_contract(static_cast<bool>(std::getline(in, line)) && line == "x0,x1,label",
                 "read_csv: missing 'x0,x1,label' header in " + path);
  std::vector<double> xs;
  std::vector<int> ys;
  int max_label = -1;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    double a = 0.0, b = 0.0;
    int label = 0;
    if (std::sscanf(line.c_str(), "%lf,%lf,%d", &a, &b, &label) != 3 || label < 0) {
      throw ContractError("read_csv: bad record at " + path + ":" + std::to_string(lineno));
    }
    xs.push_back(a);
    xs.push_back(b);
    ys.push_back(label);
    max_label = std::max(max_label, label);
  }
  check_contract(!ys.empty(), "read_csv: no data rows in " + path);
  Dataset data;
  data.x = Array({ys.size(), 2}, std::move(xs));
  data.y = std::move(ys);
  data.classes = static_cast<std::size_t>(max_label) + 1;
  return data;
}

}  // namespace sdq
