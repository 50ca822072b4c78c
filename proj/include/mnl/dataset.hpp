#pragma once

#include <cmath>
#include <cstddef>
#include <fstream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "mnl/errors.hpp"
#include "mnl/numio.hpp"

namespace mnl {

// A labeled sample set {(x_j, y_j)}: N inputs in R^k paired with N labels in
// R^l, stored flat in row-major order.
struct LabeledDataset {
  std::size_t input_dim = 0;
  std::size_t label_dim = 0;
  std::vector<double> inputs;  // size() * input_dim
  std::vector<double> labels;  // size() * label_dim

  std::size_t size() const { return input_dim == 0 ? 0 : inputs.size() / input_dim; }

  std::span<const double> input(std::size_t i) const {
    return {inputs.data() + i * input_dim, input_dim};
  }
  std::span<const double> label(std::size_t i) const {
    return {labels.data() + i * label_dim, label_dim};
  }

  void push_back(std::span<const double> x, std::span<const double> y) {
    inputs.insert(inputs.end(), x.begin(), x.end());
    labels.insert(labels.end(), y.begin(), y.end());
  }
};

inline void validate(const LabeledDataset& ds) {
  if (ds.input_dim == 0 || ds.label_dim == 0)
    throw ShapeError("dataset dimensions must be positive");
  if (ds.inputs.size() % ds.input_dim != 0)
    throw ShapeError("input buffer size is not a multiple of the input dimension");
  if (ds.labels.size() % ds.label_dim != 0)
    throw ShapeError("label buffer size is not a multiple of the label dimension");
  if (ds.inputs.size() / ds.input_dim != ds.labels.size() / ds.label_dim)
    throw ShapeError("inputs and labels hold different sample counts");
  if (ds.size() == 0) throw EmptyDataset();
  for (double v : ds.inputs)
    if (!std::isfinite(v)) throw ShapeError("non-finite input coordinate");
  for (double v : ds.labels)
    if (!std::isfinite(v)) throw ShapeError("non-finite label coordinate");
}

// CSV with header `x1,...,xk,y1,...,yl`, one sample per line.
inline LabeledDataset parse_dataset_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line))
    throw FormatError("dataset CSV: missing header row");
  auto cols = split(trim(line), ',');
  std::size_t k = 0, l = 0;
  for (auto c : cols) {
    auto t = trim(c);
    std::string expected = l == 0 ? "x" + format_u64(k + 1) : "";
    if (l == 0 && t == expected) {
      ++k;
      continue;
    }
    if (t == "y" + format_u64(l + 1)) {
      ++l;
      continue;
    }
    throw FormatError("dataset CSV line 1: unexpected column name '" + std::string(t) + "'");
  }
  if (k == 0 || l == 0)
    throw FormatError("dataset CSV line 1: header must name x1..xk then y1..yl");

  LabeledDataset ds;
  ds.input_dim = k;
  ds.label_dim = l;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    auto t = trim(line);
    if (t.empty()) continue;
    auto cells = split(t, ',');
    if (cells.size() != k + l)
      throw FormatError("dataset CSV line " + format_u64(lineno) + ": expected " +
                        format_u64(k + l) + " fields, got " + format_u64(cells.size()));
    for (std::size_t i = 0; i < cells.size(); ++i) {
      double v;
      if (!try_parse_double(trim(cells[i]), v))
        throw FormatError("dataset CSV line " + format_u64(lineno) +
                          ": malformed number '" + std::string(trim(cells[i])) + "'");
      (i < k ? ds.inputs : ds.labels).push_back(v);
    }
  }
  if (ds.size() == 0) throw FormatError("dataset CSV: no samples");
  validate(ds);
  return ds;
}

inline LabeledDataset load_dataset_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open dataset file: " + path);
  return parse_dataset_csv(in);
}

inline void write_dataset_csv(const LabeledDataset& ds, std::ostream& out) {
  for (std::size_t i = 0; i < ds.input_dim; ++i) out << (i ? "," : "") << "x" << i + 1;
  for (std::size_t i = 0; i < ds.label_dim; ++i) out << ",y" << i + 1;
  out << "\n";
  for (std::size_t j = 0; j < ds.size(); ++j) {
    for (std::size_t i = 0; i < ds.input_dim; ++i)
      out << (i ? "," : "") << format_double(ds.input(j)[i]);
    for (std::size_t i = 0; i < ds.label_dim; ++i)
      out << "," << format_double(ds.label(j)[i]);
    out << "\n";
  }
}

inline void save_dataset_csv(const LabeledDataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write dataset file: " + path);
  write_dataset_csv(ds, out);
}

}  // namespace mnl
