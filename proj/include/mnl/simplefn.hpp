#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "mnl/dataset.hpp"
#include "mnl/errors.hpp"
#include "mnl/numio.hpp"

namespace mnl {

// Axis-aligned cell tree over the training bounding box.  Leaves hold the
// arithmetic mean of the training labels falling inside, so the model is a
// simple function: finitely many values on a measurable partition.
struct PiecewiseConstantModel {
  struct Node {
    std::vector<double> lo, hi;   // cell bounds, size k
    std::size_t depth = 0;
    std::size_t count = 0;        // training samples in the cell
    std::vector<double> value;    // label mean, size l
    int split_axis = -1;          // -1 for leaves
    double split_pos = 0.0;
    std::size_t left = 0, right = 0;  // child node indices for internal nodes
  };

  std::size_t input_dim = 0;
  std::size_t label_dim = 0;
  std::size_t max_depth = 0;
  double var_tol = 0.0;
  std::size_t min_count = 1;
  std::vector<Node> nodes;  // nodes[0] is the root

  bool empty() const { return nodes.empty(); }

  template <typename Fn>
  void for_each_leaf(Fn&& fn) const {
    for (const Node& n : nodes)
      if (n.split_axis < 0) fn(n);
  }
};

namespace detail {

inline std::vector<double> label_mean(const LabeledDataset& ds,
                                      const std::vector<std::size_t>& idx) {
  std::vector<double> mean(ds.label_dim, 0.0);
  for (std::size_t i : idx) {
    auto y = ds.label(i);
    for (std::size_t c = 0; c < ds.label_dim; ++c) mean[c] += y[c];
  }
  for (double& v : mean) v /= static_cast<double>(idx.size());
  return mean;
}

inline double label_variance(const LabeledDataset& ds, const std::vector<std::size_t>& idx,
                             const std::vector<double>& mean) {
  double acc = 0.0;
  for (std::size_t i : idx) {
    auto y = ds.label(i);
    for (std::size_t c = 0; c < ds.label_dim; ++c) {
      const double d = y[c] - mean[c];
      acc += d * d;
    }
  }
  return acc / static_cast<double>(idx.size());
}

}  // namespace detail

// Recursive midpoint bisection of the widest axis while a cell's label
// variance exceeds var_tol, it holds at least 2*min_count samples, and the
// depth cap allows.  Splits depend only on the cell geometry, never on the
// data, which keeps the partition a fixed lookup grid.
inline PiecewiseConstantModel fit_simple(const LabeledDataset& train, std::size_t max_depth,
                                         double var_tol, std::size_t min_count) {
  if (train.size() == 0) throw EmptyDataset();
  if (!(var_tol >= 0.0)) throw InvalidTolerance("var_tol must be >= 0");
  if (min_count == 0) throw InvalidRange("min_count must be >= 1");

  using Node = PiecewiseConstantModel::Node;
  PiecewiseConstantModel model;
  model.input_dim = train.input_dim;
  model.label_dim = train.label_dim;
  model.max_depth = max_depth;
  model.var_tol = var_tol;
  model.min_count = min_count;

  std::vector<double> lo(train.input_dim), hi(train.input_dim);
  for (std::size_t c = 0; c < train.input_dim; ++c) lo[c] = hi[c] = train.input(0)[c];
  for (std::size_t j = 1; j < train.size(); ++j) {
    auto x = train.input(j);
    for (std::size_t c = 0; c < train.input_dim; ++c) {
      lo[c] = std::min(lo[c], x[c]);
      hi[c] = std::max(hi[c], x[c]);
    }
  }
  for (std::size_t c = 0; c < train.input_dim; ++c) {
    lo[c] -= 1e-9;
    hi[c] += 1e-9;
  }

  std::vector<std::size_t> all(train.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;

  struct Pending {
    std::size_t node;
    std::vector<std::size_t> idx;
  };

  model.nodes.push_back({});
  model.nodes[0].lo = lo;
  model.nodes[0].hi = hi;
  model.nodes[0].depth = 0;

  std::vector<Pending> stack;
  stack.push_back({0, std::move(all)});

  while (!stack.empty()) {
    Pending item = std::move(stack.back());
    stack.pop_back();
    Node& node = model.nodes[item.node];
    node.count = item.idx.size();
    // Empty children keep the parent mean assigned when the parent split.
    if (item.idx.empty()) continue;

    const std::vector<double> mean = detail::label_mean(train, item.idx);
    node.value = mean;

    const double variance = detail::label_variance(train, item.idx, mean);
    const bool split = variance > var_tol && item.idx.size() >= 2 * min_count &&
                       node.depth < max_depth;
    if (!split) continue;

    int axis = 0;
    double widest = node.hi[0] - node.lo[0];
    for (std::size_t c = 1; c < train.input_dim; ++c) {
      const double w = node.hi[c] - node.lo[c];
      if (w > widest) {
        widest = w;
        axis = static_cast<int>(c);
      }
    }
    const double mid = 0.5 * (node.lo[axis] + node.hi[axis]);

    std::vector<std::size_t> left_idx, right_idx;
    for (std::size_t i : item.idx)
      (train.input(i)[static_cast<std::size_t>(axis)] < mid ? left_idx : right_idx).push_back(i);

    node.split_axis = axis;
    node.split_pos = mid;
    const std::size_t left = model.nodes.size();
    const std::size_t right = left + 1;
    node.left = left;
    node.right = right;
    const std::size_t depth = node.depth;
    const std::vector<double> lo_copy = node.lo, hi_copy = node.hi;
    const std::vector<double> mean_copy = mean;

    model.nodes.push_back({});
    model.nodes.push_back({});
    Node& ln = model.nodes[left];
    Node& rn = model.nodes[right];
    ln.lo = lo_copy;
    ln.hi = hi_copy;
    ln.hi[static_cast<std::size_t>(axis)] = mid;
    ln.depth = depth + 1;
    ln.value = mean_copy;  // placeholder; empty children keep the parent mean
    rn.lo = lo_copy;
    rn.hi = hi_copy;
    rn.lo[static_cast<std::size_t>(axis)] = mid;
    rn.depth = depth + 1;
    rn.value = mean_copy;

    stack.push_back({right, std::move(right_idx)});
    stack.push_back({left, std::move(left_idx)});
  }
  return model;
}

// Tree descent with at most max_depth comparisons; queries outside the box are
// clamped onto it first.
inline std::vector<double> eval_simple(const PiecewiseConstantModel& model,
                                       std::span<const double> x) {
  if (model.empty()) throw EmptyDataset("model has no cells");
  if (x.size() != model.input_dim) throw ShapeError("eval_simple: input dimension mismatch");
  std::vector<double> q(x.begin(), x.end());
  const auto& root = model.nodes[0];
  for (std::size_t c = 0; c < model.input_dim; ++c) q[c] = std::clamp(q[c], root.lo[c], root.hi[c]);
  std::size_t cur = 0;
  while (model.nodes[cur].split_axis >= 0) {
    const auto& n = model.nodes[cur];
    cur = q[static_cast<std::size_t>(n.split_axis)] < n.split_pos ? n.left : n.right;
  }
  return model.nodes[cur].value;
}

inline double model_mse(const PiecewiseConstantModel& model, const LabeledDataset& ds) {
  double acc = 0.0;
  for (std::size_t j = 0; j < ds.size(); ++j) {
    const std::vector<double> pred = eval_simple(model, ds.input(j));
    auto y = ds.label(j);
    for (std::size_t c = 0; c < ds.label_dim; ++c) {
      const double d = pred[c] - y[c];
      acc += d * d;
    }
  }
  return acc / static_cast<double>(ds.size());
}

// Mean label over the closed l2 ball of radius r around x; the nearest-
// neighbour flavour of prediction for functions assumed merely measurable.
inline std::vector<double> radius_average_predict(const LabeledDataset& train,
                                                  std::span<const double> x, double r) {
  if (!(r > 0.0)) throw InvalidRange("radius must be > 0");
  if (x.size() != train.input_dim) throw ShapeError("radius_average_predict: dimension mismatch");
  std::vector<double> mean(train.label_dim, 0.0);
  std::size_t hits = 0;
  const double r2 = r * r;
  for (std::size_t j = 0; j < train.size(); ++j) {
    auto xj = train.input(j);
    double d2 = 0.0;
    for (std::size_t c = 0; c < train.input_dim; ++c) {
      const double d = xj[c] - x[c];
      d2 += d * d;
    }
    if (d2 <= r2) {
      auto y = train.label(j);
      for (std::size_t c = 0; c < train.label_dim; ++c) mean[c] += y[c];
      ++hits;
    }
  }
  if (hits == 0) throw EmptyNeighborhood("no training points within radius");
  for (double& v : mean) v /= static_cast<double>(hits);
  return mean;
}

// Text dump: a header comment with the fit parameters, then one leaf per line
// `depth,lo_1..lo_k,hi_1..hi_k,count,value_1..value_l`.
inline void write_simple_model(const PiecewiseConstantModel& model, std::ostream& out) {
  out << "# k=" << model.input_dim << " l=" << model.label_dim << " max_depth=" << model.max_depth
      << " var_tol=" << format_double(model.var_tol) << " min_count=" << model.min_count << "\n";
  model.for_each_leaf([&](const PiecewiseConstantModel::Node& n) {
    out << format_u64(n.depth);
    for (double v : n.lo) out << "," << format_double(v);
    for (double v : n.hi) out << "," << format_double(v);
    out << "," << format_u64(n.count);
    for (double v : n.value) out << "," << format_double(v);
    out << "\n";
  });
}

namespace detail {

struct LeafRecord {
  std::size_t depth;
  std::vector<double> lo, hi;
  std::size_t count;
  std::vector<double> value;
  bool used = false;
};

// The split geometry is a pure function of the cell, so the leaf set pins the
// whole tree: recursively re-split the root box and match leaves bit for bit.
inline std::size_t rebuild(PiecewiseConstantModel& model, std::vector<LeafRecord>& leaves,
                           std::vector<double> lo, std::vector<double> hi, std::size_t depth) {
  const std::size_t self = model.nodes.size();
  model.nodes.push_back({});
  model.nodes[self].lo = lo;
  model.nodes[self].hi = hi;
  model.nodes[self].depth = depth;

  for (LeafRecord& leaf : leaves) {
    if (leaf.used || leaf.depth != depth) continue;
    bool same = true;
    for (std::size_t c = 0; c < lo.size() && same; ++c)
      same = std::bit_cast<std::uint64_t>(leaf.lo[c]) == std::bit_cast<std::uint64_t>(lo[c]) &&
             std::bit_cast<std::uint64_t>(leaf.hi[c]) == std::bit_cast<std::uint64_t>(hi[c]);
    if (!same) continue;
    leaf.used = true;
    model.nodes[self].count = leaf.count;
    model.nodes[self].value = leaf.value;
    return self;
  }

  if (depth > 64) throw FormatError("simple model file corrupt: leaves do not tile the box");
  int axis = 0;
  double widest = hi[0] - lo[0];
  for (std::size_t c = 1; c < lo.size(); ++c) {
    const double w = hi[c] - lo[c];
    if (w > widest) {
      widest = w;
      axis = static_cast<int>(c);
    }
  }
  const double mid = 0.5 * (lo[axis] + hi[axis]);
  std::vector<double> lhi = hi, rlo = lo;
  lhi[static_cast<std::size_t>(axis)] = mid;
  rlo[static_cast<std::size_t>(axis)] = mid;

  const std::size_t left = rebuild(model, leaves, lo, lhi, depth + 1);
  const std::size_t right = rebuild(model, leaves, rlo, hi, depth + 1);
  model.nodes[self].split_axis = axis;
  model.nodes[self].split_pos = mid;
  model.nodes[self].left = left;
  model.nodes[self].right = right;
  model.nodes[self].count = model.nodes[left].count + model.nodes[right].count;
  // Internal value: count-weighted mean is not reconstructible for empty
  // children, so reuse the left child's value; eval never reads it.
  model.nodes[self].value = model.nodes[left].value;
  return self;
}

}  // namespace detail

inline PiecewiseConstantModel read_simple_model(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line.rfind("# k=", 0) != 0)
    throw FormatError("simple model file: missing parameter header");
  PiecewiseConstantModel model;
  {
    auto fields = split(trim(std::string_view(line).substr(2)), ' ');
    for (auto f : fields) {
      auto kv = split(f, '=');
      if (kv.size() != 2) throw FormatError("simple model file: malformed header field");
      std::int64_t iv = 0;
      double dv = 0.0;
      if (kv[0] == "k" && try_parse_i64(kv[1], iv)) model.input_dim = static_cast<std::size_t>(iv);
      else if (kv[0] == "l" && try_parse_i64(kv[1], iv)) model.label_dim = static_cast<std::size_t>(iv);
      else if (kv[0] == "max_depth" && try_parse_i64(kv[1], iv)) model.max_depth = static_cast<std::size_t>(iv);
      else if (kv[0] == "var_tol" && try_parse_double(kv[1], dv)) model.var_tol = dv;
      else if (kv[0] == "min_count" && try_parse_i64(kv[1], iv)) model.min_count = static_cast<std::size_t>(iv);
      else throw FormatError("simple model file: unknown header field '" + std::string(kv[0]) + "'");
    }
  }
  if (model.input_dim == 0 || model.label_dim == 0)
    throw FormatError("simple model file: header must set k and l");

  std::vector<detail::LeafRecord> leaves;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    auto t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    auto cells = split(t, ',');
    const std::size_t expect = 2 + 2 * model.input_dim + model.label_dim;
    if (cells.size() != expect)
      throw FormatError("simple model file line " + format_u64(lineno) + ": expected " +
                        format_u64(expect) + " fields");
    detail::LeafRecord leaf;
    std::int64_t iv = 0;
    if (!try_parse_i64(trim(cells[0]), iv) || iv < 0)
      throw FormatError("simple model file line " + format_u64(lineno) + ": bad depth");
    leaf.depth = static_cast<std::size_t>(iv);
    std::size_t at = 1;
    auto take = [&](std::vector<double>& dst, std::size_t n) {
      for (std::size_t i = 0; i < n; ++i, ++at) {
        double v;
        if (!try_parse_double(trim(cells[at]), v))
          throw FormatError("simple model file line " + format_u64(lineno) + ": bad number");
        dst.push_back(v);
      }
    };
    take(leaf.lo, model.input_dim);
    take(leaf.hi, model.input_dim);
    if (!try_parse_i64(trim(cells[at]), iv) || iv < 0)
      throw FormatError("simple model file line " + format_u64(lineno) + ": bad count");
    leaf.count = static_cast<std::size_t>(iv);
    ++at;
    take(leaf.value, model.label_dim);
    leaves.push_back(std::move(leaf));
  }
  if (leaves.empty()) throw FormatError("simple model file: no leaves");

  std::vector<double> lo = leaves[0].lo, hi = leaves[0].hi;
  for (const auto& leaf : leaves)
    for (std::size_t c = 0; c < model.input_dim; ++c) {
      lo[c] = std::min(lo[c], leaf.lo[c]);
      hi[c] = std::max(hi[c], leaf.hi[c]);
    }
  detail::rebuild(model, leaves, lo, hi, 0);
  for (const auto& leaf : leaves)
    if (!leaf.used) throw FormatError("simple model file corrupt: leaf outside the tiling");
  return model;
}

inline void save_simple_model(const PiecewiseConstantModel& model, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write model file: " + path);
  write_simple_model(model, out);
}

inline PiecewiseConstantModel load_simple_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open model file: " + path);
  return read_simple_model(in);
}

}  // namespace mnl
