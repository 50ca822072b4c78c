#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "mnl/dataset.hpp"
#include "mnl/errors.hpp"
#include "mnl/numio.hpp"
#include "mnl/rng.hpp"

namespace mnl {

// Indices whose inputs coincide (up to the quantization tolerance used when
// the groups were formed).  A dataset with such groups cannot be the graph of
// a function unless the member labels agree.
struct DuplicateGroup {
  std::vector<std::size_t> member_indices;   // ascending, length >= 2
  std::vector<double> representative_input;  // input of the lowest member
  double label_spread = 0.0;                 // max pairwise l2 distance of labels
};

enum class Verdict { FunctionExists, NoisyButAveragable, NoFunction };

inline const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::FunctionExists: return "FunctionExists";
    case Verdict::NoisyButAveragable: return "NoisyButAveragable";
    default: return "NoFunction";
  }
}

struct ConsistencyReport {
  std::vector<DuplicateGroup> groups;
  double epsilon = 0.0;
  std::vector<std::size_t> hard_conflicts;  // indices into groups with spread >= epsilon
  Verdict verdict = Verdict::FunctionExists;
};

namespace detail {

inline double label_l2_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

inline double max_pairwise_label_spread(const LabeledDataset& ds,
                                        const std::vector<std::size_t>& members) {
  double spread = 0.0;
  for (std::size_t a = 0; a < members.size(); ++a)
    for (std::size_t b = a + 1; b < members.size(); ++b)
      spread = std::max(spread, label_l2_distance(ds.label(members[a]), ds.label(members[b])));
  return spread;
}

}  // namespace detail

// Groups indices with coincident inputs.  quant_tol == 0 compares coordinate
// bit patterns; quant_tol > 0 buckets coordinates on the grid
// floor(coord / quant_tol), which keeps grouping transitive (plain pairwise
// closeness is not an equivalence relation).
inline std::vector<DuplicateGroup> find_duplicate_groups(const LabeledDataset& ds,
                                                         double quant_tol) {
  if (ds.size() == 0) throw EmptyDataset();
  if (!(quant_tol >= 0.0)) throw InvalidTolerance("quant_tol must be >= 0");

  std::map<std::vector<std::int64_t>, std::vector<std::size_t>> buckets;
  for (std::size_t j = 0; j < ds.size(); ++j) {
    std::vector<std::int64_t> key(ds.input_dim);
    auto x = ds.input(j);
    for (std::size_t c = 0; c < ds.input_dim; ++c) {
      if (quant_tol == 0.0) {
        key[c] = std::bit_cast<std::int64_t>(x[c]);
      } else {
        double cell = std::floor(x[c] / quant_tol);
        cell = std::clamp(cell, -9.0e18, 9.0e18);  // keep the cast defined
        key[c] = static_cast<std::int64_t>(cell);
      }
    }
    buckets[std::move(key)].push_back(j);
  }

  std::vector<DuplicateGroup> groups;
  for (auto& [key, members] : buckets) {
    if (members.size() < 2) continue;
    DuplicateGroup g;
    g.member_indices = members;  // ascending: dataset scanned in index order
    auto rep = ds.input(g.member_indices.front());
    g.representative_input.assign(rep.begin(), rep.end());
    g.label_spread = detail::max_pairwise_label_spread(ds, g.member_indices);
    groups.push_back(std::move(g));
  }
  std::sort(groups.begin(), groups.end(), [](const DuplicateGroup& a, const DuplicateGroup& b) {
    return a.member_indices.front() < b.member_indices.front();
  });
  return groups;
}

inline ConsistencyReport check_consistency(const LabeledDataset& ds,
                                           std::vector<DuplicateGroup> groups,
                                           double epsilon) {
  (void)ds;
  if (!(epsilon > 0.0)) throw InvalidTolerance("epsilon must be > 0");
  ConsistencyReport report;
  report.groups = std::move(groups);
  report.epsilon = epsilon;
  bool all_zero = true;
  for (std::size_t i = 0; i < report.groups.size(); ++i) {
    if (report.groups[i].label_spread != 0.0) all_zero = false;
    if (report.groups[i].label_spread >= epsilon) report.hard_conflicts.push_back(i);
  }
  if (!report.hard_conflicts.empty())
    report.verdict = Verdict::NoFunction;
  else if (all_zero)
    report.verdict = Verdict::FunctionExists;
  else
    report.verdict = Verdict::NoisyButAveragable;
  return report;
}

// Collapses every duplicate group to a single point carrying the coordinatewise
// arithmetic mean of the member labels (index-ascending summation).  The merged
// point sits at the first member's original position.
inline LabeledDataset average_duplicates(const LabeledDataset& ds,
                                         const std::vector<DuplicateGroup>& groups) {
  std::vector<std::size_t> group_of(ds.size(), SIZE_MAX);
  for (std::size_t gi = 0; gi < groups.size(); ++gi)
    for (std::size_t idx : groups[gi].member_indices) group_of[idx] = gi;

  LabeledDataset out;
  out.input_dim = ds.input_dim;
  out.label_dim = ds.label_dim;
  std::vector<double> mean(ds.label_dim);
  for (std::size_t j = 0; j < ds.size(); ++j) {
    std::size_t gi = group_of[j];
    if (gi == SIZE_MAX) {
      out.push_back(ds.input(j), ds.label(j));
      continue;
    }
    const DuplicateGroup& g = groups[gi];
    if (g.member_indices.front() != j) continue;  // merged into the first member
    std::fill(mean.begin(), mean.end(), 0.0);
    for (std::size_t idx : g.member_indices) {
      auto y = ds.label(idx);
      for (std::size_t c = 0; c < ds.label_dim; ++c) mean[c] += y[c];
    }
    for (std::size_t c = 0; c < ds.label_dim; ++c)
      mean[c] /= static_cast<double>(g.member_indices.size());
    out.push_back(g.representative_input, mean);
  }
  return out;
}

struct SplitResult {
  LabeledDataset train;
  LabeledDataset validation;
};

// Deterministic seeded split.  Validation size = round(N * fraction), clamped
// to [1, N-1]; both subsets keep the original relative sample order.
inline SplitResult split(const LabeledDataset& ds, double validation_fraction,
                         std::uint64_t seed) {
  const std::size_t n = ds.size();
  if (n < 2) throw DatasetTooSmall("split needs at least 2 samples");
  if (!(validation_fraction > 0.0) || !(validation_fraction < 1.0))
    throw InvalidTolerance("validation_fraction must lie in (0, 1)");

  auto v = static_cast<std::size_t>(
      std::llround(static_cast<double>(n) * validation_fraction));
  v = std::clamp<std::size_t>(v, 1, n - 1);

  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  Rng rng(seed);
  shuffle_indices(idx, rng);

  std::vector<bool> in_val(n, false);
  for (std::size_t i = 0; i < v; ++i) in_val[idx[i]] = true;

  SplitResult r;
  r.train.input_dim = r.validation.input_dim = ds.input_dim;
  r.train.label_dim = r.validation.label_dim = ds.label_dim;
  for (std::size_t j = 0; j < n; ++j)
    (in_val[j] ? r.validation : r.train).push_back(ds.input(j), ds.label(j));
  return r;
}

// CSV columns `group_id,member_indices,label_spread,conflict`, then a footer
// comment with the verdict.  Member indices are ';'-joined inside the cell.
inline void write_consistency_report_csv(const ConsistencyReport& report, std::ostream& out) {
  out << "group_id,member_indices,label_spread,conflict\n";
  std::vector<bool> conflict(report.groups.size(), false);
  for (std::size_t i : report.hard_conflicts) conflict[i] = true;
  for (std::size_t i = 0; i < report.groups.size(); ++i) {
    out << format_u64(i) << ",";
    const auto& m = report.groups[i].member_indices;
    for (std::size_t j = 0; j < m.size(); ++j) out << (j ? ";" : "") << format_u64(m[j]);
    out << "," << format_double(report.groups[i].label_spread) << ","
        << (conflict[i] ? 1 : 0) << "\n";
  }
  out << "# verdict=" << to_string(report.verdict) << "\n";
}

}  // namespace mnl
