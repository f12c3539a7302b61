#pragma once

#include <algorithm>
#include <cstdio>
#include <map>
#include <ostream>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "nodeval/error.hpp"

namespace nodeval {

/// Ordinal ratings over a declared category space (default 1..5).
class RatingVector {
 public:
  RatingVector() = default;
  explicit RatingVector(std::vector<int> values, std::vector<int> categories = {1, 2, 3, 4, 5})
      : values_(std::move(values)), categories_(std::move(categories)) {
    std::sort(categories_.begin(), categories_.end());
    categories_.erase(std::unique(categories_.begin(), categories_.end()), categories_.end());
    if (categories_.empty()) throw InputError("RatingVector: empty category space");
    for (std::size_t i = 0; i < values_.size(); ++i)
      if (!std::binary_search(categories_.begin(), categories_.end(), values_[i]))
        throw InputError("RatingVector: value " + std::to_string(values_[i]) + " at index " +
                         std::to_string(i) + " outside the category space");
  }

  const std::vector<int>& values() const noexcept { return values_; }
  const std::vector<int>& categories() const noexcept { return categories_; }
  std::size_t size() const noexcept { return values_.size(); }

  std::size_t category_index(int c) const {
    return static_cast<std::size_t>(
        std::lower_bound(categories_.begin(), categories_.end(), c) - categories_.begin());
  }

 private:
  std::vector<int> values_;
  std::vector<int> categories_;
};

using CategoryMap = std::map<int, int>;

/// Pointwise relabeling. The mapping must cover every declared category; the
/// new category space is the image of the mapping.
inline RatingVector collapse_categories(const RatingVector& ratings, const CategoryMap& mapping) {
  std::set<int> image;
  for (int c : ratings.categories()) {
    auto it = mapping.find(c);
    if (it == mapping.end())
      throw InputError("collapse_categories: mapping has no entry for category " + std::to_string(c));
    image.insert(it->second);
  }
  std::vector<int> out;
  out.reserve(ratings.size());
  for (int v : ratings.values()) out.push_back(mapping.at(v));
  return RatingVector(std::move(out), std::vector<int>(image.begin(), image.end()));
}

/// Builds a total mapping from merge pairs (`source -> target`), then renumbers
/// the surviving categories consecutively from the smallest one. Merging 3 into
/// 2 over 1..5 yields {1->1, 2->2, 3->2, 4->3, 5->4}.
inline CategoryMap merge_mapping(const std::vector<int>& categories,
                                 const std::vector<std::pair<int, int>>& merges) {
  std::map<int, int> target;
  for (int c : categories) target[c] = c;
  for (auto [src, dst] : merges) {
    if (!target.contains(src) || !target.contains(dst))
      throw InputError("merge " + std::to_string(src) + ":" + std::to_string(dst) +
                       " refers to a category outside the rating scale");
    target[src] = dst;
  }
  auto resolve = [&](int c) {
    for (std::size_t hops = 0; hops <= target.size(); ++hops) {
      const int next = target.at(c);
      if (next == c) return c;
      c = next;
    }
    throw InputError("merge rules form a cycle");
  };
  std::set<int> survivors;
  for (int c : categories) survivors.insert(resolve(c));
  std::map<int, int> renumber;
  int next = categories.empty() ? 1 : *std::min_element(categories.begin(), categories.end());
  for (int s : survivors) renumber[s] = next++;
  CategoryMap mapping;
  for (int c : categories) mapping[c] = renumber.at(resolve(c));
  return mapping;
}

/// Parses "3:2" or "3:2,5:4".
inline std::vector<std::pair<int, int>> parse_merge_rules(const std::string& text) {
  std::vector<std::pair<int, int>> rules;
  std::size_t start = 0;
  while (start < text.size()) {
    auto comma = text.find(',', start);
    if (comma == std::string::npos) comma = text.size();
    const std::string item = text.substr(start, comma - start);
    int src = 0, dst = 0;
    char tail = 0;
    if (std::sscanf(item.c_str(), "%d:%d%c", &src, &dst, &tail) != 2)
      throw InputError("bad merge rule '" + item + "' (expected SRC:DST)");
    rules.emplace_back(src, dst);
    start = comma + 1;
  }
  return rules;
}

struct KappaResult {
  double kappa = 0.0;
  double observed = 0.0;  // p_o
  double expected = 0.0;  // p_e
  std::vector<std::vector<long>> contingency;  // rows: rater a, cols: rater b
  std::vector<int> categories;
  bool degenerate = false;  // p_o = p_e = 1; kappa reported as 1
};

/// Unweighted Cohen's kappa.
inline KappaResult cohen_kappa(const RatingVector& a, const RatingVector& b) {
  if (a.size() != b.size()) throw InputError("cohen_kappa: rating vectors differ in length");
  if (a.size() == 0) throw InputError("cohen_kappa: no cases");
  if (a.categories() != b.categories())
    throw InputError("cohen_kappa: rating vectors use different category spaces");

  const std::size_t k = a.categories().size();
  KappaResult r;
  r.categories = a.categories();
  r.contingency.assign(k, std::vector<long>(k, 0));
  std::vector<long> row(k, 0), col(k, 0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto ia = a.category_index(a.values()[i]);
    const auto ib = b.category_index(b.values()[i]);
    ++r.contingency[ia][ib];
    ++row[ia];
    ++col[ib];
  }
  const double n = static_cast<double>(a.size());
  long diag = 0;
  double chance = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    diag += r.contingency[c][c];
    chance += static_cast<double>(row[c]) * static_cast<double>(col[c]);
  }
  r.observed = static_cast<double>(diag) / n;
  r.expected = chance / (n * n);
  if (r.expected >= 1.0) {
    // Both raters used one and the same category throughout.
    r.kappa = 1.0;
    r.degenerate = true;
    return r;
  }
  r.kappa = (r.observed - r.expected) / (1.0 - r.expected);
  return r;
}

struct KappaPair {
  std::size_t first;   // 0-based reader index
  std::size_t second;  // first < second
  KappaResult result;
};

/// Upper triangle, row-major: (0,1), (0,2), ..., (n-2,n-1).
inline std::vector<KappaPair> kappa_matrix(const std::vector<RatingVector>& readers) {
  if (readers.size() < 2) throw InputError("kappa_matrix: need at least two readers");
  std::vector<KappaPair> out;
  for (std::size_t i = 0; i < readers.size(); ++i)
    for (std::size_t j = i + 1; j < readers.size(); ++j)
      out.push_back({i, j, cohen_kappa(readers[i], readers[j])});
  return out;
}

inline std::string kappa_pair_label(const KappaPair& p) {
  return "R" + std::to_string(p.first + 1) + " vs R" + std::to_string(p.second + 1);
}

/// Table-4-shaped CSV: pair label and kappa to four decimals.
inline void write_kappa_csv(std::ostream& out, const std::vector<KappaPair>& pairs) {
  out << "pair,kappa\n";
  char buf[32];
  for (const auto& p : pairs) {
    std::snprintf(buf, sizeof buf, "%.4f", p.result.kappa);
    out << kappa_pair_label(p) << ',' << buf << '\n';
  }
}

}  // namespace nodeval
