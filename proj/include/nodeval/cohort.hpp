#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <system_error>
#include <unordered_set>
#include <vector>

#include "nodeval/error.hpp"

namespace nodeval {

enum class Label { Benign, Malignant };

enum class Scanner { HDI5000, LOGIQ_E9, LOGIQ_9, iU22, HDI3000, Sequoia, S2000, Z_ONE, MPTronic, Other };

enum class Sex { F, M };

inline constexpr std::array kAllScanners = {
    Scanner::HDI5000, Scanner::LOGIQ_E9, Scanner::LOGIQ_9, Scanner::iU22, Scanner::HDI3000,
    Scanner::Sequoia, Scanner::S2000,    Scanner::Z_ONE,   Scanner::MPTronic, Scanner::Other};

inline constexpr std::size_t kReaders = 4;

inline std::string_view to_string(Scanner s) {
  switch (s) {
    case Scanner::HDI5000: return "HDI5000";
    case Scanner::LOGIQ_E9: return "LOGIQ_E9";
    case Scanner::LOGIQ_9: return "LOGIQ_9";
    case Scanner::iU22: return "iU22";
    case Scanner::HDI3000: return "HDI3000";
    case Scanner::Sequoia: return "Sequoia";
    case Scanner::S2000: return "S2000";
    case Scanner::Z_ONE: return "Z_ONE";
    case Scanner::MPTronic: return "MPTronic";
    case Scanner::Other: return "Other";
  }
  return "Other";
}

/// Name used in rendered tables.
inline std::string_view display_name(Scanner s) {
  switch (s) {
    case Scanner::HDI5000: return "HDI 5000";
    case Scanner::LOGIQ_E9: return "LOGIQ E9";
    case Scanner::LOGIQ_9: return "LOGIQ 9";
    case Scanner::iU22: return "Philips iU22";
    case Scanner::HDI3000: return "HDI 3000";
    case Scanner::Z_ONE: return "Z_ONE";
    default: return to_string(s);
  }
}

/// Case- and separator-insensitive ("LOGIQ E9", "logiq_e9"). Unknown names map
/// to Other.
inline Scanner parse_scanner(std::string_view text) {
  auto norm = [](std::string_view s) {
    std::string out;
    for (char c : s)
      if (c != ' ' && c != '_' && c != '-') out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    return out;
  };
  const std::string key = norm(text);
  for (Scanner s : kAllScanners)
    if (norm(to_string(s)) == key) return s;
  return Scanner::Other;
}

inline std::string_view to_string(Label l) { return l == Label::Benign ? "benign" : "malignant"; }
inline std::string_view to_string(Sex s) { return s == Sex::F ? "F" : "M"; }

struct CaseRecord {
  std::string nodule_id;
  Label label = Label::Benign;
  int bethesda = 2;
  Scanner scanner = Scanner::Other;
  Sex sex = Sex::F;
  double age = 0.0;
  double size_cm = 0.0;
  std::array<int, kReaders> reader_scores{1, 1, 1, 1};
  std::array<bool, kReaders> fna{};
  std::optional<double> dl_probability;

  int label01() const noexcept { return label == Label::Malignant ? 1 : 0; }

  friend bool operator==(const CaseRecord&, const CaseRecord&) = default;
};

using Cohort = std::vector<CaseRecord>;

/// Throws InputError describing the first violated record invariant.
inline void validate(const CaseRecord& c) {
  if (c.nodule_id.empty()) throw InputError("empty nodule_id");
  const bool malignant_grade = c.bethesda == 5 || c.bethesda == 6;
  if (c.bethesda != 2 && !malignant_grade)
    throw InputError("bethesda " + std::to_string(c.bethesda) + " not in {2,5,6}");
  if ((c.label == Label::Benign) != (c.bethesda == 2))
    throw InputError("label " + std::string(to_string(c.label)) + " inconsistent with bethesda " +
                     std::to_string(c.bethesda));
  for (std::size_t r = 0; r < kReaders; ++r)
    if (c.reader_scores[r] < 1 || c.reader_scores[r] > 5)
      throw InputError("reader score r" + std::to_string(r + 1) + " = " +
                       std::to_string(c.reader_scores[r]) + " outside 1..5");
  if (c.dl_probability && !(*c.dl_probability >= 0.0 && *c.dl_probability <= 1.0))
    throw InputError("dl_prob outside [0,1]");
  if (!std::isfinite(c.age)) throw InputError("age not finite");
  if (!(c.size_cm >= 0.0) || !std::isfinite(c.size_cm)) throw InputError("size_cm negative or not finite");
}

inline constexpr std::string_view kCohortHeader =
    "nodule_id,label,bethesda,scanner,sex,age,size_cm,r1,r2,r3,r4,r1_fna,r2_fna,r3_fna,r4_fna,dl_prob";

namespace detail {

inline std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

/// Shortest representation that parses back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

}  // namespace detail

/// Parses the cohort CSV. Errors name the file line (header = line 1) and column.
inline Cohort read_cohort(std::istream& in) {
  static const auto columns = detail::split_csv(kCohortHeader);
  std::string line;
  if (!std::getline(in, line)) throw InputError("cohort CSV: empty file (header required)");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  const auto header = detail::split_csv(line);
  for (const auto& col : columns)
    if (std::find(header.begin(), header.end(), col) == header.end())
      throw InputError("cohort CSV: missing column '" + std::string(col) + "'");
  if (header != columns)
    throw InputError("cohort CSV: header must be exactly: " + std::string(kCohortHeader));

  Cohort cohort;
  std::unordered_set<std::string> seen;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = detail::split_csv(line);
    const std::string where = "cohort CSV line " + std::to_string(line_no);
    if (f.size() != columns.size())
      throw InputError(where + ": expected " + std::to_string(columns.size()) + " fields, found " +
                       std::to_string(f.size()));

    auto fail = [&](std::size_t col, const std::string& why) -> InputError {
      return InputError(where + ", column " + std::string(columns[col]) + ": " + why);
    };
    auto parse_int = [&](std::size_t col) {
      int v = 0;
      auto [p, ec] = std::from_chars(f[col].data(), f[col].data() + f[col].size(), v);
      if (ec != std::errc{} || p != f[col].data() + f[col].size())
        throw fail(col, "cannot parse integer '" + std::string(f[col]) + "'");
      return v;
    };
    auto parse_real = [&](std::size_t col) {
      double v = 0;
      auto [p, ec] = std::from_chars(f[col].data(), f[col].data() + f[col].size(), v);
      if (ec != std::errc{} || p != f[col].data() + f[col].size() || !std::isfinite(v))
        throw fail(col, "cannot parse number '" + std::string(f[col]) + "'");
      return v;
    };

    CaseRecord c;
    c.nodule_id = std::string(f[0]);
    if (c.nodule_id.empty()) throw fail(0, "empty identifier");
    if (f[1] == "benign") c.label = Label::Benign;
    else if (f[1] == "malignant") c.label = Label::Malignant;
    else throw fail(1, "label must be benign or malignant, got '" + std::string(f[1]) + "'");
    c.bethesda = parse_int(2);
    if (c.bethesda != 2 && c.bethesda != 5 && c.bethesda != 6) throw fail(2, "must be 2, 5 or 6");
    if ((c.label == Label::Benign) != (c.bethesda == 2))
      throw fail(2, "bethesda " + std::to_string(c.bethesda) + " inconsistent with label " +
                        std::string(f[1]));
    c.scanner = parse_scanner(f[3]);
    if (f[4] == "F") c.sex = Sex::F;
    else if (f[4] == "M") c.sex = Sex::M;
    else throw fail(4, "sex must be F or M, got '" + std::string(f[4]) + "'");
    c.age = parse_real(5);
    c.size_cm = parse_real(6);
    if (c.size_cm < 0) throw fail(6, "negative size");
    for (std::size_t r = 0; r < kReaders; ++r) {
      c.reader_scores[r] = parse_int(7 + r);
      if (c.reader_scores[r] < 1 || c.reader_scores[r] > 5)
        throw fail(7 + r, "score " + std::to_string(c.reader_scores[r]) + " outside 1..5");
    }
    for (std::size_t r = 0; r < kReaders; ++r) {
      const int v = parse_int(11 + r);
      if (v != 0 && v != 1) throw fail(11 + r, "must be 0 or 1");
      c.fna[r] = v == 1;
    }
    if (!f[15].empty()) {
      const double p = parse_real(15);
      if (p < 0.0 || p > 1.0) throw fail(15, "probability outside [0,1]");
      c.dl_probability = p;
    }
    if (!seen.insert(c.nodule_id).second) throw fail(0, "duplicate nodule_id '" + c.nodule_id + "'");
    cohort.push_back(std::move(c));
  }
  return cohort;
}

inline Cohort load_cohort(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open cohort file '" + path + "'");
  return read_cohort(in);
}

inline void write_cohort(std::ostream& out, const Cohort& cohort) {
  out << kCohortHeader << '\n';
  for (const auto& c : cohort) {
    out << c.nodule_id << ',' << to_string(c.label) << ',' << c.bethesda << ','
        << to_string(c.scanner) << ',' << to_string(c.sex) << ',' << detail::format_double(c.age)
        << ',' << detail::format_double(c.size_cm);
    for (int s : c.reader_scores) out << ',' << s;
    for (bool b : c.fna) out << ',' << (b ? 1 : 0);
    out << ',';
    if (c.dl_probability) out << detail::format_double(*c.dl_probability);
    out << '\n';
  }
}

inline void save_cohort(const std::string& path, const Cohort& cohort) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write cohort file '" + path + "'");
  write_cohort(out, cohort);
  if (!out) throw InputError("error writing cohort file '" + path + "'");
}

struct MeanSd {
  double mean = 0.0;
  double sd = 0.0;  // sample sd (n-1); 0 when n = 1
};

struct GroupSummary {
  std::size_t count = 0;
  std::size_t female = 0;
  std::size_t male = 0;
  std::optional<MeanSd> age;   // absent for an empty group
  std::optional<MeanSd> size_cm;
};

/// Table-1 columns: all nodules, benign, malignant.
struct CohortSummary {
  GroupSummary all;
  GroupSummary benign;
  GroupSummary malignant;
};

inline MeanSd mean_sd(const std::vector<double>& x) {
  MeanSd r;
  for (double v : x) r.mean += v;
  r.mean /= static_cast<double>(x.size());
  if (x.size() > 1) {
    double ss = 0.0;
    for (double v : x) ss += (v - r.mean) * (v - r.mean);
    r.sd = std::sqrt(ss / static_cast<double>(x.size() - 1));
  }
  return r;
}

namespace detail {

template <typename Pred>
GroupSummary summarize_group(const Cohort& cohort, Pred keep) {
  GroupSummary g;
  std::vector<double> ages, sizes;
  for (const auto& c : cohort) {
    if (!keep(c)) continue;
    ++g.count;
    (c.sex == Sex::F ? g.female : g.male) += 1;
    ages.push_back(c.age);
    sizes.push_back(c.size_cm);
  }
  if (g.count > 0) {
    g.age = mean_sd(ages);
    g.size_cm = mean_sd(sizes);
  }
  return g;
}

}  // namespace detail

inline CohortSummary summarize(const Cohort& cohort) {
  if (cohort.empty()) throw InputError("summarize: empty cohort");
  return {detail::summarize_group(cohort, [](const CaseRecord&) { return true; }),
          detail::summarize_group(cohort, [](const CaseRecord& c) { return c.label == Label::Benign; }),
          detail::summarize_group(cohort, [](const CaseRecord& c) { return c.label == Label::Malignant; })};
}

enum class StratifyKey { Scanner, Label };

struct Stratum {
  std::string key;  // scanner or label name
  Cohort cases;     // input order preserved
};

/// Partition by key. Strata come out in enum declaration order; values absent
/// from the cohort produce no stratum.
inline std::vector<Stratum> stratify(const Cohort& cohort, StratifyKey key) {
  std::vector<Stratum> out;
  auto collect = [&](std::string_view name, auto pred) {
    Stratum s{std::string(name), {}};
    for (const auto& c : cohort)
      if (pred(c)) s.cases.push_back(c);
    if (!s.cases.empty()) out.push_back(std::move(s));
  };
  if (key == StratifyKey::Scanner) {
    for (Scanner sc : kAllScanners) collect(to_string(sc), [sc](const CaseRecord& c) { return c.scanner == sc; });
  } else {
    for (Label l : {Label::Benign, Label::Malignant})
      collect(to_string(l), [l](const CaseRecord& c) { return c.label == l; });
  }
  return out;
}

}  // namespace nodeval
