#pragma once

// Dataset construction: synthetic draws from the conditional families,
// split planning with K-fold cross-fitting triples, and CSV ingestion with
// preprocessing fit strictly on training rows.

#include <Eigen/Dense>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "cocp/cond_dist.hpp"
#include "cocp/rng.hpp"

namespace cocp {

struct SyntheticProvenance {
  ConditionalFamily family;
  std::uint64_t seed = 0;
};

struct CsvProvenance {
  std::string path;
};

struct Dataset {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
  std::vector<std::string> feature_names;
  std::variant<SyntheticProvenance, CsvProvenance> provenance;

  Eigen::Index size() const { return X.rows(); }
  bool synthetic() const {
    return std::holds_alternative<SyntheticProvenance>(provenance);
  }
  const SyntheticProvenance& synthetic_info() const {
    if (!synthetic()) throw std::logic_error("Dataset: no synthetic provenance");
    return std::get<SyntheticProvenance>(provenance);
  }
};

inline Dataset generate_synthetic(FamilyKind kind, Eigen::Index n,
                                  std::uint64_t seed,
                                  double lognormal_sigma = 0.6) {
  if (n < 1) throw std::invalid_argument("generate_synthetic: n must be >= 1");
  ConditionalFamily fam;
  fam.kind = kind;
  fam.lognormal_sigma = lognormal_sigma;
  Rng rng(seed);
  std::uniform_real_distribution<double> ux(-2.0, 2.0);
  Dataset d;
  d.X.resize(n, 1);
  d.y.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double x = ux(rng);
    d.X(i, 0) = x;
    d.y[i] = fam.sample(x, rng);
  }
  d.feature_names = {"x"};
  d.provenance = SyntheticProvenance{fam, seed};
  return d;
}

using IndexList = std::vector<Eigen::Index>;

namespace detail {

inline Eigen::Map<const Eigen::VectorX<Eigen::Index>> idx_map(
    const IndexList& idx) {
  return {idx.data(), static_cast<Eigen::Index>(idx.size())};
}

}  // namespace detail

inline Eigen::MatrixXd take_rows(const Eigen::MatrixXd& M,
                                 const IndexList& idx) {
  return M(detail::idx_map(idx), Eigen::all);
}

inline Eigen::VectorXd take(const Eigen::VectorXd& v, const IndexList& idx) {
  return v(detail::idx_map(idx));
}

struct FoldPlan {
  IndexList center_idx;
  IndexList radius_idx;
  IndexList foldval_idx;
};

// test and cal each take n/5; the remaining pool is the training split. For
// baselines the pool is cut once into a validation slice (pool/6) plus
// train_idx. For cross-fitting the same pool is cut into K folds; fold plan k
// holds out fold k for validation, uses fold k+1 (cyclically) for the radius
// set, and trains the center on the remaining K-2 folds.
struct SplitPlan {
  IndexList train_idx;
  IndexList val_idx;
  IndexList cal_idx;
  IndexList test_idx;
  std::vector<IndexList> folds;
  std::vector<FoldPlan> fold_plans;

  IndexList pool_idx() const {
    IndexList all;
    for (const auto& f : folds) all.insert(all.end(), f.begin(), f.end());
    return all;
  }
};

inline SplitPlan make_split_plan(Eigen::Index n, std::uint64_t seed,
                                 int K = 5) {
  if (K < 3) {
    throw std::invalid_argument(
        "make_split_plan: K must be >= 3 so each fold plan keeps a "
        "validation fold, a radius fold, and at least one center fold");
  }
  const Eigen::Index n_test = n / 5;
  const Eigen::Index n_cal = n / 5;
  const Eigen::Index n_pool = n - n_test - n_cal;
  const Eigen::Index n_val = n_pool / 6;
  if (n_test < 1 || n_cal < 1 || n_val < 1 || n_pool - n_val < 1 ||
      n_pool < K) {
    std::ostringstream os;
    os << "make_split_plan: n=" << n << " too small for K=" << K
       << " (every split cell must be nonempty)";
    throw std::invalid_argument(os.str());
  }

  IndexList perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Eigen::Index(0));
  Rng rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);

  SplitPlan plan;
  auto at = perm.begin();
  plan.test_idx.assign(at, at + n_test);
  at += n_test;
  plan.cal_idx.assign(at, at + n_cal);
  at += n_cal;
  const IndexList pool(at, perm.end());

  plan.val_idx.assign(pool.begin(), pool.begin() + n_val);
  plan.train_idx.assign(pool.begin() + n_val, pool.end());

  // Near-equal contiguous chunks of the pool; the first n_pool % K folds are
  // one element larger.
  plan.folds.resize(std::size_t(K));
  Eigen::Index start = 0;
  for (int k = 0; k < K; ++k) {
    Eigen::Index len = n_pool / K + (k < n_pool % K ? 1 : 0);
    plan.folds[std::size_t(k)].assign(pool.begin() + start,
                                      pool.begin() + start + len);
    start += len;
  }

  plan.fold_plans.resize(std::size_t(K));
  for (int k = 0; k < K; ++k) {
    FoldPlan& fp = plan.fold_plans[std::size_t(k)];
    fp.foldval_idx = plan.folds[std::size_t(k)];
    fp.radius_idx = plan.folds[std::size_t((k + 1) % K)];
    for (int j = 0; j < K; ++j) {
      if (j == k || j == (k + 1) % K) continue;
      const auto& f = plan.folds[std::size_t(j)];
      fp.center_idx.insert(fp.center_idx.end(), f.begin(), f.end());
    }
    if (fp.center_idx.empty() || fp.radius_idx.empty() ||
        fp.foldval_idx.empty()) {
      throw std::invalid_argument("make_split_plan: empty fold plan cell");
    }
  }
  return plan;
}

struct CsvError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CsvTable {
  std::vector<std::string> columns;
  Eigen::MatrixXd values;
};

namespace detail {

inline std::string trim(std::string s) {
  const auto notspace = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), notspace));
  s.erase(std::find_if(s.rbegin(), s.rend(), notspace).base(), s.end());
  return s;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  fields.push_back(trim(cur));
  return fields;
}

inline double parse_numeric(const std::string& tok, const std::string& path,
                            std::size_t line_no, const std::string& column) {
  std::string t = tok;
  if (!t.empty() && t.front() == '+') t.erase(t.begin());
  double v = 0.0;
  const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
  if (res.ec != std::errc() || res.ptr != t.data() + t.size() ||
      !std::isfinite(v)) {
    std::ostringstream os;
    os << path << ":" << line_no << ": column '" << column
       << "': cannot parse '" << tok << "' as a finite number";
    throw CsvError(os.str());
  }
  return v;
}

}  // namespace detail

inline CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CsvError("read_csv: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw CsvError(path + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  CsvTable table;
  table.columns = detail::split_csv_line(line);
  const std::size_t ncol = table.columns.size();
  std::vector<double> flat;
  std::size_t line_no = 1;
  std::size_t nrow = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = detail::split_csv_line(line);
    if (fields.size() != ncol) {
      std::ostringstream os;
      os << path << ":" << line_no << ": expected " << ncol << " fields, got "
         << fields.size();
      throw CsvError(os.str());
    }
    for (std::size_t j = 0; j < ncol; ++j) {
      flat.push_back(
          detail::parse_numeric(fields[j], path, line_no, table.columns[j]));
    }
    ++nrow;
  }
  if (nrow == 0) throw CsvError(path + ": no data rows");
  table.values.resize(Eigen::Index(nrow), Eigen::Index(ncol));
  for (std::size_t i = 0; i < nrow; ++i) {
    for (std::size_t j = 0; j < ncol; ++j) {
      table.values(Eigen::Index(i), Eigen::Index(j)) = flat[i * ncol + j];
    }
  }
  return table;
}

// Which columns feed the model and how the target is transformed. An empty
// feature list means every non-target column.
struct CsvSpec {
  std::string path;
  std::string target_column;
  bool log1p_target = false;
  std::vector<std::string> feature_columns;
};

inline Dataset dataset_from_table(const CsvTable& table, const CsvSpec& spec) {
  const auto find_col = [&](const std::string& name) {
    const auto it = std::find(table.columns.begin(), table.columns.end(), name);
    if (it == table.columns.end()) {
      std::ostringstream os;
      os << "column '" << name << "' not found; available:";
      for (const auto& c : table.columns) os << " " << c;
      throw CsvError(os.str());
    }
    return Eigen::Index(it - table.columns.begin());
  };
  const Eigen::Index target = find_col(spec.target_column);
  std::vector<Eigen::Index> feat_cols;
  if (spec.feature_columns.empty()) {
    for (Eigen::Index j = 0; j < Eigen::Index(table.columns.size()); ++j) {
      if (j != target) feat_cols.push_back(j);
    }
  } else {
    for (const auto& name : spec.feature_columns) {
      const Eigen::Index j = find_col(name);
      if (j == target) throw CsvError("target column listed as a feature");
      feat_cols.push_back(j);
    }
  }
  if (feat_cols.empty()) throw CsvError("no feature columns selected");
  Dataset d;
  d.X.resize(table.values.rows(), Eigen::Index(feat_cols.size()));
  for (std::size_t j = 0; j < feat_cols.size(); ++j) {
    d.X.col(Eigen::Index(j)) = table.values.col(feat_cols[j]);
    d.feature_names.push_back(table.columns[std::size_t(feat_cols[j])]);
  }
  d.y = table.values.col(target);
  d.provenance = CsvProvenance{spec.path};
  return d;
}

// Feature standardization and target transforms, fit on the rows given to
// fit_preprocessor and applied everywhere else. Stored parameters make the
// target transform invertible.
struct Preprocessor {
  Eigen::VectorXd feature_mean;
  Eigen::VectorXd feature_std;  // floored at 1e-8
  bool log1p_target = false;
  double target_scale = 1.0;  // mean |y| over the fit rows, after log1p

  Eigen::MatrixXd transform_features(const Eigen::MatrixXd& X) const {
    if (X.cols() != feature_mean.size()) {
      throw std::invalid_argument("Preprocessor: feature width mismatch");
    }
    return (X.rowwise() - feature_mean.transpose()).array().rowwise() /
           feature_std.transpose().array();
  }

  Eigen::VectorXd transform_target(const Eigen::VectorXd& y) const {
    Eigen::VectorXd t = y;
    if (log1p_target) {
      for (Eigen::Index i = 0; i < t.size(); ++i) {
        if (!(t[i] > -1.0)) {
          std::ostringstream os;
          os << "Preprocessor: log1p needs y > -1, row " << i << " has "
             << t[i];
          throw std::invalid_argument(os.str());
        }
        t[i] = std::log1p(t[i]);
      }
    }
    return t / target_scale;
  }

  double invert_target(double t) const {
    const double u = t * target_scale;
    return log1p_target ? std::expm1(u) : u;
  }
};

inline Preprocessor fit_preprocessor(const Dataset& d, const IndexList& fit_idx,
                                     bool log1p_target) {
  if (fit_idx.empty()) {
    throw std::invalid_argument("fit_preprocessor: empty fit index set");
  }
  Preprocessor p;
  p.log1p_target = log1p_target;
  const Eigen::MatrixXd Xf = take_rows(d.X, fit_idx);
  p.feature_mean = Xf.colwise().mean();
  const Eigen::ArrayXd var = (Xf.rowwise() - p.feature_mean.transpose())
                                 .array()
                                 .square()
                                 .colwise()
                                 .mean();
  p.feature_std = var.sqrt().max(1e-8).matrix();
  p.target_scale = 1.0;  // identity while computing the fit-row transform
  const Eigen::VectorXd yf = p.transform_target(take(d.y, fit_idx));
  p.target_scale = std::max(yf.array().abs().mean(), 1e-8);
  return p;
}

inline Dataset apply_preprocessor(const Preprocessor& p, const Dataset& d) {
  Dataset out;
  out.X = p.transform_features(d.X);
  out.y = p.transform_target(d.y);
  out.feature_names = d.feature_names;
  out.provenance = d.provenance;
  if (!out.X.allFinite() || !out.y.allFinite()) {
    throw std::invalid_argument("apply_preprocessor: non-finite values after transforms");
  }
  return out;
}

// Full ingestion pipeline: parse, select columns, fit the preprocessor on
// fit_idx only, transform every row.
inline std::pair<Dataset, Preprocessor> ingest_csv(const CsvSpec& spec,
                                                   const IndexList& fit_idx) {
  const CsvTable table = read_csv(spec.path);
  const Dataset raw = dataset_from_table(table, spec);
  const Preprocessor p = fit_preprocessor(raw, fit_idx, spec.log1p_target);
  return {apply_preprocessor(p, raw), p};
}

}  // namespace cocp
