#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "dvol/util.hpp"

namespace dvol {

// Covariates plus the crash-count response, one row per site. Cells must be
// finite: sites with undefined measures are excluded before assembly.
struct DesignMatrix {
  std::vector<std::string> names;       // column names, "intercept" included
  std::vector<std::string> row_labels;  // site ids (may be empty)
  std::size_t n = 0;
  std::size_t k = 0;
  std::vector<double> x;  // row-major n x k
  std::vector<double> y;  // non-negative integer counts

  double at(std::size_t i, std::size_t j) const { return x[i * k + j]; }
  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(x).subspan(i * k, k);
  }

  std::size_t col_index(const std::string& name) const {
    for (std::size_t j = 0; j < k; ++j)
      if (names[j] == name) return j;
    throw ConfigError("unknown covariate '" + name + "'");
  }

  // a genuine flag: only zeros and ones, with both values present
  bool is_binary(std::size_t j) const {
    bool saw0 = false, saw1 = false;
    for (std::size_t i = 0; i < n; ++i) {
      if (at(i, j) == 0.0) saw0 = true;
      else if (at(i, j) == 1.0) saw1 = true;
      else return false;
    }
    return saw0 && saw1;
  }

  static DesignMatrix from_columns(std::vector<std::string> names,
                                   const std::vector<std::vector<double>>& columns,
                                   std::vector<double> y,
                                   std::vector<std::string> row_labels = {}) {
    DesignMatrix d;
    d.names = std::move(names);
    d.k = columns.size();
    d.n = y.size();
    d.y = std::move(y);
    d.row_labels = std::move(row_labels);
    if (d.names.size() != d.k)
      throw ConfigError("design matrix: names/columns size mismatch");
    for (std::size_t j = 1; j < d.k; ++j)
      for (std::size_t jj = 0; jj < j; ++jj)
        if (d.names[j] == d.names[jj])
          throw ConfigError("duplicate covariate name '" + d.names[j] + "'");
    d.x.resize(d.n * d.k);
    for (std::size_t j = 0; j < d.k; ++j) {
      if (columns[j].size() != d.n)
        throw ConfigError("design matrix: column length mismatch");
      for (std::size_t i = 0; i < d.n; ++i) {
        if (!std::isfinite(columns[j][i]))
          throw DataError("non-finite cell in design column '" + d.names[j] + "'");
        d.x[i * d.k + j] = columns[j][i];
      }
    }
    for (double yi : d.y) {
      if (!(yi >= 0.0) || yi != std::floor(yi))
        throw DataError("responses must be non-negative integers");
    }
    return d;
  }

  void validate_intercept(std::size_t j) const {
    for (std::size_t i = 0; i < n; ++i)
      if (at(i, j) != 1.0) throw ConfigError("intercept column must be all ones");
  }
};

}  // namespace dvol
