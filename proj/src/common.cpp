#include "mlda/common.hpp"

namespace mlda {

Matrix to_columns(const StateSeries& series) {
  if (series.empty()) return Matrix();
  Matrix m(series.front().size(), static_cast<Eigen::Index>(series.size()));
  for (std::size_t j = 0; j < series.size(); ++j) m.col(static_cast<Eigen::Index>(j)) = series[j];
  return m;
}

StateSeries from_columns(const Matrix& m) {
  StateSeries out;
  out.reserve(static_cast<std::size_t>(m.cols()));
  for (Eigen::Index j = 0; j < m.cols(); ++j) out.emplace_back(m.col(j));
  return out;
}

}  // namespace mlda
