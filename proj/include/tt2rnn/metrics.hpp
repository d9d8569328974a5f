#pragma once

#include "tt2rnn/dataset.hpp"
#include "tt2rnn/models.hpp"

#include <cmath>
#include <cstddef>
#include <stdexcept>

namespace tt2rnn {

/// Errors averaged over examples and output coordinates. MAPE is in percent
/// and skips entries whose target is exactly zero.
struct Metrics {
  double mse = 0.0;
  double rmse = 0.0;
  double mae = 0.0;
  double mape = 0.0;
  std::size_t count = 0;
  std::size_t mape_count = 0;
};

template <class Predict>
Metrics compute_metrics(const SequenceDataset& data, Predict&& predict) {
  if (data.empty()) throw std::invalid_argument("compute_metrics: empty dataset");
  Metrics m;
  double se = 0.0, ae = 0.0, ape = 0.0;
  for (const auto& ex : data.examples()) {
    const Vector pred = predict(ex.x);
    if (pred.size() != ex.y.size()) {
      throw std::invalid_argument("compute_metrics: prediction has wrong output dimension");
    }
    for (Eigen::Index j = 0; j < ex.y.size(); ++j) {
      const double e = pred[j] - ex.y[j];
      se += e * e;
      ae += std::abs(e);
      if (ex.y[j] != 0.0) {
        ape += std::abs(e / ex.y[j]);
        ++m.mape_count;
      }
      ++m.count;
    }
  }
  const double n = static_cast<double>(m.count);
  m.mse = se / n;
  m.rmse = std::sqrt(m.mse);
  m.mae = ae / n;
  m.mape = m.mape_count ? 100.0 * ape / static_cast<double>(m.mape_count) : 0.0;
  return m;
}

inline Metrics evaluate_model(const Linear2RNN& model, const SequenceDataset& data) {
  return compute_metrics(data, [&](const std::vector<Vector>& x) { return rnn_evaluate(model, x); });
}

inline double mse(const Linear2RNN& model, const SequenceDataset& data) {
  return evaluate_model(model, data).mse;
}

/// MSE of the constant-zero predictor, i.e. the mean squared target.
inline double zero_mse(const SequenceDataset& data) {
  return compute_metrics(data, [&](const std::vector<Vector>&) {
           return Vector(Vector::Zero(static_cast<Eigen::Index>(data.output_dim())));
         }).mse;
}

}  // namespace tt2rnn
