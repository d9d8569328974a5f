#pragma once

#include "tt2rnn/tensor.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace tt2rnn {

/// One input sequence with its target. When `y_steps` is non-empty it holds
/// the target after every prefix (y_steps[t] follows x[0..t]) and `y` equals
/// its last entry.
struct SequenceExample {
  std::vector<Vector> x;
  Vector y;
  std::vector<Vector> y_steps;

  std::size_t length() const { return x.size(); }
  bool has_step_targets() const { return !y_steps.empty(); }
};

struct DatasetMetadata {
  std::string generator;
  std::uint64_t seed = 0;
  double noise_variance = 0.0;
};

class SequenceDataset {
 public:
  SequenceDataset() = default;
  explicit SequenceDataset(std::vector<SequenceExample> examples,
                           DatasetMetadata meta = {})
      : examples_(std::move(examples)), meta_(std::move(meta)) {
    validate();
  }

  const std::vector<SequenceExample>& examples() const { return examples_; }
  std::vector<SequenceExample>& examples() { return examples_; }
  const DatasetMetadata& metadata() const { return meta_; }
  DatasetMetadata& metadata() { return meta_; }

  std::size_t size() const { return examples_.size(); }
  bool empty() const { return examples_.empty(); }
  const SequenceExample& operator[](std::size_t i) const { return examples_[i]; }

  void push_back(SequenceExample ex) {
    check_example(ex);
    examples_.push_back(std::move(ex));
  }

  /// Input dimension, or nullopt when no example carries an input.
  std::optional<std::size_t> input_dim() const {
    for (const auto& ex : examples_) {
      if (!ex.x.empty()) return static_cast<std::size_t>(ex.x[0].size());
    }
    return std::nullopt;
  }

  std::size_t output_dim() const {
    if (examples_.empty()) throw std::invalid_argument("SequenceDataset: empty");
    return static_cast<std::size_t>(examples_[0].y.size());
  }

  /// Distinct sequence lengths with their counts.
  std::map<std::size_t, std::size_t> lengths() const {
    std::map<std::size_t, std::size_t> out;
    for (const auto& ex : examples_) ++out[ex.length()];
    return out;
  }

  /// Common length of all sequences; throws on mixed lengths.
  std::size_t uniform_length() const {
    auto ls = lengths();
    if (ls.size() != 1) {
      throw std::invalid_argument("SequenceDataset: expected sequences of a single length, found " +
                                  std::to_string(ls.size()) + " distinct lengths");
    }
    return ls.begin()->first;
  }

  void validate() const {
    for (const auto& ex : examples_) check_example(ex);
  }

 private:
  void check_example(const SequenceExample& ex) const {
    if (ex.y.size() == 0) {
      throw std::invalid_argument("SequenceDataset: example without target");
    }
    if (!examples_.empty() && ex.y.size() != examples_[0].y.size()) {
      throw std::invalid_argument("SequenceDataset: inconsistent output dimension");
    }
    auto d = input_dim();
    for (const auto& x : ex.x) {
      if (x.size() == 0) throw std::invalid_argument("SequenceDataset: empty input vector");
      if (d && static_cast<std::size_t>(x.size()) != *d) {
        throw std::invalid_argument("SequenceDataset: inconsistent input dimension");
      }
      if (!d) d = static_cast<std::size_t>(x.size());
    }
    if (!ex.y_steps.empty()) {
      if (ex.y_steps.size() != ex.x.size()) {
        throw std::invalid_argument("SequenceDataset: y_steps length must equal sequence length");
      }
      for (const auto& y : ex.y_steps) {
        if (y.size() != ex.y.size()) {
          throw std::invalid_argument("SequenceDataset: inconsistent per-step output dimension");
        }
      }
    }
  }

  std::vector<SequenceExample> examples_;
  DatasetMetadata meta_;
};

}  // namespace tt2rnn
