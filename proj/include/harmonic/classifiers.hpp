#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "harmonic/table.hpp"

namespace harmonic {

using FeatureMatrix = std::vector<std::vector<double>>;

/// Min-max scaled numerics and one-hot categoricals. Ranges come from the
/// fitted rows; categories from the schema, so unseen values encode as zeros.
class FeatureEncoder {
 public:
  explicit FeatureEncoder(const Dataset& fit_on);

  std::vector<double> transform(const Record& record) const;
  FeatureMatrix transform(const Dataset& dataset) const;
  std::size_t width() const { return width_; }

 private:
  Schema fitted_;
  std::vector<std::size_t> offsets_;
  std::size_t width_ = 0;
};

class Classifier {
 public:
  virtual ~Classifier() = default;
  virtual std::string name() const = 0;
  /// y holds class indices in [0, n_classes).
  virtual void fit(const FeatureMatrix& x, const std::vector<int>& y, int n_classes, std::uint64_t seed) = 0;
  virtual int predict(const std::vector<double>& x) const = 0;
};

/// Multinomial logistic regression trained by full-batch gradient descent.
class LogisticRegression final : public Classifier {
 public:
  int epochs = 500;
  double learning_rate = 0.5;
  double l2 = 1e-4;

  std::string name() const override { return "logistic_regression"; }
  void fit(const FeatureMatrix& x, const std::vector<int>& y, int n_classes, std::uint64_t seed) override;
  int predict(const std::vector<double>& x) const override;

 private:
  std::vector<std::vector<double>> weights_;  // [class][feature]
  std::vector<double> bias_;
};

/// CART with Gini impurity and a depth limit.
class DecisionTree final : public Classifier {
 public:
  int max_depth = 8;
  std::size_t min_samples_split = 4;
  // Features examined per split; 0 = all.
  std::size_t max_features = 0;

  std::string name() const override { return "decision_tree"; }
  void fit(const FeatureMatrix& x, const std::vector<int>& y, int n_classes, std::uint64_t seed) override;
  int predict(const std::vector<double>& x) const override;

  /// Fit on a subset of rows (with repeats), as used by bagging.
  void fit_rows(const FeatureMatrix& x, const std::vector<int>& y, int n_classes, std::vector<std::size_t> rows,
                std::uint64_t seed);

 private:
  struct Node {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    int left = -1, right = -1;
    int label = 0;
  };
  int build(const FeatureMatrix& x, const std::vector<int>& y, std::vector<std::size_t>& rows, std::size_t begin,
            std::size_t end, int depth, std::uint64_t& rng_state);

  std::vector<Node> nodes_;
  int n_classes_ = 0;
};

/// Bootstrap-aggregated trees with sqrt(d) features per split.
class RandomForest final : public Classifier {
 public:
  std::size_t n_trees = 30;
  int max_depth = 10;

  std::string name() const override { return "random_forest"; }
  void fit(const FeatureMatrix& x, const std::vector<int>& y, int n_classes, std::uint64_t seed) override;
  int predict(const std::vector<double>& x) const override;

 private:
  std::vector<DecisionTree> trees_;
  int n_classes_ = 0;
};

/// One ReLU hidden layer, softmax output, minibatch SGD.
class Mlp final : public Classifier {
 public:
  std::size_t hidden = 32;
  int epochs = 100;
  double learning_rate = 0.05;
  std::size_t batch_size = 32;

  std::string name() const override { return "mlp"; }
  void fit(const FeatureMatrix& x, const std::vector<int>& y, int n_classes, std::uint64_t seed) override;
  int predict(const std::vector<double>& x) const override;

 private:
  std::vector<double> forward(const std::vector<double>& x, std::vector<double>* hidden_out) const;

  std::size_t in_ = 0;
  int n_classes_ = 0;
  std::vector<double> w1_, b1_, w2_, b2_;  // row-major [hidden][in], [class][hidden]
};

inline const std::vector<std::string> kAllClassifiers = {"logistic_regression", "decision_tree", "random_forest",
                                                         "mlp"};

std::unique_ptr<Classifier> make_classifier(std::string_view name);

}  // namespace harmonic
