#include "harmonic/classifiers.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "harmonic/neighbors.hpp"
#include "harmonic/rng.hpp"

namespace harmonic {

FeatureEncoder::FeatureEncoder(const Dataset& fit_on) {
  std::vector<std::size_t> all(fit_on.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  fitted_ = schema_with_ranges(fit_on, all);
  for (const auto& f : fitted_.features) {
    offsets_.push_back(width_);
    width_ += f.is_numerical() ? 1 : f.categories.size();
  }
}

std::vector<double> FeatureEncoder::transform(const Record& record) const {
  std::vector<double> out(width_, 0.0);
  for (std::size_t j = 0; j < fitted_.features.size(); ++j) {
    const auto& f = fitted_.features[j];
    const Cell& c = record.values.at(j);
    if (f.is_numerical()) {
      out[offsets_[j]] = f.width() > 0 ? (c.number - f.min) / f.width() : 0.0;
    } else {
      auto it = std::lower_bound(f.categories.begin(), f.categories.end(), c.text);
      if (it != f.categories.end() && *it == c.text) out[offsets_[j] + static_cast<std::size_t>(it - f.categories.begin())] = 1.0;
    }
  }
  return out;
}

FeatureMatrix FeatureEncoder::transform(const Dataset& dataset) const {
  FeatureMatrix out;
  out.reserve(dataset.size());
  for (const auto& r : dataset.records) out.push_back(transform(r));
  return out;
}

namespace {

void softmax(std::vector<double>& z) {
  const double mx = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (double& v : z) sum += v = std::exp(v - mx);
  for (double& v : z) v /= sum;
}

int argmax(const std::vector<double>& v) {
  return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
}

int majority(const std::vector<int>& y, const std::vector<std::size_t>& rows, std::size_t begin, std::size_t end,
             int n_classes) {
  std::vector<std::size_t> counts(static_cast<std::size_t>(n_classes), 0);
  for (std::size_t i = begin; i < end; ++i) ++counts[static_cast<std::size_t>(y[rows[i]])];
  return static_cast<int>(std::max_element(counts.begin(), counts.end()) - counts.begin());
}

}  // namespace

void LogisticRegression::fit(const FeatureMatrix& x, const std::vector<int>& y, int n_classes, std::uint64_t seed) {
  const std::size_t n = x.size();
  const std::size_t d = n ? x.front().size() : 0;
  const auto c = static_cast<std::size_t>(n_classes);
  Rng rng(seed);
  weights_.assign(c, std::vector<double>(d));
  for (auto& row : weights_) {
    for (double& w : row) w = (rng.unit() - 0.5) * 0.02;
  }
  bias_.assign(c, 0.0);

  std::vector<std::vector<double>> grad_w(c, std::vector<double>(d));
  std::vector<double> grad_b(c), p(c);
  for (int epoch = 0; epoch < epochs; ++epoch) {
    for (auto& g : grad_w) std::fill(g.begin(), g.end(), 0.0);
    std::fill(grad_b.begin(), grad_b.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t k = 0; k < c; ++k) {
        p[k] = bias_[k] + std::inner_product(x[i].begin(), x[i].end(), weights_[k].begin(), 0.0);
      }
      softmax(p);
      for (std::size_t k = 0; k < c; ++k) {
        const double err = p[k] - (static_cast<std::size_t>(y[i]) == k ? 1.0 : 0.0);
        grad_b[k] += err;
        for (std::size_t j = 0; j < d; ++j) grad_w[k][j] += err * x[i][j];
      }
    }
    const double scale = learning_rate / static_cast<double>(std::max<std::size_t>(n, 1));
    for (std::size_t k = 0; k < c; ++k) {
      bias_[k] -= scale * grad_b[k];
      for (std::size_t j = 0; j < d; ++j) {
        weights_[k][j] -= scale * grad_w[k][j] + learning_rate * l2 * weights_[k][j];
      }
    }
  }
}

int LogisticRegression::predict(const std::vector<double>& x) const {
  std::vector<double> z(bias_);
  for (std::size_t k = 0; k < z.size(); ++k) z[k] += std::inner_product(x.begin(), x.end(), weights_[k].begin(), 0.0);
  return argmax(z);
}

void DecisionTree::fit(const FeatureMatrix& x, const std::vector<int>& y, int n_classes, std::uint64_t seed) {
  std::vector<std::size_t> rows(x.size());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  fit_rows(x, y, n_classes, std::move(rows), seed);
}

void DecisionTree::fit_rows(const FeatureMatrix& x, const std::vector<int>& y, int n_classes,
                            std::vector<std::size_t> rows, std::uint64_t seed) {
  nodes_.clear();
  n_classes_ = n_classes;
  std::uint64_t state = seed;
  build(x, y, rows, 0, rows.size(), 0, state);
}

int DecisionTree::build(const FeatureMatrix& x, const std::vector<int>& y, std::vector<std::size_t>& rows,
                        std::size_t begin, std::size_t end, int depth, std::uint64_t& rng_state) {
  const int index = static_cast<int>(nodes_.size());
  nodes_.push_back(Node{});
  nodes_[static_cast<std::size_t>(index)].label = majority(y, rows, begin, end, n_classes_);
  const std::size_t n = end - begin;
  if (depth >= max_depth || n < min_samples_split || n == 0) return index;

  const auto c = static_cast<std::size_t>(n_classes_);
  std::vector<std::size_t> total(c, 0);
  for (std::size_t i = begin; i < end; ++i) ++total[static_cast<std::size_t>(y[rows[i]])];
  if (std::count(total.begin(), total.end(), 0u) == static_cast<std::ptrdiff_t>(c) - 1) return index;  // pure

  const std::size_t d = x[rows[begin]].size();
  std::vector<std::size_t> features(d);
  std::iota(features.begin(), features.end(), std::size_t{0});
  if (max_features > 0 && max_features < d) {
    rng_state = mix_seed(rng_state, static_cast<std::uint64_t>(index));
    Rng rng(rng_state);
    rng.shuffle(features);
    features.resize(max_features);
    std::sort(features.begin(), features.end());
  }

  auto gini_sum = [&](const std::vector<std::size_t>& counts, std::size_t size) {
    if (size == 0) return 0.0;
    double s = 0.0;
    for (std::size_t k : counts) s += static_cast<double>(k) * static_cast<double>(k);
    return static_cast<double>(size) - s / static_cast<double>(size);  // size * gini
  };

  double best_score = gini_sum(total, n) - 1e-12;
  int best_feature = -1;
  double best_threshold = 0.0;
  std::vector<std::pair<double, int>> column(n);
  std::vector<std::size_t> left(c);
  for (std::size_t f : features) {
    for (std::size_t i = 0; i < n; ++i) column[i] = {x[rows[begin + i]][f], y[rows[begin + i]]};
    std::sort(column.begin(), column.end());
    if (column.front().first == column.back().first) continue;
    std::fill(left.begin(), left.end(), 0);
    for (std::size_t i = 0; i + 1 < n; ++i) {
      ++left[static_cast<std::size_t>(column[i].second)];
      if (column[i].first == column[i + 1].first) continue;
      std::vector<std::size_t> right(c);
      for (std::size_t k = 0; k < c; ++k) right[k] = total[k] - left[k];
      const double score = gini_sum(left, i + 1) + gini_sum(right, n - i - 1);
      if (score < best_score) {
        best_score = score;
        best_feature = static_cast<int>(f);
        best_threshold = (column[i].first + column[i + 1].first) / 2.0;
      }
    }
  }
  if (best_feature < 0) return index;

  auto mid = std::stable_partition(rows.begin() + static_cast<std::ptrdiff_t>(begin),
                                   rows.begin() + static_cast<std::ptrdiff_t>(end), [&](std::size_t r) {
                                     return x[r][static_cast<std::size_t>(best_feature)] <= best_threshold;
                                   });
  const std::size_t split = static_cast<std::size_t>(mid - rows.begin());
  const int l = build(x, y, rows, begin, split, depth + 1, rng_state);
  const int r = build(x, y, rows, split, end, depth + 1, rng_state);
  Node& node = nodes_[static_cast<std::size_t>(index)];
  node.feature = best_feature;
  node.threshold = best_threshold;
  node.left = l;
  node.right = r;
  return index;
}

int DecisionTree::predict(const std::vector<double>& x) const {
  std::size_t i = 0;
  while (nodes_[i].feature >= 0) {
    const Node& node = nodes_[i];
    i = static_cast<std::size_t>(x[static_cast<std::size_t>(node.feature)] <= node.threshold ? node.left : node.right);
  }
  return nodes_[i].label;
}

void RandomForest::fit(const FeatureMatrix& x, const std::vector<int>& y, int n_classes, std::uint64_t seed) {
  n_classes_ = n_classes;
  trees_.clear();
  const std::size_t n = x.size();
  const std::size_t d = n ? x.front().size() : 0;
  for (std::size_t t = 0; t < n_trees; ++t) {
    Rng rng(mix_seed(seed, t));
    std::vector<std::size_t> rows(n);
    for (auto& r : rows) r = rng.below(n);
    DecisionTree tree;
    tree.max_depth = max_depth;
    tree.min_samples_split = 2;
    tree.max_features = std::max<std::size_t>(1, static_cast<std::size_t>(std::sqrt(static_cast<double>(d))));
    tree.fit_rows(x, y, n_classes, std::move(rows), rng.next());
    trees_.push_back(std::move(tree));
  }
}

int RandomForest::predict(const std::vector<double>& x) const {
  std::vector<double> votes(static_cast<std::size_t>(n_classes_), 0.0);
  for (const auto& t : trees_) votes[static_cast<std::size_t>(t.predict(x))] += 1.0;
  return argmax(votes);
}

std::vector<double> Mlp::forward(const std::vector<double>& x, std::vector<double>* hidden_out) const {
  std::vector<double> h(hidden);
  for (std::size_t u = 0; u < hidden; ++u) {
    double s = b1_[u];
    for (std::size_t j = 0; j < in_; ++j) s += w1_[u * in_ + j] * x[j];
    h[u] = std::max(0.0, s);
  }
  const auto c = static_cast<std::size_t>(n_classes_);
  std::vector<double> z(c);
  for (std::size_t k = 0; k < c; ++k) {
    double s = b2_[k];
    for (std::size_t u = 0; u < hidden; ++u) s += w2_[k * hidden + u] * h[u];
    z[k] = s;
  }
  softmax(z);
  if (hidden_out) *hidden_out = std::move(h);
  return z;
}

void Mlp::fit(const FeatureMatrix& x, const std::vector<int>& y, int n_classes, std::uint64_t seed) {
  n_classes_ = n_classes;
  in_ = x.empty() ? 0 : x.front().size();
  const auto c = static_cast<std::size_t>(n_classes);
  Rng rng(seed);
  const double s1 = std::sqrt(6.0 / static_cast<double>(std::max<std::size_t>(in_, 1)));
  const double s2 = std::sqrt(6.0 / static_cast<double>(hidden));
  w1_.resize(hidden * in_);
  for (double& w : w1_) w = (2.0 * rng.unit() - 1.0) * s1;
  b1_.assign(hidden, 0.0);
  w2_.resize(c * hidden);
  for (double& w : w2_) w = (2.0 * rng.unit() - 1.0) * s2;
  b2_.assign(c, 0.0);

  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> gw1(w1_.size()), gb1(hidden), gw2(w2_.size()), gb2(c), h, dh(hidden);
  for (int epoch = 0; epoch < epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
      const std::size_t stop = std::min(order.size(), start + batch_size);
      std::fill(gw1.begin(), gw1.end(), 0.0);
      std::fill(gb1.begin(), gb1.end(), 0.0);
      std::fill(gw2.begin(), gw2.end(), 0.0);
      std::fill(gb2.begin(), gb2.end(), 0.0);
      for (std::size_t b = start; b < stop; ++b) {
        const auto& xi = x[order[b]];
        std::vector<double> p = forward(xi, &h);
        p[static_cast<std::size_t>(y[order[b]])] -= 1.0;
        std::fill(dh.begin(), dh.end(), 0.0);
        for (std::size_t k = 0; k < c; ++k) {
          gb2[k] += p[k];
          for (std::size_t u = 0; u < hidden; ++u) {
            gw2[k * hidden + u] += p[k] * h[u];
            dh[u] += p[k] * w2_[k * hidden + u];
          }
        }
        for (std::size_t u = 0; u < hidden; ++u) {
          if (h[u] <= 0.0) continue;
          gb1[u] += dh[u];
          for (std::size_t j = 0; j < in_; ++j) gw1[u * in_ + j] += dh[u] * xi[j];
        }
      }
      const double scale = learning_rate / static_cast<double>(stop - start);
      for (std::size_t i = 0; i < w1_.size(); ++i) w1_[i] -= scale * gw1[i];
      for (std::size_t i = 0; i < b1_.size(); ++i) b1_[i] -= scale * gb1[i];
      for (std::size_t i = 0; i < w2_.size(); ++i) w2_[i] -= scale * gw2[i];
      for (std::size_t i = 0; i < b2_.size(); ++i) b2_[i] -= scale * gb2[i];
    }
  }
}

int Mlp::predict(const std::vector<double>& x) const { return argmax(forward(x, nullptr)); }

std::unique_ptr<Classifier> make_classifier(std::string_view name) {
  if (name == "logistic_regression") return std::make_unique<LogisticRegression>();
  if (name == "decision_tree") return std::make_unique<DecisionTree>();
  if (name == "random_forest") return std::make_unique<RandomForest>();
  if (name == "mlp") return std::make_unique<Mlp>();
  throw DataError("unknown classifier '" + std::string(name) + "'");
}

}  // namespace harmonic
