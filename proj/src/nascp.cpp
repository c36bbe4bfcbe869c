#include "pinch/nascp.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace pinch {

namespace {

double row_l2(const Tensor& w, int row) {
  int n = w.cols();
  const double* p = w.values().data() + static_cast<size_t>(row) * n;
  double acc = 0.0;
  for (int j = 0; j < n; ++j) acc += p[j] * p[j];
  return std::sqrt(acc);
}

double col_l2(const Tensor& w, int col) {
  int m = w.rows(), n = w.cols();
  double acc = 0.0;
  for (int i = 0; i < m; ++i) {
    double v = w.values()[static_cast<size_t>(i) * n + col];
    acc += v * v;
  }
  return std::sqrt(acc);
}

}  // namespace

std::vector<double> mhsa_channel_scores(const Tensor& wq, const Tensor& wk,
                                        const Tensor& wv, const Tensor& wo) {
  int d = wq.rows();
  if (wk.rows() != d || wv.rows() != d || wo.cols() != d) {
    throw ShapeError("mhsa_channel_scores: projection shapes disagree");
  }
  std::vector<double> scores(d);
  for (int m = 0; m < d; ++m) {
    scores[m] = row_l2(wq, m) + row_l2(wk, m) + row_l2(wv, m) + col_l2(wo, m);
  }
  return scores;
}

std::vector<double> ffn_channel_scores(const Tensor& w1, const Tensor& w2) {
  int h = w1.rows();
  if (w2.cols() != h) {
    throw ShapeError("ffn_channel_scores: hidden widths disagree, " +
                     shape_str(w1.shape()) + " vs " + shape_str(w2.shape()));
  }
  std::vector<double> scores(h);
  for (int n = 0; n < h; ++n) {
    scores[n] = row_l2(w1, n) + col_l2(w2, n);
  }
  return scores;
}

std::vector<int> ascending_order(const std::vector<double>& scores) {
  std::vector<int> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (scores[a] != scores[b]) return scores[a] < scores[b];
    return a < b;
  });
  return order;
}

std::vector<std::vector<int>> pruned_channel_sets(
    const std::vector<double>& scores, std::span<const double> proportions) {
  if (proportions.empty() || proportions[0] != 0.0) {
    throw ShapeError("pruned_channel_sets: proportions must start at 0");
  }
  for (size_t i = 0; i < proportions.size(); ++i) {
    if (proportions[i] < 0.0 || proportions[i] >= 1.0) {
      throw ShapeError("pruned_channel_sets: proportion " +
                       std::to_string(proportions[i]) + " outside [0, 1)");
    }
    if (i > 0 && proportions[i] <= proportions[i - 1]) {
      throw ShapeError("pruned_channel_sets: proportions must be ascending");
    }
  }
  std::vector<int> order = ascending_order(scores);
  int g = static_cast<int>(scores.size());
  std::vector<std::vector<int>> sets;
  sets.reserve(proportions.size());
  for (double p : proportions) {
    int k = static_cast<int>(std::floor(p * g));
    sets.emplace_back(order.begin(), order.begin() + k);
  }
  return sets;
}

Tensor channel_mask(int rows, int cols, const std::vector<int>& pruned,
                    bool channels_are_rows) {
  int g = channels_are_rows ? rows : cols;
  std::vector<double> m(static_cast<size_t>(rows) * cols, 1.0);
  for (int c : pruned) {
    if (c < 0 || c >= g) {
      throw ShapeError("channel_mask: channel " + std::to_string(c) +
                       " out of range");
    }
    if (channels_are_rows) {
      std::fill_n(m.begin() + static_cast<size_t>(c) * cols, cols, 0.0);
    } else {
      for (int i = 0; i < rows; ++i) m[static_cast<size_t>(i) * cols + c] = 0.0;
    }
  }
  return Tensor::constant({rows, cols}, std::move(m));
}

CandidateMaskSet build_candidate_masks(const std::vector<double>& scores,
                                       std::span<const double> proportions,
                                       int rows, int cols,
                                       bool channels_are_rows) {
  int g = channels_are_rows ? rows : cols;
  if (static_cast<int>(scores.size()) != g) {
    throw ShapeError("build_candidate_masks: " + std::to_string(scores.size()) +
                     " scores for " + std::to_string(g) + " channels");
  }
  CandidateMaskSet set;
  for (const auto& pruned : pruned_channel_sets(scores, proportions)) {
    Tensor m = channel_mask(rows, cols, pruned, channels_are_rows);
    double ones = 0.0;
    for (double v : m.values()) ones += v;
    set.masks.push_back(std::move(m));
    set.counts.push_back(ones);
  }
  return set;
}

Tensor gumbel_lambda(const Tensor& alpha, double temperature,
                     std::span<const double> u) {
  if (alpha.rank() != 1 || alpha.size() == 0) {
    throw ShapeError("gumbel_lambda: alpha must be a non-empty vector");
  }
  if (static_cast<size_t>(alpha.size()) != u.size()) {
    throw ShapeError("gumbel_lambda: need one uniform per candidate");
  }
  if (!(temperature > 0.0)) {
    throw ShapeError("gumbel_lambda: temperature must be positive, got " +
                     std::to_string(temperature));
  }
  for (double a : alpha.values()) {
    if (!(a > 0.0)) {
      throw ShapeError("gumbel_lambda: alpha must be strictly positive, got " +
                       std::to_string(a));
    }
  }
  std::vector<double> g(u.size());
  for (size_t i = 0; i < u.size(); ++i) {
    if (!(u[i] > 0.0 && u[i] < 1.0)) {
      throw ShapeError("gumbel_lambda: uniforms must lie in (0, 1)");
    }
    g[i] = -std::log(-std::log(u[i]));
  }
  Tensor noise = Tensor::constant(alpha.shape(), std::move(g));
  Tensor z = scale(add(elem_log(alpha), noise), 1.0 / temperature);
  return softmax_rows(z);
}

Tensor supernet_weight(const Tensor& w, const CandidateMaskSet& candidates,
                       const Tensor& lambda) {
  if (candidates.masks.empty() ||
      lambda.size() != static_cast<int>(candidates.masks.size())) {
    throw ShapeError("supernet_weight: lambda length " +
                     std::to_string(lambda.size()) + " vs " +
                     std::to_string(candidates.masks.size()) + " candidates");
  }
  Tensor acc;
  for (size_t i = 0; i < candidates.masks.size(); ++i) {
    Tensor term = broadcast_mul(element(lambda, static_cast<int>(i)),
                                mul(w, candidates.masks[i]));
    acc = i == 0 ? term : add(acc, term);
  }
  return acc;
}

Tensor nascp_layer_cost(const Tensor& lambda,
                        const CandidateMaskSet& candidates) {
  if (lambda.size() != static_cast<int>(candidates.counts.size())) {
    throw ShapeError("nascp_layer_cost: lambda length " +
                     std::to_string(lambda.size()) + " vs " +
                     std::to_string(candidates.counts.size()) + " candidates");
  }
  Tensor counts = Tensor::constant(lambda.shape(), candidates.counts);
  return sum(mul(lambda, counts));
}

}  // namespace pinch
