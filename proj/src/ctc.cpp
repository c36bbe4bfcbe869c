#include "pinch/ctc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace pinch {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

}  // namespace

Tensor ctc_loss(const Tensor& log_probs, const std::vector<int>& label) {
  if (log_probs.rank() != 2) {
    throw ShapeError("ctc_loss: log_probs must be frames x vocab, got " +
                     shape_str(log_probs.shape()));
  }
  const int T = log_probs.rows();
  const int V = log_probs.cols();
  if (V < 2) {
    throw ShapeError("ctc_loss: vocab must hold the blank plus one token");
  }
  for (int tok : label) {
    if (tok <= kBlank || tok >= V) {
      throw ShapeError("ctc_loss: token " + std::to_string(tok) +
                       " outside 1.." + std::to_string(V - 1));
    }
  }
  const int L = static_cast<int>(label.size());
  int repeats = 0;
  for (int i = 1; i < L; ++i) {
    if (label[i] == label[i - 1]) ++repeats;
  }
  if (T < L + repeats) {
    throw ShapeError("ctc_loss: label of length " + std::to_string(L) +
                     " with " + std::to_string(repeats) +
                     " adjacent repeats needs at least " +
                     std::to_string(L + repeats) + " frames, got " +
                     std::to_string(T));
  }

  // Extended label: blank, l1, blank, l2, ..., blank.
  const int S = 2 * L + 1;
  std::vector<int> sym(S, kBlank);
  for (int i = 0; i < L; ++i) sym[2 * i + 1] = label[i];

  const std::vector<double>& lp = log_probs.values();
  auto lpv = [&](int t, int k) { return lp[static_cast<size_t>(t) * V + k]; };

  std::vector<double> alpha(static_cast<size_t>(T) * S, kNegInf);
  alpha[0] = lpv(0, sym[0]);
  if (S > 1) alpha[1] = lpv(0, sym[1]);
  for (int t = 1; t < T; ++t) {
    for (int s = 0; s < S; ++s) {
      double a = alpha[static_cast<size_t>(t - 1) * S + s];
      if (s >= 1) a = log_add(a, alpha[static_cast<size_t>(t - 1) * S + s - 1]);
      if (s >= 2 && sym[s] != kBlank && sym[s] != sym[s - 2]) {
        a = log_add(a, alpha[static_cast<size_t>(t - 1) * S + s - 2]);
      }
      if (a != kNegInf) {
        alpha[static_cast<size_t>(t) * S + s] = a + lpv(t, sym[s]);
      }
    }
  }

  double log_like = alpha[static_cast<size_t>(T - 1) * S + S - 1];
  if (S > 1) {
    log_like = log_add(log_like, alpha[static_cast<size_t>(T - 1) * S + S - 2]);
  }
  if (log_like == kNegInf) {
    throw DivergenceError("ctc_loss: label has zero probability");
  }

  std::vector<double> beta(static_cast<size_t>(T) * S, kNegInf);
  beta[static_cast<size_t>(T - 1) * S + S - 1] = 0.0;
  if (S > 1) beta[static_cast<size_t>(T - 1) * S + S - 2] = 0.0;
  for (int t = T - 2; t >= 0; --t) {
    for (int s = 0; s < S; ++s) {
      double b = beta[static_cast<size_t>(t + 1) * S + s] + lpv(t + 1, sym[s]);
      if (s + 1 < S) {
        b = log_add(b, beta[static_cast<size_t>(t + 1) * S + s + 1] +
                           lpv(t + 1, sym[s + 1]));
      }
      if (s + 2 < S && sym[s + 2] != kBlank && sym[s + 2] != sym[s]) {
        b = log_add(b, beta[static_cast<size_t>(t + 1) * S + s + 2] +
                           lpv(t + 1, sym[s + 2]));
      }
      beta[static_cast<size_t>(t) * S + s] = b;
    }
  }

  // d(loss)/d(log_probs[t][k]) = -sum over states with symbol k of the
  // posterior exp(alpha + beta - log_like).
  std::vector<double> grad(lp.size(), 0.0);
  for (int t = 0; t < T; ++t) {
    for (int s = 0; s < S; ++s) {
      double ab = alpha[static_cast<size_t>(t) * S + s] +
                  beta[static_cast<size_t>(t) * S + s];
      if (ab == kNegInf) continue;
      grad[static_cast<size_t>(t) * V + sym[s]] -= std::exp(ab - log_like);
    }
  }

  auto nx = log_probs.node();
  return Tensor::wrap(detail::make_op_node(
      "ctc_loss", {1}, {-log_like}, {nx},
      [nx, grad = std::move(grad)](TensorNode& self) {
        if (!nx->needs_grad) return;
        auto& g = nx->grad_buf();
        for (size_t i = 0; i < grad.size(); ++i) {
          g[i] += self.grad[0] * grad[i];
        }
      }));
}

std::vector<int> greedy_decode(const Tensor& log_probs) {
  if (log_probs.rank() != 2 || log_probs.cols() < 2) {
    throw ShapeError("greedy_decode: log_probs must be frames x vocab");
  }
  const int T = log_probs.rows();
  const int V = log_probs.cols();
  std::vector<int> out;
  int prev = -1;
  for (int t = 0; t < T; ++t) {
    const double* row = log_probs.values().data() + static_cast<size_t>(t) * V;
    int best = 0;
    for (int k = 1; k < V; ++k) {
      if (row[k] > row[best]) best = k;
    }
    if (best != prev && best != kBlank) out.push_back(best);
    prev = best;
  }
  return out;
}

int edit_distance(const std::vector<int>& a, const std::vector<int>& b) {
  const size_t m = a.size(), n = b.size();
  std::vector<int> prev(n + 1), cur(n + 1);
  for (size_t j = 0; j <= n; ++j) prev[j] = static_cast<int>(j);
  for (size_t i = 1; i <= m; ++i) {
    cur[0] = static_cast<int>(i);
    for (size_t j = 1; j <= n; ++j) {
      int sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[n];
}

EditStats token_error_rate(const std::vector<int>& hyp,
                           const std::vector<int>& ref) {
  EditStats s;
  s.errors = edit_distance(hyp, ref);
  s.ref_len = static_cast<int>(ref.size());
  s.rate_defined = !ref.empty();
  s.rate = s.rate_defined ? static_cast<double>(s.errors) / s.ref_len : 0.0;
  return s;
}

}  // namespace pinch
