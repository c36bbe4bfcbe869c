#pragma once

#include <array>
#include <span>
#include <vector>

#include "pinch/tensor.hpp"

namespace pinch {

// Candidate pruning proportions of the channel-pruning baseline, coarsest
// grid first. Shared by every supernet layer.
inline constexpr std::array<double, 7> kCandidateProportions = {
    0.0, 0.25, 0.5, 0.75, 0.875, 0.90, 0.925};

// Channel importance for an attention module: channel m groups row m of the
// Q/K/V weights with column m of the output projection, scored by the sum of
// the four L2 norms.
std::vector<double> mhsa_channel_scores(const Tensor& wq, const Tensor& wk,
                                        const Tensor& wv, const Tensor& wo);

// Channel importance for a feed-forward module: hidden channel n groups row
// n of the first map with column n of the second.
std::vector<double> ffn_channel_scores(const Tensor& w1, const Tensor& w2);

// Channel indices ordered by ascending score; equal scores order by index.
std::vector<int> ascending_order(const std::vector<double>& scores);

// For each proportion p, the floor(p * channels) lowest-scoring channel
// indices. Pruned sets are nested along the proportion grid. Proportions
// must be ascending, start at 0, and lie in [0, 1).
std::vector<std::vector<int>> pruned_channel_sets(
    const std::vector<double>& scores, std::span<const double> proportions);

// Binary mask that zeros whole rows (channels_are_rows) or whole columns of
// a [rows x cols] weight for every channel in `pruned`.
Tensor channel_mask(int rows, int cols, const std::vector<int>& pruned,
                    bool channels_are_rows);

// Per-layer frozen candidate masks plus their retained-entry counts.
struct CandidateMaskSet {
  std::vector<Tensor> masks;   // one constant 0/1 tensor per proportion
  std::vector<double> counts;  // ones per mask
};

CandidateMaskSet build_candidate_masks(const std::vector<double>& scores,
                                       std::span<const double> proportions,
                                       int rows, int cols,
                                       bool channels_are_rows);

// Gumbel-softmax architecture weights: lambda_i proportional to
// exp((log alpha_i + G_i) / T) with G_i = -log(-log u_i). Differentiable in
// alpha; u values come from the caller so sampling stays reproducible.
// Requires alpha > 0 elementwise, T > 0, u in (0, 1).
Tensor gumbel_lambda(const Tensor& alpha, double temperature,
                     std::span<const double> u);

// Lambda-weighted mixture of masked weights: sum_i lambda_i * (M_i . W).
Tensor supernet_weight(const Tensor& w, const CandidateMaskSet& candidates,
                       const Tensor& lambda);

// Expected retained count of one supernet layer, sum_i lambda_i * |M_i|_0.
// Summed over layers and scaled by eta this is the architecture penalty.
Tensor nascp_layer_cost(const Tensor& lambda, const CandidateMaskSet& candidates);

}  // namespace pinch
