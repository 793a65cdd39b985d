#pragma once

#include <utility>
#include <vector>

#include "cdgc/common.hpp"
#include "cdgc/graph.hpp"
#include "cdgc/tensor.hpp"

namespace cdgc {

// Parameters of one spatial layer. The partitioned forms use one weight
// matrix per subset; the accelerated form uses a single weight matrix plus
// the element-wise vertex/channel mask.
struct CdgcLayerParams {
    std::vector<Matrix> weights;  // each c_in x c_out
    double alpha = 0.0;
    Matrix mask;  // V x c_in, accelerated form only

    int c_in() const { return weights.empty() ? 0 : int(weights[0].rows()); }
    int c_out() const { return weights.empty() ? 0 : int(weights[0].cols()); }
};

CdgcLayerParams random_layer_params(Rng& rng, int num_subsets, int c_in, int c_out,
                                    double alpha, int mask_vertices = 0);

// Y = sum_k A_k X W_k, per batch element and frame.
FeatureMap vanilla_gconv(const FeatureMap& x, const PartitionedAdjacency& adj,
                         const CdgcLayerParams& params);

// Literal per-node blend of neighbor aggregation and center-oriented
// differences:
//   y(v_i) = alpha * sum_j (1/Z) (x_j - x_i) W_k + (1-alpha) * sum_j (1/Z) x_j W_k
// Reference oracle; clarity over speed.
FeatureMap cdgc_naive(const FeatureMap& x, const SkeletonGraph& g,
                      const PartitionLabeling& labeling, const CdgcLayerParams& params);

// Vectorized form of the same operator:
//   Y = sum_k (A_k X - alpha * Ahat_k (.) X) W_k
// where Ahat_k broadcasts the row sums of A_k across channels. With
// alpha == 0 the subtraction is skipped entirely, so the result matches
// vanilla_gconv bitwise.
FeatureMap cdgc_matrix(const FeatureMap& x, const PartitionedAdjacency& adj,
                       const CdgcLayerParams& params);

// Non-local circular shift: out[n,c,t,i] = x[n,c,t,(i+c) mod V]. Every
// vertex's channel vector ends up sampling all vertices of the graph.
FeatureMap spatial_shift(const FeatureMap& x);
// Exact inverse permutation of spatial_shift.
FeatureMap spatial_unshift(const FeatureMap& x);

// Shift-based operator: Y = ((shift(x0) - alpha * x0) (.) M) W with the mask
// broadcast over batch and frames.
FeatureMap accelerated_cdgc(const FeatureMap& x0, const CdgcLayerParams& params);

// ---- temporal operators ---------------------------------------------------

// Channel-grouped frame shift: the first third of the channels reads one
// frame ahead, the middle third stays, the last third reads one frame back;
// sequence ends are zero-padded. Parameter-free.
FeatureMap temporal_shift3(const FeatureMap& x);

// 1-D convolution along the frame axis, one filter per output channel.
// w has shape (taps * C_in, C_out) with taps odd, rows grouped tap-major;
// frames are zero-padded by (taps-1)/2 so the output has ceil(T/stride)
// frames. taps == 1 is a plain strided pointwise channel map.
FeatureMap temporal_conv(const FeatureMap& x, const Matrix& w, int stride = 1);

// Output frame count of temporal_conv / strided subsampling.
std::size_t strided_frames(std::size_t frames, int stride);

// Center-oriented difference vectors for one adjacent pair, flattened over
// (batch, channel, frame): first element seen from v_i, second from v_j.
// The two are exact negations of each other.
std::pair<std::vector<double>, std::vector<double>> gradient_antisymmetry_probe(
    const FeatureMap& x, const SkeletonGraph& g, int i, int j);

}  // namespace cdgc
