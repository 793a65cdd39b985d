#pragma once

#include <string>
#include <utility>
#include <vector>

#include "cdgc/tensor.hpp"

namespace cdgc {

// Undirected skeleton topology plus the all-pairs hop-distance table.
// Unreachable pairs carry -1.
struct SkeletonGraph {
    int num_vertices = 0;
    std::vector<std::pair<int, int>> edges;  // normalized (lo, hi), sorted, deduplicated
    int center = 0;
    std::vector<int> hop;  // num_vertices * num_vertices

    int hop_at(int i, int j) const { return hop[size_t(i) * num_vertices + j]; }
    bool adjacent(int i, int j) const { return hop_at(i, j) == 1; }
};

SkeletonGraph build_graph(int num_vertices,
                          const std::vector<std::pair<int, int>>& edges, int center);

// 25-joint camera-skeleton topology with the upper-spine joint as the
// gravity center. Edge list is documented in graphs/ntu25.graph.
SkeletonGraph ntu25_graph();

// Neighborhood subsets: the vertex itself, neighbors nearer the center
// (ties land here, see partition()), and neighbors farther from it.
inline constexpr int kSubsetSelf = 0;
inline constexpr int kSubsetCentripetal = 1;
inline constexpr int kSubsetCentrifugal = 2;
inline constexpr int kNumSubsets = 3;

// labels[i*V + j] in {kSubsetSelf, kSubsetCentripetal, kSubsetCentrifugal},
// or -1 when j is outside i's 1-hop neighborhood.
struct PartitionLabeling {
    int num_vertices = 0;
    std::vector<int> labels;

    int at(int i, int j) const { return labels[size_t(i) * num_vertices + j]; }
};

// Splits every 1-hop pair by the neighbor's hop distance to the gravity
// center. Neighbors at the same distance as the vertex itself go to the
// centripetal subset; the strict nearer/farther rule would leave them
// unassigned otherwise. Throws if some vertex cannot reach the center.
PartitionLabeling partition(const SkeletonGraph& g);

// Per-subset row-normalized adjacency: A_k[i][j] = 1 / (members of subset k
// in row i). rowsums[k] holds the V x 1 row sums of A_k.
struct PartitionedAdjacency {
    SkeletonGraph graph;
    std::vector<Matrix> subsets;
    std::vector<Matrix> rowsums;

    int num_vertices() const { return graph.num_vertices; }
    int num_subsets() const { return int(subsets.size()); }
};

PartitionedAdjacency normalized_adjacency(const SkeletonGraph& g,
                                          const PartitionLabeling& labeling);
PartitionedAdjacency normalized_adjacency(const SkeletonGraph& g);

// Rebuilds the adjacency with extra (possibly non-anatomical) links added to
// the underlying graph, re-partitioned and renormalized under the same rule.
// Adding edges that already exist returns a bitwise-identical copy.
PartitionedAdjacency with_extra_links(const PartitionedAdjacency& adj,
                                      const std::vector<std::pair<int, int>>& extra_edges);

// Text format: first directive `V <count> center <index>`, then one
// `E <i> <j>` per edge. Blank lines and lines starting with '#' are
// ignored; anything else (including trailing tokens) is rejected.
SkeletonGraph parse_graph_text(const std::string& text);
SkeletonGraph load_graph_file(const std::string& path);
// Inverse of parse_graph_text (modulo comments): parse(to_text(g)) == g.
std::string graph_to_text(const SkeletonGraph& g);

}  // namespace cdgc
