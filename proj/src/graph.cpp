#include "cdgc/graph.hpp"

#include <algorithm>
#include <deque>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "cdgc/common.hpp"

namespace cdgc {

SkeletonGraph build_graph(int num_vertices,
                          const std::vector<std::pair<int, int>>& edges, int center) {
    if (num_vertices < 1) throw ArgError("graph needs at least one vertex");
    if (center < 0 || center >= num_vertices)
        throw ArgError(fmt::format("center {} out of range [0, {})", center, num_vertices));

    SkeletonGraph g;
    g.num_vertices = num_vertices;
    g.center = center;
    g.edges.reserve(edges.size());
    for (auto [i, j] : edges) {
        if (i < 0 || i >= num_vertices || j < 0 || j >= num_vertices)
            throw ArgError(fmt::format("edge ({}, {}) out of range [0, {})", i, j, num_vertices));
        if (i == j)
            throw ArgError(fmt::format("self-loop edge ({}, {}) not allowed", i, j));
        g.edges.emplace_back(std::min(i, j), std::max(i, j));
    }
    std::sort(g.edges.begin(), g.edges.end());
    g.edges.erase(std::unique(g.edges.begin(), g.edges.end()), g.edges.end());

    std::vector<std::vector<int>> nbr(num_vertices);
    for (auto [i, j] : g.edges) {
        nbr[i].push_back(j);
        nbr[j].push_back(i);
    }

    g.hop.assign(size_t(num_vertices) * num_vertices, -1);
    for (int s = 0; s < num_vertices; ++s) {
        int* dist = g.hop.data() + size_t(s) * num_vertices;
        dist[s] = 0;
        std::deque<int> queue{s};
        while (!queue.empty()) {
            int u = queue.front();
            queue.pop_front();
            for (int w : nbr[u])
                if (dist[w] < 0) {
                    dist[w] = dist[u] + 1;
                    queue.push_back(w);
                }
        }
    }
    return g;
}

SkeletonGraph ntu25_graph() {
    // Kinect-v2 25-joint skeleton (0-based): 0 base spine, 1 mid spine,
    // 2 neck, 3 head, 4-7 left arm, 8-11 right arm, 12-15 left leg,
    // 16-19 right leg, 20 upper spine, 21/22 left hand tip & thumb,
    // 23/24 right hand tip & thumb. Center: upper spine.
    static const std::vector<std::pair<int, int>> bones = {
        {0, 1},   {1, 20},  {2, 20},  {3, 2},   {4, 20},  {5, 4},
        {6, 5},   {7, 6},   {8, 20},  {9, 8},   {10, 9},  {11, 10},
        {12, 0},  {13, 12}, {14, 13}, {15, 14}, {16, 0},  {17, 16},
        {18, 17}, {19, 18}, {21, 22}, {22, 7},  {23, 24}, {24, 11}};
    return build_graph(25, bones, 20);
}

PartitionLabeling partition(const SkeletonGraph& g) {
    const int V = g.num_vertices;
    std::vector<int> unreachable;
    for (int i = 0; i < V; ++i)
        if (g.hop_at(i, g.center) < 0) unreachable.push_back(i);
    if (!unreachable.empty())
        throw ArgError(fmt::format("graph is disconnected: vertices [{}] cannot reach center {}",
                                   fmt::join(unreachable, ", "), g.center));

    PartitionLabeling lab;
    lab.num_vertices = V;
    lab.labels.assign(size_t(V) * V, -1);
    for (int i = 0; i < V; ++i) {
        const int di = g.hop_at(i, g.center);
        for (int j = 0; j < V; ++j) {
            if (j == i) {
                lab.labels[size_t(i) * V + j] = kSubsetSelf;
            } else if (g.adjacent(i, j)) {
                const int dj = g.hop_at(j, g.center);
                lab.labels[size_t(i) * V + j] =
                    dj > di ? kSubsetCentrifugal : kSubsetCentripetal;
            }
        }
    }
    return lab;
}

PartitionedAdjacency normalized_adjacency(const SkeletonGraph& g,
                                          const PartitionLabeling& labeling) {
    if (labeling.num_vertices != g.num_vertices)
        throw ArgError("labeling/graph vertex count mismatch");
    const int V = g.num_vertices;
    PartitionedAdjacency adj;
    adj.graph = g;
    for (int k = 0; k < kNumSubsets; ++k) {
        Matrix a(V, V);
        Matrix rs(V, 1);
        for (int i = 0; i < V; ++i) {
            int members = 0;
            for (int j = 0; j < V; ++j)
                if (labeling.at(i, j) == k) ++members;
            if (members == 0) continue;
            const double w = 1.0 / members;
            for (int j = 0; j < V; ++j)
                if (labeling.at(i, j) == k) a(i, j) = w;
            rs(i, 0) = w * members;
        }
        adj.subsets.push_back(std::move(a));
        adj.rowsums.push_back(std::move(rs));
    }
    return adj;
}

PartitionedAdjacency normalized_adjacency(const SkeletonGraph& g) {
    return normalized_adjacency(g, partition(g));
}

PartitionedAdjacency with_extra_links(const PartitionedAdjacency& adj,
                                      const std::vector<std::pair<int, int>>& extra_edges) {
    auto edges = adj.graph.edges;
    edges.insert(edges.end(), extra_edges.begin(), extra_edges.end());
    // build_graph re-deduplicates, so re-adding an anatomical bone is a no-op
    SkeletonGraph g = build_graph(adj.graph.num_vertices, edges, adj.graph.center);
    return normalized_adjacency(g);
}

namespace {

int parse_int_token(const std::string& tok, int line_no) {
    size_t used = 0;
    int value = 0;
    try {
        value = std::stoi(tok, &used);
    } catch (const std::exception&) {
        throw ParseError(fmt::format("line {}: expected integer, got '{}'", line_no, tok));
    }
    if (used != tok.size())
        throw ParseError(fmt::format("line {}: expected integer, got '{}'", line_no, tok));
    return value;
}

}  // namespace

SkeletonGraph parse_graph_text(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    int num_vertices = -1, center = -1;
    std::vector<std::pair<int, int>> edges;
    while (std::getline(in, line)) {
        ++line_no;
        std::istringstream ls(line);
        std::string tok;
        if (!(ls >> tok) || tok[0] == '#') continue;
        std::string a, b, c;
        if (tok == "V") {
            if (num_vertices >= 0)
                throw ParseError(fmt::format("line {}: duplicate V directive", line_no));
            if (!(ls >> a >> b >> c) || b != "center")
                throw ParseError(fmt::format("line {}: expected 'V <count> center <index>'", line_no));
            num_vertices = parse_int_token(a, line_no);
            center = parse_int_token(c, line_no);
        } else if (tok == "E") {
            if (num_vertices < 0)
                throw ParseError(fmt::format("line {}: E before V directive", line_no));
            if (!(ls >> a >> b))
                throw ParseError(fmt::format("line {}: expected 'E <i> <j>'", line_no));
            edges.emplace_back(parse_int_token(a, line_no), parse_int_token(b, line_no));
        } else {
            throw ParseError(fmt::format("line {}: unknown directive '{}'", line_no, tok));
        }
        if (ls >> a)
            throw ParseError(fmt::format("line {}: trailing token '{}'", line_no, a));
    }
    if (num_vertices < 0) throw ParseError("missing V directive");
    return build_graph(num_vertices, edges, center);
}

SkeletonGraph load_graph_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError(fmt::format("cannot open graph file '{}'", path));
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_graph_text(buf.str());
}

std::string graph_to_text(const SkeletonGraph& g) {
    std::string out = fmt::format("V {} center {}\n", g.num_vertices, g.center);
    for (const auto& [i, j] : g.edges) out += fmt::format("E {} {}\n", i, j);
    return out;
}

}  // namespace cdgc
