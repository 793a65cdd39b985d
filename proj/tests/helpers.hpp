#pragma once

#include <doctest.h>

#include <unistd.h>

#include <filesystem>
#include <string>

#include "cdgc/common.hpp"
#include "cdgc/graph.hpp"
#include "cdgc/tensor.hpp"

namespace testutil {

inline cdgc::FeatureMap random_map(cdgc::Rng& rng, std::size_t n, std::size_t c, std::size_t t,
                                   std::size_t v, double lo = -1.0, double hi = 1.0) {
    cdgc::FeatureMap x(n, c, t, v);
    for (std::size_t i = 0; i < x.size(); ++i) x.data()[i] = rng.uniform(lo, hi);
    return x;
}

inline cdgc::Matrix random_matrix(cdgc::Rng& rng, std::size_t r, std::size_t c, double lo = -1.0,
                                  double hi = 1.0) {
    cdgc::Matrix m(r, c);
    for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(lo, hi);
    return m;
}

inline void check_bitwise(const cdgc::FeatureMap& a, const cdgc::FeatureMap& b) {
    REQUIRE(a.same_shape(b));
    for (std::size_t i = 0; i < a.size(); ++i) {
        INFO("flat index ", i);
        REQUIRE(a.data()[i] == b.data()[i]);
    }
}

inline void check_bitwise(const cdgc::Matrix& a, const cdgc::Matrix& b) {
    REQUIRE(a.same_shape(b));
    for (std::size_t i = 0; i < a.size(); ++i) {
        INFO("flat index ", i);
        REQUIRE(a.data()[i] == b.data()[i]);
    }
}

inline void check_close(const cdgc::FeatureMap& a, const cdgc::FeatureMap& b, double tol) {
    REQUIRE(a.same_shape(b));
    CHECK(cdgc::max_rel_deviation(a, b) < tol);
}

// 0-1-2-...-(v-1) chain, center at the front
inline cdgc::SkeletonGraph path_graph(int v, int center = 0) {
    std::vector<std::pair<int, int>> edges;
    for (int i = 0; i + 1 < v; ++i) edges.push_back({i, i + 1});
    return cdgc::build_graph(v, edges, center);
}

// scratch directory, fresh per test-binary run
class TempDir {
  public:
    explicit TempDir(const std::string& tag) {
        dir_ = std::filesystem::temp_directory_path() /
               (tag + "." + std::to_string(::getpid()));
        std::filesystem::create_directories(dir_);
    }
    ~TempDir() { std::filesystem::remove_all(dir_); }

    std::string path(const std::string& name) const { return (dir_ / name).string(); }

  private:
    std::filesystem::path dir_;
};

}  // namespace testutil
