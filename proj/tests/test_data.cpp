#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <vector>

#include "cdgc/data.hpp"
#include "cdgc/gconv.hpp"
#include "cdgc/graph.hpp"
#include "helpers.hpp"

using namespace cdgc;
using testutil::path_graph;

namespace {

SkeletonClip random_clip(Rng& rng, int frames, int joints, int label) {
    SkeletonClip c;
    c.frames = frames;
    c.joints = joints;
    c.label = label;
    c.xyz.resize(std::size_t(frames) * joints * 3);
    for (double& v : c.xyz) v = rng.uniform(-10.0, 10.0);
    return c;
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    out << text;
}

// time variance of one joint's coordinate, biased (1/T)
double coord_variance(const SkeletonClip& c, int v, int d) {
    double mean = 0.0;
    for (int t = 0; t < c.frames; ++t) mean += c.at(t, v, d);
    mean /= c.frames;
    double var = 0.0;
    for (int t = 0; t < c.frames; ++t) {
        double e = c.at(t, v, d) - mean;
        var += e * e;
    }
    return var / c.frames;
}

}  // namespace

TEST_CASE("clip files: save / load round trip is bitwise") {
    testutil::TempDir dir("cdgc_clip");
    Rng rng(3);
    for (int trial = 0; trial < 10; ++trial) {
        SkeletonClip c = random_clip(rng, 1 + trial, 2 + trial % 4, trial);
        if (trial % 3 == 0) c.subject = "s01";
        if (trial % 3 == 1) c.camera = "c2";
        std::string path = dir.path("clip.txt");
        save_clip(c, path);
        SkeletonClip back = load_clip(path);
        CHECK(back.frames == c.frames);
        CHECK(back.joints == c.joints);
        CHECK(back.label == c.label);
        CHECK(back.subject == c.subject);
        CHECK(back.camera == c.camera);
        REQUIRE(back.xyz.size() == c.xyz.size());
        for (std::size_t i = 0; i < c.xyz.size(); ++i) CHECK(back.xyz[i] == c.xyz[i]);
    }
}

TEST_CASE("clip files: malformed input names the offending line") {
    testutil::TempDir dir("cdgc_badclip");
    std::string p = dir.path("bad.txt");

    write_text(p, "T 2 V 1 label 0\n1 2 3\n");  // missing second frame
    CHECK_THROWS_WITH_AS(load_clip(p), doctest::Contains("line 3"), ParseError);

    write_text(p, "T 1 V 2 label 0\n1 2 3\n");  // frame too short
    CHECK_THROWS_WITH_AS(load_clip(p), doctest::Contains("line 2"), ParseError);

    write_text(p, "T 1 V 1 label 0\n1 2 3 4\n");  // frame too long
    CHECK_THROWS_AS(load_clip(p), ParseError);

    write_text(p, "T 1 V 1 label -2\n1 2 3\n");  // negative label
    CHECK_THROWS_AS(load_clip(p), ParseError);

    write_text(p, "T 1 V 1 label 0\n1 2 x\n");  // non-numeric coordinate
    CHECK_THROWS_AS(load_clip(p), ParseError);

    write_text(p, "V 1 T 1 label 0\n1 2 3\n");  // header keys out of order
    CHECK_THROWS_AS(load_clip(p), ParseError);

    write_text(p, "T 1 V 1 label 0\n1 2 3\n4 5 6\n");  // trailing frame
    CHECK_THROWS_AS(load_clip(p), ParseError);

    CHECK_THROWS_AS(load_clip(dir.path("missing.txt")), ParseError);
}

TEST_CASE("stream kinds: names round trip, unknown rejected") {
    for (StreamKind k : {StreamKind::joint, StreamKind::bone, StreamKind::joint_motion,
                         StreamKind::bone_motion})
        CHECK(parse_stream_kind(stream_kind_name(k)) == k);
    CHECK_THROWS_AS(parse_stream_kind("velocity"), ArgError);
}

TEST_CASE("derive_stream: joint stream embeds coordinates as channels x, y, z") {
    Rng rng(5);
    SkeletonClip c = random_clip(rng, 4, 3, 0);
    SkeletonGraph g = path_graph(3, 0);
    FeatureMap m = derive_stream(c, StreamKind::joint, g);
    REQUIRE(m.batch() == 1);
    REQUIRE(m.channels() == 3);
    REQUIRE(m.frames() == 4);
    REQUIRE(m.vertices() == 3);
    for (int t = 0; t < 4; ++t)
        for (int v = 0; v < 3; ++v)
            for (int d = 0; d < 3; ++d) CHECK(m(0, std::size_t(d), std::size_t(t), std::size_t(v)) == c.at(t, v, d));
}

TEST_CASE("derive_stream: bone vectors point from parent to joint, center carries zeros") {
    // joint 0 at the origin (center), joint 1 one x-unit away
    SkeletonClip c;
    c.frames = 1;
    c.joints = 2;
    c.xyz = {0.0, 0.0, 0.0, 1.0, 0.0, 0.0};
    SkeletonGraph g = build_graph(2, {{0, 1}}, 0);
    FeatureMap b = derive_stream(c, StreamKind::bone, g);
    CHECK(b(0, 0, 0, 0) == 0.0);  // center joint
    CHECK(b(0, 1, 0, 0) == 0.0);
    CHECK(b(0, 2, 0, 0) == 0.0);
    CHECK(b(0, 0, 0, 1) == 1.0);  // own minus parent position
    CHECK(b(0, 1, 0, 1) == 0.0);
    CHECK(b(0, 2, 0, 1) == 0.0);
}

TEST_CASE("derive_stream: equidistant parents resolve to the lowest index") {
    // diamond 0-1, 0-2, 1-3, 2-3 with center 0: joint 3 could hang off 1 or 2
    SkeletonGraph g = build_graph(4, {{0, 1}, {0, 2}, {1, 3}, {2, 3}}, 0);
    Rng rng(7);
    SkeletonClip c = random_clip(rng, 2, 4, 0);
    FeatureMap b = derive_stream(c, StreamKind::bone, g);
    for (int t = 0; t < 2; ++t)
        for (int d = 0; d < 3; ++d)
            CHECK(b(0, std::size_t(d), std::size_t(t), 3) == c.at(t, 3, d) - c.at(t, 1, d));
}

TEST_CASE("derive_stream: bones are invariant to whole-body translation") {
    Rng rng(11);
    SkeletonGraph g = ntu25_graph();
    SkeletonClip c = random_clip(rng, 3, 25, 0);
    SkeletonClip moved = c;
    for (int t = 0; t < 3; ++t)
        for (int v = 0; v < 25; ++v)
            for (int d = 0; d < 3; ++d) moved.at(t, v, d) += (d + 1) * 0.75;
    FeatureMap a = derive_stream(c, StreamKind::bone, g);
    FeatureMap b = derive_stream(moved, StreamKind::bone, g);
    testutil::check_close(a, b, 1e-12);
}

TEST_CASE("derive_stream: bone direction is fixed while the pair probe flips") {
    // the probe reports opposite difference vectors from either end of a
    // bone; the bone stream always stores child minus parent
    SkeletonGraph g = ntu25_graph();
    Rng rng(13);
    SkeletonClip c = random_clip(rng, 2, 25, 0);
    FeatureMap joints = derive_stream(c, StreamKind::joint, g);
    FeatureMap bones = derive_stream(c, StreamKind::bone, g);

    const int parent = 20, child = 4;  // shoulder hangs off the upper spine
    REQUIRE(g.adjacent(parent, child));
    auto [from_parent, from_child] = gradient_antisymmetry_probe(joints, g, parent, child);
    std::size_t k = 0;
    for (std::size_t d = 0; d < 3; ++d)
        for (std::size_t t = 0; t < 2; ++t, ++k) {
            CHECK(bones(0, d, t, child) == from_parent[k]);   // same direction
            CHECK(bones(0, d, t, child) == -from_child[k]);   // probe flipped, bone not
        }
}

TEST_CASE("derive_stream: motion is the forward difference, zero at the tail") {
    SkeletonClip c;
    c.frames = 3;
    c.joints = 1;
    c.xyz = {1.0, 0.0, 0.0, 4.0, 0.0, 0.0, 9.0, 0.0, 0.0};
    SkeletonGraph g = build_graph(1, {}, 0);
    FeatureMap m = derive_stream(c, StreamKind::joint_motion, g);
    CHECK(m(0, 0, 0, 0) == 3.0);
    CHECK(m(0, 0, 1, 0) == 5.0);
    CHECK(m(0, 0, 2, 0) == 0.0);  // zero-padded last frame

    // static clips and single-frame clips have all-zero motion
    Rng rng(17);
    SkeletonClip still = random_clip(rng, 4, 2, 0);
    for (int t = 1; t < 4; ++t)
        for (int v = 0; v < 2; ++v)
            for (int d = 0; d < 3; ++d) still.at(t, v, d) = still.at(0, v, d);
    SkeletonGraph g2 = path_graph(2, 0);
    FeatureMap ms = derive_stream(still, StreamKind::joint_motion, g2);
    for (std::size_t i = 0; i < ms.size(); ++i) CHECK(ms.data()[i] == 0.0);

    SkeletonClip one = random_clip(rng, 1, 2, 0);
    FeatureMap m1 = derive_stream(one, StreamKind::joint_motion, g2);
    for (std::size_t i = 0; i < m1.size(); ++i) CHECK(m1.data()[i] == 0.0);
}

TEST_CASE("derive_stream: bone_motion is the motion of the bone stream") {
    Rng rng(19);
    SkeletonGraph g = ntu25_graph();
    SkeletonClip c = random_clip(rng, 4, 25, 0);
    FeatureMap bones = derive_stream(c, StreamKind::bone, g);
    FeatureMap bm = derive_stream(c, StreamKind::bone_motion, g);
    for (std::size_t d = 0; d < 3; ++d)
        for (std::size_t t = 0; t + 1 < 4; ++t)
            for (std::size_t v = 0; v < 25; ++v)
                CHECK(bm(0, d, t, v) ==
                      doctest::Approx(bones(0, d, t + 1, v) - bones(0, d, t, v)).epsilon(1e-12));
    for (std::size_t d = 0; d < 3; ++d)
        for (std::size_t v = 0; v < 25; ++v) CHECK(bm(0, d, 3, v) == 0.0);
}

TEST_CASE("derive_stream: clip joints must match the graph") {
    Rng rng(23);
    SkeletonClip c = random_clip(rng, 2, 4, 0);
    CHECK_THROWS_AS(derive_stream(c, StreamKind::joint, path_graph(5, 0)), DimError);
}

TEST_CASE("stack_streams: batches clips, labels_of collects labels") {
    Rng rng(29);
    SkeletonGraph g = path_graph(3, 0);
    std::vector<SkeletonClip> clips = {random_clip(rng, 2, 3, 4), random_clip(rng, 2, 3, 1)};
    FeatureMap batch = stack_streams(clips, StreamKind::joint, g);
    REQUIRE(batch.batch() == 2);
    for (int t = 0; t < 2; ++t)
        for (int v = 0; v < 3; ++v)
            for (int d = 0; d < 3; ++d) {
                CHECK(batch(0, std::size_t(d), std::size_t(t), std::size_t(v)) == clips[0].at(t, v, d));
                CHECK(batch(1, std::size_t(d), std::size_t(t), std::size_t(v)) == clips[1].at(t, v, d));
            }
    CHECK(labels_of(clips) == std::vector<int>{4, 1});

    std::vector<SkeletonClip> ragged = {random_clip(rng, 2, 3, 0), random_clip(rng, 3, 3, 0)};
    CHECK_THROWS_AS(stack_streams(ragged, StreamKind::joint, g), DimError);
}

TEST_CASE("synth_dataset: deterministic, balanced, correctly shaped") {
    SkeletonGraph g = ntu25_graph();
    SynthSpec spec;
    spec.num_classes = 4;
    spec.clips_per_class = 3;
    spec.frames = 8;
    std::vector<SkeletonClip> a = synth_dataset(spec, g, 42);
    std::vector<SkeletonClip> b = synth_dataset(spec, g, 42);
    REQUIRE(a.size() == 12);
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].label == int(i) / 3);
        CHECK(a[i].frames == 8);
        CHECK(a[i].joints == 25);
        REQUIRE(a[i].xyz.size() == b[i].xyz.size());
        for (std::size_t j = 0; j < a[i].xyz.size(); ++j) CHECK(a[i].xyz[j] == b[i].xyz[j]);
    }
    std::vector<SkeletonClip> c = synth_dataset(spec, g, 43);
    CHECK(c[0].xyz != a[0].xyz);
}

TEST_CASE("synth_dataset: class pairs repeat across the phase halves") {
    SkeletonGraph g = ntu25_graph();
    const int classes = 6;
    const int pairs = (classes + 1) / 2;
    for (int cls = 0; cls < classes; ++cls) {
        auto p = synth_class_pair(g, classes, cls);
        CHECK(g.adjacent(p.first, p.second));
        if (cls >= pairs) {
            CHECK(p == synth_class_pair(g, classes, cls - pairs));
            CHECK(synth_class_antiphase(classes, cls));
        } else {
            CHECK_FALSE(synth_class_antiphase(classes, cls));
        }
    }
    // distinct pairs within one phase half
    for (int a = 0; a < pairs; ++a)
        for (int b = a + 1; b < pairs; ++b)
            CHECK(synth_class_pair(g, classes, a) != synth_class_pair(g, classes, b));

    CHECK_THROWS_AS(synth_class_pair(g, 1, 0), ArgError);
    CHECK_THROWS_AS(synth_class_pair(g, 6, 6), ArgError);
    CHECK_THROWS_AS(synth_class_pair(path_graph(2, 0), 9, 0), ArgError);  // too few edges
}

TEST_CASE("synth_dataset: only the designated joints carry the oscillation energy") {
    // time variance of the x coordinate: sigma^2 everywhere, plus A^2/2 at the
    // two designated joints (full sine cycles, so the phase cancels exactly)
    SkeletonGraph g = ntu25_graph();
    SynthSpec spec;
    spec.num_classes = 4;
    spec.clips_per_class = 40;
    spec.frames = 16;
    std::vector<SkeletonClip> clips = synth_dataset(spec, g, 7);

    const double wave_var = spec.amplitude * spec.amplitude / 2.0;  // 0.125
    const double noise_var = spec.jitter * spec.jitter;             // 0.0025

    for (int cls = 0; cls < spec.num_classes; ++cls) {
        auto [ja, jb] = synth_class_pair(g, spec.num_classes, cls);
        std::vector<double> mean_var(25, 0.0);
        for (int rep = 0; rep < spec.clips_per_class; ++rep) {
            const SkeletonClip& c = clips[std::size_t(cls) * spec.clips_per_class + rep];
            for (int v = 0; v < 25; ++v) mean_var[std::size_t(v)] += coord_variance(c, v, 0);
        }
        for (double& v : mean_var) v /= spec.clips_per_class;

        for (int v = 0; v < 25; ++v) {
            INFO("class ", cls, " joint ", v);
            if (v == ja || v == jb) {
                CHECK(mean_var[std::size_t(v)] > 0.6 * wave_var);
                CHECK(mean_var[std::size_t(v)] < 1.6 * wave_var);
            } else {
                CHECK(mean_var[std::size_t(v)] < 8.0 * noise_var);
            }
        }
    }
}

TEST_CASE("synth_dataset: raw positions are uninformative, relative motion separates") {
    // nearest-centroid on flattened coordinates fails; the same classifier on
    // a relative-motion summary of the designated pairs succeeds
    SkeletonGraph g = ntu25_graph();
    SynthSpec spec;
    spec.num_classes = 4;
    spec.clips_per_class = 60;
    spec.frames = 16;
    std::vector<SkeletonClip> clips = synth_dataset(spec, g, 11);
    const int pairs = (spec.num_classes + 1) / 2;

    auto raw_features = [&](const SkeletonClip& c) {
        return std::vector<double>(c.xyz.begin(), c.xyz.end());
    };
    auto relational_features = [&](const SkeletonClip& c) {
        // per candidate pair: spread of the x difference and of the x sum,
        // centered; distinguishes which pair moves and in which phase relation
        std::vector<double> f;
        for (int p = 0; p < pairs; ++p) {
            auto [a, b] = synth_class_pair(g, spec.num_classes, p);
            double md = 0.0, ms = 0.0;
            for (int t = 0; t < c.frames; ++t) {
                md += c.at(t, a, 0) - c.at(t, b, 0);
                ms += c.at(t, a, 0) + c.at(t, b, 0);
            }
            md /= c.frames;
            ms /= c.frames;
            double vd = 0.0, vs = 0.0;
            for (int t = 0; t < c.frames; ++t) {
                double d = c.at(t, a, 0) - c.at(t, b, 0) - md;
                double s = c.at(t, a, 0) + c.at(t, b, 0) - ms;
                vd += d * d;
                vs += s * s;
            }
            f.push_back(std::sqrt(vd / c.frames));
            f.push_back(std::sqrt(vs / c.frames));
        }
        return f;
    };

    auto nearest_centroid_accuracy = [&](auto&& embed) {
        // even clips train, odd clips test
        std::vector<std::vector<double>> centroids(std::size_t(spec.num_classes));
        std::vector<int> counts(std::size_t(spec.num_classes), 0);
        for (std::size_t i = 0; i < clips.size(); i += 2) {
            std::vector<double> f = embed(clips[i]);
            auto& c = centroids[std::size_t(clips[i].label)];
            if (c.empty()) c.assign(f.size(), 0.0);
            for (std::size_t j = 0; j < f.size(); ++j) c[j] += f[j];
            ++counts[std::size_t(clips[i].label)];
        }
        for (int k = 0; k < spec.num_classes; ++k)
            for (double& v : centroids[std::size_t(k)]) v /= counts[std::size_t(k)];
        int hit = 0, total = 0;
        for (std::size_t i = 1; i < clips.size(); i += 2) {
            std::vector<double> f = embed(clips[i]);
            int best = -1;
            double best_d = 0.0;
            for (int k = 0; k < spec.num_classes; ++k) {
                double d = 0.0;
                for (std::size_t j = 0; j < f.size(); ++j) {
                    double e = f[j] - centroids[std::size_t(k)][j];
                    d += e * e;
                }
                if (best < 0 || d < best_d) {
                    best = k;
                    best_d = d;
                }
            }
            hit += (best == clips[i].label);
            ++total;
        }
        return double(hit) / total;
    };

    CHECK(nearest_centroid_accuracy(raw_features) < 0.80);
    CHECK(nearest_centroid_accuracy(relational_features) >= 0.90);
}

TEST_CASE("manifest: round trip, label override, bad lines rejected") {
    testutil::TempDir dir("cdgc_manifest");
    Rng rng(31);
    SkeletonClip c0 = random_clip(rng, 2, 3, 7);
    SkeletonClip c1 = random_clip(rng, 2, 3, 7);
    save_clip(c0, dir.path("a.txt"));
    save_clip(c1, dir.path("b.txt"));

    std::vector<std::pair<std::string, int>> entries = {{dir.path("a.txt"), 7},
                                                        {dir.path("b.txt"), 2}};
    save_manifest(entries, dir.path("m.txt"));
    CHECK(load_manifest(dir.path("m.txt")) == entries);

    // the manifest label wins over the one stored in the clip file
    std::vector<SkeletonClip> ds = load_dataset(dir.path("m.txt"));
    REQUIRE(ds.size() == 2);
    CHECK(ds[0].label == 7);
    CHECK(ds[1].label == 2);

    write_text(dir.path("bad.txt"), "clip.txt\n");  // missing label
    CHECK_THROWS_AS(load_manifest(dir.path("bad.txt")), ParseError);
    write_text(dir.path("bad.txt"), "clip.txt 1 extra\n");
    CHECK_THROWS_AS(load_manifest(dir.path("bad.txt")), ParseError);
    CHECK_THROWS_AS(load_manifest(dir.path("nope.txt")), ParseError);
    CHECK_THROWS_AS(save_manifest({{"two tokens", 1}}, dir.path("m2.txt")), ArgError);
}
