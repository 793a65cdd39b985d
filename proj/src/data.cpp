#include "cdgc/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

namespace cdgc {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

double parse_double_token(const std::string& tok, int line_no) {
    std::size_t used = 0;
    double value = 0.0;
    try {
        value = std::stod(tok, &used);
    } catch (const std::exception&) {
        throw ParseError(fmt::format("line {}: expected number, got '{}'", line_no, tok));
    }
    if (used != tok.size())
        throw ParseError(fmt::format("line {}: expected number, got '{}'", line_no, tok));
    return value;
}

int parse_int_token(const std::string& tok, int line_no) {
    std::size_t used = 0;
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

void check_metadata_token(const std::string& s, const char* what) {
    if (s.find_first_of(" \t\r\n") != std::string::npos)
        throw ArgError(fmt::format("clip {} must be a single token, got '{}'", what, s));
}

}  // namespace

void save_clip(const SkeletonClip& clip, const std::string& path) {
    if (clip.frames < 1 || clip.joints < 1)
        throw ArgError(fmt::format("clip needs at least one frame and joint, got T={} V={}",
                                   clip.frames, clip.joints));
    if (clip.xyz.size() != std::size_t(clip.frames) * clip.joints * 3)
        throw ArgError("clip coordinate count does not match T*V*3");
    std::ofstream out(path);
    if (!out) throw ParseError(fmt::format("cannot open '{}' for writing", path));
    out << "T " << clip.frames << " V " << clip.joints << " label " << clip.label;
    if (!clip.subject.empty()) {
        check_metadata_token(clip.subject, "subject");
        out << " subject " << clip.subject;
    }
    if (!clip.camera.empty()) {
        check_metadata_token(clip.camera, "camera");
        out << " camera " << clip.camera;
    }
    out << '\n';
    for (int t = 0; t < clip.frames; ++t) {
        for (int v = 0; v < clip.joints; ++v)
            for (int d = 0; d < 3; ++d) {
                if (v != 0 || d != 0) out << ' ';
                // 17 significant digits: doubles survive the round-trip bitwise
                out << fmt::format("{:.17g}", clip.at(t, v, d));
            }
        out << '\n';
    }
    if (!out) throw ParseError(fmt::format("write to '{}' failed", path));
}

SkeletonClip load_clip(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError(fmt::format("cannot open clip file '{}'", path));
    std::string line;
    if (!std::getline(in, line)) throw ParseError("line 1: empty clip file");

    SkeletonClip clip;
    {
        std::istringstream hs(line);
        std::string t_kw, v_kw, l_kw, tok;
        int frames = 0, joints = 0, label = 0;
        if (!(hs >> t_kw >> tok) || t_kw != "T")
            throw ParseError("line 1: expected header 'T <frames> V <joints> label <int>'");
        frames = parse_int_token(tok, 1);
        if (!(hs >> v_kw >> tok) || v_kw != "V")
            throw ParseError("line 1: expected 'V <joints>' after frame count");
        joints = parse_int_token(tok, 1);
        if (!(hs >> l_kw >> tok) || l_kw != "label")
            throw ParseError("line 1: expected 'label <int>' after joint count");
        label = parse_int_token(tok, 1);
        if (frames < 1 || joints < 1)
            throw ParseError(fmt::format("line 1: invalid shape T={} V={}", frames, joints));
        if (label < 0) throw ParseError(fmt::format("line 1: negative label {}", label));
        clip.frames = frames;
        clip.joints = joints;
        clip.label = label;
        std::string key;
        while (hs >> key) {
            if (key == "subject" && clip.subject.empty() && (hs >> tok))
                clip.subject = tok;
            else if (key == "camera" && clip.camera.empty() && (hs >> tok))
                clip.camera = tok;
            else
                throw ParseError(fmt::format("line 1: unexpected header token '{}'", key));
        }
    }

    clip.xyz.assign(std::size_t(clip.frames) * clip.joints * 3, 0.0);
    const std::size_t per_line = std::size_t(clip.joints) * 3;
    for (int t = 0; t < clip.frames; ++t) {
        const int line_no = t + 2;
        if (!std::getline(in, line))
            throw ParseError(fmt::format("line {}: unexpected end of file, expected frame {} of {}",
                                         line_no, t + 1, clip.frames));
        std::istringstream ls(line);
        std::string tok;
        std::size_t got = 0;
        while (ls >> tok) {
            if (got >= per_line)
                throw ParseError(fmt::format("line {}: expected {} values per frame, got more",
                                             line_no, per_line));
            clip.xyz[std::size_t(t) * per_line + got] = parse_double_token(tok, line_no);
            ++got;
        }
        if (got != per_line)
            throw ParseError(fmt::format("line {}: expected {} values per frame, got {}", line_no,
                                         per_line, got));
    }
    std::string tok;
    if (in >> tok)
        throw ParseError(fmt::format("line {}: trailing content '{}'", clip.frames + 2, tok));
    return clip;
}

const char* stream_kind_name(StreamKind k) {
    switch (k) {
        case StreamKind::joint: return "joint";
        case StreamKind::bone: return "bone";
        case StreamKind::joint_motion: return "joint_motion";
        case StreamKind::bone_motion: return "bone_motion";
    }
    return "?";
}

StreamKind parse_stream_kind(const std::string& name) {
    if (name == "joint") return StreamKind::joint;
    if (name == "bone") return StreamKind::bone;
    if (name == "joint_motion") return StreamKind::joint_motion;
    if (name == "bone_motion") return StreamKind::bone_motion;
    throw ArgError(fmt::format(
        "unknown stream '{}' (expected joint, bone, joint_motion or bone_motion)", name));
}

namespace {

// parent = the neighbor one hop nearer the center; lowest index on ties
std::vector<int> bone_parents(const SkeletonGraph& g) {
    std::vector<int> parent(g.num_vertices, -1);
    std::vector<int> unreachable;
    for (int v = 0; v < g.num_vertices; ++v) {
        if (g.hop_at(v, g.center) < 0) {
            unreachable.push_back(v);
            continue;
        }
        if (v == g.center) continue;
        for (int u = 0; u < g.num_vertices; ++u)
            if (g.adjacent(v, u) && g.hop_at(u, g.center) == g.hop_at(v, g.center) - 1) {
                parent[v] = u;
                break;
            }
    }
    if (!unreachable.empty())
        throw ArgError(fmt::format("bone stream needs a connected graph: vertices [{}] cannot "
                                   "reach center {}",
                                   fmt::join(unreachable, ", "), g.center));
    return parent;
}

FeatureMap temporal_difference(const FeatureMap& x) {
    const std::size_t T = x.frames(), V = x.vertices();
    FeatureMap out(x.batch(), x.channels(), T, V);  // last frame stays zero
    for (std::size_t n = 0; n < x.batch(); ++n)
        for (std::size_t c = 0; c < x.channels(); ++c)
            for (std::size_t t = 0; t + 1 < T; ++t) {
                const double* cur = x.vertex_row(n, c, t);
                const double* nxt = x.vertex_row(n, c, t + 1);
                double* dst = out.vertex_row(n, c, t);
                for (std::size_t v = 0; v < V; ++v) dst[v] = nxt[v] - cur[v];
            }
    return out;
}

}  // namespace

FeatureMap derive_stream(const SkeletonClip& clip, StreamKind kind, const SkeletonGraph& g) {
    if (clip.joints != g.num_vertices)
        throw DimError(fmt::format("clip has {} joints, graph has {} vertices", clip.joints,
                                   g.num_vertices));
    const int T = clip.frames, V = clip.joints;
    FeatureMap joints(1, 3, T, V);
    for (int t = 0; t < T; ++t)
        for (int v = 0; v < V; ++v)
            for (int d = 0; d < 3; ++d) joints(0, d, t, v) = clip.at(t, v, d);
    if (kind == StreamKind::joint) return joints;
    if (kind == StreamKind::joint_motion) return temporal_difference(joints);

    const std::vector<int> parent = bone_parents(g);
    FeatureMap bones(1, 3, T, V);
    for (int t = 0; t < T; ++t)
        for (int v = 0; v < V; ++v) {
            if (parent[v] < 0) continue;  // center carries zeros
            for (int d = 0; d < 3; ++d)
                bones(0, d, t, v) = clip.at(t, v, d) - clip.at(t, parent[v], d);
        }
    if (kind == StreamKind::bone) return bones;
    return temporal_difference(bones);
}

FeatureMap stack_streams(std::span<const SkeletonClip> clips, StreamKind kind,
                         const SkeletonGraph& g) {
    if (clips.empty()) throw ArgError("cannot stack an empty clip set");
    const int T = clips[0].frames, V = clips[0].joints;
    for (const SkeletonClip& c : clips)
        if (c.frames != T || c.joints != V)
            throw DimError(fmt::format("clip shapes differ: (T={}, V={}) vs (T={}, V={})", T, V,
                                       c.frames, c.joints));
    FeatureMap out(clips.size(), 3, T, V);
    for (std::size_t n = 0; n < clips.size(); ++n) {
        const FeatureMap one = derive_stream(clips[n], kind, g);
        for (int c = 0; c < 3; ++c)
            for (int t = 0; t < T; ++t) {
                const double* src = one.vertex_row(0, c, t);
                double* dst = out.vertex_row(n, c, t);
                std::copy(src, src + V, dst);
            }
    }
    return out;
}

std::vector<int> labels_of(std::span<const SkeletonClip> clips) {
    std::vector<int> labels;
    labels.reserve(clips.size());
    for (const SkeletonClip& c : clips) labels.push_back(c.label);
    return labels;
}

std::pair<int, int> synth_class_pair(const SkeletonGraph& g, int num_classes, int cls) {
    if (num_classes < 2) throw ArgError("synthetic task needs at least 2 classes");
    if (cls < 0 || cls >= num_classes)
        throw ArgError(fmt::format("class {} out of range [0, {})", cls, num_classes));
    const int num_pairs = (num_classes + 1) / 2;
    if (num_pairs > int(g.edges.size()))
        throw ArgError(fmt::format("{} classes need {} distinct joint pairs, graph has {} edges",
                                   num_classes, num_pairs, g.edges.size()));
    // spread the designated pairs evenly over the edge list
    const int pair_idx = (cls % num_pairs) * int(g.edges.size()) / num_pairs;
    return g.edges[pair_idx];
}

bool synth_class_antiphase(int num_classes, int cls) {
    return cls >= (num_classes + 1) / 2;
}

std::vector<SkeletonClip> synth_dataset(const SynthSpec& spec, const SkeletonGraph& g,
                                        std::uint64_t seed) {
    if (spec.num_classes < 2) throw ArgError("synthetic task needs at least 2 classes");
    if (spec.clips_per_class < 1 || spec.frames < 1)
        throw ArgError("synthetic task needs at least one clip and one frame");
    const int V = g.num_vertices, T = spec.frames;
    const double omega = kTwoPi * spec.cycles / T;

    // arbitrary fixed rest pose, identical for every class
    std::vector<double> rest(std::size_t(V) * 3);
    for (int v = 0; v < V; ++v) {
        rest[std::size_t(v) * 3 + 0] = 0.4 * std::cos(kTwoPi * v / V);
        rest[std::size_t(v) * 3 + 1] = 0.4 * std::sin(kTwoPi * v / V);
        rest[std::size_t(v) * 3 + 2] = 0.1 * (v % 5);
    }

    Rng rng(seed);
    std::vector<SkeletonClip> clips;
    clips.reserve(std::size_t(spec.num_classes) * spec.clips_per_class);
    for (int cls = 0; cls < spec.num_classes; ++cls) {
        const auto [ja, jb] = synth_class_pair(g, spec.num_classes, cls);
        const double sign = synth_class_antiphase(spec.num_classes, cls) ? -1.0 : 1.0;
        for (int rep = 0; rep < spec.clips_per_class; ++rep) {
            SkeletonClip clip;
            clip.frames = T;
            clip.joints = V;
            clip.label = cls;
            clip.xyz.assign(std::size_t(T) * V * 3, 0.0);
            const double phase = rng.uniform(0.0, kTwoPi);
            const double shift[3] = {rng.uniform(-spec.translation, spec.translation),
                                     rng.uniform(-spec.translation, spec.translation),
                                     rng.uniform(-spec.translation, spec.translation)};
            for (int t = 0; t < T; ++t) {
                const double wave = spec.amplitude * std::sin(omega * t + phase);
                for (int v = 0; v < V; ++v)
                    for (int d = 0; d < 3; ++d) {
                        double val = rest[std::size_t(v) * 3 + d] + shift[d] +
                                     spec.jitter * rng.normal();
                        if (d == 0) {
                            if (v == ja) val += wave;
                            if (v == jb) val += sign * wave;
                        }
                        clip.at(t, v, d) = val;
                    }
            }
            clips.push_back(std::move(clip));
        }
    }
    return clips;
}

void save_manifest(const std::vector<std::pair<std::string, int>>& entries,
                   const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ParseError(fmt::format("cannot open '{}' for writing", path));
    for (const auto& [p, label] : entries) {
        if (p.find_first_of(" \t\r\n") != std::string::npos)
            throw ArgError(fmt::format("manifest paths must be single tokens, got '{}'", p));
        out << p << ' ' << label << '\n';
    }
}

std::vector<std::pair<std::string, int>> load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError(fmt::format("cannot open manifest '{}'", path));
    std::vector<std::pair<std::string, int>> entries;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::istringstream ls(line);
        std::string p, label_tok, extra;
        if (!(ls >> p)) continue;  // blank line
        if (!(ls >> label_tok))
            throw ParseError(fmt::format("line {}: expected '<path> <label>'", line_no));
        if (ls >> extra)
            throw ParseError(fmt::format("line {}: trailing token '{}'", line_no, extra));
        entries.emplace_back(p, parse_int_token(label_tok, line_no));
    }
    return entries;
}

std::vector<SkeletonClip> load_dataset(const std::string& manifest_path) {
    std::vector<SkeletonClip> clips;
    for (const auto& [path, label] : load_manifest(manifest_path)) {
        SkeletonClip clip = load_clip(path);
        clip.label = label;
        clips.push_back(std::move(clip));
    }
    return clips;
}

}  // namespace cdgc
