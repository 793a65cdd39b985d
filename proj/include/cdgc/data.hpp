#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cdgc/common.hpp"
#include "cdgc/graph.hpp"
#include "cdgc/tensor.hpp"

namespace cdgc {

// One skeleton sequence: T frames of V joints with (x, y, z) coordinates.
struct SkeletonClip {
    int frames = 0;
    int joints = 0;
    int label = 0;
    std::string subject, camera;  // optional, single-token metadata
    std::vector<double> xyz;      // frames * joints * 3, frame-major

    double& at(int t, int v, int d) { return xyz[(size_t(t) * joints + v) * 3 + d]; }
    double at(int t, int v, int d) const { return xyz[(size_t(t) * joints + v) * 3 + d]; }
};

// Text format: header `T <frames> V <joints> label <int>` optionally followed
// by `subject <tok>` and `camera <tok>` on the same line, then one line per
// frame holding V x/y/z triples. Values are printed with 17 significant
// digits, so save -> load round-trips bitwise.
void save_clip(const SkeletonClip& clip, const std::string& path);
SkeletonClip load_clip(const std::string& path);

enum class StreamKind { joint, bone, joint_motion, bone_motion };

const char* stream_kind_name(StreamKind k);
StreamKind parse_stream_kind(const std::string& name);

// Single-clip feature map of shape (1, 3, T, V); channel order x, y, z.
//   joint        raw coordinates
//   bone         per joint, own position minus the position of its parent
//                (the neighbor one hop nearer the gravity center; lowest
//                index on ties); the center joint carries zeros
//   *_motion     next frame minus current frame, last frame zero-padded
FeatureMap derive_stream(const SkeletonClip& clip, StreamKind kind, const SkeletonGraph& g);

// Batch assembly: all clips must share (T, V). Shape (N, 3, T, V).
FeatureMap stack_streams(std::span<const SkeletonClip> clips, StreamKind kind,
                         const SkeletonGraph& g);
std::vector<int> labels_of(std::span<const SkeletonClip> clips);

// Synthetic relational task. Classes are (joint pair, phase relation)
// combinations: a designated adjacent pair oscillates either in phase or in
// anti-phase, under a random per-clip phase offset, a random whole-body
// translation, and coordinate jitter. Absolute positions are therefore
// uninformative; the label is recoverable only from relative motion between
// the paired joints.
struct SynthSpec {
    int num_classes = 6;
    int clips_per_class = 40;
    int frames = 16;
    double amplitude = 0.5;
    double cycles = 2.0;       // oscillation periods per clip
    double jitter = 0.05;      // coordinate noise sigma
    double translation = 1.0;  // whole-body offset range (+/-)
};

// The adjacent pair assigned to a class label (pairs repeat across the
// in-phase and anti-phase halves of the label range).
std::pair<int, int> synth_class_pair(const SkeletonGraph& g, int num_classes, int cls);
bool synth_class_antiphase(int num_classes, int cls);

std::vector<SkeletonClip> synth_dataset(const SynthSpec& spec, const SkeletonGraph& g,
                                        std::uint64_t seed);

// Manifest: one `<path> <label>` line per clip; the manifest label wins over
// the label stored in the clip file.
void save_manifest(const std::vector<std::pair<std::string, int>>& entries,
                   const std::string& path);
std::vector<std::pair<std::string, int>> load_manifest(const std::string& path);
std::vector<SkeletonClip> load_dataset(const std::string& manifest_path);

}  // namespace cdgc
