#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tilematte/image.hpp"
#include "tilematte/rng.hpp"
#include "tilematte/trimap.hpp"

namespace tilematte {

/// One training scene: the composition identity
/// image = alpha * fg + (1 - alpha) * bg holds per channel by construction.
struct TrainingSample {
    Rgb image;
    Trimap trimap;
    AlphaMatte alpha;
    Rgb fg;
    Rgb bg;
};

/// Per-pixel convex blend of foreground over background.
Rgb composite(const Rgb& fg, const AlphaMatte& alpha, const Rgb& bg);

/// Over-composites foreground 1 onto foreground 2:
///   alpha = 1 - (1-a1)(1-a2)
///   fg    = (a1 fg1 + (1-a1) a2 fg2) / max(alpha, 1e-6), 0 where alpha = 0.
void merge_foregrounds(const Rgb& fg1, const AlphaMatte& alpha1, const Rgb& fg2,
                       const AlphaMatte& alpha2, Rgb& fg_out, AlphaMatte& alpha_out);

struct SceneParams {
    int canvas_side = 320;
    /// soft-edge width range as a fraction of the canvas side
    double min_feather_frac = 0.08;
    double max_feather_frac = 0.22;
    /// disk radius range as a fraction of the canvas side
    double min_disk_frac = 1.0 / 7.0;
    double max_disk_frac = 1.0 / 3.5;
    int max_disks = 2;
    int max_strands = 3;
    /// trimap dilation radii are drawn from [1, min(25, canvas/16)] unless
    /// this overrides the cap
    int radius_cap = 25;
};

/// Deterministic-from-seed synthetic scene: feathered shapes and strands
/// over a procedural background, with exact alpha/fg/bg and a trimap
/// derived by randomized dilation. The two palette colours are assigned to
/// fg/bg by a per-scene coin flip, so which side a colour belongs to is
/// only resolvable from labelled context.
TrainingSample synth_scene(std::uint64_t seed, const SceneParams& params);
TrainingSample synth_scene(std::uint64_t seed, int canvas_side);

struct SampleConfig {
    int target_side = 320;
    std::vector<int> scales = {320, 480, 640};
    double max_rotation_deg = 15.0;
};

/// Crops a square patch centred on a uniformly drawn unknown pixel at a
/// random scale, resizes to the target side (bilinear; nearest for the
/// trimap), then applies a random horizontal flip and a rotation of less
/// than the configured angle with mirror border fill. Throws when the
/// scene has no unknown pixels.
TrainingSample sample_training_patch(const TrainingSample& scene, std::uint64_t seed,
                                     const SampleConfig& cfg);

/// Directory dataset: <root>/{images,trimaps,alphas,fgs,bgs}/<name>.png.
/// images and trimaps are required per item; alphas/fgs/bgs are optional
/// groups probed per item.
class Dataset {
public:
    explicit Dataset(std::string root);

    size_t size() const { return names_.size(); }
    const std::string& name(size_t i) const { return names_.at(i); }

    Rgb image(size_t i) const;
    Trimap trimap(size_t i) const;
    bool has_alpha(size_t i) const;
    AlphaMatte alpha(size_t i) const;
    bool has_fg_bg(size_t i) const;
    Rgb fg(size_t i) const;
    Rgb bg(size_t i) const;

    /// All five planes; throws when alphas or fgs/bgs are missing.
    TrainingSample training_sample(size_t i) const;

    /// Writes a sample as a new item (creates subdirectories as needed).
    static void write_item(const std::string& root, const std::string& name,
                           const TrainingSample& sample);

private:
    std::string path_of(const char* group, size_t i) const;
    std::string root_;
    std::vector<std::string> names_;
};

} // namespace tilematte
