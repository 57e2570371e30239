#pragma once

// Procedural multi-class phantoms (nested ellipsoids with per-class
// intensity, smooth bias field and Gaussian noise), the training
// augmentations (random crop / flip / scale) and k-fold splitting.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "voxqa/rng.hpp"
#include "voxqa/volume.hpp"

namespace voxqa {

struct PhantomSpec {
    Dims dims{32, 32, 32};          // >= 16 per axis
    int num_foreground_classes = 3; // C >= 1
    double noise_sigma = 0.05;
    double bias_amplitude = 0.10;
    std::uint64_t seed = 0;
    Spacing spacing{2.0, 2.0, 2.0};
};

struct FoldSplit {
    std::size_t fold = 0;
    std::vector<std::string> train_ids;
    std::vector<std::string> test_ids;
};

struct AugmentConfig {
    Dims patch3d{24, 24, 24};
    Dims patch2d{1, 24, 24}; // singleton depth, applied to axial slices
    bool flips = true;
    double scale_lo = 0.9, scale_hi = 1.1; // must stay inside (0,2)
};

void validate(const AugmentConfig& cfg);

// Deterministic function of the spec: C nested ellipsoids (class c is the
// shell between ellipsoid c and c+1), per-class mean intensity, smooth bias
// field, Gaussian noise, then normalize_intensity. Throws when the dims
// cannot host C non-empty shells.
std::pair<VoxelGrid, LabelMask> generate_phantom(const PhantomSpec& spec);

// Identical geometric transform on image and labels, offsets uniform over
// the valid range; volumes smaller than the patch are zero-padded
// symmetrically first.
std::pair<VoxelGrid, LabelMask> random_crop(const VoxelGrid& image, const LabelMask& gt,
                                            Dims patch, Rng& rng);

// Each axis flipped independently with probability 1/2.
std::pair<VoxelGrid, LabelMask> random_flip(const VoxelGrid& image, const LabelMask& gt,
                                            Rng& rng);
// Deterministic flip core (random_flip draws the axes and calls this).
std::pair<VoxelGrid, LabelMask> flip_axes(const VoxelGrid& image, const LabelMask& gt,
                                          bool flip_z, bool flip_y, bool flip_x);

// Resample both volumes by one factor drawn from [lo,hi] (trilinear image,
// nearest labels), then centre-crop/pad back to the original dims.
std::pair<VoxelGrid, LabelMask> random_scale(const VoxelGrid& image, const LabelMask& gt,
                                             double lo, double hi, Rng& rng);

// Shuffled ids partitioned into k near-equal test sets; fold i trains on
// everything outside its test set.
std::vector<FoldSplit> kfold_split(const std::vector<std::string>& ids, std::size_t k,
                                   std::uint64_t seed);

} // namespace voxqa
