#pragma once

// Ground-truth error maps (1 where a mask disagrees with GT), thresholding
// of probabilistic predictions and the derived per-case quality indicator.

#include <cstdint>
#include <string>
#include <vector>

#include "voxqa/metrics.hpp"
#include "voxqa/volume.hpp"

namespace voxqa {

// Per-voxel binary field, 1 = misclassified voxel.
struct ErrorMap {
    Dims dims;
    std::vector<std::uint8_t> bits;

    ErrorMap() = default;
    ErrorMap(Dims dims_, std::vector<std::uint8_t> bits_);

    std::uint64_t error_count() const;
    // mean(bits) = fraction of error voxels
    double error_fraction() const;
};

// Per-voxel probability of misclassification, before thresholding.
struct SoftErrorMap {
    Dims dims;
    std::vector<float> probs; // in [0,1]

    SoftErrorMap() = default;
    SoftErrorMap(Dims dims_, std::vector<float> probs_);
};

// Voxel-wise disagreement of a mask against ground truth: 1 iff s != gt.
ErrorMap true_error_map(const LabelMask& s, const LabelMask& gt);

// bit = 1 iff prob >= tau, tau in (0,1).
ErrorMap binarize(const SoftErrorMap& soft, double tau);

// Fraction of voxels predicted correct: (total - errors)/total. Computed as
// that integer ratio so it equals segmentation accuracy bit-for-bit when the
// map is a true error map.
double quality_indicator(const ErrorMap& e);

// quality_indicator(true_error_map(s, gt)) == segmentation accuracy, exactly.
double qi_from_truth(const LabelMask& s, const LabelMask& gt);

// error maps serialize as vvol u8 with C=1
void save_error_map(const ErrorMap& e, const Spacing& spacing, const std::string& path);
ErrorMap load_error_map(const std::string& path);

} // namespace voxqa
