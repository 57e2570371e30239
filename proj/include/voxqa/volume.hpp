#pragma once

// Volume value types (image grid, label mask, bounding box), the vvol file
// format, and the preprocessing chain: isotropic resampling, intensity
// normalization to [-1,1], ROI cropping and one-hot encoding.
//
// Index convention: dims are (d,h,w) voxel counts for the (z,y,x) axes,
// data is row-major with x fastest. spacing is (sx,sy,sz) millimetres,
// sx belonging to the x axis (w).

#include <array>
#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "voxqa/errors.hpp"
#include "voxqa/tensor.hpp"

namespace voxqa {

struct Dims {
    std::size_t d = 0, h = 0, w = 0;

    std::size_t count() const { return d * h * w; }
    bool operator==(const Dims&) const = default;
    std::string str() const {
        return std::to_string(d) + "x" + std::to_string(h) + "x" + std::to_string(w);
    }
};

struct Spacing {
    double sx = 1.0, sy = 1.0, sz = 1.0;
    bool operator==(const Spacing&) const = default;
};

// 3D scalar field with physical spacing. Immutable after construction by
// convention; every operation returns a new grid.
struct VoxelGrid {
    Dims dims;
    Spacing spacing;
    std::vector<float> data; // length dims.count(), finite

    VoxelGrid() = default;
    VoxelGrid(Dims dims_, Spacing spacing_, std::vector<float> data_);

    float at(std::size_t z, std::size_t y, std::size_t x) const {
        return data[(z * dims.h + y) * dims.w + x];
    }
};

// Integer-labeled grid, labels in {0..C}, 0 = background.
struct LabelMask {
    Dims dims;
    Spacing spacing;
    std::vector<std::uint8_t> labels;
    int num_classes = 1; // C, foreground class count

    LabelMask() = default;
    LabelMask(Dims dims_, Spacing spacing_, std::vector<std::uint8_t> labels_, int num_classes_);

    std::uint8_t at(std::size_t z, std::size_t y, std::size_t x) const {
        return labels[(z * dims.h + y) * dims.w + x];
    }
};

// Per-axis [lo, hi) voxel index ranges, (z,y,x) order.
struct BoundingBox {
    std::array<std::size_t, 3> lo{};
    std::array<std::size_t, 3> hi{};

    BoundingBox() = default;
    BoundingBox(std::array<std::size_t, 3> lo_, std::array<std::size_t, 3> hi_, Dims within);

    Dims extents() const { return {hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]}; }
    bool operator==(const BoundingBox&) const = default;
};

using Grid = std::variant<VoxelGrid, LabelMask>;

// vvol format: "VVOL1 <f32|u8> <d> <h> <w> <sx> <sy> <sz> <C|0>\n" followed
// by the raw little-endian payload, row-major, x fastest.
Grid load_grid(const std::string& path);
VoxelGrid load_image(const std::string& path);
LabelMask load_labels(const std::string& path);
void save_grid(const VoxelGrid& grid, const std::string& path);
void save_grid(const LabelMask& mask, const std::string& path);

enum class Interp { Trilinear, Nearest };

// Resample to isotropic target spacing. Output dims: round(dims*spacing/t),
// at least 1 per axis. Samples map through pixel centers; out-of-range
// samples clamp to the border.
VoxelGrid resample_isotropic(const VoxelGrid& grid, double target_spacing, Interp mode);
LabelMask resample_isotropic(const LabelMask& mask, double target_spacing,
                             Interp mode = Interp::Nearest);

// Resize to explicit dims (used by the scaling augmentation); same sampling
// convention, per-axis scale = in_dim/out_dim.
VoxelGrid resize(const VoxelGrid& grid, Dims new_dims, Interp mode);
LabelMask resize(const LabelMask& mask, Dims new_dims);

// Per-volume min-max map to [-1,1]; a constant volume maps to all zeros.
VoxelGrid normalize_intensity(const VoxelGrid& grid);

// Bounding box of all foreground voxels, expanded by margin and clamped to
// the mask dims. Throws on an all-background mask.
BoundingBox roi_from_mask(const LabelMask& gt, std::size_t margin);

VoxelGrid crop(const VoxelGrid& grid, const BoundingBox& box);
LabelMask crop(const LabelMask& mask, const BoundingBox& box);

// One-hot encoding, shape (C+1, d, h, w); channel c is 1 where label == c.
nn::Tensor<float> one_hot(const LabelMask& mask);

} // namespace voxqa
