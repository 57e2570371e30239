#include "voxqa/volume.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

namespace voxqa {

namespace {

void check_dims(const Dims& dims) {
    if (dims.d == 0 || dims.h == 0 || dims.w == 0)
        throw ValueError("grid dims must be positive, got " + dims.str());
}

void check_spacing(const Spacing& s) {
    if (!(s.sx > 0.0) || !(s.sy > 0.0) || !(s.sz > 0.0))
        throw ValueError("grid spacing must be strictly positive");
}

} // namespace

VoxelGrid::VoxelGrid(Dims dims_, Spacing spacing_, std::vector<float> data_)
    : dims(dims_), spacing(spacing_), data(std::move(data_)) {
    check_dims(dims);
    check_spacing(spacing);
    if (data.size() != dims.count())
        throw ValueError("grid data length " + std::to_string(data.size()) +
                         " does not match dims " + dims.str());
    for (const float v : data)
        if (!std::isfinite(v)) throw ValueError("grid contains non-finite values");
}

LabelMask::LabelMask(Dims dims_, Spacing spacing_, std::vector<std::uint8_t> labels_,
                     int num_classes_)
    : dims(dims_), spacing(spacing_), labels(std::move(labels_)), num_classes(num_classes_) {
    check_dims(dims);
    check_spacing(spacing);
    if (num_classes < 1) throw ValueError("label mask needs C >= 1 foreground classes");
    if (labels.size() != dims.count())
        throw ValueError("label data length " + std::to_string(labels.size()) +
                         " does not match dims " + dims.str());
    for (const std::uint8_t v : labels)
        if (v > num_classes)
            throw ValueError("label value " + std::to_string(int(v)) + " exceeds C=" +
                             std::to_string(num_classes));
}

BoundingBox::BoundingBox(std::array<std::size_t, 3> lo_, std::array<std::size_t, 3> hi_,
                         Dims within)
    : lo(lo_), hi(hi_) {
    const std::size_t limits[3] = {within.d, within.h, within.w};
    for (int a = 0; a < 3; ++a) {
        if (lo[a] >= hi[a]) throw ValueError("bounding box must satisfy min < max per axis");
        if (hi[a] > limits[a]) throw ValueError("bounding box exceeds grid dims");
    }
}

// ---------------------------------------------------------------------------
// vvol IO

namespace {

struct VvolHeader {
    std::string kind; // "f32" or "u8"
    Dims dims;
    Spacing spacing;
    int classes = 0; // C for u8, 0 for f32
};

VvolHeader parse_header(std::istream& in, const std::string& path) {
    std::string line;
    if (!std::getline(in, line)) throw IoError(path + ": missing vvol header");
    std::istringstream hs(line);
    std::string magic;
    VvolHeader h;
    long long d = 0, hh = 0, w = 0;
    if (!(hs >> magic >> h.kind >> d >> hh >> w >> h.spacing.sx >> h.spacing.sy >>
          h.spacing.sz >> h.classes))
        throw IoError(path + ": malformed vvol header: '" + line + "'");
    std::string extra;
    if (hs >> extra) throw IoError(path + ": trailing tokens in vvol header");
    if (magic != "VVOL1") throw IoError(path + ": bad magic '" + magic + "'");
    if (h.kind != "f32" && h.kind != "u8")
        throw IoError(path + ": unknown payload kind '" + h.kind + "'");
    if (d <= 0 || hh <= 0 || w <= 0) throw IoError(path + ": non-positive dims in header");
    if (!(h.spacing.sx > 0) || !(h.spacing.sy > 0) || !(h.spacing.sz > 0))
        throw IoError(path + ": non-positive spacing in header");
    if (h.kind == "u8" && h.classes < 1)
        throw IoError(path + ": u8 payload requires C > 0");
    if (h.kind == "f32" && h.classes != 0)
        throw IoError(path + ": f32 payload requires C field 0");
    h.dims = {static_cast<std::size_t>(d), static_cast<std::size_t>(hh),
              static_cast<std::size_t>(w)};
    return h;
}

std::string format_header(const char* kind, const Dims& dims, const Spacing& sp, int classes) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "VVOL1 %s %zu %zu %zu %.17g %.17g %.17g %d\n", kind,
                  dims.d, dims.h, dims.w, sp.sx, sp.sy, sp.sz, classes);
    return buf;
}

} // namespace

Grid load_grid(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(path + ": cannot open");
    const VvolHeader h = parse_header(in, path);
    const std::size_t count = h.dims.count();
    if (h.kind == "f32") {
        std::vector<float> data(count);
        in.read(reinterpret_cast<char*>(data.data()),
                static_cast<std::streamsize>(count * sizeof(float)));
        if (static_cast<std::size_t>(in.gcount()) != count * sizeof(float))
            throw IoError(path + ": payload shorter than header dims");
        if (in.peek() != std::istream::traits_type::eof())
            throw IoError(path + ": payload longer than header dims");
        return VoxelGrid(h.dims, h.spacing, std::move(data));
    }
    std::vector<std::uint8_t> labels(count);
    in.read(reinterpret_cast<char*>(labels.data()), static_cast<std::streamsize>(count));
    if (static_cast<std::size_t>(in.gcount()) != count)
        throw IoError(path + ": payload shorter than header dims");
    if (in.peek() != std::istream::traits_type::eof())
        throw IoError(path + ": payload longer than header dims");
    for (const auto v : labels)
        if (v > h.classes)
            throw IoError(path + ": label value " + std::to_string(int(v)) +
                          " exceeds declared C=" + std::to_string(h.classes));
    return LabelMask(h.dims, h.spacing, std::move(labels), h.classes);
}

VoxelGrid load_image(const std::string& path) {
    Grid g = load_grid(path);
    if (auto* v = std::get_if<VoxelGrid>(&g)) return std::move(*v);
    throw IoError(path + ": expected f32 image, found u8 labels");
}

LabelMask load_labels(const std::string& path) {
    Grid g = load_grid(path);
    if (auto* m = std::get_if<LabelMask>(&g)) return std::move(*m);
    throw IoError(path + ": expected u8 labels, found f32 image");
}

void save_grid(const VoxelGrid& grid, const std::string& path) {
    for (const float v : grid.data)
        if (!std::isfinite(v)) throw ValueError(path + ": refusing to save non-finite grid");
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(path + ": cannot open for writing");
    const std::string header = format_header("f32", grid.dims, grid.spacing, 0);
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    out.write(reinterpret_cast<const char*>(grid.data.data()),
              static_cast<std::streamsize>(grid.data.size() * sizeof(float)));
    if (!out) throw IoError(path + ": write failed");
}

void save_grid(const LabelMask& mask, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(path + ": cannot open for writing");
    const std::string header = format_header("u8", mask.dims, mask.spacing, mask.num_classes);
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    out.write(reinterpret_cast<const char*>(mask.labels.data()),
              static_cast<std::streamsize>(mask.labels.size()));
    if (!out) throw IoError(path + ": write failed");
}

// ---------------------------------------------------------------------------
// resampling

namespace {

// pixel-center mapping: src = (i + 0.5) * scale - 0.5, clamped to the border
template <typename T, typename Fetch>
void sample_axis_aligned(const Dims& in, const Dims& out, const double scale[3], Interp mode,
                         const T* src, T* dst, Fetch fetch) {
    for (std::size_t z = 0; z < out.d; ++z) {
        const double fz = (static_cast<double>(z) + 0.5) * scale[0] - 0.5;
        for (std::size_t y = 0; y < out.h; ++y) {
            const double fy = (static_cast<double>(y) + 0.5) * scale[1] - 0.5;
            for (std::size_t x = 0; x < out.w; ++x) {
                const double fx = (static_cast<double>(x) + 0.5) * scale[2] - 0.5;
                dst[(z * out.h + y) * out.w + x] = fetch(src, in, fz, fy, fx, mode);
            }
        }
    }
}

std::size_t clamp_idx(long long i, std::size_t n) {
    if (i < 0) return 0;
    if (i >= static_cast<long long>(n)) return n - 1;
    return static_cast<std::size_t>(i);
}

float fetch_value(const float* src, const Dims& in, double fz, double fy, double fx,
                  Interp mode) {
    if (mode == Interp::Nearest) {
        const std::size_t z = clamp_idx(std::llround(fz), in.d);
        const std::size_t y = clamp_idx(std::llround(fy), in.h);
        const std::size_t x = clamp_idx(std::llround(fx), in.w);
        return src[(z * in.h + y) * in.w + x];
    }
    const double zf = std::floor(fz), yf = std::floor(fy), xf = std::floor(fx);
    const double tz = fz - zf, ty = fy - yf, tx = fx - xf;
    const std::size_t z0 = clamp_idx(static_cast<long long>(zf), in.d);
    const std::size_t z1 = clamp_idx(static_cast<long long>(zf) + 1, in.d);
    const std::size_t y0 = clamp_idx(static_cast<long long>(yf), in.h);
    const std::size_t y1 = clamp_idx(static_cast<long long>(yf) + 1, in.h);
    const std::size_t x0 = clamp_idx(static_cast<long long>(xf), in.w);
    const std::size_t x1 = clamp_idx(static_cast<long long>(xf) + 1, in.w);
    auto v = [&](std::size_t z, std::size_t y, std::size_t x) {
        return static_cast<double>(src[(z * in.h + y) * in.w + x]);
    };
    const double c00 = v(z0, y0, x0) * (1 - tx) + v(z0, y0, x1) * tx;
    const double c01 = v(z0, y1, x0) * (1 - tx) + v(z0, y1, x1) * tx;
    const double c10 = v(z1, y0, x0) * (1 - tx) + v(z1, y0, x1) * tx;
    const double c11 = v(z1, y1, x0) * (1 - tx) + v(z1, y1, x1) * tx;
    const double c0 = c00 * (1 - ty) + c01 * ty;
    const double c1 = c10 * (1 - ty) + c11 * ty;
    return static_cast<float>(c0 * (1 - tz) + c1 * tz);
}

std::uint8_t fetch_label(const std::uint8_t* src, const Dims& in, double fz, double fy,
                         double fx, Interp) {
    const std::size_t z = clamp_idx(std::llround(fz), in.d);
    const std::size_t y = clamp_idx(std::llround(fy), in.h);
    const std::size_t x = clamp_idx(std::llround(fx), in.w);
    return src[(z * in.h + y) * in.w + x];
}

Dims resampled_dims(const Dims& dims, const Spacing& sp, double target) {
    auto newdim = [target](std::size_t n, double s) {
        const double exact = static_cast<double>(n) * s / target;
        return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(exact)));
    };
    return {newdim(dims.d, sp.sz), newdim(dims.h, sp.sy), newdim(dims.w, sp.sx)};
}

} // namespace

VoxelGrid resample_isotropic(const VoxelGrid& grid, double target_spacing, Interp mode) {
    if (!(target_spacing > 0)) throw ValueError("resample: target spacing must be > 0");
    const Dims out = resampled_dims(grid.dims, grid.spacing, target_spacing);
    const double scale[3] = {target_spacing / grid.spacing.sz, target_spacing / grid.spacing.sy,
                             target_spacing / grid.spacing.sx};
    std::vector<float> data(out.count());
    sample_axis_aligned(grid.dims, out, scale, mode, grid.data.data(), data.data(),
                        fetch_value);
    return VoxelGrid(out, {target_spacing, target_spacing, target_spacing}, std::move(data));
}

LabelMask resample_isotropic(const LabelMask& mask, double target_spacing, Interp mode) {
    if (mode == Interp::Trilinear)
        throw ValueError("resample: trilinear interpolation is invalid for label masks");
    if (!(target_spacing > 0)) throw ValueError("resample: target spacing must be > 0");
    const Dims out = resampled_dims(mask.dims, mask.spacing, target_spacing);
    const double scale[3] = {target_spacing / mask.spacing.sz, target_spacing / mask.spacing.sy,
                             target_spacing / mask.spacing.sx};
    std::vector<std::uint8_t> labels(out.count());
    sample_axis_aligned(mask.dims, out, scale, Interp::Nearest, mask.labels.data(),
                        labels.data(), fetch_label);
    return LabelMask(out, {target_spacing, target_spacing, target_spacing}, std::move(labels),
                     mask.num_classes);
}

VoxelGrid resize(const VoxelGrid& grid, Dims new_dims, Interp mode) {
    check_dims(new_dims);
    const double scale[3] = {
        static_cast<double>(grid.dims.d) / static_cast<double>(new_dims.d),
        static_cast<double>(grid.dims.h) / static_cast<double>(new_dims.h),
        static_cast<double>(grid.dims.w) / static_cast<double>(new_dims.w)};
    std::vector<float> data(new_dims.count());
    sample_axis_aligned(grid.dims, new_dims, scale, mode, grid.data.data(), data.data(),
                        fetch_value);
    return VoxelGrid(new_dims, grid.spacing, std::move(data));
}

LabelMask resize(const LabelMask& mask, Dims new_dims) {
    check_dims(new_dims);
    const double scale[3] = {
        static_cast<double>(mask.dims.d) / static_cast<double>(new_dims.d),
        static_cast<double>(mask.dims.h) / static_cast<double>(new_dims.h),
        static_cast<double>(mask.dims.w) / static_cast<double>(new_dims.w)};
    std::vector<std::uint8_t> labels(new_dims.count());
    sample_axis_aligned(mask.dims, new_dims, scale, Interp::Nearest, mask.labels.data(),
                        labels.data(), fetch_label);
    return LabelMask(new_dims, mask.spacing, std::move(labels), mask.num_classes);
}

// ---------------------------------------------------------------------------
// intensity, ROI, crop, one-hot

VoxelGrid normalize_intensity(const VoxelGrid& grid) {
    const auto [mn_it, mx_it] = std::minmax_element(grid.data.begin(), grid.data.end());
    const double mn = *mn_it, mx = *mx_it;
    std::vector<float> out(grid.data.size());
    if (mn == mx) {
        // constant volume: map to zero instead of erroring
        return VoxelGrid(grid.dims, grid.spacing, std::move(out));
    }
    const double range = mx - mn;
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double y = 2.0 * (static_cast<double>(grid.data[i]) - mn) / range - 1.0;
        out[i] = static_cast<float>(std::clamp(y, -1.0, 1.0));
    }
    return VoxelGrid(grid.dims, grid.spacing, std::move(out));
}

BoundingBox roi_from_mask(const LabelMask& gt, std::size_t margin) {
    std::size_t lo[3] = {gt.dims.d, gt.dims.h, gt.dims.w};
    std::size_t hi[3] = {0, 0, 0};
    bool any = false;
    for (std::size_t z = 0; z < gt.dims.d; ++z)
        for (std::size_t y = 0; y < gt.dims.h; ++y)
            for (std::size_t x = 0; x < gt.dims.w; ++x)
                if (gt.at(z, y, x) != 0) {
                    any = true;
                    lo[0] = std::min(lo[0], z);
                    lo[1] = std::min(lo[1], y);
                    lo[2] = std::min(lo[2], x);
                    hi[0] = std::max(hi[0], z + 1);
                    hi[1] = std::max(hi[1], y + 1);
                    hi[2] = std::max(hi[2], x + 1);
                }
    if (!any) throw ValueError("roi_from_mask: mask has no foreground voxels");
    const std::size_t limits[3] = {gt.dims.d, gt.dims.h, gt.dims.w};
    for (int a = 0; a < 3; ++a) {
        lo[a] = lo[a] > margin ? lo[a] - margin : 0;
        hi[a] = std::min(limits[a], hi[a] + margin);
    }
    return BoundingBox({lo[0], lo[1], lo[2]}, {hi[0], hi[1], hi[2]}, gt.dims);
}

namespace {

template <typename T>
std::vector<T> crop_block(const std::vector<T>& src, const Dims& dims, const BoundingBox& box) {
    const Dims ext = box.extents();
    std::vector<T> out;
    out.reserve(ext.count());
    for (std::size_t z = box.lo[0]; z < box.hi[0]; ++z)
        for (std::size_t y = box.lo[1]; y < box.hi[1]; ++y) {
            const T* row = src.data() + (z * dims.h + y) * dims.w + box.lo[2];
            out.insert(out.end(), row, row + ext.w);
        }
    return out;
}

void check_box(const BoundingBox& box, const Dims& dims) {
    const std::size_t limits[3] = {dims.d, dims.h, dims.w};
    for (int a = 0; a < 3; ++a) {
        if (box.lo[a] >= box.hi[a] || box.hi[a] > limits[a])
            throw ValueError("crop: box out of bounds for dims " + dims.str());
    }
}

} // namespace

VoxelGrid crop(const VoxelGrid& grid, const BoundingBox& box) {
    check_box(box, grid.dims);
    return VoxelGrid(box.extents(), grid.spacing, crop_block(grid.data, grid.dims, box));
}

LabelMask crop(const LabelMask& mask, const BoundingBox& box) {
    check_box(box, mask.dims);
    return LabelMask(box.extents(), mask.spacing, crop_block(mask.labels, mask.dims, box),
                     mask.num_classes);
}

nn::Tensor<float> one_hot(const LabelMask& mask) {
    const std::size_t k = static_cast<std::size_t>(mask.num_classes) + 1;
    const std::size_t vox = mask.dims.count();
    std::vector<float> v(k * vox, 0.0f);
    for (std::size_t i = 0; i < vox; ++i) v[mask.labels[i] * vox + i] = 1.0f;
    return nn::Tensor<float>::from_values({k, mask.dims.d, mask.dims.h, mask.dims.w},
                                          std::move(v));
}

} // namespace voxqa
