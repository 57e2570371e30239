#include "voxqa/datagen.hpp"

#include <algorithm>
#include <cmath>

namespace voxqa {

void validate(const AugmentConfig& cfg) {
    if (cfg.patch3d.count() == 0 || cfg.patch2d.count() == 0)
        throw ValueError("augment config: patch dims must be positive");
    if (!(cfg.scale_lo > 0.0) || !(cfg.scale_hi < 2.0) || cfg.scale_lo > cfg.scale_hi)
        throw ValueError("augment config: scale range must satisfy 0 < lo <= hi < 2");
}

std::pair<VoxelGrid, LabelMask> generate_phantom(const PhantomSpec& spec) {
    if (spec.num_foreground_classes < 1)
        throw ValueError("phantom: need at least one foreground class");
    if (spec.dims.d < 16 || spec.dims.h < 16 || spec.dims.w < 16)
        throw ValueError("phantom: dims must be at least 16 per axis, got " + spec.dims.str());
    if (spec.noise_sigma < 0) throw ValueError("phantom: noise_sigma must be >= 0");

    Rng rng(spec.seed);
    const int c_count = spec.num_foreground_classes;
    const double half[3] = {spec.dims.d / 2.0, spec.dims.h / 2.0, spec.dims.w / 2.0};

    // shared centre with a small jitter; per-class per-axis radii shrink
    // from 0.84 to 0.24 of the half-extent
    double center[3];
    for (int a = 0; a < 3; ++a) center[a] = half[a] + rng.uniform(-0.05, 0.05) * 2 * half[a];
    std::vector<std::array<double, 3>> radii(c_count);
    for (int c = 0; c < c_count; ++c) {
        const double frac = c_count > 1 ? 0.84 - 0.60 * c / (c_count - 1) : 0.60;
        for (int a = 0; a < 3; ++a)
            radii[c][a] = std::max(1.0, frac * half[a] * rng.uniform(0.92, 1.08));
    }

    const std::size_t vox = spec.dims.count();
    std::vector<std::uint8_t> labels(vox, 0);
    for (std::size_t z = 0; z < spec.dims.d; ++z)
        for (std::size_t y = 0; y < spec.dims.h; ++y)
            for (std::size_t x = 0; x < spec.dims.w; ++x) {
                const double p[3] = {z + 0.5 - center[0], y + 0.5 - center[1],
                                     x + 0.5 - center[2]};
                std::uint8_t label = 0;
                for (int c = 0; c < c_count; ++c) {
                    const double q = (p[0] / radii[c][0]) * (p[0] / radii[c][0]) +
                                     (p[1] / radii[c][1]) * (p[1] / radii[c][1]) +
                                     (p[2] / radii[c][2]) * (p[2] / radii[c][2]);
                    if (q <= 1.0) label = static_cast<std::uint8_t>(c + 1); // innermost wins
                }
                labels[(z * spec.dims.h + y) * spec.dims.w + x] = label;
            }

    std::vector<std::size_t> counts(c_count + 1, 0);
    for (const auto l : labels) ++counts[l];
    for (int c = 1; c <= c_count; ++c)
        if (counts[c] == 0)
            throw ValueError("phantom: dims " + spec.dims.str() + " too small to place " +
                             std::to_string(c_count) + " structures");

    // per-class mean intensity, background 0
    std::vector<double> means(c_count + 1, 0.0);
    for (int c = 1; c <= c_count; ++c) means[c] = 0.2 + 0.8 * c / c_count;

    // smooth bias field: low-order polynomial in normalized coordinates
    double bias_coeff[4];
    for (auto& b : bias_coeff) b = rng.uniform(-1.0, 1.0);

    std::vector<float> image(vox);
    std::size_t i = 0;
    for (std::size_t z = 0; z < spec.dims.d; ++z)
        for (std::size_t y = 0; y < spec.dims.h; ++y)
            for (std::size_t x = 0; x < spec.dims.w; ++x, ++i) {
                double v = means[labels[i]];
                if (spec.bias_amplitude != 0.0) {
                    const double u = z / double(spec.dims.d) * 2 - 1;
                    const double s = y / double(spec.dims.h) * 2 - 1;
                    const double t = x / double(spec.dims.w) * 2 - 1;
                    v += spec.bias_amplitude * (bias_coeff[0] * u + bias_coeff[1] * s +
                                                bias_coeff[2] * t + bias_coeff[3] * u * s * t);
                }
                if (spec.noise_sigma > 0.0) v += rng.normal(0.0, spec.noise_sigma);
                image[i] = static_cast<float>(v);
            }

    VoxelGrid grid(spec.dims, spec.spacing, std::move(image));
    return {normalize_intensity(grid), LabelMask(spec.dims, spec.spacing, std::move(labels),
                                                 c_count)};
}

namespace {

template <typename T>
std::vector<T> pad_centered(const std::vector<T>& src, const Dims& in, const Dims& out,
                            std::size_t before[3]) {
    std::vector<T> dst(out.count(), T(0));
    for (std::size_t z = 0; z < in.d; ++z)
        for (std::size_t y = 0; y < in.h; ++y) {
            const T* srow = src.data() + (z * in.h + y) * in.w;
            T* drow = dst.data() +
                      ((z + before[0]) * out.h + (y + before[1])) * out.w + before[2];
            std::copy(srow, srow + in.w, drow);
        }
    return dst;
}

} // namespace

std::pair<VoxelGrid, LabelMask> random_crop(const VoxelGrid& image, const LabelMask& gt,
                                            Dims patch, Rng& rng) {
    if (image.dims != gt.dims) throw ShapeError("random_crop: image/gt dims differ");
    if (patch.count() == 0) throw ValueError("random_crop: patch dims must be positive");

    VoxelGrid img = image;
    LabelMask lab = gt;
    // zero-pad symmetrically when the volume is smaller than the patch
    if (img.dims.d < patch.d || img.dims.h < patch.h || img.dims.w < patch.w) {
        const Dims padded{std::max(img.dims.d, patch.d), std::max(img.dims.h, patch.h),
                          std::max(img.dims.w, patch.w)};
        std::size_t before[3] = {(padded.d - img.dims.d) / 2, (padded.h - img.dims.h) / 2,
                                 (padded.w - img.dims.w) / 2};
        img = VoxelGrid(padded, img.spacing, pad_centered(img.data, img.dims, padded, before));
        lab = LabelMask(padded, lab.spacing, pad_centered(lab.labels, lab.dims, padded, before),
                        lab.num_classes);
    }
    const std::size_t oz = rng.below(img.dims.d - patch.d + 1);
    const std::size_t oy = rng.below(img.dims.h - patch.h + 1);
    const std::size_t ox = rng.below(img.dims.w - patch.w + 1);
    const BoundingBox box({oz, oy, ox}, {oz + patch.d, oy + patch.h, ox + patch.w}, img.dims);
    return {crop(img, box), crop(lab, box)};
}

std::pair<VoxelGrid, LabelMask> flip_axes(const VoxelGrid& image, const LabelMask& gt,
                                          bool flip_z, bool flip_y, bool flip_x) {
    if (image.dims != gt.dims) throw ShapeError("flip_axes: image/gt dims differ");
    const Dims d = image.dims;
    std::vector<float> img(d.count());
    std::vector<std::uint8_t> lab(d.count());
    std::size_t i = 0;
    for (std::size_t z = 0; z < d.d; ++z) {
        const std::size_t sz = flip_z ? d.d - 1 - z : z;
        for (std::size_t y = 0; y < d.h; ++y) {
            const std::size_t sy = flip_y ? d.h - 1 - y : y;
            for (std::size_t x = 0; x < d.w; ++x, ++i) {
                const std::size_t sx = flip_x ? d.w - 1 - x : x;
                const std::size_t s = (sz * d.h + sy) * d.w + sx;
                img[i] = image.data[s];
                lab[i] = gt.labels[s];
            }
        }
    }
    return {VoxelGrid(d, image.spacing, std::move(img)),
            LabelMask(d, gt.spacing, std::move(lab), gt.num_classes)};
}

std::pair<VoxelGrid, LabelMask> random_flip(const VoxelGrid& image, const LabelMask& gt,
                                            Rng& rng) {
    const bool fz = rng.flip(), fy = rng.flip(), fx = rng.flip();
    return flip_axes(image, gt, fz, fy, fx);
}

std::pair<VoxelGrid, LabelMask> random_scale(const VoxelGrid& image, const LabelMask& gt,
                                             double lo, double hi, Rng& rng) {
    if (image.dims != gt.dims) throw ShapeError("random_scale: image/gt dims differ");
    if (!(lo > 0.0) || !(hi < 2.0) || lo > hi)
        throw ValueError("random_scale: range must satisfy 0 < lo <= hi < 2");
    const double f = rng.uniform(lo, hi);
    const Dims orig = image.dims;
    auto scaled_dim = [f](std::size_t n) {
        return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(n * f)));
    };
    const Dims scaled{scaled_dim(orig.d), scaled_dim(orig.h), scaled_dim(orig.w)};

    VoxelGrid img = scaled == orig ? image : resize(image, scaled, Interp::Trilinear);
    LabelMask lab = scaled == orig ? gt : resize(gt, scaled);

    if (scaled == orig) return {std::move(img), std::move(lab)};

    // centre-crop the overshoot, centre-pad the shortfall, per axis
    std::size_t lo3[3], hi3[3];
    const std::size_t sd[3] = {scaled.d, scaled.h, scaled.w};
    const std::size_t od[3] = {orig.d, orig.h, orig.w};
    bool needs_crop = false;
    for (int a = 0; a < 3; ++a) {
        if (sd[a] > od[a]) {
            lo3[a] = (sd[a] - od[a]) / 2;
            hi3[a] = lo3[a] + od[a];
            needs_crop = true;
        } else {
            lo3[a] = 0;
            hi3[a] = sd[a];
        }
    }
    if (needs_crop) {
        const BoundingBox box({lo3[0], lo3[1], lo3[2]}, {hi3[0], hi3[1], hi3[2]}, img.dims);
        img = crop(img, box);
        lab = crop(lab, box);
    }
    if (img.dims != orig) {
        std::size_t before[3] = {(orig.d - img.dims.d) / 2, (orig.h - img.dims.h) / 2,
                                 (orig.w - img.dims.w) / 2};
        img = VoxelGrid(orig, img.spacing, pad_centered(img.data, img.dims, orig, before));
        lab = LabelMask(orig, lab.spacing, pad_centered(lab.labels, lab.dims, orig, before),
                        lab.num_classes);
    }
    return {std::move(img), std::move(lab)};
}

std::vector<FoldSplit> kfold_split(const std::vector<std::string>& ids, std::size_t k,
                                   std::uint64_t seed) {
    if (k < 2) throw ValueError("kfold_split: k must be >= 2");
    if (ids.size() < k)
        throw ValueError("kfold_split: k=" + std::to_string(k) + " exceeds " +
                         std::to_string(ids.size()) + " ids");
    std::vector<std::string> shuffled = ids;
    Rng rng(seed);
    rng.shuffle(shuffled);

    std::vector<FoldSplit> folds(k);
    const std::size_t base = shuffled.size() / k, rem = shuffled.size() % k;
    std::size_t pos = 0;
    for (std::size_t f = 0; f < k; ++f) {
        const std::size_t take = base + (f < rem ? 1 : 0);
        folds[f].fold = f;
        folds[f].test_ids.assign(shuffled.begin() + pos, shuffled.begin() + pos + take);
        pos += take;
    }
    for (std::size_t f = 0; f < k; ++f) {
        for (std::size_t g = 0; g < k; ++g)
            if (g != f)
                folds[f].train_ids.insert(folds[f].train_ids.end(), folds[g].test_ids.begin(),
                                          folds[g].test_ids.end());
        std::sort(folds[f].train_ids.begin(), folds[f].train_ids.end());
        std::sort(folds[f].test_ids.begin(), folds[f].test_ids.end());
    }
    return folds;
}

} // namespace voxqa
