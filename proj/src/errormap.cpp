#include "voxqa/errormap.hpp"

namespace voxqa {

ErrorMap::ErrorMap(Dims dims_, std::vector<std::uint8_t> bits_)
    : dims(dims_), bits(std::move(bits_)) {
    if (bits.size() != dims.count())
        throw ValueError("error map length does not match dims " + dims.str());
    for (const auto b : bits)
        if (b > 1) throw ValueError("error map values must be 0 or 1");
}

std::uint64_t ErrorMap::error_count() const {
    std::uint64_t n = 0;
    for (const auto b : bits) n += b;
    return n;
}

double ErrorMap::error_fraction() const {
    return static_cast<double>(error_count()) / static_cast<double>(bits.size());
}

SoftErrorMap::SoftErrorMap(Dims dims_, std::vector<float> probs_)
    : dims(dims_), probs(std::move(probs_)) {
    if (probs.size() != dims.count())
        throw ValueError("soft error map length does not match dims " + dims.str());
    for (const float p : probs)
        if (!(p >= 0.0f && p <= 1.0f))
            throw ValueError("soft error map probabilities must lie in [0,1]");
}

ErrorMap true_error_map(const LabelMask& s, const LabelMask& gt) {
    if (s.dims != gt.dims)
        throw ShapeError("true_error_map: dims mismatch " + s.dims.str() + " vs " +
                         gt.dims.str());
    if (s.num_classes != gt.num_classes)
        throw ShapeError("true_error_map: class count mismatch");
    std::vector<std::uint8_t> bits(s.labels.size());
    for (std::size_t i = 0; i < bits.size(); ++i)
        bits[i] = s.labels[i] != gt.labels[i] ? 1 : 0;
    return ErrorMap(s.dims, std::move(bits));
}

ErrorMap binarize(const SoftErrorMap& soft, double tau) {
    if (!(tau > 0.0 && tau < 1.0))
        throw ValueError("binarize: tau must lie in (0,1), got " + std::to_string(tau));
    std::vector<std::uint8_t> bits(soft.probs.size());
    for (std::size_t i = 0; i < bits.size(); ++i)
        bits[i] = static_cast<double>(soft.probs[i]) >= tau ? 1 : 0;
    return ErrorMap(soft.dims, std::move(bits));
}

double quality_indicator(const ErrorMap& e) {
    const std::uint64_t total = e.bits.size();
    const std::uint64_t correct = total - e.error_count();
    return static_cast<double>(correct) / static_cast<double>(total);
}

double qi_from_truth(const LabelMask& s, const LabelMask& gt) {
    return quality_indicator(true_error_map(s, gt));
}

void save_error_map(const ErrorMap& e, const Spacing& spacing, const std::string& path) {
    save_grid(LabelMask(e.dims, spacing, e.bits, 1), path);
}

ErrorMap load_error_map(const std::string& path) {
    LabelMask m = load_labels(path);
    if (m.num_classes != 1)
        throw IoError(path + ": error maps must declare C=1");
    return ErrorMap(m.dims, std::move(m.labels));
}

} // namespace voxqa
