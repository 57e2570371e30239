#include "voxqa/metrics.hpp"

#include <cmath>

namespace voxqa {

ConfusionCounts confusion(const std::vector<std::uint8_t>& pred,
                          const std::vector<std::uint8_t>& truth) {
    if (pred.size() != truth.size())
        throw ShapeError("confusion: size mismatch " + std::to_string(pred.size()) + " vs " +
                         std::to_string(truth.size()));
    ConfusionCounts c;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const bool p = pred[i] != 0, t = truth[i] != 0;
        if (p && t)
            ++c.tp;
        else if (p && !t)
            ++c.fp;
        else if (!p && t)
            ++c.fn;
        else
            ++c.tn;
    }
    return c;
}

double dice_binary(const ConfusionCounts& c) {
    const std::uint64_t denom = 2 * c.tp + c.fp + c.fn;
    if (denom == 0) return 1.0; // both masks empty
    return 2.0 * static_cast<double>(c.tp) / static_cast<double>(denom);
}

AccPrecRecl acc_prec_recl(const ConfusionCounts& c) {
    AccPrecRecl r;
    const std::uint64_t total = c.total();
    r.acc = total == 0 ? 1.0
                       : static_cast<double>(c.tp + c.tn) / static_cast<double>(total);
    if (c.tp + c.fp == 0)
        r.prec = (c.tp + c.fn == 0) ? 1.0 : 0.0; // nothing predicted
    else
        r.prec = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
    r.recl = (c.tp + c.fn == 0)
                 ? 1.0 // nothing to find
                 : static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
    return r;
}

MulticlassDice dice_multiclass(const LabelMask& mask, const LabelMask& gt) {
    if (mask.dims != gt.dims)
        throw ShapeError("dice_multiclass: dims mismatch " + mask.dims.str() + " vs " +
                         gt.dims.str());
    if (mask.num_classes != gt.num_classes)
        throw ShapeError("dice_multiclass: class count mismatch");
    MulticlassDice out;
    const int c_count = mask.num_classes;
    out.per_class.resize(c_count);
    for (int c = 1; c <= c_count; ++c) {
        std::uint64_t tp = 0, fp = 0, fn = 0;
        for (std::size_t i = 0; i < mask.labels.size(); ++i) {
            const bool p = mask.labels[i] == c, t = gt.labels[i] == c;
            if (p && t)
                ++tp;
            else if (p)
                ++fp;
            else if (t)
                ++fn;
        }
        ConfusionCounts cc{tp, fp, 0, fn};
        out.per_class[c - 1] = dice_binary(cc);
        out.mean += out.per_class[c - 1];
    }
    out.mean /= static_cast<double>(c_count);
    return out;
}

MetricReport metric_report(const ConfusionCounts& c) {
    MetricReport r;
    r.dsc = dice_binary(c);
    const AccPrecRecl apr = acc_prec_recl(c);
    r.acc = apr.acc;
    r.prec = apr.prec;
    r.recl = apr.recl;
    return r;
}

double pearson(std::span<const double> xs, std::span<const double> ys) {
    if (xs.size() != ys.size())
        throw ShapeError("pearson: length mismatch");
    if (xs.size() < 2) throw ValueError("pearson: need at least 2 samples");
    const double n = static_cast<double>(xs.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0, syy = 0, sxy = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double dx = xs[i] - mx, dy = ys[i] - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if (sxx == 0.0 || syy == 0.0)
        throw ValueError("pearson: constant input, correlation undefined");
    return sxy / std::sqrt(sxx * syy);
}

double mae(std::span<const double> xs, std::span<const double> ys) {
    if (xs.size() != ys.size()) throw ShapeError("mae: length mismatch");
    if (xs.empty()) throw ValueError("mae: need at least 1 sample");
    double acc = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) acc += std::abs(xs[i] - ys[i]);
    return acc / static_cast<double>(xs.size());
}

std::vector<std::uint64_t> histogram(std::span<const double> values,
                                     std::span<const double> bin_edges) {
    if (bin_edges.size() < 2) throw ValueError("histogram: need at least 2 edges");
    for (std::size_t i = 1; i < bin_edges.size(); ++i)
        if (!(bin_edges[i] > bin_edges[i - 1]))
            throw ValueError("histogram: edges must be strictly increasing");
    std::vector<std::uint64_t> counts(bin_edges.size() - 1, 0);
    const double lo = bin_edges.front(), hi = bin_edges.back();
    for (const double v : values) {
        if (v < lo || v > hi) continue;
        if (v == hi) { // last bin right-closed
            ++counts.back();
            continue;
        }
        // rightmost edge <= v
        std::size_t b = 0;
        while (b + 2 < bin_edges.size() && v >= bin_edges[b + 1]) ++b;
        ++counts[b];
    }
    return counts;
}

} // namespace voxqa
