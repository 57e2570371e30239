#pragma once

// Scalar evaluation metrics: binary confusion counts with the error class as
// positive, DSC / accuracy / precision / recall, multi-class Dice, Pearson
// correlation, MAE and histograms.

#include <cstdint>
#include <span>
#include <vector>

#include "voxqa/volume.hpp"

namespace voxqa {

struct ConfusionCounts {
    std::uint64_t tp = 0, fp = 0, tn = 0, fn = 0;

    std::uint64_t total() const { return tp + fp + tn + fn; }
};

struct MetricReport {
    double dsc = 0, acc = 0, prec = 0, recl = 0;
    std::vector<double> per_class_dsc; // optional, foreground classes
};

// Per-voxel tally of pred vs truth, value 1 (error) as the positive class.
// Inputs are {0,1} volumes of identical dims.
ConfusionCounts confusion(const std::vector<std::uint8_t>& pred,
                          const std::vector<std::uint8_t>& truth);

// 2*tp / (2*tp + fp + fn); empty-vs-empty = 1, non-empty-vs-empty = 0.
double dice_binary(const ConfusionCounts& c);

// acc = (tp+tn)/total; prec = tp/(tp+fp), with the empty-prediction corner
// prec := 1 if tp+fn == 0 else 0; recl = tp/(tp+fn), recl := 1 if tp+fn == 0.
struct AccPrecRecl {
    double acc = 0, prec = 0, recl = 0;
};
AccPrecRecl acc_prec_recl(const ConfusionCounts& c);

// All four binary metrics of one comparison in one record.
MetricReport metric_report(const ConfusionCounts& c);

struct MulticlassDice {
    std::vector<double> per_class; // classes 1..C
    double mean = 0;               // over foreground classes
};

// Per-foreground-class binary DSC of (mask==c) vs (gt==c) plus their mean.
MulticlassDice dice_multiclass(const LabelMask& mask, const LabelMask& gt);

// Sample Pearson correlation. Throws on length mismatch, length < 2, or a
// constant input (undefined correlation). Computed as Sxy/sqrt(Sxx*Syy) so
// identical series give exactly 1.
double pearson(std::span<const double> xs, std::span<const double> ys);

// Mean absolute error.
double mae(std::span<const double> xs, std::span<const double> ys);

// Right-open bins [e_i, e_{i+1}), last bin right-closed. Out-of-range values
// are not counted. Edges must be strictly increasing.
std::vector<std::uint64_t> histogram(std::span<const double> values,
                                     std::span<const double> bin_edges);

} // namespace voxqa
